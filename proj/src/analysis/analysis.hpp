#pragma once

#include "agent/agent.hpp"
#include "dataset/dataset.hpp"
#include "envsuite/envsuite.hpp"
#include "training/training.hpp"
#include "world_model/world_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace clap::analysis {

using numerics::Index;

struct ReferenceValues {
  double average_return = 0.0;
  // Mean over episodes of the largest discounted return-to-go.
  double average_max_value = 0.0;
};

ReferenceValues dataset_reference_values(const dataset::TrajectoryDataset& data, double discount);

struct CurvePoint {
  std::int64_t step = 0;
  double raw_return = 0.0;
  double normalized_return = 0.0;
  double mean_value = 0.0;
};

struct TrackOptions {
  Index steps = 20000;
  Index eval_every = 1000;
  Index eval_episodes = 20;
  Index value_windows = 16;
  std::uint64_t eval_seed = 0;
};

extern const std::vector<std::string> kCurveColumns;

// Trains until `options.steps` updates, evaluating in the environment and
// measuring the mean posterior value at step 0, every `eval_every` steps and
// at the end. Rows go to `curve` (kCurveColumns) and per-step agent metrics
// to `metrics` when given.
template <typename S>
std::vector<CurvePoint> train_and_track(training::AgentTrainer<S>& trainer, world_model::WorldModel<S>& model,
                                        const dataset::TrajectoryDataset& data, const envsuite::PointMass& env,
                                        const envsuite::ReferenceReturns& refs, const TrackOptions& options,
                                        const std::string& arm, training::CsvWriter* curve = nullptr,
                                        training::CsvWriter* metrics = nullptr);

struct SweepArm {
  double epsilon = 0.0;
  std::vector<CurvePoint> curve;
  double final_return() const { return curve.empty() ? 0.0 : curve.back().normalized_return; }
  double peak_return() const;
};

// One agent per support width, all from the same seed and the same frozen
// model. When `out_dir` is set each arm writes `eps_<value>/curve.csv`.
template <typename S>
std::vector<SweepArm> epsilon_sweep(world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data,
                                    const agent::AgentConfig& base, const std::vector<double>& epsilons,
                                    const envsuite::PointMass& env, const envsuite::ReferenceReturns& refs,
                                    const TrackOptions& options, std::uint64_t seed,
                                    const std::filesystem::path& out_dir = {});

// Brute-force k nearest neighbours over the normalized observations of
// every dataset step. Ties are broken by the observation and action values,
// so results do not depend on episode order.
class NeighborIndex {
 public:
  explicit NeighborIndex(const dataset::TrajectoryDataset& data);

  struct Entry {
    Index episode;
    Index step;
  };
  Index size() const { return static_cast<Index>(entries_.size()); }
  const Entry& entry(Index i) const { return entries_[static_cast<std::size_t>(i)]; }
  // Squared distances come back through `distances` when given.
  std::vector<Index> nearest(const std::vector<double>& query, Index k, std::vector<double>* distances = nullptr) const;
  std::vector<double> observation(Index i) const;
  std::vector<double> action(Index i) const;

 private:
  Index obs_dim_ = 0;
  Index action_dim_ = 0;
  std::vector<Entry> entries_;
  std::vector<double> obs_;
  std::vector<double> actions_;
};

struct ActionStudyRow {
  Index episode = 0;
  Index step = 0;
  Index block = 0;  // fixed 10-step segment of the query trajectory
  std::vector<double> data_mean, data_std;
  std::vector<double> model_mean, model_std;
  // Share of prior-decoded action entries inside the neighbours' per
  // dimension [min, max].
  double within_range = 0.0;
};

struct ActionStudy {
  std::vector<ActionStudyRow> rows;
  double within_range = 0.0;
  double mean_abs_mean_difference = 0.0;
};

extern const std::vector<std::string> kActionStudyColumns;

// For every step of the first `query_episodes` episodes: fit a diagonal
// Gaussian to the actions of the k nearest dataset steps, and a second one
// to k actions drawn through the latent action prior and decoder on those
// neighbours' posterior beliefs.
template <typename S>
ActionStudy action_distribution_study(const world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data,
                                      Index k, Index query_episodes, std::uint64_t seed);

void write_action_study(const ActionStudy& study, const std::filesystem::path& path);

// Concatenates every CSV named `file_name` below `root` (sorted paths, one
// shared header) into `out`. Returns the number of files merged.
std::size_t merge_csv_tree(const std::filesystem::path& root, const std::string& file_name,
                           const std::filesystem::path& out);

}  // namespace clap::analysis
