#pragma once

#include "numerics/parameter.hpp"
#include "numerics/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace clap::dataset {

using numerics::Index;
template <typename S>
using Matrix = numerics::Matrix<S>;

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr double kStdFloor = 1e-6;

struct Episode {
  Matrix<float> observations;  // T x obs_dim
  Matrix<float> actions;       // T x action_dim, in [-1, 1]
  std::vector<float> rewards;
  std::vector<std::uint8_t> terminals;

  Index length() const { return observations.rows(); }
  double total_reward() const;
  bool operator==(const Episode&) const = default;
};

struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
  bool operator==(const Normalization&) const = default;

  // Applies (x - mean) / std row-wise; identity while no statistics are set.
  template <typename S>
  Matrix<S> apply(const Matrix<float>& raw) const;
  template <typename S>
  Matrix<S> apply_row(const float* raw, Index dim) const;
};

class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;
  TrajectoryDataset(Index obs_dim, Index action_dim) : obs_dim_(obs_dim), action_dim_(action_dim) {}

  // Validates and appends (throws DataError naming the episode index).
  void add_episode(Episode episode);
  // Recomputes observation statistics over every step.
  void compute_normalization();

  Index obs_dim() const { return obs_dim_; }
  Index action_dim() const { return action_dim_; }
  const std::vector<Episode>& episodes() const { return episodes_; }
  const Episode& episode(std::size_t i) const { return episodes_.at(i); }
  std::size_t size() const { return episodes_.size(); }
  Index total_steps() const;
  double mean_return() const;

  const Normalization& normalization() const { return norm_; }
  void set_normalization(Normalization n);
  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  bool operator==(const TrajectoryDataset&) const;

 private:
  void validate(const Episode& e, std::size_t index) const;

  Index obs_dim_ = 0;
  Index action_dim_ = 0;
  std::vector<Episode> episodes_;
  Normalization norm_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

// File layout: "CLAPDATA", u64 header length, JSON header
// {format_version, obs_dim, action_dim, episode_lengths, obs_mean, obs_std,
// metadata}, then for every episode little-endian float32 blocks in the order
// observations (T x obs_dim, row-major), actions (T x action_dim), rewards (T),
// terminals (T, stored as 0/1).
void save(const TrajectoryDataset& data, const std::filesystem::path& path);
TrajectoryDataset load(const std::filesystem::path& path);

// Imports every *.csv file of a directory (sorted by name) as one episode.
// Header columns: obs_0..obs_{n-1}, act_0..act_{m-1}, reward, terminal.
TrajectoryDataset import_csv_directory(const std::filesystem::path& dir);

// Time-major window batch: entry t of each vector holds step t of all rows.
template <typename S>
struct WindowBatch {
  std::vector<Matrix<S>> observations;  // K x (B x obs_dim), normalized
  std::vector<Matrix<S>> actions;       // K x (B x action_dim)
  std::vector<Matrix<S>> rewards;       // K x (B x 1)
  std::vector<Matrix<S>> terminals;     // K x (B x 1)
  std::vector<Matrix<S>> mask;          // K x (B x 1), 1 = valid step

  Index batch() const { return observations.empty() ? 0 : observations.front().rows(); }
  Index window() const { return static_cast<Index>(observations.size()); }
  double valid_steps() const;
};

struct WindowRef {
  std::size_t episode = 0;
  Index start = 0;  // first step of the episode covered by the window
};

// Valid window starts of one episode: T - K + 1 when T >= K, else a single
// front-padded window.
Index valid_starts(Index episode_length, Index window);

// Draws B window positions uniformly over all valid (episode, start) pairs.
std::vector<WindowRef> sample_window_refs(const TrajectoryDataset& data, Index batch, Index window,
                                          numerics::Rng& rng);

// Materializes windows. Windows shorter than K are front-padded with zeros
// and mask 0; observations are normalized.
template <typename S>
WindowBatch<S> make_windows(const TrajectoryDataset& data, const std::vector<WindowRef>& refs, Index window);

template <typename S>
WindowBatch<S> sample_windows(const TrajectoryDataset& data, Index batch, Index window, numerics::Rng& rng);

// Batches per epoch: ceil(total_steps / (B * K)).
Index batches_per_epoch(const TrajectoryDataset& data, Index batch, Index window);

}  // namespace clap::dataset
