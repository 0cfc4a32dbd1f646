#pragma once

#include "agent/agent.hpp"
#include "dataset/dataset.hpp"
#include "numerics/random.hpp"
#include "world_model/world_model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace clap::envsuite {

using numerics::Index;

struct PointMassConfig {
  Index obs_dim = 8;  // position, velocity, elapsed fraction, then a fixed random projection
  Index horizon = 100;
  double dt = 0.1;
  double damping = 0.9;
  double force_gain = 2.0;
  double obs_noise = 0.01;
  std::array<double, 2> goal{0.5, 0.5};
  double reward_scale = 1.0;
  double reward_offset = 1.0;
  std::uint64_t projection_seed = 20240917;

  nlohmann::json to_json() const;
  static PointMassConfig from_json(const nlohmann::json& j);
};

// Position (x, y), velocity (vx, vy) and the step index.
using PointState = std::array<double, 5>;

struct StepResult {
  PointState state;
  double reward = 0.0;
  bool terminal = false;
};

// Damped point mass in the box [-1, 1]^2. Hitting a wall clips the position
// and zeroes that velocity component. The reward depends on the new state
// only: r = scale * (offset - |p - goal|). The episode ends at the time
// limit, which the observation exposes as the elapsed fraction, so the end is
// a proper terminal state.
class PointMass {
 public:
  explicit PointMass(PointMassConfig config = {});

  const PointMassConfig& config() const { return config_; }
  Index obs_dim() const { return config_.obs_dim; }
  Index action_dim() const { return 2; }
  Index horizon() const { return config_.horizon; }

  PointState reset(numerics::Rng& rng) const;
  // Pure: the same (state, action) always gives the same result.
  StepResult step(const PointState& state, const std::array<double, 2>& action) const;
  std::vector<float> observe(const PointState& state, numerics::Rng& noise) const;
  double goal_distance(const PointState& state) const;

 private:
  PointMassConfig config_;
  numerics::Matrix<double> projection_;  // (obs_dim - 5) x 4
};

enum class BehaviorKind { Expert, Medium, Replay, Random };

std::string to_string(BehaviorKind k);
BehaviorKind behavior_kind_from_string(const std::string& s);

// Scripted controller. Medium adds Gaussian action noise and random actions;
// replay draws a weaker noisy controller per episode.
class BehaviorPolicy {
 public:
  explicit BehaviorPolicy(BehaviorKind kind, const PointMassConfig& env = {});

  BehaviorKind kind() const { return kind_; }
  // Called at the start of each episode (replay picks its controller here).
  void begin_episode(numerics::Rng& rng);
  std::array<double, 2> act(const PointState& state, numerics::Rng& rng) const;

 private:
  std::array<double, 2> pd(const PointState& state, double gain) const;

  BehaviorKind kind_;
  std::array<double, 2> goal_;
  double noise_ = 0.0;
  double random_prob_ = 0.0;
  double gain_ = 1.0;
};

struct RolloutSummary {
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;
};

RolloutSummary summarize(std::vector<double> returns);

// Per-episode seed so results do not depend on how episodes are batched.
std::uint64_t episode_seed(std::uint64_t seed, Index episode);

dataset::TrajectoryDataset generate_dataset(const PointMass& env, BehaviorKind kind, Index episodes,
                                            std::uint64_t seed);

// Expert, medium and replay datasets; throws DataError unless their mean
// returns are strictly ordered.
struct DatasetTiers {
  dataset::TrajectoryDataset expert;
  dataset::TrajectoryDataset medium;
  dataset::TrajectoryDataset replay;
};
DatasetTiers generate_tiers(const PointMass& env, Index episodes, std::uint64_t seed);

RolloutSummary run_behavior(const PointMass& env, BehaviorKind kind, Index episodes, std::uint64_t seed);

struct ReferenceReturns {
  double random = 0.0;
  double expert = 0.0;
  nlohmann::json to_json() const { return {{"random", random}, {"expert", expert}}; }
  static ReferenceReturns from_json(const nlohmann::json& j);
};

ReferenceReturns reference_returns(const PointMass& env, Index episodes = 200, std::uint64_t seed = 7);

// 100 (raw - random) / (expert - random).
double normalized_return(double raw, double random_ref, double expert_ref);
inline double normalized_return(double raw, const ReferenceReturns& r) {
  return normalized_return(raw, r.random, r.expert);
}

// Runs the agent in the real environment: per step the belief is updated
// from the new observation and the previous action (zero at the first
// step), then the mode of the policy is executed. All episodes advance as
// one batch.
template <typename S>
RolloutSummary evaluate(const PointMass& env, const world_model::WorldModel<S>& model, const agent::Agent<S>& agent,
                        const dataset::Normalization& normalization, Index episodes, std::uint64_t seed);

}  // namespace clap::envsuite
