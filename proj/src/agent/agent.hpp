#pragma once

#include "dataset/dataset.hpp"
#include "distributions/distributions.hpp"
#include "numerics/layers.hpp"
#include "numerics/optimizer.hpp"
#include "numerics/parameter.hpp"
#include "numerics/random.hpp"
#include "numerics/tape.hpp"
#include "world_model/world_model.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace clap::agent {

using numerics::Index;
using numerics::Matrix;
using numerics::NoiseSource;
using numerics::Tape;
using numerics::Var;
using world_model::Belief;
using world_model::WorldModel;

enum class PolicyVariant {
  // Bounded policy over the latent action, mapped into the prior's support.
  Constrained,
  // Unbounded Gaussian over the latent action, fed to the decoder as is.
  Unconstrained,
  // Tanh-Gaussian over environment actions (model without latent actions).
  Direct,
};

std::string to_string(PolicyVariant v);
PolicyVariant policy_variant_from_string(const std::string& s);

struct AgentConfig {
  PolicyVariant variant = PolicyVariant::Constrained;
  double epsilon = 2.0;  // support half-width in prior standard deviations
  Index policy_units = 256;
  Index policy_layers = 3;
  Index value_units = 256;
  Index value_layers = 3;
  double learning_rate = 8e-5;
  std::optional<double> clip_norm = 100.0;
  Index horizon = 5;
  double discount = 0.99;
  double lambda = 0.95;
  double entropy_scale = 0.01;
  // Scale of the policy's output layer at initialization.
  double policy_init_scale = 0.1;
  // Slowly updated critic copies for the targets (off by default).
  bool ema_critic = false;
  double ema_decay = 0.98;
  // Dataset windows sampled per update; every valid step is a start state.
  Index batch_size = 16;
  Index window = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static AgentConfig from_json(const nlohmann::json& j);
};

enum class ActMode { Sample, Mode };

// u = mean + (unit * epsilon) * std. The operation order makes the bound
// exact in floating point: |fl(unit * eps)| <= eps for |unit| <= 1, and
// every later step is monotone.
template <typename S>
Var<S> constraint_map(Var<S> unit, Var<S> prior_mean, Var<S> prior_std, S epsilon);

// Lower/upper edges of the admissible latent region, computed with the same
// rounding as constraint_map.
template <typename S>
std::pair<Matrix<S>, Matrix<S>> constraint_bounds(const Matrix<S>& prior_mean, const Matrix<S>& prior_std, S epsilon);

template <typename S>
struct PolicyStep {
  Var<S> action;       // environment action in [-1, 1]
  Var<S> entropy;      // B x 1 (estimate for squashed policies)
  // Latent-action variants only.
  std::optional<Var<S>> latent;
  std::optional<Var<S>> unit;  // bounded policy output (constrained only)
  std::optional<Var<S>> prior_mean;
  std::optional<Var<S>> prior_std;
};

template <typename S>
struct Trajectory {
  std::vector<Belief<S>> beliefs;    // tau = 0..H
  std::vector<Var<S>> actions;       // tau = 0..H-1
  std::vector<Var<S>> rewards;       // tau = 0..H-1, N x 1
  std::vector<Var<S>> continuation;  // tau = 0..H-1, N x 1
  std::vector<Var<S>> values;        // tau = 0..H, N x 1 (min over critics)
  std::vector<Var<S>> entropy;       // tau = 0..H-1, N x 1
  std::vector<PolicyStep<S>> steps;

  Index horizon() const { return static_cast<Index>(rewards.size()); }
};

// V_tau = r_tau + gamma c_tau [(1 - lambda) v_{tau+1} + lambda V_{tau+1}],
// V_H = v_H. Returns V_0..V_{H-1}.
template <typename S>
std::vector<Var<S>> lambda_returns(const std::vector<Var<S>>& rewards, const std::vector<Var<S>>& continuation,
                                   const std::vector<Var<S>>& values, double discount, double lambda);

// Cumulative weights prod_{i<tau} gamma c_i for tau = 0..H.
template <typename S>
std::vector<Matrix<S>> discount_weights(const std::vector<Var<S>>& continuation, double discount);

struct AgentMetrics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_value = 0.0;
  double mean_return_estimate = 0.0;
  double entropy = 0.0;
  // mean |u - prior mean| / prior std (latent-action variants).
  double utilization = 0.0;
};

template <typename S>
class Agent {
 public:
  Agent(const AgentConfig& config, const world_model::ModelConfig& model_config, numerics::Rng& init_rng);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const AgentConfig& config() const { return config_; }
  numerics::ParameterStore<S>& policy_parameters() { return policy_store_; }
  numerics::ParameterStore<S>& critic_parameters() { return critic_store_; }
  const numerics::ParameterStore<S>& policy_parameters() const { return policy_store_; }
  const numerics::ParameterStore<S>& critic_parameters() const { return critic_store_; }
  numerics::ParameterStore<S>& target_parameters() { return target_store_; }
  const numerics::ParameterStore<S>& target_parameters() const { return target_store_; }
  numerics::Adam<S>& actor_optimizer() { return *actor_opt_; }
  numerics::Adam<S>& critic_optimizer() { return *critic_opt_; }
  const numerics::Adam<S>& actor_optimizer() const { return *actor_opt_; }
  const numerics::Adam<S>& critic_optimizer() const { return *critic_opt_; }

  PolicyStep<S> act(Tape<S>& tape, const WorldModel<S>& model, const Belief<S>& belief, NoiseSource<S>& noise,
                    ActMode mode) const;
  // Min over the twin critics (or their slow copies when `target`).
  Var<S> value(Tape<S>& tape, const Belief<S>& belief, bool target = false) const;
  Var<S> critic_value(Tape<S>& tape, const Belief<S>& belief, int which) const;

  Trajectory<S> imagine_rollout(Tape<S>& tape, const WorldModel<S>& model, const Belief<S>& start,
                                NoiseSource<S>& noise) const;
  // -mean_tau[V_tau + entropy_scale * entropy_tau].
  Var<S> actor_loss(Tape<S>& tape, const Trajectory<S>& trajectory, std::vector<Var<S>>* returns = nullptr) const;
  // Mean over tau < H and both critics of 0.5 (v - V)^2 with detached beliefs
  // and targets.
  Var<S> critic_loss(Tape<S>& tape, const std::vector<Matrix<S>>& beliefs_h, const std::vector<Matrix<S>>& beliefs_s,
                     const std::vector<Matrix<S>>& targets) const;

  // Posterior beliefs of every valid step of the windows, as start states.
  Belief<S> start_states(Tape<S>& tape, const WorldModel<S>& model, const dataset::WindowBatch<S>& batch,
                         NoiseSource<S>& noise) const;

  // One actor update followed by one critic update. The model stays frozen.
  AgentMetrics train_step(WorldModel<S>& model, const dataset::TrajectoryDataset& data, numerics::Rng& data_rng,
                          NoiseSource<S>& noise);

 private:
  void check_model(const WorldModel<S>& model) const;
  void update_targets();

  AgentConfig config_;
  Index feature_size_ = 0;
  Index policy_out_ = 0;
  numerics::ParameterStore<S> policy_store_;
  numerics::ParameterStore<S> critic_store_;
  numerics::ParameterStore<S> target_store_;
  numerics::DenseBlock<S> policy_;
  numerics::DenseBlock<S> critic_[2];
  numerics::DenseBlock<S> target_[2];
  std::unique_ptr<numerics::Adam<S>> actor_opt_;
  std::unique_ptr<numerics::Adam<S>> critic_opt_;
};

}  // namespace clap::agent
