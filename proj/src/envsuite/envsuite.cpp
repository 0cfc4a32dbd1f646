#include "envsuite/envsuite.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace clap::envsuite {

namespace {

constexpr double kExpertGain = 3.0;
constexpr double kExpertDamping = 1.0;
constexpr double kExpertLimit = 0.9;

double clip_action(double a) { return std::clamp(a, -1.0, 1.0); }

}  // namespace

nlohmann::json PointMassConfig::to_json() const {
  return {{"obs_dim", obs_dim},         {"horizon", horizon},     {"dt", dt},
          {"damping", damping},         {"force_gain", force_gain}, {"obs_noise", obs_noise},
          {"goal", goal},               {"reward_scale", reward_scale}, {"reward_offset", reward_offset},
          {"projection_seed", projection_seed}};
}

PointMassConfig PointMassConfig::from_json(const nlohmann::json& j) {
  PointMassConfig c;
  try {
    c.obs_dim = j.at("obs_dim").get<Index>();
    c.horizon = j.at("horizon").get<Index>();
    c.dt = j.at("dt").get<double>();
    c.damping = j.at("damping").get<double>();
    c.force_gain = j.at("force_gain").get<double>();
    c.obs_noise = j.at("obs_noise").get<double>();
    c.goal = j.at("goal").get<std::array<double, 2>>();
    c.reward_scale = j.at("reward_scale").get<double>();
    c.reward_offset = j.at("reward_offset").get<double>();
    c.projection_seed = j.at("projection_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("environment description is incomplete: ") + e.what());
  }
  return c;
}

PointMass::PointMass(PointMassConfig config) : config_(config) {
  if (config_.obs_dim < 5) throw ConfigError("point-mass observations need at least 5 entries");
  if (config_.horizon < 2) throw ConfigError("point-mass horizon must be >= 2");
  numerics::Rng rng(config_.projection_seed);
  projection_ = rng.normal_matrix<double>(config_.obs_dim - 5, 4) * 0.5;
}

PointState PointMass::reset(numerics::Rng& rng) const {
  const double x = 2.0 * rng.uniform() - 1.0;
  return {x, 2.0 * rng.uniform() - 1.0, 0.0, 0.0, 0.0};
}

StepResult PointMass::step(const PointState& state, const std::array<double, 2>& action) const {
  StepResult out;
  PointState& next = out.state;
  for (int i = 0; i < 2; ++i) {
    const double a = clip_action(action[i]);
    double v = config_.damping * state[2 + i] + config_.dt * config_.force_gain * a;
    double p = state[i] + config_.dt * v;
    if (p > 1.0 || p < -1.0) {
      p = std::clamp(p, -1.0, 1.0);
      v = 0.0;
    }
    next[i] = p;
    next[2 + i] = v;
  }
  next[4] = state[4] + 1.0;
  out.reward = config_.reward_scale * (config_.reward_offset - goal_distance(next));
  out.terminal = next[4] + 1.0 >= static_cast<double>(config_.horizon);
  return out;
}

double PointMass::goal_distance(const PointState& s) const {
  return std::hypot(s[0] - config_.goal[0], s[1] - config_.goal[1]);
}

std::vector<float> PointMass::observe(const PointState& state, numerics::Rng& noise) const {
  std::vector<float> o(static_cast<std::size_t>(config_.obs_dim));
  for (int i = 0; i < 4; ++i) o[i] = static_cast<float>(state[i] + config_.obs_noise * noise.normal());
  o[4] = static_cast<float>(state[4] / static_cast<double>(config_.horizon));
  for (Index r = 0; r < projection_.rows(); ++r) {
    double v = 0.0;
    for (int c = 0; c < 4; ++c) v += projection_(r, c) * state[c];
    o[5 + r] = static_cast<float>(v + config_.obs_noise * noise.normal());
  }
  return o;
}

std::string to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::Expert: return "expert";
    case BehaviorKind::Medium: return "medium";
    case BehaviorKind::Replay: return "replay";
    case BehaviorKind::Random: return "random";
  }
  return "unknown";
}

BehaviorKind behavior_kind_from_string(const std::string& s) {
  if (s == "expert") return BehaviorKind::Expert;
  if (s == "medium") return BehaviorKind::Medium;
  if (s == "replay") return BehaviorKind::Replay;
  if (s == "random") return BehaviorKind::Random;
  throw ConfigError("unknown behavior policy '" + s + "' (valid: expert, medium, replay, random)");
}

BehaviorPolicy::BehaviorPolicy(BehaviorKind kind, const PointMassConfig& env) : kind_(kind), goal_(env.goal) {
  if (kind_ == BehaviorKind::Medium) {
    noise_ = 0.3;
    random_prob_ = 0.2;
  }
}

void BehaviorPolicy::begin_episode(numerics::Rng& rng) {
  if (kind_ != BehaviorKind::Replay) return;
  // Snapshots of a controller at different stages of training.
  static constexpr std::array<double, 4> kNoise{0.3, 0.6, 0.9, 1.2};
  static constexpr std::array<double, 4> kGain{0.8, 0.5, 0.3, 0.2};
  const auto pick = rng.below(kNoise.size());
  noise_ = kNoise[pick];
  gain_ = kGain[pick];
  random_prob_ = 0.4;
}

std::array<double, 2> BehaviorPolicy::pd(const PointState& s, double gain) const {
  std::array<double, 2> a{};
  for (int i = 0; i < 2; ++i) {
    a[i] = kExpertLimit * std::tanh(gain * (kExpertGain * (goal_[i] - s[i]) - kExpertDamping * s[2 + i]));
  }
  return a;
}

std::array<double, 2> BehaviorPolicy::act(const PointState& s, numerics::Rng& rng) const {
  if (kind_ == BehaviorKind::Random) return {2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
  std::array<double, 2> a = pd(s, gain_);
  if (kind_ == BehaviorKind::Expert) return a;
  const bool random = rng.uniform() < random_prob_;
  for (auto& x : a) {
    const double n = rng.normal();
    const double u = 2.0 * rng.uniform() - 1.0;
    x = clip_action(random ? u : x + noise_ * n);
  }
  return a;
}

RolloutSummary summarize(std::vector<double> returns) {
  RolloutSummary s;
  s.returns = std::move(returns);
  if (s.returns.empty()) return s;
  const double n = static_cast<double>(s.returns.size());
  s.mean = std::accumulate(s.returns.begin(), s.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : s.returns) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

std::uint64_t episode_seed(std::uint64_t seed, Index episode) {
  return numerics::derive_seed(seed, "episode-" + std::to_string(episode));
}

namespace {

// Returns the episode and its undiscounted return.
dataset::Episode rollout_behavior(const PointMass& env, BehaviorPolicy& policy, std::uint64_t seed) {
  numerics::Rng env_rng(numerics::derive_seed(seed, "env"));
  numerics::Rng act_rng(numerics::derive_seed(seed, "policy"));
  policy.begin_episode(act_rng);
  const Index t_max = env.horizon();
  dataset::Episode ep;
  ep.observations.resize(t_max, env.obs_dim());
  ep.actions.resize(t_max, env.action_dim());
  PointState state = env.reset(env_rng);
  double pending_reward = 0.0;
  for (Index t = 0; t < t_max; ++t) {
    auto o = env.observe(state, env_rng);
    for (Index j = 0; j < env.obs_dim(); ++j) ep.observations(t, j) = o[j];
    auto a = policy.act(state, act_rng);
    for (int j = 0; j < 2; ++j) ep.actions(t, j) = static_cast<float>(a[j]);
    // The reward stored at step t is the one that led to observation t.
    ep.rewards.push_back(static_cast<float>(pending_reward));
    ep.terminals.push_back(t + 1 == t_max ? 1 : 0);
    auto res = env.step(state, a);
    pending_reward = res.reward;
    state = res.state;
  }
  return ep;
}

}  // namespace

dataset::TrajectoryDataset generate_dataset(const PointMass& env, BehaviorKind kind, Index episodes,
                                            std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("need at least one episode, got " + std::to_string(episodes));
  dataset::TrajectoryDataset data(env.obs_dim(), env.action_dim());
  BehaviorPolicy policy(kind, env.config());
  for (Index e = 0; e < episodes; ++e) data.add_episode(rollout_behavior(env, policy, episode_seed(seed, e)));
  data.compute_normalization();
  data.metadata()["policy"] = to_string(kind);
  data.metadata()["episodes"] = episodes;
  data.metadata()["seed"] = seed;
  data.metadata()["mean_return"] = data.mean_return();
  data.metadata()["environment"] = env.config().to_json();
  return data;
}

DatasetTiers generate_tiers(const PointMass& env, Index episodes, std::uint64_t seed) {
  DatasetTiers t{generate_dataset(env, BehaviorKind::Expert, episodes, numerics::derive_seed(seed, "expert")),
                 generate_dataset(env, BehaviorKind::Medium, episodes, numerics::derive_seed(seed, "medium")),
                 generate_dataset(env, BehaviorKind::Replay, episodes, numerics::derive_seed(seed, "replay"))};
  const double e = t.expert.mean_return(), m = t.medium.mean_return(), r = t.replay.mean_return();
  if (!(e > m && m > r)) {
    throw DataError("dataset tiers are not ordered: expert " + std::to_string(e) + ", medium " + std::to_string(m) +
                    ", replay " + std::to_string(r));
  }
  return t;
}

RolloutSummary run_behavior(const PointMass& env, BehaviorKind kind, Index episodes, std::uint64_t seed) {
  BehaviorPolicy policy(kind, env.config());
  std::vector<double> returns;
  for (Index e = 0; e < episodes; ++e) returns.push_back(rollout_behavior(env, policy, episode_seed(seed, e)).total_reward());
  return summarize(std::move(returns));
}

// The last reward of an episode is never stored (it follows the final
// action), so references use the same truncated sum as the datasets.
ReferenceReturns reference_returns(const PointMass& env, Index episodes, std::uint64_t seed) {
  return {run_behavior(env, BehaviorKind::Random, episodes, seed).mean,
          run_behavior(env, BehaviorKind::Expert, episodes, seed).mean};
}

ReferenceReturns ReferenceReturns::from_json(const nlohmann::json& j) {
  try {
    return {j.at("random").get<double>(), j.at("expert").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("reference returns are incomplete: ") + e.what());
  }
}

double normalized_return(double raw, double random_ref, double expert_ref) {
  if (!(expert_ref > random_ref) || !std::isfinite(expert_ref) || !std::isfinite(random_ref)) {
    throw ConfigError("degenerate reference returns: expert " + std::to_string(expert_ref) + " must exceed random " +
                      std::to_string(random_ref));
  }
  return 100.0 * (raw - random_ref) / (expert_ref - random_ref);
}

template <typename S>
RolloutSummary evaluate(const PointMass& env, const world_model::WorldModel<S>& model, const agent::Agent<S>& agent,
                        const dataset::Normalization& normalization, Index episodes, std::uint64_t seed) {
  using numerics::Matrix;
  if (episodes < 1) throw ConfigError("need at least one evaluation episode");
  const auto& mc = model.config();
  if (mc.obs_dim != env.obs_dim() || mc.action_dim != env.action_dim()) {
    throw ConfigError("world model and environment dimensions differ");
  }
  std::vector<numerics::Rng> env_rngs;
  std::vector<PointState> states;
  for (Index e = 0; e < episodes; ++e) {
    env_rngs.emplace_back(numerics::derive_seed(episode_seed(seed, e), "env"));
    states.push_back(env.reset(env_rngs.back()));
  }
  numerics::SeededNoise<S> noise(numerics::derive_seed(seed, "eval-noise"));
  Matrix<S> h = Matrix<S>::Zero(episodes, mc.deter_size);
  Matrix<S> s = Matrix<S>::Zero(episodes, mc.stoch_size);
  Matrix<S> prev = Matrix<S>::Zero(episodes, mc.action_dim);
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
  Matrix<S> obs(episodes, mc.obs_dim);
  for (Index t = 0; t < env.horizon(); ++t) {
    for (Index e = 0; e < episodes; ++e) {
      auto o = env.observe(states[e], env_rngs[e]);
      obs.row(e) = normalization.apply_row<S>(o.data(), mc.obs_dim);
    }
    numerics::Tape<S> tape;
    world_model::Belief<S> carried{tape.constant(h), tape.constant(s)};
    auto out = model.observe_step(tape, carried, tape.constant(prev), tape.constant(obs), noise,
                                  world_model::StateReadout::Mean);
    Matrix<S> action = agent.act(tape, model, out.belief, noise, agent::ActMode::Mode).action.value();
    h = out.belief.h.value();
    s = out.belief.s.value();
    prev = action;
    // The final action's reward is dropped to match the stored datasets.
    if (t + 1 == env.horizon()) break;
    for (Index e = 0; e < episodes; ++e) {
      auto res = env.step(states[e], {static_cast<double>(action(e, 0)), static_cast<double>(action(e, 1))});
      returns[e] += res.reward;
      states[e] = res.state;
    }
  }
  return summarize(std::move(returns));
}

template RolloutSummary evaluate<float>(const PointMass&, const world_model::WorldModel<float>&,
                                        const agent::Agent<float>&, const dataset::Normalization&, Index,
                                        std::uint64_t);
template RolloutSummary evaluate<double>(const PointMass&, const world_model::WorldModel<double>&,
                                         const agent::Agent<double>&, const dataset::Normalization&, Index,
                                         std::uint64_t);

}  // namespace clap::envsuite
