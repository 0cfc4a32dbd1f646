#include "agent/agent.hpp"

#include "common/error.hpp"

#include <cmath>

namespace clap::agent {

using distributions::DiagGaussian;
using distributions::gaussian_head;
using distributions::TanhGaussian;
using numerics::Activation;
using numerics::DenseBlock;
using world_model::from_unit_interval;

namespace {

std::vector<Index> mlp(Index in, Index units, Index layers, Index out) {
  std::vector<Index> w{in};
  for (Index i = 0; i < layers; ++i) w.push_back(units);
  w.push_back(out);
  return w;
}

template <typename S>
double mean_of(Var<S> v) {
  return static_cast<double>(v.value().template cast<double>().mean());
}

}  // namespace

std::string to_string(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::Constrained: return "constrained";
    case PolicyVariant::Unconstrained: return "no-constraint";
    case PolicyVariant::Direct: return "no-latent-action";
  }
  return "unknown";
}

PolicyVariant policy_variant_from_string(const std::string& s) {
  if (s == "constrained") return PolicyVariant::Constrained;
  if (s == "no-constraint") return PolicyVariant::Unconstrained;
  if (s == "no-latent-action") return PolicyVariant::Direct;
  throw ConfigError("unknown policy variant '" + s + "' (valid: constrained, no-constraint, no-latent-action)");
}

void AgentConfig::validate() const {
  if (horizon < 1) throw ConfigError("imagination horizon must be >= 1, got " + std::to_string(horizon));
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  if (!(epsilon > 0.0)) throw ConfigError("support width epsilon must be positive");
  if (!(entropy_scale >= 0.0)) throw ConfigError("entropy scale must be non-negative");
  if (policy_units <= 0 || value_units <= 0 || policy_layers < 0 || value_layers < 0) {
    throw ConfigError("agent network widths must be positive");
  }
  if (batch_size <= 0 || window <= 0) throw ConfigError("agent batch size and window must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("agent learning rate must be positive");
  if (ema_critic && !(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema decay must lie in (0, 1)");
}

nlohmann::json AgentConfig::to_json() const {
  nlohmann::json j{{"variant", to_string(variant)},
                   {"epsilon", epsilon},
                   {"policy_units", policy_units},
                   {"policy_layers", policy_layers},
                   {"value_units", value_units},
                   {"value_layers", value_layers},
                   {"learning_rate", learning_rate},
                   {"horizon", horizon},
                   {"discount", discount},
                   {"lambda", lambda},
                   {"entropy_scale", entropy_scale},
                   {"policy_init_scale", policy_init_scale},
                   {"ema_critic", ema_critic},
                   {"ema_decay", ema_decay},
                   {"batch_size", batch_size},
                   {"window", window}};
  j["clip_norm"] = clip_norm ? nlohmann::json(*clip_norm) : nlohmann::json(nullptr);
  return j;
}

AgentConfig AgentConfig::from_json(const nlohmann::json& j) {
  AgentConfig c;
  try {
    c.variant = policy_variant_from_string(j.at("variant").get<std::string>());
    c.epsilon = j.at("epsilon").get<double>();
    c.policy_units = j.at("policy_units").get<Index>();
    c.policy_layers = j.at("policy_layers").get<Index>();
    c.value_units = j.at("value_units").get<Index>();
    c.value_layers = j.at("value_layers").get<Index>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.horizon = j.at("horizon").get<Index>();
    c.discount = j.at("discount").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.entropy_scale = j.at("entropy_scale").get<double>();
    c.policy_init_scale = j.at("policy_init_scale").get<double>();
    c.ema_critic = j.at("ema_critic").get<bool>();
    c.ema_decay = j.at("ema_decay").get<double>();
    c.batch_size = j.at("batch_size").get<Index>();
    c.window = j.at("window").get<Index>();
    const auto& clip = j.at("clip_norm");
    c.clip_norm = clip.is_null() ? std::nullopt : std::optional<double>(clip.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("agent config in checkpoint is incomplete: ") + e.what());
  }
  return c;
}

template <typename S>
Var<S> constraint_map(Var<S> unit, Var<S> prior_mean, Var<S> prior_std, S epsilon) {
  return prior_mean + (unit * epsilon) * prior_std;
}

template <typename S>
std::pair<Matrix<S>, Matrix<S>> constraint_bounds(const Matrix<S>& prior_mean, const Matrix<S>& prior_std,
                                                  S epsilon) {
  const Matrix<S> half = (prior_std.array() * epsilon).matrix();
  return {prior_mean - half, prior_mean + half};
}

template <typename S>
std::vector<Var<S>> lambda_returns(const std::vector<Var<S>>& rewards, const std::vector<Var<S>>& continuation,
                                   const std::vector<Var<S>>& values, double discount, double lambda) {
  const std::size_t h = rewards.size();
  if (h == 0 || continuation.size() != h || values.size() != h + 1) {
    throw ConfigError("lambda_returns needs H rewards, H continuation weights and H+1 values");
  }
  std::vector<Var<S>> out(h);
  Var<S> next = values[h];
  for (std::size_t i = h; i-- > 0;) {
    Var<S> mix = values[i + 1] * S(1.0 - lambda) + next * S(lambda);
    next = rewards[i] + continuation[i] * S(discount) * mix;
    out[i] = next;
  }
  return out;
}

template <typename S>
std::vector<Matrix<S>> discount_weights(const std::vector<Var<S>>& continuation, double discount) {
  std::vector<Matrix<S>> w;
  Matrix<S> acc = Matrix<S>::Ones(continuation.front().rows(), 1);
  w.push_back(acc);
  for (const auto& c : continuation) {
    acc = (acc.array() * c.value().array() * S(discount)).matrix();
    w.push_back(acc);
  }
  return w;
}

template <typename S>
Agent<S>::Agent(const AgentConfig& config, const world_model::ModelConfig& mc, numerics::Rng& rng) : config_(config) {
  config_.validate();
  const bool latent = config_.variant != PolicyVariant::Direct;
  if (latent && !mc.latent_actions) {
    throw ConfigError("policy variant '" + to_string(config_.variant) +
                      "' needs a world model with latent actions; use 'no-latent-action'");
  }
  if (!latent && mc.latent_actions) {
    throw ConfigError("policy variant 'no-latent-action' needs a world model built without latent actions");
  }
  feature_size_ = mc.feature_size();
  policy_out_ = 2 * (latent ? mc.latent_action_size : mc.action_dim);
  policy_ = DenseBlock<S>(policy_store_, "policy",
                          mlp(feature_size_, config_.policy_units, config_.policy_layers, policy_out_),
                          Activation::Selu, rng);
  policy_.scale_output(static_cast<S>(config_.policy_init_scale));
  for (int i = 0; i < 2; ++i) {
    const std::string name = "critic" + std::to_string(i);
    critic_[i] = DenseBlock<S>(critic_store_, name, mlp(feature_size_, config_.value_units, config_.value_layers, 1),
                               Activation::Selu, rng);
    critic_[i].scale_output(S(0));
  }
  if (config_.ema_critic) {
    for (int i = 0; i < 2; ++i) {
      target_[i] = DenseBlock<S>(target_store_, "target" + std::to_string(i),
                                 mlp(feature_size_, config_.value_units, config_.value_layers, 1), Activation::Selu, rng);
      auto src = critic_[i].parameters();
      auto dst = target_[i].parameters();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k]->value = src[k]->value;
    }
    target_store_.set_requires_grad(false);
  }
  numerics::AdamConfig opt;
  opt.learning_rate = config_.learning_rate;
  opt.clip_norm = config_.clip_norm;
  actor_opt_ = std::make_unique<numerics::Adam<S>>("actor", policy_store_.all(), opt);
  critic_opt_ = std::make_unique<numerics::Adam<S>>("critic", critic_store_.all(), opt);
}

template <typename S>
void Agent<S>::check_model(const WorldModel<S>& model) const {
  if (model.config().feature_size() != feature_size_) throw ConfigError("agent and world model widths differ");
}

template <typename S>
PolicyStep<S> Agent<S>::act(Tape<S>& tape, const WorldModel<S>& model, const Belief<S>& belief,
                            NoiseSource<S>& noise, ActMode mode) const {
  Var<S> raw = policy_.forward(tape, belief.features());
  const Index n = raw.rows();
  PolicyStep<S> step;
  switch (config_.variant) {
    case PolicyVariant::Constrained: {
      TanhGaussian<S> dist{gaussian_head(raw)};
      Var<S> unit;
      if (mode == ActMode::Sample) {
        auto smp = dist.rsample(noise);
        unit = smp.value;
        step.entropy = -dist.log_prob_pre(smp.pre_tanh);
      } else {
        unit = dist.mode();
        step.entropy = tape.constant(n, 1, S(0));
      }
      DiagGaussian<S> prior = model.action_prior(tape, belief);
      Var<S> u = constraint_map(unit, prior.mean, prior.std, static_cast<S>(config_.epsilon));
      auto dec = model.action_decoder(tape, belief, u);
      step.action = from_unit_interval(mode == ActMode::Sample ? dec.rsample(noise) : dec.mode());
      step.unit = unit;
      step.latent = u;
      step.prior_mean = prior.mean;
      step.prior_std = prior.std;
      break;
    }
    case PolicyVariant::Unconstrained: {
      DiagGaussian<S> dist = gaussian_head(raw);
      Var<S> u = mode == ActMode::Sample ? dist.rsample(noise) : dist.mean;
      step.entropy = mode == ActMode::Sample ? dist.entropy() : tape.constant(n, 1, S(0));
      DiagGaussian<S> prior = model.action_prior(tape, belief);
      auto dec = model.action_decoder(tape, belief, u);
      step.action = from_unit_interval(mode == ActMode::Sample ? dec.rsample(noise) : dec.mode());
      step.latent = u;
      step.prior_mean = prior.mean;
      step.prior_std = prior.std;
      break;
    }
    case PolicyVariant::Direct: {
      TanhGaussian<S> dist{gaussian_head(raw)};
      if (mode == ActMode::Sample) {
        auto smp = dist.rsample(noise);
        step.action = smp.value;
        step.entropy = -dist.log_prob_pre(smp.pre_tanh);
      } else {
        step.action = dist.mode();
        step.entropy = tape.constant(n, 1, S(0));
      }
      break;
    }
  }
  return step;
}

template <typename S>
Var<S> Agent<S>::critic_value(Tape<S>& tape, const Belief<S>& belief, int which) const {
  return critic_[which].forward(tape, belief.features());
}

template <typename S>
Var<S> Agent<S>::value(Tape<S>& tape, const Belief<S>& belief, bool target) const {
  Var<S> f = belief.features();
  if (target && config_.ema_critic) return minimum(target_[0].forward(tape, f), target_[1].forward(tape, f));
  return minimum(critic_[0].forward(tape, f), critic_[1].forward(tape, f));
}

template <typename S>
Trajectory<S> Agent<S>::imagine_rollout(Tape<S>& tape, const WorldModel<S>& model, const Belief<S>& start,
                                        NoiseSource<S>& noise) const {
  check_model(model);
  Trajectory<S> traj;
  traj.beliefs.push_back(start);
  for (Index tau = 0; tau < config_.horizon; ++tau) {
    const Belief<S>& b = traj.beliefs.back();
    PolicyStep<S> step = act(tape, model, b, noise, ActMode::Sample);
    traj.rewards.push_back(model.reward_mean(tape, b));
    traj.continuation.push_back(S(1) - sigmoid(model.termination_logits(tape, b)));
    traj.values.push_back(value(tape, b, true));
    traj.entropy.push_back(step.entropy);
    traj.actions.push_back(step.action);
    Belief<S> next = model.imagine_step(tape, b, step.action, noise).belief;
    traj.steps.push_back(std::move(step));
    traj.beliefs.push_back(next);
  }
  traj.values.push_back(value(tape, traj.beliefs.back(), true));
  return traj;
}

template <typename S>
Var<S> Agent<S>::actor_loss(Tape<S>& tape, const Trajectory<S>& traj, std::vector<Var<S>>* returns) const {
  auto v = lambda_returns(traj.rewards, traj.continuation, traj.values, config_.discount, config_.lambda);
  Var<S> total = tape.constant(1, 1, S(0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    total = total + sum(v[i] + traj.entropy[i] * S(config_.entropy_scale));
  }
  const double count = static_cast<double>(v.size()) * static_cast<double>(v.front().rows());
  Var<S> loss = total * S(-1.0 / count);
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericalError("non-finite actor loss (mean reward " + std::to_string(mean_of(traj.rewards.front())) +
                         ", mean value " + std::to_string(mean_of(traj.values.front())) + ")");
  }
  if (returns != nullptr) *returns = std::move(v);
  return loss;
}

template <typename S>
Var<S> Agent<S>::critic_loss(Tape<S>& tape, const std::vector<Matrix<S>>& beliefs_h,
                             const std::vector<Matrix<S>>& beliefs_s, const std::vector<Matrix<S>>& targets) const {
  if (beliefs_h.size() != targets.size() || beliefs_s.size() != targets.size() || targets.empty()) {
    throw ConfigError("critic_loss needs one belief per target");
  }
  Var<S> total = tape.constant(1, 1, S(0));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Belief<S> b{tape.constant(beliefs_h[i]), tape.constant(beliefs_s[i])};
    Var<S> target = tape.constant(targets[i]);
    for (int c = 0; c < 2; ++c) total = total + sum(square(critic_value(tape, b, c) - target));
  }
  const double count = 2.0 * static_cast<double>(targets.size()) * static_cast<double>(targets.front().rows());
  return total * S(0.5 / count);
}

template <typename S>
Belief<S> Agent<S>::start_states(Tape<S>& tape, const WorldModel<S>& model, const dataset::WindowBatch<S>& batch,
                                 NoiseSource<S>& noise) const {
  auto beliefs = model.observe_sequence(tape, batch, noise, world_model::StateReadout::Sample);
  const Index count = static_cast<Index>(batch.valid_steps());
  if (count == 0) throw DataError("sampled windows contain no valid steps");
  const auto& mc = model.config();
  Matrix<S> h(count, mc.deter_size), s(count, mc.stoch_size);
  Index row = 0;
  for (std::size_t t = 0; t < beliefs.size(); ++t) {
    for (Index b = 0; b < batch.batch(); ++b) {
      if (batch.mask[t](b, 0) == S(0)) continue;
      h.row(row) = beliefs[t].h.value().row(b);
      s.row(row) = beliefs[t].s.value().row(b);
      ++row;
    }
  }
  return {tape.constant(std::move(h)), tape.constant(std::move(s))};
}

template <typename S>
void Agent<S>::update_targets() {
  if (!config_.ema_critic) return;
  const S d = static_cast<S>(config_.ema_decay);
  for (int i = 0; i < 2; ++i) {
    auto src = critic_[i].parameters();
    auto dst = target_[i].parameters();
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k]->value = (dst[k]->value.array() * d + src[k]->value.array() * (S(1) - d)).matrix();
    }
  }
}

template <typename S>
AgentMetrics Agent<S>::train_step(WorldModel<S>& model, const dataset::TrajectoryDataset& data,
                                  numerics::Rng& data_rng, NoiseSource<S>& noise) {
  check_model(model);
  model.set_trainable(false);
  auto batch = dataset::sample_windows<S>(data, config_.batch_size, config_.window, data_rng);

  AgentMetrics m;
  std::vector<Matrix<S>> hs, ss, targets;
  {
    Tape<S> tape;
    Belief<S> start = start_states(tape, model, batch, noise);
    critic_store_.set_requires_grad(false);
    Trajectory<S> traj = imagine_rollout(tape, model, start, noise);
    std::vector<Var<S>> returns;
    Var<S> loss = actor_loss(tape, traj, &returns);
    critic_store_.set_requires_grad(true);
    policy_store_.zero_gradients();
    tape.backward(loss);
    actor_opt_->apply();

    m.actor_loss = static_cast<double>(loss.item());
    m.mean_value = mean_of(traj.values.front());
    m.mean_return_estimate = mean_of(returns.front());
    double ent = 0.0, util = 0.0;
    Index util_count = 0;
    for (std::size_t i = 0; i < returns.size(); ++i) {
      hs.push_back(traj.beliefs[i].h.value());
      ss.push_back(traj.beliefs[i].s.value());
      targets.push_back(returns[i].value());
      ent += mean_of(traj.entropy[i]);
      const auto& st = traj.steps[i];
      if (st.latent) {
        const auto dev = ((st.latent->value() - st.prior_mean->value()).array().abs() / st.prior_std->value().array());
        util += static_cast<double>(dev.template cast<double>().sum());
        util_count += dev.size();
      }
    }
    m.entropy = ent / static_cast<double>(returns.size());
    m.utilization = util_count > 0 ? util / static_cast<double>(util_count) : 0.0;
  }
  {
    Tape<S> tape;
    Var<S> loss = critic_loss(tape, hs, ss, targets);
    critic_store_.zero_gradients();
    tape.backward(loss);
    critic_opt_->apply();
    update_targets();
    m.critic_loss = static_cast<double>(loss.item());
  }
  return m;
}

#define CLAP_INSTANTIATE(S)                                                                                    \
  template class Agent<S>;                                                                                     \
  template Var<S> constraint_map<S>(Var<S>, Var<S>, Var<S>, S);                                                \
  template std::pair<Matrix<S>, Matrix<S>> constraint_bounds<S>(const Matrix<S>&, const Matrix<S>&, S);        \
  template std::vector<Var<S>> lambda_returns<S>(const std::vector<Var<S>>&, const std::vector<Var<S>>&,       \
                                                 const std::vector<Var<S>>&, double, double);                  \
  template std::vector<Matrix<S>> discount_weights<S>(const std::vector<Var<S>>&, double);

CLAP_INSTANTIATE(float)
CLAP_INSTANTIATE(double)
#undef CLAP_INSTANTIATE

}  // namespace clap::agent
