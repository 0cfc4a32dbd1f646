#include "world_model/world_model.hpp"

#include "common/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace clap::world_model {

using distributions::Bernoulli;
using distributions::beta_head;
using distributions::gaussian_head;
using distributions::kl_gaussian;
using distributions::unit_gaussian_log_prob;
using numerics::Activation;
using numerics::DenseBlock;
using numerics::selu;

namespace {

std::vector<Index> mlp(Index in, Index units, Index layers, Index out) {
  std::vector<Index> w{in};
  for (Index i = 0; i < layers; ++i) w.push_back(units);
  w.push_back(out);
  return w;
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
  return {{"obs_dim", obs_dim},
          {"action_dim", action_dim},
          {"deter_size", deter_size},
          {"stoch_size", stoch_size},
          {"embed_size", embed_size},
          {"latent_action_size", latent_action_size},
          {"hidden_units", hidden_units},
          {"encoder_units", encoder_units},
          {"encoder_layers", encoder_layers},
          {"decoder_units", decoder_units},
          {"decoder_layers", decoder_layers},
          {"action_encoder_units", action_encoder_units},
          {"action_encoder_layers", action_encoder_layers},
          {"action_decoder_units", action_decoder_units},
          {"action_decoder_layers", action_decoder_layers},
          {"action_prior_units", action_prior_units},
          {"action_prior_layers", action_prior_layers},
          {"head_units", head_units},
          {"head_layers", head_layers},
          {"free_nats", free_nats},
          {"latent_actions", latent_actions}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.obs_dim = j.at("obs_dim").get<Index>();
    c.action_dim = j.at("action_dim").get<Index>();
    c.deter_size = j.at("deter_size").get<Index>();
    c.stoch_size = j.at("stoch_size").get<Index>();
    c.embed_size = j.at("embed_size").get<Index>();
    c.latent_action_size = j.at("latent_action_size").get<Index>();
    c.hidden_units = j.at("hidden_units").get<Index>();
    c.encoder_units = j.at("encoder_units").get<Index>();
    c.encoder_layers = j.at("encoder_layers").get<Index>();
    c.decoder_units = j.at("decoder_units").get<Index>();
    c.decoder_layers = j.at("decoder_layers").get<Index>();
    c.action_encoder_units = j.at("action_encoder_units").get<Index>();
    c.action_encoder_layers = j.at("action_encoder_layers").get<Index>();
    c.action_decoder_units = j.at("action_decoder_units").get<Index>();
    c.action_decoder_layers = j.at("action_decoder_layers").get<Index>();
    c.action_prior_units = j.at("action_prior_units").get<Index>();
    c.action_prior_layers = j.at("action_prior_layers").get<Index>();
    c.head_units = j.at("head_units").get<Index>();
    c.head_layers = j.at("head_layers").get<Index>();
    c.free_nats = j.at("free_nats").get<double>();
    c.latent_actions = j.at("latent_actions").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config in checkpoint is incomplete: ") + e.what());
  }
  return c;
}

std::map<std::string, double> ModelMetrics::as_map() const {
  std::map<std::string, double> m{{"loss", loss},         {"obs_nll", obs_nll},       {"kl_state", kl_state},
                                  {"reward_nll", reward_nll}, {"term_nll", term_nll}};
  if (has_action_terms) {
    m["act_nll"] = act_nll;
    m["kl_action"] = kl_action;
  }
  return m;
}

std::string ModelMetrics::describe() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : as_map()) {
    os << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return os.str();
}

template <typename S>
WorldModel<S>::WorldModel(const ModelConfig& c, numerics::Rng& rng) : config_(c) {
  if (c.obs_dim <= 0 || c.action_dim <= 0) throw ConfigError("world model needs positive observation/action widths");
  if (c.deter_size <= 0 || c.stoch_size <= 0 || c.embed_size <= 0 || c.hidden_units <= 0) {
    throw ConfigError("world model widths must be positive");
  }
  const Index feat = c.feature_size();
  transition_in_ = DenseBlock<S>(store_, "transition/input", {c.stoch_size + c.action_dim, c.hidden_units},
                                 Activation::Linear, rng);
  gru_ = numerics::GruCell<S>(store_, "transition/gru", c.hidden_units, c.deter_size, rng);
  prior_net_ = DenseBlock<S>(store_, "state_prior", {c.deter_size, c.hidden_units, 2 * c.stoch_size},
                             Activation::Selu, rng);
  embed_net_ = DenseBlock<S>(store_, "obs_encoder", mlp(c.obs_dim, c.encoder_units, c.encoder_layers, c.embed_size),
                             Activation::Selu, rng);
  posterior_net_ = DenseBlock<S>(store_, "state_posterior",
                                 {c.deter_size + c.embed_size, c.hidden_units, 2 * c.stoch_size}, Activation::Selu, rng);
  obs_decoder_ = DenseBlock<S>(store_, "obs_decoder", mlp(feat, c.decoder_units, c.decoder_layers, c.obs_dim),
                               Activation::Selu, rng);
  reward_net_ = DenseBlock<S>(store_, "reward", mlp(feat, c.head_units, c.head_layers, 1), Activation::Selu, rng);
  term_net_ = DenseBlock<S>(store_, "termination", mlp(feat, c.head_units, c.head_layers, 1), Activation::Selu, rng);
  if (c.latent_actions) {
    if (c.latent_action_size <= 0) throw ConfigError("latent action width must be positive");
    action_prior_net_ =
        DenseBlock<S>(store_, "action_prior",
                      mlp(feat, c.action_prior_units, c.action_prior_layers, 2 * c.latent_action_size),
                      Activation::Selu, rng);
    action_encoder_ = DenseBlock<S>(
        store_, "action_posterior",
        mlp(feat + c.action_dim, c.action_encoder_units, c.action_encoder_layers, 2 * c.latent_action_size),
        Activation::Selu, rng);
    action_decoder_net_ = DenseBlock<S>(
        store_, "action_decoder",
        mlp(feat + c.latent_action_size, c.action_decoder_units, c.action_decoder_layers, 2 * c.action_dim),
        Activation::Selu, rng);
  }
}

template <typename S>
void WorldModel<S>::require_latent_actions(const char* what) const {
  if (!config_.latent_actions) {
    throw ConfigError(std::string(what) + " is unavailable: this model was built without latent actions");
  }
}

template <typename S>
Belief<S> WorldModel<S>::initial_belief(Tape<S>& tape, Index batch) const {
  return {tape.constant(batch, config_.deter_size, S(0)), tape.constant(batch, config_.stoch_size, S(0))};
}

template <typename S>
Var<S> WorldModel<S>::transition(Tape<S>& tape, const Belief<S>& prev, Var<S> prev_action) const {
  Var<S> x = selu(transition_in_.forward(tape, concat_cols({prev.s, prev_action})));
  return gru_.forward(tape, prev.h, x);
}

template <typename S>
DiagGaussian<S> WorldModel<S>::state_prior(Tape<S>& tape, Var<S> h) const {
  return gaussian_head(prior_net_.forward(tape, h));
}

template <typename S>
DiagGaussian<S> WorldModel<S>::state_posterior(Tape<S>& tape, Var<S> h, Var<S> obs) const {
  Var<S> e = embed_net_.forward(tape, obs);
  return gaussian_head(posterior_net_.forward(tape, concat_cols({h, e})));
}

template <typename S>
ObserveOutput<S> WorldModel<S>::observe_step(Tape<S>& tape, const Belief<S>& prev, Var<S> prev_action, Var<S> obs,
                                             NoiseSource<S>& noise, StateReadout readout) const {
  Var<S> h = transition(tape, prev, prev_action);
  DiagGaussian<S> prior = state_prior(tape, h);
  DiagGaussian<S> post = state_posterior(tape, h, obs);
  Var<S> s = readout == StateReadout::Sample ? post.rsample(noise) : post.mean;
  return {post, prior, {h, s}};
}

template <typename S>
ImagineOutput<S> WorldModel<S>::imagine_step(Tape<S>& tape, const Belief<S>& prev, Var<S> action,
                                             NoiseSource<S>& noise) const {
  Var<S> h = transition(tape, prev, action);
  DiagGaussian<S> prior = state_prior(tape, h);
  return {prior, {h, prior.rsample(noise)}};
}

template <typename S>
DiagGaussian<S> WorldModel<S>::action_prior(Tape<S>& tape, const Belief<S>& belief) const {
  require_latent_actions("action prior");
  return gaussian_head(action_prior_net_.forward(tape, belief.features()));
}

template <typename S>
DiagGaussian<S> WorldModel<S>::posterior_action(Tape<S>& tape, const Belief<S>& belief, Var<S> action) const {
  require_latent_actions("action posterior");
  return gaussian_head(action_encoder_.forward(tape, concat_cols({belief.h, belief.s, action})));
}

template <typename S>
BetaVector<S> WorldModel<S>::action_decoder(Tape<S>& tape, const Belief<S>& belief, Var<S> latent_action) const {
  require_latent_actions("action decoder");
  return beta_head(action_decoder_net_.forward(tape, concat_cols({belief.h, belief.s, latent_action})));
}

template <typename S>
Var<S> WorldModel<S>::observation_mean(Tape<S>& tape, const Belief<S>& belief) const {
  return obs_decoder_.forward(tape, belief.features());
}

template <typename S>
Var<S> WorldModel<S>::reward_mean(Tape<S>& tape, const Belief<S>& belief) const {
  return reward_net_.forward(tape, belief.features());
}

template <typename S>
Var<S> WorldModel<S>::termination_logits(Tape<S>& tape, const Belief<S>& belief) const {
  return term_net_.forward(tape, belief.features());
}

template <typename S>
Var<S> to_unit_interval(Var<S> action) {
  return (action + S(1)) * S(0.5);
}

template <typename S>
Var<S> from_unit_interval(Var<S> x) {
  return x * S(2) - S(1);
}

template <typename S>
Var<S> action_log_prob(const BetaVector<S>& decoder, Var<S> action) {
  const S log2 = static_cast<S>(std::numbers::ln2);
  return decoder.log_prob(to_unit_interval(action)) - S(static_cast<double>(action.cols()) * log2);
}

template <typename S>
ModelLoss<S> WorldModel<S>::model_loss(Tape<S>& tape, const dataset::WindowBatch<S>& batch,
                                       NoiseSource<S>& noise) const {
  const Index b = batch.batch();
  const Index k = batch.window();
  if (k == 0 || b == 0) throw ConfigError("model_loss on an empty batch");
  if (batch.observations.front().cols() != config_.obs_dim || batch.actions.front().cols() != config_.action_dim) {
    throw ConfigError("batch widths do not match the world model");
  }
  const double valid = batch.valid_steps();

  Belief<S> belief = initial_belief(tape, b);
  Var<S> prev_action = tape.constant(b, config_.action_dim, S(0));
  Var<S> total = tape.constant(1, 1, S(0));
  double sums[6] = {0, 0, 0, 0, 0, 0};  // obs, act, kl_s, kl_a, rew, term
  auto accumulate_metric = [&](int slot, Var<S> per_row, const Matrix<S>& mask) {
    sums[slot] += static_cast<double>((per_row.value().array() * mask.array()).sum());
  };
  auto floor_kl = [&](Var<S> kl) {
    if (config_.free_nats <= 0.0) return kl;
    const Matrix<S> above = (kl.value().array() > S(config_.free_nats)).template cast<S>().matrix();
    return tape.select(above, kl, tape.constant(kl.rows(), 1, S(config_.free_nats)));
  };

  for (Index t = 0; t < k; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const Matrix<S>& mask = batch.mask[ti];
    // A belief is carried only across valid steps; the first valid step of a
    // window always starts from the zero belief and zero previous action.
    Var<S> keep = tape.constant(t == 0 ? Matrix<S>::Zero(b, 1) : batch.mask[ti - 1]);
    Belief<S> carried{belief.h * keep, belief.s * keep};
    Var<S> obs = tape.constant(batch.observations[ti]);
    ObserveOutput<S> out = observe_step(tape, carried, prev_action * keep, obs, noise, StateReadout::Sample);

    Var<S> obs_nll = -unit_gaussian_log_prob(observation_mean(tape, out.belief), obs);
    Var<S> rew_nll = -unit_gaussian_log_prob(reward_mean(tape, out.belief), tape.constant(batch.rewards[ti]));
    Var<S> term_nll =
        -Bernoulli<S>{termination_logits(tape, out.belief)}.log_prob(tape.constant(batch.terminals[ti]));
    Var<S> kl_s = floor_kl(kl_gaussian(out.posterior, out.prior));
    Var<S> step = obs_nll + rew_nll + term_nll + kl_s;
    accumulate_metric(0, obs_nll, mask);
    accumulate_metric(2, kl_s, mask);
    accumulate_metric(4, rew_nll, mask);
    accumulate_metric(5, term_nll, mask);

    Var<S> action = tape.constant(batch.actions[ti]);
    if (config_.latent_actions) {
      DiagGaussian<S> uq = posterior_action(tape, out.belief, action);
      DiagGaussian<S> up = action_prior(tape, out.belief);
      Var<S> u = uq.rsample(noise);
      Var<S> act_nll = -action_log_prob(action_decoder(tape, out.belief, u), action);
      Var<S> kl_a = floor_kl(kl_gaussian(uq, up));
      step = step + act_nll + kl_a;
      accumulate_metric(1, act_nll, mask);
      accumulate_metric(3, kl_a, mask);
    }
    total = total + sum(step * tape.constant(mask));
    belief = out.belief;
    prev_action = action;
  }

  ModelLoss<S> result;
  result.metrics.has_action_terms = config_.latent_actions;
  if (valid == 0.0) {
    result.loss = tape.constant(1, 1, S(0));
    return result;
  }
  result.loss = total * S(1.0 / valid);
  auto& m = result.metrics;
  m.obs_nll = sums[0] / valid;
  m.act_nll = sums[1] / valid;
  m.kl_state = sums[2] / valid;
  m.kl_action = sums[3] / valid;
  m.reward_nll = sums[4] / valid;
  m.term_nll = sums[5] / valid;
  m.loss = static_cast<double>(result.loss.item());
  if (!std::isfinite(m.loss)) throw NumericalError("non-finite model loss (" + m.describe() + ")");
  return result;
}

template <typename S>
std::vector<Belief<S>> WorldModel<S>::observe_sequence(Tape<S>& tape, const dataset::WindowBatch<S>& batch,
                                                       NoiseSource<S>& noise, StateReadout readout) const {
  const Index b = batch.batch();
  std::vector<Belief<S>> out;
  Belief<S> belief = initial_belief(tape, b);
  Var<S> prev_action = tape.constant(b, config_.action_dim, S(0));
  for (Index t = 0; t < batch.window(); ++t) {
    const auto ti = static_cast<std::size_t>(t);
    Var<S> keep = tape.constant(t == 0 ? Matrix<S>::Zero(b, 1) : batch.mask[ti - 1]);
    Belief<S> carried{belief.h * keep, belief.s * keep};
    auto o = observe_step(tape, carried, prev_action * keep, tape.constant(batch.observations[ti]), noise, readout);
    out.push_back(o.belief);
    belief = o.belief;
    prev_action = tape.constant(batch.actions[ti]);
  }
  return out;
}

template class WorldModel<float>;
template class WorldModel<double>;
template Var<float> to_unit_interval<float>(Var<float>);
template Var<double> to_unit_interval<double>(Var<double>);
template Var<float> from_unit_interval<float>(Var<float>);
template Var<double> from_unit_interval<double>(Var<double>);
template Var<float> action_log_prob<float>(const BetaVector<float>&, Var<float>);
template Var<double> action_log_prob<double>(const BetaVector<double>&, Var<double>);

}  // namespace clap::world_model
