#pragma once

#include "dataset/dataset.hpp"
#include "distributions/distributions.hpp"
#include "numerics/layers.hpp"
#include "numerics/parameter.hpp"
#include "numerics/random.hpp"
#include "numerics/tape.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <string>

namespace clap::world_model {

using distributions::BetaVector;
using distributions::DiagGaussian;
using numerics::Index;
using numerics::Matrix;
using numerics::NoiseSource;
using numerics::Tape;
using numerics::Var;
using numerics::concat_cols;

struct ModelConfig {
  Index obs_dim = 0;
  Index action_dim = 0;
  Index deter_size = 200;
  Index stoch_size = 30;
  Index embed_size = 30;
  Index latent_action_size = 12;
  Index hidden_units = 200;
  Index encoder_units = 128;
  Index encoder_layers = 2;
  Index decoder_units = 128;
  Index decoder_layers = 2;
  Index action_encoder_units = 512;
  Index action_encoder_layers = 2;
  Index action_decoder_units = 512;
  Index action_decoder_layers = 2;
  Index action_prior_units = 256;
  Index action_prior_layers = 2;
  Index head_units = 200;
  Index head_layers = 2;
  // Per-step KL floor in nats (0 = plain KL).
  double free_nats = 0.0;
  // false builds the plain recurrent state-space variant with no latent
  // action networks.
  bool latent_actions = true;

  Index feature_size() const { return deter_size + stoch_size; }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

template <typename S>
struct Belief {
  Var<S> h;  // B x deter
  Var<S> s;  // B x stoch
  Var<S> features() const { return concat_cols({h, s}); }
};

template <typename S>
struct ObserveOutput {
  DiagGaussian<S> posterior;
  DiagGaussian<S> prior;
  Belief<S> belief;
};

template <typename S>
struct ImagineOutput {
  DiagGaussian<S> prior;
  Belief<S> belief;
};

struct ModelMetrics {
  double loss = 0.0;
  double obs_nll = 0.0;
  double act_nll = 0.0;
  double kl_state = 0.0;
  double kl_action = 0.0;
  double reward_nll = 0.0;
  double term_nll = 0.0;
  bool has_action_terms = true;

  // Keyed view; the action terms are absent for the variant without latent
  // actions.
  std::map<std::string, double> as_map() const;
  std::string describe() const;
};

template <typename S>
struct ModelLoss {
  Var<S> loss;
  ModelMetrics metrics;
};

// How the posterior latent state is read out.
enum class StateReadout { Sample, Mean };

template <typename S>
class WorldModel {
 public:
  WorldModel(const ModelConfig& config, numerics::Rng& init_rng);
  WorldModel(const WorldModel&) = delete;
  WorldModel& operator=(const WorldModel&) = delete;

  const ModelConfig& config() const { return config_; }
  numerics::ParameterStore<S>& parameters() { return store_; }
  const numerics::ParameterStore<S>& parameters() const { return store_; }
  void set_trainable(bool on) { store_.set_requires_grad(on); }

  Belief<S> initial_belief(Tape<S>& tape, Index batch) const;

  // Deterministic transition h_t = f(h_{t-1}, s_{t-1}, a_{t-1}).
  Var<S> transition(Tape<S>& tape, const Belief<S>& prev, Var<S> prev_action) const;
  DiagGaussian<S> state_prior(Tape<S>& tape, Var<S> h) const;
  DiagGaussian<S> state_posterior(Tape<S>& tape, Var<S> h, Var<S> obs) const;

  ObserveOutput<S> observe_step(Tape<S>& tape, const Belief<S>& prev, Var<S> prev_action, Var<S> obs,
                                NoiseSource<S>& noise, StateReadout readout = StateReadout::Sample) const;
  ImagineOutput<S> imagine_step(Tape<S>& tape, const Belief<S>& prev, Var<S> action, NoiseSource<S>& noise) const;

  // Latent action networks (ConfigError on the variant without them).
  DiagGaussian<S> action_prior(Tape<S>& tape, const Belief<S>& belief) const;
  DiagGaussian<S> posterior_action(Tape<S>& tape, const Belief<S>& belief, Var<S> action) const;
  // Beta over (0, 1); environment actions are 2x - 1.
  BetaVector<S> action_decoder(Tape<S>& tape, const Belief<S>& belief, Var<S> latent_action) const;

  Var<S> observation_mean(Tape<S>& tape, const Belief<S>& belief) const;
  Var<S> reward_mean(Tape<S>& tape, const Belief<S>& belief) const;
  Var<S> termination_logits(Tape<S>& tape, const Belief<S>& belief) const;

  // Negative ELBO plus reward and termination likelihoods, averaged over
  // valid steps. Masked steps contribute exactly nothing and reset the
  // carried belief.
  ModelLoss<S> model_loss(Tape<S>& tape, const dataset::WindowBatch<S>& batch, NoiseSource<S>& noise) const;

  // Posterior beliefs for every step of a window batch (time-major).
  std::vector<Belief<S>> observe_sequence(Tape<S>& tape, const dataset::WindowBatch<S>& batch,
                                          NoiseSource<S>& noise, StateReadout readout) const;

 private:
  void require_latent_actions(const char* what) const;

  ModelConfig config_;
  numerics::ParameterStore<S> store_;
  numerics::DenseBlock<S> transition_in_;
  numerics::GruCell<S> gru_;
  numerics::DenseBlock<S> prior_net_;
  numerics::DenseBlock<S> embed_net_;
  numerics::DenseBlock<S> posterior_net_;
  numerics::DenseBlock<S> obs_decoder_;
  numerics::DenseBlock<S> reward_net_;
  numerics::DenseBlock<S> term_net_;
  numerics::DenseBlock<S> action_prior_net_;
  numerics::DenseBlock<S> action_encoder_;
  numerics::DenseBlock<S> action_decoder_net_;
};

// Maps dataset actions in [-1, 1] to the Beta support and back.
template <typename S>
Var<S> to_unit_interval(Var<S> action);
template <typename S>
Var<S> from_unit_interval(Var<S> x);

// Log-density of an environment action under a Beta decoder (includes the
// Jacobian of a = 2x - 1).
template <typename S>
Var<S> action_log_prob(const BetaVector<S>& decoder, Var<S> action);

}  // namespace clap::world_model
