#pragma once

#include "dataset/dataset.hpp"
#include "world_model/world_model.hpp"

#include <cmath>

namespace clap::testing {

using numerics::Index;

// Narrow networks for gradient and identity checks.
inline world_model::ModelConfig tiny_model_config(Index obs_dim, Index action_dim, bool latent_actions = true) {
  world_model::ModelConfig c;
  c.obs_dim = obs_dim;
  c.action_dim = action_dim;
  c.deter_size = 3;
  c.stoch_size = 2;
  c.embed_size = 2;
  c.latent_action_size = 2;
  c.hidden_units = 3;
  c.encoder_units = c.decoder_units = 3;
  c.action_encoder_units = c.action_decoder_units = c.action_prior_units = 3;
  c.head_units = 3;
  c.encoder_layers = c.decoder_layers = 1;
  c.action_encoder_layers = c.action_decoder_layers = c.action_prior_layers = 1;
  c.head_layers = 1;
  c.latent_actions = latent_actions;
  return c;
}

// Replaces every parameter with N(0, scale^2) draws.
template <typename S>
void randomize(numerics::ParameterStore<S>& store, numerics::Rng& rng, double scale) {
  for (auto* p : store.all()) {
    p->value = (rng.normal_matrix<S>(p->value.rows(), p->value.cols()).array() * static_cast<S>(scale)).matrix();
  }
}

// Random window batch with actions strictly inside (-1, 1) and an optional
// number of front-padded steps per row.
template <typename S>
dataset::WindowBatch<S> random_batch(Index batch, Index window, Index obs_dim, Index action_dim, numerics::Rng& rng,
                                     Index padded = 0) {
  dataset::WindowBatch<S> w;
  for (Index t = 0; t < window; ++t) {
    const S valid = t >= padded ? S(1) : S(0);
    w.observations.push_back(rng.normal_matrix<S>(batch, obs_dim) * valid);
    numerics::Matrix<S> a(batch, action_dim);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<S>(std::tanh(rng.normal())) * valid;
    w.actions.push_back(a);
    w.rewards.push_back(rng.normal_matrix<S>(batch, 1) * valid);
    numerics::Matrix<S> term = numerics::Matrix<S>::Zero(batch, 1);
    if (t == window - 1) {
      for (Index b = 0; b < batch; ++b) term(b, 0) = rng.uniform() < 0.5 ? S(1) : S(0);
    }
    w.terminals.push_back(term);
    w.mask.push_back(numerics::Matrix<S>::Constant(batch, 1, valid));
  }
  return w;
}

}  // namespace clap::testing
