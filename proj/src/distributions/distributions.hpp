#pragma once

#include "numerics/random.hpp"
#include "numerics/tape.hpp"

namespace clap::distributions {

using numerics::Index;
using numerics::Matrix;
using numerics::NoiseSource;
using numerics::Tape;
using numerics::Var;

// Floors applied by the parameter heads.
inline constexpr double kStdFloor = 1e-4;
inline constexpr double kConcentrationFloor = 1e-4;
// Out-of-support inputs to Beta / tanh-Gaussian densities are clamped this far
// inside the open interval.
inline constexpr double kSupportClamp = 1e-6;
// Squashed samples are (1 - margin) * tanh(y), so they stay strictly inside
// (-1, 1) even in single precision.
inline constexpr double kSquashMargin = 1e-6;

// All distributions are batched: parameters are B x D and densities are
// returned per row as B x 1 (summed over dimensions).

template <typename S>
struct DiagGaussian {
  Var<S> mean;
  Var<S> std;

  Index batch() const { return mean.rows(); }
  Index dim() const { return mean.cols(); }

  Var<S> rsample(NoiseSource<S>& noise) const;
  // Reparameterized sample from a given standard-normal draw.
  Var<S> sample_from(const Matrix<S>& z) const;
  Var<S> log_prob(Var<S> x) const;
  Var<S> entropy() const;
};

// Splits a B x 2D raw head output into mean and softplus(.) + floor stddev.
template <typename S>
DiagGaussian<S> gaussian_head(Var<S> raw);

// Unit-variance Gaussian log-density of `x` around `mean` (B x 1).
template <typename S>
Var<S> unit_gaussian_log_prob(Var<S> mean, Var<S> x);

// Closed-form KL(q || p), summed over dimensions (B x 1).
template <typename S>
Var<S> kl_gaussian(const DiagGaussian<S>& q, const DiagGaussian<S>& p);

template <typename S>
struct TanhSample {
  Var<S> value;     // squashed, strictly inside (-1, 1)
  Var<S> pre_tanh;  // underlying Gaussian draw
};

template <typename S>
struct TanhGaussian {
  DiagGaussian<S> base;

  TanhSample<S> rsample(NoiseSource<S>& noise) const;
  // Density of a squashed value given its pre-squash Gaussian draw. Avoids
  // inverting tanh near the boundary.
  Var<S> log_prob_pre(Var<S> pre_tanh) const;
  Var<S> log_prob(Var<S> x) const;
  Var<S> mode() const;
  // Single-sample estimate -log p(x), x ~ this.
  Var<S> entropy_estimate(NoiseSource<S>& noise) const;
};

template <typename S>
Var<S> squash(Var<S> pre_tanh);

template <typename S>
struct BetaVector {
  Var<S> alpha;
  Var<S> beta;

  // Pathwise sample through two gamma draws, x = G1 / (G1 + G2).
  Var<S> rsample(NoiseSource<S>& noise) const;
  Var<S> log_prob(Var<S> x) const;
  Var<S> mean() const;
  // (a - 1) / (a + b - 2) where both concentrations exceed 1, mean elsewhere.
  Var<S> mode() const;
};

// Splits a B x 2D raw head output into concentrations softplus(.) + 1 + floor.
template <typename S>
BetaVector<S> beta_head(Var<S> raw);

// Gamma(shape, 1) variate as a smooth function of shape and the accepted
// Marsaglia-Tsang proposal noise.
template <typename S>
Var<S> gamma_from_noise(Var<S> shape, const Matrix<S>& eps);

// Bernoulli parameterized by logits.
template <typename S>
struct Bernoulli {
  Var<S> logits;

  Var<S> log_prob(Var<S> outcome) const;
  Var<S> probability() const;
};

}  // namespace clap::distributions
