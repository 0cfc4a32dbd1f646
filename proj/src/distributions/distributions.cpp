#include "distributions/distributions.hpp"

#include "common/error.hpp"

#include <cmath>
#include <numbers>

namespace clap::distributions {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

template <typename S>
Var<S> half_split(Var<S> raw, Index part, const char* who) {
  if (raw.cols() % 2 != 0) {
    throw ConfigError(std::string(who) + ": raw head width " + std::to_string(raw.cols()) + " is odd");
  }
  const Index d = raw.cols() / 2;
  return raw.tape->slice_cols(raw, part * d, d);
}

}  // namespace

template <typename S>
Var<S> DiagGaussian<S>::rsample(NoiseSource<S>& noise) const {
  return sample_from(noise.normal(mean.rows(), mean.cols()));
}

template <typename S>
Var<S> DiagGaussian<S>::sample_from(const Matrix<S>& z) const {
  Tape<S>& t = *mean.tape;
  return mean + std * t.constant(z);
}

template <typename S>
Var<S> DiagGaussian<S>::log_prob(Var<S> x) const {
  Var<S> z = (x - mean) / std;
  return row_sum(square(z) * S(-0.5) - log(std) - S(0.5 * kLog2Pi));
}

template <typename S>
Var<S> DiagGaussian<S>::entropy() const {
  return row_sum(log(std) + S(0.5 * (kLog2Pi + 1.0)));
}

template <typename S>
DiagGaussian<S> gaussian_head(Var<S> raw) {
  Var<S> mean = half_split(raw, 0, "gaussian head");
  Var<S> std = softplus(half_split(raw, 1, "gaussian head")) + S(kStdFloor);
  return {mean, std};
}

template <typename S>
Var<S> unit_gaussian_log_prob(Var<S> mean, Var<S> x) {
  return row_sum(square(x - mean) * S(-0.5) - S(0.5 * kLog2Pi));
}

template <typename S>
Var<S> kl_gaussian(const DiagGaussian<S>& q, const DiagGaussian<S>& p) {
  Var<S> var_ratio_num = square(q.std) + square(q.mean - p.mean);
  return row_sum(log(p.std) - log(q.std) + var_ratio_num / (square(p.std) * S(2)) - S(0.5));
}

template <typename S>
Var<S> squash(Var<S> pre_tanh) {
  return tanh(pre_tanh) * S(1.0 - kSquashMargin);
}

template <typename S>
TanhSample<S> TanhGaussian<S>::rsample(NoiseSource<S>& noise) const {
  Var<S> y = base.rsample(noise);
  return {squash(y), y};
}

template <typename S>
Var<S> TanhGaussian<S>::log_prob_pre(Var<S> y) const {
  // log(1 - tanh(y)^2) = 2 (log 2 - y - softplus(-2y))
  Var<S> log_dtanh = (S(std::numbers::ln2) - y - softplus(y * S(-2))) * S(2);
  return base.log_prob(y) - row_sum(log_dtanh + S(std::log1p(-kSquashMargin)));
}

template <typename S>
Var<S> TanhGaussian<S>::log_prob(Var<S> x) const {
  Tape<S>& t = *x.tape;
  Var<S> unit = t.clamp(x * S(1.0 / (1.0 - kSquashMargin)), S(-1.0 + kSupportClamp), S(1.0 - kSupportClamp));
  return log_prob_pre(t.atanh(unit));
}

template <typename S>
Var<S> TanhGaussian<S>::mode() const {
  return squash(base.mean);
}

template <typename S>
Var<S> TanhGaussian<S>::entropy_estimate(NoiseSource<S>& noise) const {
  return -log_prob_pre(rsample(noise).pre_tanh);
}

template <typename S>
Var<S> gamma_from_noise(Var<S> shape, const Matrix<S>& eps) {
  Tape<S>& t = *shape.tape;
  Var<S> d = shape - S(1.0 / 3.0);
  Var<S> v = t.constant(eps) / sqrt(d * S(9)) + S(1);
  return d * (v * v * v);
}

template <typename S>
Var<S> BetaVector<S>::rsample(NoiseSource<S>& noise) const {
  Var<S> g1 = gamma_from_noise(alpha, noise.gamma_noise(alpha.value()));
  Var<S> g2 = gamma_from_noise(beta, noise.gamma_noise(beta.value()));
  return g1 / (g1 + g2);
}

template <typename S>
Var<S> BetaVector<S>::log_prob(Var<S> x) const {
  Tape<S>& t = *x.tape;
  Var<S> xc = t.clamp(x, S(kSupportClamp), S(1.0 - kSupportClamp));
  Var<S> log_norm = lgamma(alpha + beta) - lgamma(alpha) - lgamma(beta);
  return row_sum((alpha - S(1)) * log(xc) + (beta - S(1)) * log(S(1) - xc) + log_norm);
}

template <typename S>
Var<S> BetaVector<S>::mean() const {
  return alpha / (alpha + beta);
}

template <typename S>
Var<S> BetaVector<S>::mode() const {
  Tape<S>& t = *alpha.tape;
  const Matrix<S> unimodal =
      ((alpha.value().array() > S(1)) && (beta.value().array() > S(1))).template cast<S>().matrix();
  Var<S> denom = t.select(unimodal, alpha + beta - S(2), t.constant(alpha.rows(), alpha.cols(), S(1)));
  return t.select(unimodal, (alpha - S(1)) / denom, mean());
}

template <typename S>
BetaVector<S> beta_head(Var<S> raw) {
  Var<S> a = softplus(half_split(raw, 0, "beta head")) + S(1.0 + kConcentrationFloor);
  Var<S> b = softplus(half_split(raw, 1, "beta head")) + S(1.0 + kConcentrationFloor);
  return {a, b};
}

template <typename S>
Var<S> Bernoulli<S>::log_prob(Var<S> outcome) const {
  // b log sigmoid(l) + (1 - b) log sigmoid(-l)
  return -row_sum(outcome * softplus(-logits) + (S(1) - outcome) * softplus(logits));
}

template <typename S>
Var<S> Bernoulli<S>::probability() const {
  return sigmoid(logits);
}

#define CLAP_INSTANTIATE(S)                                                          \
  template struct DiagGaussian<S>;                                                   \
  template struct TanhGaussian<S>;                                                   \
  template struct BetaVector<S>;                                                     \
  template struct Bernoulli<S>;                                                      \
  template DiagGaussian<S> gaussian_head<S>(Var<S>);                                 \
  template BetaVector<S> beta_head<S>(Var<S>);                                       \
  template Var<S> unit_gaussian_log_prob<S>(Var<S>, Var<S>);                         \
  template Var<S> kl_gaussian<S>(const DiagGaussian<S>&, const DiagGaussian<S>&);    \
  template Var<S> squash<S>(Var<S>);                                                 \
  template Var<S> gamma_from_noise<S>(Var<S>, const Matrix<S>&);

CLAP_INSTANTIATE(float)
CLAP_INSTANTIATE(double)
#undef CLAP_INSTANTIATE

}  // namespace clap::distributions
