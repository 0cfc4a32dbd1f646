#include "distributions/distributions.hpp"
#include "numerics/fd_check.hpp"
#include "numerics/parameter.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace clap::distributions;
using clap::numerics::FdOptions;
using clap::numerics::FrozenNoise;
using clap::numerics::ParameterStore;
using clap::numerics::Rng;
using clap::numerics::SeededNoise;
using Md = Matrix<double>;

namespace {

DiagGaussian<double> gauss(Tape<double>& t, const Md& mean, const Md& std) {
  return {t.constant(mean), t.constant(std)};
}

}  // namespace

TEST(DiagGaussian, StandardNormalAtZero) {
  Tape<double> t;
  auto g = gauss(t, Md::Zero(1, 1), Md::Ones(1, 1));
  EXPECT_NEAR(g.log_prob(t.constant(Md::Zero(1, 1))).item(), -0.9189385332046727, 1e-15);
  EXPECT_NEAR(g.entropy().item(), 1.4189385332046727, 1e-15);
}

TEST(DiagGaussian, SampleIsStandardizedNoise) {
  Tape<double> t;
  Md z(1, 3);
  z << 0.3, -1.2, 2.0;
  auto g = gauss(t, Md::Zero(1, 3), Md::Ones(1, 3));
  EXPECT_EQ(g.sample_from(z).value(), z);
}

TEST(DiagGaussian, FlooredStdSampleStaysNearMean) {
  Tape<double> t;
  Md raw(1, 2);
  raw << 5.0, -1e3;
  auto g = gaussian_head(t.constant(raw));
  EXPECT_NEAR(g.std.item(), kStdFloor, 1e-12);
  SeededNoise<double> noise(3);
  EXPECT_NEAR(g.rsample(noise).item(), 5.0, 5 * kStdFloor);
}

TEST(DiagGaussian, PathwiseGradientIsExact) {
  ParameterStore<double> store;
  auto& m = store.add("m", 1, 3);
  auto& s = store.add("s", 1, 3);
  s.value.setConstant(0.7);
  Md z(1, 3);
  z << 0.5, -2.0, 1.25;
  Tape<double> t;
  DiagGaussian<double> g{t.param(m), t.param(s)};
  t.backward(sum(g.sample_from(z)));
  EXPECT_EQ(m.grad, Md::Ones(1, 3));
  EXPECT_EQ(s.grad, z);
}

TEST(KlGaussian, IdenticalIsZeroAndShiftedMeanIsHalf) {
  Tape<double> t;
  auto p = gauss(t, Md::Zero(1, 1), Md::Ones(1, 1));
  auto q = gauss(t, Md::Ones(1, 1), Md::Ones(1, 1));
  EXPECT_EQ(kl_gaussian(p, p).item(), 0.0);
  EXPECT_NEAR(kl_gaussian(q, p).item(), 0.5, 1e-15);
}

TEST(KlGaussian, NonNegativeOnRandomPairs) {
  Rng rng(21);
  Tape<double> t;
  const Index n = 10000, d = 5;
  Md mq = rng.normal_matrix<double>(n, d) * 3.0, mp = rng.normal_matrix<double>(n, d) * 3.0;
  Md sq = (rng.normal_matrix<double>(n, d).array() * 1.5).exp().matrix();
  Md sp = (rng.normal_matrix<double>(n, d).array() * 1.5).exp().matrix();
  Md kl = kl_gaussian(gauss(t, mq, sq), gauss(t, mp, sp)).value();
  EXPECT_GE(kl.minCoeff(), 0.0);
}

TEST(KlGaussian, MatchesMonteCarlo) {
  Rng rng(5);
  const Index d = 5;
  Md mq = rng.normal_matrix<double>(1, d), mp = rng.normal_matrix<double>(1, d);
  Md sq = (rng.normal_matrix<double>(1, d).array() * 0.3).exp().matrix();
  Md sp = (rng.normal_matrix<double>(1, d).array() * 0.3).exp().matrix();
  Tape<double> t;
  const double exact = kl_gaussian(gauss(t, mq, sq), gauss(t, mp, sp)).item();
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    double lq = 0, lp = 0;
    for (Index j = 0; j < d; ++j) {
      const double x = mq(0, j) + sq(0, j) * rng.normal();
      const double a = (x - mq(0, j)) / sq(0, j), b = (x - mp(0, j)) / sp(0, j);
      lq += -0.5 * a * a - std::log(sq(0, j));
      lp += -0.5 * b * b - std::log(sp(0, j));
    }
    acc += lq - lp;
  }
  EXPECT_NEAR(acc / n, exact, 0.01 * exact);
}

TEST(TanhGaussian, SamplesStayInsideAndLogProbFinite) {
  Tape<float> t;
  Matrix<float> mean = Matrix<float>::Constant(1000, 2, 20.0f);
  mean.bottomRows(500).setConstant(-20.0f);
  TanhGaussian<float> d{{t.constant(mean), t.constant(Matrix<float>::Constant(1000, 2, 0.5f))}};
  SeededNoise<float> noise(1);
  auto s = d.rsample(noise);
  EXPECT_LT(s.value.value().cwiseAbs().maxCoeff(), 1.0f);
  EXPECT_TRUE(d.log_prob_pre(s.pre_tanh).value().allFinite());
  EXPECT_TRUE(d.log_prob(s.value).value().allFinite());
}

TEST(TanhGaussian, LogProbFromValueMatchesPreSquash) {
  Tape<double> t;
  Rng rng(2);
  TanhGaussian<double> d{gauss(t, rng.normal_matrix<double>(4, 3), Md::Constant(4, 3, 0.8))};
  SeededNoise<double> noise(8);
  auto s = d.rsample(noise);
  Md a = d.log_prob_pre(s.pre_tanh).value(), b = d.log_prob(s.value).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BetaVector, UniformDensityAndModes) {
  Tape<double> t;
  BetaVector<double> u{t.constant(Md::Ones(1, 1)), t.constant(Md::Ones(1, 1))};
  EXPECT_NEAR(u.log_prob(t.constant(Md::Constant(1, 1, 0.37))).item(), 0.0, 1e-14);
  BetaVector<double> b22{t.constant(Md::Constant(1, 1, 2.0)), t.constant(Md::Constant(1, 1, 2.0))};
  BetaVector<double> b52{t.constant(Md::Constant(1, 1, 5.0)), t.constant(Md::Constant(1, 1, 2.0))};
  EXPECT_DOUBLE_EQ(b22.mode().item(), 0.5);
  EXPECT_DOUBLE_EQ(b52.mode().item(), 0.8);
  EXPECT_DOUBLE_EQ(u.mode().item(), 0.5);
}

TEST(BetaVector, SampleMeanMonteCarlo) {
  Tape<double> t;
  const Index n = 100000;
  BetaVector<double> b{t.constant(Md::Constant(n, 1, 2.0)), t.constant(Md::Constant(n, 1, 2.0))};
  SeededNoise<double> noise(17);
  Md x = b.rsample(noise).value();
  EXPECT_GT(x.minCoeff(), 0.0);
  EXPECT_LT(x.maxCoeff(), 1.0);
  EXPECT_NEAR(x.mean(), 0.5, 0.01);
}

TEST(BetaVector, SampleMomentsMatchAsymmetric) {
  Tape<double> t;
  const Index n = 200000;
  BetaVector<double> b{t.constant(Md::Constant(n, 1, 5.0)), t.constant(Md::Constant(n, 1, 2.0))};
  SeededNoise<double> noise(4);
  Md x = b.rsample(noise).value();
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  EXPECT_NEAR(mean, 5.0 / 7.0, 0.005);
  EXPECT_NEAR(var, 10.0 / (49.0 * 8.0), 0.002);
}

TEST(BetaVector, DensityIntegratesToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = 1.1 + 8.9 * rng.uniform(), b = 1.1 + 8.9 * rng.uniform();
    const Index n = 200001;
    Md x(n, 1);
    for (Index i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i) / static_cast<double>(n - 1);
    Tape<double> t;
    BetaVector<double> d{t.constant(Md::Constant(n, 1, a)), t.constant(Md::Constant(n, 1, b))};
    Md lp = d.log_prob(t.constant(x)).value();
    // Endpoints carry zero density for a, b > 1.
    lp(0, 0) = -INFINITY;
    lp(n - 1, 0) = -INFINITY;
    const double h = 1.0 / static_cast<double>(n - 1);
    const double integral = lp.array().exp().sum() * h;
    EXPECT_NEAR(integral, 1.0, 1e-3) << "a=" << a << " b=" << b;
  }
}

TEST(BetaVector, HeadRespectsFloor) {
  Tape<double> t;
  Md raw = Md::Constant(2, 4, -1e3);
  auto b = beta_head(t.constant(raw));
  EXPECT_GE(b.alpha.value().minCoeff(), 1.0 + kConcentrationFloor);
  EXPECT_GE(b.beta.value().minCoeff(), 1.0 + kConcentrationFloor);
}

TEST(BetaVector, LargeSymmetricConcentrationDecodesNearHalf) {
  Tape<double> t;
  BetaVector<double> b{t.constant(Md::Constant(1, 3, 1e6)), t.constant(Md::Constant(1, 3, 1e6))};
  SeededNoise<double> noise(2);
  EXPECT_LT((b.rsample(noise).value().array() - 0.5).abs().maxCoeff(), 5e-3);
}

TEST(BetaVector, OutOfSupportIsClamped) {
  Tape<double> t;
  BetaVector<double> b{t.constant(Md::Constant(1, 1, 2.0)), t.constant(Md::Constant(1, 1, 3.0))};
  EXPECT_TRUE(std::isfinite(b.log_prob(t.constant(Md::Zero(1, 1))).item()));
  EXPECT_TRUE(std::isfinite(b.log_prob(t.constant(Md::Ones(1, 1))).item()));
}

TEST(BetaVector, ReparameterizedLogProbPassesFdCheck) {
  ParameterStore<double> store;
  auto& raw = store.add("raw", 3, 4);
  Rng rng(12);
  raw.value = rng.normal_matrix<double>(3, 4);
  FrozenNoise<double> noise(6);
  bool recorded = false;
  auto loss = [&](Tape<double>& t) {
    if (recorded) noise.replay();
    recorded = true;
    auto b = beta_head(t.param(raw));
    Var<double> x = b.rsample(noise);
    return sum(b.log_prob(x) + row_sum(square(x)));
  };
  auto report = clap::numerics::fd_check<double>(loss, store.all(), FdOptions{});
  EXPECT_TRUE(report.ok()) << report.summary();
}

TEST(Bernoulli, LogProbMatchesDefinition) {
  Tape<double> t;
  Md logits(3, 1);
  logits << -2.0, 0.0, 3.0;
  Bernoulli<double> b{t.constant(logits)};
  Md one = Md::Ones(3, 1), zero = Md::Zero(3, 1);
  Md lp1 = b.log_prob(t.constant(one)).value(), lp0 = b.log_prob(t.constant(zero)).value();
  Md p = b.probability().value();
  for (Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(lp1(i, 0), std::log(p(i, 0)), 1e-14);
    EXPECT_NEAR(lp0(i, 0), std::log(1 - p(i, 0)), 1e-14);
  }
}
