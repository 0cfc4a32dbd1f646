#pragma once

#include "numerics/parameter.hpp"

#include <cstdint>
#include <deque>
#include <random>
#include <string_view>

namespace clap::numerics {

// Mixes a root seed with a subsystem label ("data", "model-init", ...) so
// every subsystem draws from an independent, reproducible stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename S>
  Matrix<S> normal_matrix(Index rows, Index cols) {
    Matrix<S> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(normal());
    return m;
  }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Source of reparameterization noise. Model code never touches an Rng
// directly, so tests can freeze or hand-craft the noise.
template <typename S>
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  // Standard normal draws.
  virtual Matrix<S> normal(Index rows, Index cols) = 0;
  // Accepted proposal noise of the Marsaglia-Tsang gamma sampler for each
  // shape entry (shape >= 1). The gamma draw is then a smooth function of
  // (shape, noise), which is what makes it reparameterizable.
  virtual Matrix<S> gamma_noise(const Matrix<S>& shape) = 0;
};

template <typename S>
class SeededNoise final : public NoiseSource<S> {
 public:
  explicit SeededNoise(std::uint64_t seed) : rng_(seed) {}
  Matrix<S> normal(Index rows, Index cols) override { return rng_.normal_matrix<S>(rows, cols); }
  Matrix<S> gamma_noise(const Matrix<S>& shape) override;

 private:
  Rng rng_;
};

// Records every draw of an inner source, then replays the same sequence on
// demand. Replay ignores the requested gamma shapes, so a perturbed loss sees
// exactly the noise of the recorded pass.
template <typename S>
class FrozenNoise final : public NoiseSource<S> {
 public:
  explicit FrozenNoise(std::uint64_t seed) : inner_(seed) {}

  void replay() { cursor_ = 0; replaying_ = true; }
  // Appends a hand-made draw (used by tests that align noise manually).
  void push(Matrix<S> m) { draws_.push_back(std::move(m)); }
  std::size_t draws() const { return draws_.size(); }

  Matrix<S> normal(Index rows, Index cols) override;
  Matrix<S> gamma_noise(const Matrix<S>& shape) override;

 private:
  Matrix<S> next(Index rows, Index cols);

  SeededNoise<S> inner_;
  std::deque<Matrix<S>> draws_;
  std::size_t cursor_ = 0;
  bool replaying_ = false;
};

}  // namespace clap::numerics
