#include "numerics/random.hpp"

#include "common/error.hpp"

#include <cmath>
#include <string>

namespace clap::numerics {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  // FNV-1a over the label, then mixed with the root.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("Rng::below(0)");
  std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine_);
}

template <typename S>
Matrix<S> SeededNoise<S>::gamma_noise(const Matrix<S>& shape) {
  Matrix<S> eps(shape.rows(), shape.cols());
  for (Index i = 0; i < shape.size(); ++i) {
    const double a = static_cast<double>(shape.data()[i]);
    if (!(a >= 1.0)) {
      throw ConfigError("gamma sampler requires shape >= 1, got " + std::to_string(a));
    }
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = rng_.normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = rng_.uniform();
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        eps.data()[i] = static_cast<S>(x);
        break;
      }
    }
  }
  return eps;
}

template <typename S>
Matrix<S> FrozenNoise<S>::next(Index rows, Index cols) {
  if (cursor_ >= draws_.size()) {
    throw UsageError("frozen noise exhausted after " + std::to_string(draws_.size()) + " draws");
  }
  const Matrix<S>& m = draws_[cursor_++];
  if (m.rows() != rows || m.cols() != cols) {
    throw UsageError("frozen noise shape mismatch at draw " + std::to_string(cursor_ - 1));
  }
  return m;
}

template <typename S>
Matrix<S> FrozenNoise<S>::normal(Index rows, Index cols) {
  if (replaying_) return next(rows, cols);
  draws_.push_back(inner_.normal(rows, cols));
  return draws_.back();
}

template <typename S>
Matrix<S> FrozenNoise<S>::gamma_noise(const Matrix<S>& shape) {
  if (replaying_) return next(shape.rows(), shape.cols());
  draws_.push_back(inner_.gamma_noise(shape));
  return draws_.back();
}

template class SeededNoise<float>;
template class SeededNoise<double>;
template class FrozenNoise<float>;
template class FrozenNoise<double>;

}  // namespace clap::numerics
