#pragma once

#include "numerics/parameter.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clap::numerics {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clipping; disabled when empty.
  std::optional<double> clip_norm;
};

template <typename S>
struct AdamMoments {
  std::string path;
  Matrix<S> first;
  Matrix<S> second;
};

// Adaptive-moment optimizer with bias correction. `apply` reads gradients
// but never modifies them; callers zero gradients explicitly.
template <typename S>
class Adam {
 public:
  Adam(std::string name, std::vector<Parameter<S>*> params, AdamConfig config);

  // Throws NumericalError naming the first parameter with a non-finite
  // gradient; no parameter is touched in that case.
  void apply();

  const std::string& name() const { return name_; }
  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double last_grad_norm() const { return last_norm_; }

  const std::vector<AdamMoments<S>>& moments() const { return moments_; }
  // Restores accumulator state from a checkpoint; paths must match.
  void restore(std::int64_t step, std::vector<AdamMoments<S>> moments);

 private:
  std::string name_;
  std::vector<Parameter<S>*> params_;
  AdamConfig config_;
  std::vector<AdamMoments<S>> moments_;
  std::int64_t step_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace clap::numerics
