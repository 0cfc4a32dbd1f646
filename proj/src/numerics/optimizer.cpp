#include "numerics/optimizer.hpp"

#include "common/error.hpp"

#include <cmath>

namespace clap::numerics {

template <typename S>
Adam<S>::Adam(std::string name, std::vector<Parameter<S>*> params, AdamConfig config)
    : name_(std::move(name)), params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("optimizer '" + name_ + "': learning rate must be positive");
  moments_.reserve(params_.size());
  for (const auto* p : params_) {
    moments_.push_back({p->path, Matrix<S>::Zero(p->value.rows(), p->value.cols()),
                        Matrix<S>::Zero(p->value.rows(), p->value.cols())});
  }
}

template <typename S>
void Adam<S>::apply() {
  double sq = 0.0;
  for (const auto* p : params_) {
    if (!p->grad.allFinite()) {
      throw NumericalError("non-finite gradient in parameter '" + p->path + "' (optimizer '" + name_ + "')");
    }
    sq += p->grad.template cast<double>().squaredNorm();
  }
  last_norm_ = std::sqrt(sq);
  double factor = 1.0;
  if (config_.clip_norm && last_norm_ > *config_.clip_norm) factor = *config_.clip_norm / last_norm_;

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const S step_size = static_cast<S>(config_.learning_rate / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(config_.epsilon);
  const S f = static_cast<S>(factor);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<S>& p = *params_[i];
    AdamMoments<S>& m = moments_[i];
    const auto g = (p.grad.array() * f);
    m.first.array() = S(b1) * m.first.array() + S(1.0 - b1) * g;
    m.second.array() = S(b2) * m.second.array() + S(1.0 - b2) * g.square();
    p.value.array() -= step_size * m.first.array() / ((m.second.array() * inv_c2).sqrt() + eps);
  }
}

template <typename S>
void Adam<S>::restore(std::int64_t step, std::vector<AdamMoments<S>> moments) {
  if (moments.size() != params_.size()) {
    throw DataError("optimizer '" + name_ + "': checkpoint has " + std::to_string(moments.size()) +
                    " moment entries, expected " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto* p = params_[i];
    if (moments[i].path != p->path || moments[i].first.rows() != p->value.rows() ||
        moments[i].first.cols() != p->value.cols()) {
      throw DataError("optimizer '" + name_ + "': moment entry '" + moments[i].path +
                      "' does not match parameter '" + p->path + "'");
    }
  }
  moments_ = std::move(moments);
  step_ = step;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace clap::numerics
