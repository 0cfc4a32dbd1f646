#include "numerics/parameter.hpp"

#include "common/error.hpp"

namespace clap::numerics {

template <typename S>
Parameter<S>& ParameterStore<S>::add(std::string path, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw ConfigError("parameter '" + path + "' must have positive shape");
  }
  if (find(path) != nullptr) {
    throw ConfigError("duplicate parameter path '" + path + "'");
  }
  auto p = std::make_unique<Parameter<S>>();
  p->path = std::move(path);
  p->value = Matrix<S>::Zero(rows, cols);
  p->grad = Matrix<S>::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename S>
Parameter<S>* ParameterStore<S>::find(std::string_view path) {
  for (auto& p : params_) {
    if (p->path == path) return p.get();
  }
  return nullptr;
}

template <typename S>
const Parameter<S>* ParameterStore<S>::find(std::string_view path) const {
  for (const auto& p : params_) {
    if (p->path == path) return p.get();
  }
  return nullptr;
}

template <typename S>
std::vector<Parameter<S>*> ParameterStore<S>::all() {
  std::vector<Parameter<S>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename S>
std::vector<const Parameter<S>*> ParameterStore<S>::all() const {
  std::vector<const Parameter<S>*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename S>
std::vector<Parameter<S>*> ParameterStore<S>::with_prefix(std::string_view prefix) {
  std::vector<Parameter<S>*> out;
  for (auto& p : params_) {
    if (std::string_view(p->path).substr(0, prefix.size()) == prefix) out.push_back(p.get());
  }
  return out;
}

template <typename S>
void ParameterStore<S>::zero_gradients() {
  for (auto& p : params_) p->zero_grad();
}

template <typename S>
void ParameterStore<S>::set_requires_grad(bool on) {
  for (auto& p : params_) p->requires_grad = on;
}

template <typename S>
Index ParameterStore<S>::scalar_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace clap::numerics
