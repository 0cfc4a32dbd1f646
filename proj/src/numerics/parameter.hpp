#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace clap::numerics {

using Index = Eigen::Index;

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A trainable tensor. `grad` always has the shape of `value`.
template <typename S>
struct Parameter {
  std::string path;
  Matrix<S> value;
  Matrix<S> grad;
  // Frozen parameters still take part in the forward pass but never
  // accumulate gradient.
  bool requires_grad = true;

  void zero_grad() { grad.setZero(); }
};

// Owns parameters in creation order. Addresses are stable for the lifetime
// of the store, so blocks keep raw pointers into it.
template <typename S>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<S>& add(std::string path, Index rows, Index cols);
  Parameter<S>* find(std::string_view path);
  const Parameter<S>* find(std::string_view path) const;

  std::vector<Parameter<S>*> all();
  std::vector<const Parameter<S>*> all() const;
  std::vector<Parameter<S>*> with_prefix(std::string_view prefix);

  void zero_gradients();
  void set_requires_grad(bool on);
  std::size_t size() const { return params_.size(); }
  Index scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

}  // namespace clap::numerics
