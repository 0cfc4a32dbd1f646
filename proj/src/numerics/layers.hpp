#pragma once

#include "numerics/parameter.hpp"
#include "numerics/random.hpp"
#include "numerics/tape.hpp"

#include <string>
#include <vector>

namespace clap::numerics {

enum class Activation { Selu, Linear };

// Fan-in scaled truncated normal (cut at two standard deviations).
template <typename S>
void init_truncated_normal(Matrix<S>& w, Rng& rng, double scale = 1.0);

// Row-orthonormal square blocks of width `cols`, stacked horizontally.
template <typename S>
void init_orthogonal_blocks(Matrix<S>& w, Index block, Rng& rng);

// Stack of affine layers. `widths` = {in, hidden..., out}. The activation is
// applied after every layer except the last, which is always linear.
template <typename S>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(ParameterStore<S>& store, std::string name, std::vector<Index> widths,
             Activation activation, Rng& rng);

  Var<S> forward(Tape<S>& tape, Var<S> x) const;

  const std::string& name() const { return name_; }
  Index in_width() const { return widths_.front(); }
  Index out_width() const { return widths_.back(); }
  const std::vector<Index>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::vector<Parameter<S>*> parameters() const;

  // Scales the output layer's weights (small policy/critic heads start near
  // their bias).
  void scale_output(S factor);

 private:
  std::string name_;
  std::vector<Index> widths_;
  Activation activation_ = Activation::Linear;
  std::vector<Parameter<S>*> weights_;
  std::vector<Parameter<S>*> biases_;
};

// Gated recurrent unit (update + reset gates):
//   r = sigmoid(x Wr + h Ur + br),  z = sigmoid(x Wz + h Uz + bz)
//   n = tanh(x Wn + bn + r * (h Un + cn))
//   h' = (1 - z) * n + z * h
template <typename S>
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterStore<S>& store, std::string name, Index input_width, Index state_width, Rng& rng);

  Var<S> forward(Tape<S>& tape, Var<S> state, Var<S> input) const;

  Index input_width() const { return input_width_; }
  Index state_width() const { return state_width_; }
  std::vector<Parameter<S>*> parameters() const { return {wx_, wh_, bx_, bh_}; }

 private:
  std::string name_;
  Index input_width_ = 0;
  Index state_width_ = 0;
  Parameter<S>* wx_ = nullptr;  // input_width x 3H
  Parameter<S>* wh_ = nullptr;  // H x 3H
  Parameter<S>* bx_ = nullptr;  // 1 x 3H
  Parameter<S>* bh_ = nullptr;  // 1 x 3H
};

}  // namespace clap::numerics
