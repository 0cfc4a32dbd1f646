#include "numerics/layers.hpp"

#include "common/error.hpp"

#include <Eigen/QR>

#include <cmath>

namespace clap::numerics {

template <typename S>
void init_truncated_normal(Matrix<S>& w, Rng& rng, double scale) {
  const double stddev = scale / std::sqrt(static_cast<double>(w.rows()));
  for (Index i = 0; i < w.size(); ++i) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    w.data()[i] = static_cast<S>(z * stddev);
  }
}

template <typename S>
void init_orthogonal_blocks(Matrix<S>& w, Index block, Rng& rng) {
  if (w.rows() != block || w.cols() % block != 0) {
    throw ConfigError("orthogonal init expects rows == block and cols a multiple of block");
  }
  for (Index b = 0; b < w.cols() / block; ++b) {
    Eigen::MatrixXd g(block, block);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    // Sign fix makes the draw uniform over the orthogonal group.
    const Eigen::VectorXd diag = qr.matrixQR().diagonal();
    for (Index c = 0; c < block; ++c) {
      if (diag(c) < 0) q.col(c) = -q.col(c);
    }
    w.middleCols(b * block, block) = q.cast<S>();
  }
}

template <typename S>
DenseBlock<S>::DenseBlock(ParameterStore<S>& store, std::string name, std::vector<Index> widths,
                          Activation activation, Rng& rng)
    : name_(std::move(name)), widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw ConfigError("dense block '" + name_ + "' needs at least two widths");
  for (Index w : widths_) {
    if (w <= 0) throw ConfigError("dense block '" + name_ + "' has a non-positive width");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::string prefix = name_ + "/layer" + std::to_string(l);
    auto& w = store.add(prefix + "/w", widths_[l], widths_[l + 1]);
    auto& b = store.add(prefix + "/b", 1, widths_[l + 1]);
    init_truncated_normal(w.value, rng);
    weights_.push_back(&w);
    biases_.push_back(&b);
  }
}

template <typename S>
Var<S> DenseBlock<S>::forward(Tape<S>& tape, Var<S> x) const {
  if (x.cols() != in_width()) {
    throw ConfigError("dense block '" + name_ + "' expects input width " + std::to_string(in_width()) +
                      ", got " + std::to_string(x.cols()));
  }
  Var<S> h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.affine(h, tape.param(*weights_[l]), tape.param(*biases_[l]));
    if (l + 1 < weights_.size() && activation_ == Activation::Selu) h = tape.selu(h);
  }
  return h;
}

template <typename S>
std::vector<Parameter<S>*> DenseBlock<S>::parameters() const {
  std::vector<Parameter<S>*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

template <typename S>
void DenseBlock<S>::scale_output(S factor) {
  weights_.back()->value *= factor;
}

template <typename S>
GruCell<S>::GruCell(ParameterStore<S>& store, std::string name, Index input_width, Index state_width,
                    Rng& rng)
    : name_(std::move(name)), input_width_(input_width), state_width_(state_width) {
  if (input_width <= 0 || state_width <= 0) throw ConfigError("GRU '" + name_ + "' needs positive widths");
  wx_ = &store.add(name_ + "/wx", input_width, 3 * state_width);
  wh_ = &store.add(name_ + "/wh", state_width, 3 * state_width);
  bx_ = &store.add(name_ + "/bx", 1, 3 * state_width);
  bh_ = &store.add(name_ + "/bh", 1, 3 * state_width);
  init_truncated_normal(wx_->value, rng);
  init_orthogonal_blocks(wh_->value, state_width, rng);
}

template <typename S>
Var<S> GruCell<S>::forward(Tape<S>& tape, Var<S> state, Var<S> input) const {
  if (input.cols() != input_width_) {
    throw ConfigError("GRU '" + name_ + "' expects input width " + std::to_string(input_width_) +
                      ", got " + std::to_string(input.cols()));
  }
  if (state.cols() != state_width_) {
    throw ConfigError("GRU '" + name_ + "' expects state width " + std::to_string(state_width_) +
                      ", got " + std::to_string(state.cols()));
  }
  const Index H = state_width_;
  Var<S> gx = tape.affine(input, tape.param(*wx_), tape.param(*bx_));
  Var<S> gh = tape.affine(state, tape.param(*wh_), tape.param(*bh_));
  Var<S> r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, H), tape.slice_cols(gh, 0, H)));
  Var<S> z = tape.sigmoid(tape.add(tape.slice_cols(gx, H, H), tape.slice_cols(gh, H, H)));
  Var<S> n = tape.tanh(tape.add(tape.slice_cols(gx, 2 * H, H), tape.mul(r, tape.slice_cols(gh, 2 * H, H))));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return tape.add(n, tape.mul(z, tape.sub(state, n)));
}

template void init_truncated_normal<float>(Matrix<float>&, Rng&, double);
template void init_truncated_normal<double>(Matrix<double>&, Rng&, double);
template void init_orthogonal_blocks<float>(Matrix<float>&, Index, Rng&);
template void init_orthogonal_blocks<double>(Matrix<double>&, Index, Rng&);
template class DenseBlock<float>;
template class DenseBlock<double>;
template class GruCell<float>;
template class GruCell<double>;

}  // namespace clap::numerics
