#include "numerics/tape.hpp"

#include "common/error.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace clap::numerics {
namespace {

constexpr double kSeluScale = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

std::string shape_str(Index r, Index c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <typename Mat>
Mat reduce_to(const Mat& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Mat::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <typename Mat>
Mat expand_to(const Mat& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

}  // namespace

template <typename S>
Var<S> Tape<S>::push(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return V{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename S>
template <typename Expr>
void Tape<S>::accumulate(int index, const Expr& g) {
  Node& n = node(index);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad.noalias() += g;
  }
}

template <typename S>
void Tape<S>::accumulate_reduced(int index, const Mat& g) {
  Node& n = node(index);
  if (!n.requires_grad) return;
  accumulate(index, reduce_to(g, n.value.rows(), n.value.cols()));
}

template <typename S>
Var<S> Tape<S>::constant(Mat value) {
  return push(std::move(value), false);
}

template <typename S>
Var<S> Tape<S>::constant(Index rows, Index cols, S fill) {
  return push(Mat::Constant(rows, cols, fill), false);
}

template <typename S>
Var<S> Tape<S>::param(Parameter<S>& p) {
  V v = push(p.value, p.requires_grad);
  node(v.index).param = p.requires_grad ? &p : nullptr;
  return v;
}

template <typename S>
void Tape<S>::backward(V loss) {
  if (consumed_) throw UsageError("backward called on an already consumed tape");
  if (loss.tape != this) throw UsageError("backward: loss belongs to a different tape");
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("backward: loss must be 1x1, got " + shape_str(lv.rows(), lv.cols()));
  }
  consumed_ = true;
  if (!node(loss.index).requires_grad) return;
  node(loss.index).grad = Mat::Constant(1, 1, S(1));
  for (int i = loss.index; i >= 0; --i) {
    Node& n = node(i);
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------- linear algebra

template <typename S>
Var<S> Tape<S>::matmul(V a, V b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw ConfigError("matmul shape mismatch " + shape_str(av.rows(), av.cols()) + " * " +
                      shape_str(bv.rows(), bv.cols()));
  }
  Mat out;
  out.noalias() = av * bv;
  const bool rg = requires_grad(a) || requires_grad(b);
  V r = push(std::move(out), rg);
  if (rg) {
    const int ai = a.index, bi = b.index, ri = r.index;
    node(ri).backward = [this, ai, bi, ri] {
      const Mat& g = node(ri).grad;
      if (node(ai).requires_grad) accumulate(ai, g * node(bi).value.transpose());
      if (node(bi).requires_grad) accumulate(bi, node(ai).value.transpose() * g);
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::affine(V x, V w, V b) {
  const Mat& xv = value(x);
  const Mat& wv = value(w);
  const Mat& bv = value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ConfigError("affine shape mismatch x" + shape_str(xv.rows(), xv.cols()) + " w" +
                      shape_str(wv.rows(), wv.cols()) + " b" + shape_str(bv.rows(), bv.cols()));
  }
  Mat out;
  out.noalias() = xv * wv;
  out.rowwise() += bv.row(0);
  const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  V r = push(std::move(out), rg);
  if (rg) {
    const int xi = x.index, wi = w.index, bi = b.index, ri = r.index;
    node(ri).backward = [this, xi, wi, bi, ri] {
      const Mat& g = node(ri).grad;
      if (node(xi).requires_grad) accumulate(xi, g * node(wi).value.transpose());
      if (node(wi).requires_grad) accumulate(wi, node(xi).value.transpose() * g);
      if (node(bi).requires_grad) accumulate(bi, g.colwise().sum());
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::concat_cols(std::span<const V> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Index rows = value(parts[0]).rows();
  Index cols = 0;
  bool rg = false;
  for (const V& p : parts) {
    if (value(p).rows() != rows) {
      throw ConfigError("concat_cols row mismatch: " + std::to_string(value(p).rows()) + " vs " +
                        std::to_string(rows));
    }
    cols += value(p).cols();
    rg = rg || requires_grad(p);
  }
  Mat out(rows, cols);
  Index offset = 0;
  for (const V& p : parts) {
    const Mat& pv = value(p);
    out.middleCols(offset, pv.cols()) = pv;
    offset += pv.cols();
  }
  V r = push(std::move(out), rg);
  if (rg) {
    std::vector<int> idx;
    for (const V& p : parts) idx.push_back(p.index);
    const int ri = r.index;
    node(ri).backward = [this, idx = std::move(idx), ri] {
      Index off = 0;
      for (int i : idx) {
        const Index c = node(i).value.cols();
        if (node(i).requires_grad) accumulate(i, node(ri).grad.middleCols(off, c));
        off += c;
      }
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::slice_cols(V a, Index start, Index count) {
  const Mat& av = value(a);
  if (start < 0 || count <= 0 || start + count > av.cols()) {
    throw ConfigError("slice_cols out of range: start " + std::to_string(start) + " count " +
                      std::to_string(count) + " of " + std::to_string(av.cols()));
  }
  const bool rg = requires_grad(a);
  V r = push(av.middleCols(start, count), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri, start, count] {
      Node& in = node(ai);
      if (in.grad.size() == 0) in.grad = Mat::Zero(in.value.rows(), in.value.cols());
      in.grad.middleCols(start, count) += node(ri).grad;
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::gather_rows(V a, std::span<const Index> rows) {
  const Mat& av = value(a);
  Mat out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw ConfigError("gather_rows index out of range");
    out.row(static_cast<Index>(i)) = av.row(rows[i]);
  }
  const bool rg = requires_grad(a);
  V r = push(std::move(out), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    std::vector<Index> idx(rows.begin(), rows.end());
    node(ri).backward = [this, ai, ri, idx = std::move(idx)] {
      Node& in = node(ai);
      if (in.grad.size() == 0) in.grad = Mat::Zero(in.value.rows(), in.value.cols());
      const Mat& g = node(ri).grad;
      for (std::size_t i = 0; i < idx.size(); ++i) in.grad.row(idx[i]) += g.row(static_cast<Index>(i));
    };
  }
  return r;
}

// ---------------------------------------------------------------- elementwise binary

template <typename S>
Var<S> Tape<S>::broadcast_binary(V a, V b, int op) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  const Index rows = std::max(av.rows(), bv.rows());
  const Index cols = std::max(av.cols(), bv.cols());
  auto compatible = [&](const Mat& m) {
    return (m.rows() == rows || m.rows() == 1) && (m.cols() == cols || m.cols() == 1);
  };
  if (!compatible(av) || !compatible(bv)) {
    throw ConfigError("elementwise shape mismatch " + shape_str(av.rows(), av.cols()) + " vs " +
                      shape_str(bv.rows(), bv.cols()));
  }
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  Mat out;
  if (same) {
    switch (op) {
      case 0: out = av + bv; break;
      case 1: out = av - bv; break;
      case 2: out = av.cwiseProduct(bv); break;
      default: out = av.cwiseQuotient(bv); break;
    }
  } else {
    const Mat ae = expand_to(av, rows, cols);
    const Mat be = expand_to(bv, rows, cols);
    switch (op) {
      case 0: out = ae + be; break;
      case 1: out = ae - be; break;
      case 2: out = ae.cwiseProduct(be); break;
      default: out = ae.cwiseQuotient(be); break;
    }
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  V r = push(std::move(out), rg);
  if (!rg) return r;
  const int ai = a.index, bi = b.index, ri = r.index;
  node(ri).backward = [this, ai, bi, ri, op, rows, cols, same] {
    const Mat& g = node(ri).grad;
    const bool ga = node(ai).requires_grad;
    const bool gb = node(bi).requires_grad;
    switch (op) {
      case 0:
        if (ga) accumulate_reduced(ai, g);
        if (gb) accumulate_reduced(bi, g);
        break;
      case 1:
        if (ga) accumulate_reduced(ai, g);
        if (gb) accumulate_reduced(bi, -g);
        break;
      case 2:
        if (same) {
          if (ga) accumulate(ai, g.cwiseProduct(node(bi).value));
          if (gb) accumulate(bi, g.cwiseProduct(node(ai).value));
        } else {
          if (ga) accumulate_reduced(ai, g.cwiseProduct(expand_to(node(bi).value, rows, cols)));
          if (gb) accumulate_reduced(bi, g.cwiseProduct(expand_to(node(ai).value, rows, cols)));
        }
        break;
      default: {
        const Mat be = same ? node(bi).value : expand_to(node(bi).value, rows, cols);
        if (ga) accumulate_reduced(ai, g.cwiseQuotient(be));
        if (gb) {
          const Mat& out = node(ri).value;
          accumulate_reduced(bi, -(g.cwiseProduct(out)).cwiseQuotient(be));
        }
        break;
      }
    }
  };
  return r;
}

template <typename S> Var<S> Tape<S>::add(V a, V b) { return broadcast_binary(a, b, 0); }
template <typename S> Var<S> Tape<S>::sub(V a, V b) { return broadcast_binary(a, b, 1); }
template <typename S> Var<S> Tape<S>::mul(V a, V b) { return broadcast_binary(a, b, 2); }
template <typename S> Var<S> Tape<S>::div(V a, V b) { return broadcast_binary(a, b, 3); }

template <typename S>
Var<S> Tape<S>::select(const Mat& cond, V a, V b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != cond.rows() || av.cols() != cond.cols() || bv.rows() != cond.rows() ||
      bv.cols() != cond.cols()) {
    throw ConfigError("select shape mismatch");
  }
  Mat out = (cond.array() != S(0)).select(av, bv);
  const bool rg = requires_grad(a) || requires_grad(b);
  V r = push(std::move(out), rg);
  if (rg) {
    const int ai = a.index, bi = b.index, ri = r.index;
    node(ri).backward = [this, ai, bi, ri, cond] {
      const Mat& g = node(ri).grad;
      const auto pick = cond.array() != S(0);
      if (node(ai).requires_grad) accumulate(ai, pick.select(g, Mat::Zero(g.rows(), g.cols())));
      if (node(bi).requires_grad) accumulate(bi, pick.select(Mat::Zero(g.rows(), g.cols()), g));
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::minimum(V a, V b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ConfigError("minimum shape mismatch");
  Mat cond = (av.array() <= bv.array()).template cast<S>();
  return select(cond, a, b);
}

// ---------------------------------------------------------------- scalar arithmetic

template <typename S>
Var<S> Tape<S>::scale(V a, S k) {
  const bool rg = requires_grad(a);
  V r = push(value(a) * k, rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri, k] { accumulate(ai, node(ri).grad * k); };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::add_scalar(V a, S k) {
  const bool rg = requires_grad(a);
  V r = push((value(a).array() + k).matrix(), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri] { accumulate(ai, node(ri).grad); };
  }
  return r;
}

// ---------------------------------------------------------------- elementwise unary

template <typename S>
template <typename Fwd, typename Deriv>
Var<S> Tape<S>::unary(V a, Fwd fwd, Deriv deriv) {
  const bool rg = requires_grad(a);
  V r = push(fwd(value(a)), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri, deriv] {
      const Mat d = deriv(node(ai).value, node(ri).value);
      accumulate(ai, node(ri).grad.cwiseProduct(d));
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::exp(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.array().exp().matrix(); },
      [](const Mat&, const Mat& y) -> Mat { return y; });
}

template <typename S>
Var<S> Tape<S>::log(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.array().log().matrix(); },
      [](const Mat& x, const Mat&) -> Mat { return x.array().inverse().matrix(); });
}

template <typename S>
Var<S> Tape<S>::tanh(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.array().tanh().matrix(); },
      [](const Mat&, const Mat& y) -> Mat { return (S(1) - y.array().square()).matrix(); });
}

template <typename S>
Var<S> Tape<S>::atanh(V a) {
  return unary(
      a,
      [](const Mat& x) -> Mat {
        return x.unaryExpr([](S v) { return std::atanh(v); });
      },
      [](const Mat& x, const Mat&) -> Mat { return (S(1) - x.array().square()).inverse().matrix(); });
}

template <typename S>
Var<S> Tape<S>::sigmoid(V a) {
  return unary(
      a,
      [](const Mat& x) -> Mat {
        return x.unaryExpr([](S v) {
          if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
          const S e = std::exp(v);
          return e / (S(1) + e);
        });
      },
      [](const Mat&, const Mat& y) -> Mat { return (y.array() * (S(1) - y.array())).matrix(); });
}

template <typename S>
Var<S> Tape<S>::softplus(V a) {
  return unary(
      a,
      [](const Mat& x) -> Mat {
        return x.unaryExpr([](S v) { return std::max(v, S(0)) + std::log1p(std::exp(-std::abs(v))); });
      },
      [](const Mat& x, const Mat&) -> Mat {
        return x.unaryExpr([](S v) {
          if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
          const S e = std::exp(v);
          return e / (S(1) + e);
        });
      });
}

template <typename S>
Var<S> Tape<S>::selu(V a) {
  return unary(
      a,
      [](const Mat& x) -> Mat {
        return x.unaryExpr([](S v) {
          return v > S(0) ? S(kSeluScale) * v : S(kSeluScale * kSeluAlpha) * std::expm1(v);
        });
      },
      [](const Mat& x, const Mat&) -> Mat {
        return x.unaryExpr([](S v) {
          return v > S(0) ? S(kSeluScale) : S(kSeluScale * kSeluAlpha) * std::exp(v);
        });
      });
}

template <typename S>
Var<S> Tape<S>::square(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.array().square().matrix(); },
      [](const Mat& x, const Mat&) -> Mat { return (S(2) * x.array()).matrix(); });
}

template <typename S>
Var<S> Tape<S>::sqrt(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.array().sqrt().matrix(); },
      [](const Mat&, const Mat& y) -> Mat { return (S(0.5) / y.array()).matrix(); });
}

template <typename S>
Var<S> Tape<S>::lgamma(V a) {
  return unary(
      a, [](const Mat& x) -> Mat { return x.unaryExpr([](S v) { return std::lgamma(v); }); },
      [](const Mat& x, const Mat&) -> Mat {
        return x.unaryExpr([](S v) { return static_cast<S>(boost::math::digamma(static_cast<double>(v))); });
      });
}

template <typename S>
Var<S> Tape<S>::clamp(V a, S lo, S hi) {
  return unary(
      a, [lo, hi](const Mat& x) -> Mat { return x.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Mat& x, const Mat&) -> Mat {
        return ((x.array() >= lo) && (x.array() <= hi)).template cast<S>().matrix();
      });
}

// ---------------------------------------------------------------- reductions

template <typename S>
Var<S> Tape<S>::sum(V a) {
  const bool rg = requires_grad(a);
  V r = push(Mat::Constant(1, 1, value(a).sum()), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri] {
      const Mat& in = node(ai).value;
      accumulate(ai, Mat::Constant(in.rows(), in.cols(), node(ri).grad(0, 0)));
    };
  }
  return r;
}

template <typename S>
Var<S> Tape<S>::mean(V a) {
  const Index n = value(a).size();
  if (n == 0) throw ConfigError("mean of empty tensor");
  return scale(sum(a), S(1) / static_cast<S>(n));
}

template <typename S>
Var<S> Tape<S>::row_sum(V a) {
  const bool rg = requires_grad(a);
  V r = push(value(a).rowwise().sum(), rg);
  if (rg) {
    const int ai = a.index, ri = r.index;
    node(ri).backward = [this, ai, ri] {
      const Index cols = node(ai).value.cols();
      accumulate(ai, node(ri).grad.replicate(1, cols));
    };
  }
  return r;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace clap::numerics
