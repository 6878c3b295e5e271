#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major Eigen
// matrices. Every tensor is rank <= 2; batched sequence data uses the
// "stacked segments" layout [batch * time, channels], where each op that
// cares about sequence boundaries takes the segment length explicitly.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scanconv/errors.hpp"
#include "scanconv/rng.hpp"

namespace scanconv::ag {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::function<void(const Matrix<Scalar>&)> backward_fn;

  template <typename Expr>
  void accumulate(const Expr& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

/// Shared handle to a node. Copies alias the same storage.
template <typename Scalar>
class Tensor {
 public:
  using NodeType = Node<Scalar>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix<Scalar> value) {
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    return Tensor(std::move(node));
  }

  static Tensor parameter(Matrix<Scalar> value) {
    Tensor t = constant(std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor scalar(Scalar v) {
    Matrix<Scalar> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix<Scalar>& value() const { return node_->value; }
  Matrix<Scalar>& mutable_value() { return node_->value; }
  Scalar item() const { return node_->value(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix<Scalar>& grad() const { return node_->grad; }
  Matrix<Scalar>& mutable_grad() { return node_->grad; }
  /// The gradient, or zeros of the value's shape if nothing reached it.
  Matrix<Scalar> grad_or_zero() const {
    return has_grad() ? node_->grad
                      : Matrix<Scalar>::Zero(node_->value.rows(), node_->value.cols());
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const std::shared_ptr<NodeType>& node() const { return node_; }
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Records differentiable ops in execution order. A non-recording tape still
/// computes values but keeps nothing alive.
template <typename Scalar>
class Tape {
 public:
  using T = Tensor<Scalar>;
  using Backward = std::function<void(const Matrix<Scalar>&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Creates an op output. `make_backward` is invoked only when the output
  /// needs a gradient; it returns the closure that pushes the output's
  /// gradient into the inputs.
  template <typename MakeBackward>
  T emit(Matrix<Scalar> value, std::initializer_list<const T*> inputs,
         MakeBackward&& make_backward) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    bool needs = false;
    for (const T* in : inputs) needs = needs || in->requires_grad();
    if (recording_ && needs) {
      node->requires_grad = true;
      node->backward_fn = make_backward();
      nodes_.push_back(node);
    }
    return T(std::move(node));
  }

  /// Propagates d(loss)/d(x) to every reachable requires_grad tensor.
  /// Intermediate gradients are reset first; leaf gradients accumulate across
  /// calls. Returns the number of recorded ops visited.
  std::size_t backward(const T& loss) {
    if (loss.size() != 1) throw NotScalar("loss has " + std::to_string(loss.size()) + " entries");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    if (!loss.requires_grad()) return 0;
    loss.node()->accumulate(Matrix<Scalar>::Ones(1, 1));
    std::size_t visited = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Scalar>& n = **it;
      ++visited;
      if (n.grad.size() != 0 && n.backward_fn) n.backward_fn(n.grad);
    }
    return visited;
  }

  void clear() { nodes_.clear(); }

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node<Scalar>>> nodes_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

inline std::string dims(Index r, Index c) {
  return "[" + std::to_string(r) + "," + std::to_string(c) + "]";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Tensor<Scalar> matmul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.cols() == b.rows(), "matmul " + detail::dims(a.rows(), a.cols()) + " x " +
                                            detail::dims(b.rows(), b.cols()));
  Matrix<Scalar> out = a.value() * b.value();
  return tape.emit(std::move(out), {&a, &b}, [a, b] {
    return [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g * bn->value.transpose());
      if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
    };
  });
}

/// x * weight + bias, with bias a [1, out] row broadcast over rows.
template <typename Scalar>
Tensor<Scalar> linear(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  detail::require(x.cols() == weight.rows() && bias.rows() == 1 && bias.cols() == weight.cols(),
                  "linear " + detail::dims(x.rows(), x.cols()) + " x " +
                      detail::dims(weight.rows(), weight.cols()) + " + " +
                      detail::dims(bias.rows(), bias.cols()));
  Matrix<Scalar> out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return tape.emit(std::move(out), {&x, &weight, &bias}, [x, weight, bias] {
    return [xn = x.node(), wn = weight.node(), bn = bias.node()](const Matrix<Scalar>& g) {
      if (xn->requires_grad) xn->accumulate(g * wn->value.transpose());
      if (wn->requires_grad) wn->accumulate(xn->value.transpose() * g);
      if (bn->requires_grad) bn->accumulate(g.colwise().sum());
    };
  });
}

template <typename Scalar>
Tensor<Scalar> transpose(Tape<Scalar>& tape, const Tensor<Scalar>& a) {
  Matrix<Scalar> out = a.value().transpose();
  return tape.emit(std::move(out), {&a}, [a] {
    return [an = a.node()](const Matrix<Scalar>& g) { an->accumulate(g.transpose()); };
  });
}

/// Segment-wise product: a is [B*m, k], b is [B*k, n]; result [B*m, n].
template <typename Scalar>
Tensor<Scalar> bmm(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                   Index batch) {
  detail::require(batch > 0 && a.rows() % batch == 0 && b.rows() % batch == 0,
                  "bmm batch does not divide rows");
  const Index m = a.rows() / batch, k = a.cols(), n = b.cols();
  detail::require(b.rows() / batch == k, "bmm inner extents");
  Matrix<Scalar> out(batch * m, n);
  for (Index s = 0; s < batch; ++s)
    out.middleRows(s * m, m).noalias() = a.value().middleRows(s * m, m) *
                                         b.value().middleRows(s * k, k);
  return tape.emit(std::move(out), {&a, &b}, [a, b, batch, m, k, n] {
    return [an = a.node(), bn = b.node(), batch, m, k, n](const Matrix<Scalar>& g) {
      if (an->requires_grad) {
        Matrix<Scalar> ga(batch * m, k);
        for (Index s = 0; s < batch; ++s)
          ga.middleRows(s * m, m).noalias() =
              g.middleRows(s * m, m) * bn->value.middleRows(s * k, k).transpose();
        an->accumulate(ga);
      }
      if (bn->requires_grad) {
        Matrix<Scalar> gb(batch * k, n);
        for (Index s = 0; s < batch; ++s)
          gb.middleRows(s * k, k).noalias() =
              an->value.middleRows(s * m, m).transpose() * g.middleRows(s * m, m);
        bn->accumulate(gb);
      }
    };
  });
}

/// Segment-wise a * b^T: a is [B*m, k], b is [B*n, k]; result [B*m, n].
template <typename Scalar>
Tensor<Scalar> bmm_nt(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                      Index batch) {
  detail::require(batch > 0 && a.rows() % batch == 0 && b.rows() % batch == 0,
                  "bmm_nt batch does not divide rows");
  detail::require(a.cols() == b.cols(), "bmm_nt inner extents");
  const Index m = a.rows() / batch, n = b.rows() / batch;
  Matrix<Scalar> out(batch * m, n);
  for (Index s = 0; s < batch; ++s)
    out.middleRows(s * m, m).noalias() =
        a.value().middleRows(s * m, m) * b.value().middleRows(s * n, n).transpose();
  return tape.emit(std::move(out), {&a, &b}, [a, b, batch, m, n] {
    return [an = a.node(), bn = b.node(), batch, m, n](const Matrix<Scalar>& g) {
      if (an->requires_grad) {
        Matrix<Scalar> ga(an->value.rows(), an->value.cols());
        for (Index s = 0; s < batch; ++s)
          ga.middleRows(s * m, m).noalias() =
              g.middleRows(s * m, m) * bn->value.middleRows(s * n, n);
        an->accumulate(ga);
      }
      if (bn->requires_grad) {
        Matrix<Scalar> gb(bn->value.rows(), bn->value.cols());
        for (Index s = 0; s < batch; ++s)
          gb.middleRows(s * n, n).noalias() =
              g.middleRows(s * m, m).transpose() * an->value.middleRows(s * m, m);
        bn->accumulate(gb);
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Elementwise and shape plumbing

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "add " + detail::dims(a.rows(), a.cols()) + " + " +
                      detail::dims(b.rows(), b.cols()));
  Matrix<Scalar> out = a.value() + b.value();
  return tape.emit(std::move(out), {&a, &b}, [a, b] {
    return [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
      an->accumulate(g);
      bn->accumulate(g);
    };
  });
}

/// (a + b) * factor, the residual pattern.
template <typename Scalar>
Tensor<Scalar> add_scaled(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                          Scalar factor) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "add_scaled " + detail::dims(a.rows(), a.cols()) + " + " +
                      detail::dims(b.rows(), b.cols()));
  Matrix<Scalar> out = (a.value() + b.value()) * factor;
  return tape.emit(std::move(out), {&a, &b}, [a, b, factor] {
    return [an = a.node(), bn = b.node(), factor](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g * factor);
      if (bn->requires_grad) bn->accumulate(g * factor);
    };
  });
}

template <typename Scalar>
Tensor<Scalar> scale(Tape<Scalar>& tape, const Tensor<Scalar>& a, Scalar factor) {
  Matrix<Scalar> out = a.value() * factor;
  return tape.emit(std::move(out), {&a}, [a, factor] {
    return [an = a.node(), factor](const Matrix<Scalar>& g) { an->accumulate(g * factor); };
  });
}

/// Identity in the forward pass; scales the gradient by `factor`.
template <typename Scalar>
Tensor<Scalar> scale_grad(Tape<Scalar>& tape, const Tensor<Scalar>& a, Scalar factor) {
  return tape.emit(Matrix<Scalar>(a.value()), {&a}, [a, factor] {
    return [an = a.node(), factor](const Matrix<Scalar>& g) { an->accumulate(g * factor); };
  });
}

template <typename Scalar>
Tensor<Scalar> mul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shapes differ");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return tape.emit(std::move(out), {&a, &b}, [a, b] {
    return [an = a.node(), bn = b.node()](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
      if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
    };
  });
}

/// Adds the [1, n] row `bias` to every row of `x`.
template <typename Scalar>
Tensor<Scalar> add_row(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  detail::require(bias.rows() == 1 && bias.cols() == x.cols(),
                  "add_row " + detail::dims(x.rows(), x.cols()) + " + " +
                      detail::dims(bias.rows(), bias.cols()));
  Matrix<Scalar> out = x.value();
  out.rowwise() += bias.value().row(0);
  return tape.emit(std::move(out), {&x, &bias}, [x, bias] {
    return [xn = x.node(), bn = bias.node()](const Matrix<Scalar>& g) {
      if (xn->requires_grad) xn->accumulate(g);
      if (bn->requires_grad) bn->accumulate(g.colwise().sum());
    };
  });
}

/// Weight normalization over columns: out[:, j] = v[:, j] * scale(j) / |v[:, j]|.
/// `scale` is [1, cols].
template <typename Scalar>
Tensor<Scalar> weight_norm(Tape<Scalar>& tape, const Tensor<Scalar>& v, const Tensor<Scalar>& scale) {
  detail::require(scale.rows() == 1 && scale.cols() == v.cols(),
                  "weight_norm " + detail::dims(v.rows(), v.cols()) + " with scale " +
                      detail::dims(scale.rows(), scale.cols()));
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> norms = v.value().colwise().norm();
  Matrix<Scalar> out = v.value() * (scale.value().row(0).array() / norms.array()).matrix().asDiagonal();
  return tape.emit(std::move(out), {&v, &scale}, [&] {
    return [vn = v.node(), sn = scale.node(), norms](const Matrix<Scalar>& g) {
      const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dots =
          g.cwiseProduct(vn->value).colwise().sum();
      if (sn->requires_grad) sn->accumulate((dots.array() / norms.array()).matrix());
      if (vn->requires_grad) {
        const auto gain = (sn->value.row(0).array() / norms.array()).matrix();
        const auto proj = (dots.array() / norms.array().square()).matrix();
        Matrix<Scalar> gv = (g - vn->value * proj.asDiagonal()) * gain.asDiagonal();
        vn->accumulate(gv);
      }
    };
  });
}

/// Multiplies row i of `a` by the constant factors(i).
template <typename Scalar>
Tensor<Scalar> scale_rows(Tape<Scalar>& tape, const Tensor<Scalar>& a,
                          const ColVector<Scalar>& factors) {
  detail::require(factors.size() == a.rows(), "scale_rows factor count");
  Matrix<Scalar> out = factors.asDiagonal() * a.value();
  return tape.emit(std::move(out), {&a}, [a, factors] {
    return [an = a.node(), factors](const Matrix<Scalar>& g) {
      an->accumulate(factors.asDiagonal() * g);
    };
  });
}

template <typename Scalar>
Tensor<Scalar> sum(Tape<Scalar>& tape, const Tensor<Scalar>& a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return tape.emit(std::move(out), {&a}, [a] {
    return [an = a.node()](const Matrix<Scalar>& g) {
      an->accumulate(Matrix<Scalar>::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
    };
  });
}

/// Stacks tensors vertically; all must share the column extent.
template <typename Scalar>
Tensor<Scalar> concat_rows(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.cols() == b.cols(), "concat_rows column extents differ");
  Matrix<Scalar> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  const Index ra = a.rows();
  return tape.emit(std::move(out), {&a, &b}, [a, b, ra] {
    return [an = a.node(), bn = b.node(), ra](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g.topRows(ra));
      if (bn->requires_grad) bn->accumulate(g.bottomRows(g.rows() - ra));
    };
  });
}

/// Places tensors side by side; all must share the row extent.
template <typename Scalar>
Tensor<Scalar> concat_cols(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.rows() == b.rows(), "concat_cols row extents differ");
  Matrix<Scalar> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const Index ca = a.cols();
  return tape.emit(std::move(out), {&a, &b}, [a, b, ca] {
    return [an = a.node(), bn = b.node(), ca](const Matrix<Scalar>& g) {
      if (an->requires_grad) an->accumulate(g.leftCols(ca));
      if (bn->requires_grad) bn->accumulate(g.rightCols(g.cols() - ca));
    };
  });
}

// ---------------------------------------------------------------------------
// Sequence ops

enum class Padding {
  kSymmetric,   // (width-1)/2 zeros on the left, width/2 on the right
  kCausalLeft,  // width-1 zeros on the left only
};

inline Index left_padding(Index width, Padding padding) {
  return padding == Padding::kCausalLeft ? width - 1 : (width - 1) / 2;
}

/// 1-D convolution over each length-`time` segment of x [B*time, in].
/// `kernel` is [width*in, out], the row-major flattening of [width, in, out];
/// tap k reads input position t - left_padding + k. Output keeps the time
/// extent. No bias; add one with add_row/linear as needed.
template <typename Scalar>
Tensor<Scalar> conv1d(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                      Index width, Index time, Padding padding) {
  const Index in = x.cols();
  detail::require(width >= 1, "conv1d width must be >= 1");
  detail::require(time >= 1 && x.rows() % time == 0, "conv1d time does not divide rows");
  detail::require(kernel.rows() == width * in, "conv1d kernel rows " +
                                                   std::to_string(kernel.rows()) + " != width*in " +
                                                   std::to_string(width * in));
  const Index batch = x.rows() / time;
  const Index pad = left_padding(width, padding);

  Matrix<Scalar> cols = Matrix<Scalar>::Zero(x.rows(), width * in);
  for (Index s = 0; s < batch; ++s)
    for (Index t = 0; t < time; ++t)
      for (Index k = 0; k < width; ++k) {
        const Index src = t - pad + k;
        if (src >= 0 && src < time)
          cols.block(s * time + t, k * in, 1, in) = x.value().row(s * time + src);
      }
  Matrix<Scalar> out = cols * kernel.value();
  return tape.emit(std::move(out), {&x, &kernel}, [&] {
    return [xn = x.node(), kn = kernel.node(), cols = std::move(cols), width, time, pad, batch,
            in](const Matrix<Scalar>& g) {
      if (kn->requires_grad) kn->accumulate(cols.transpose() * g);
      if (xn->requires_grad) {
        const Matrix<Scalar> gcols = g * kn->value.transpose();
        Matrix<Scalar> gx = Matrix<Scalar>::Zero(xn->value.rows(), in);
        for (Index s = 0; s < batch; ++s)
          for (Index t = 0; t < time; ++t)
            for (Index k = 0; k < width; ++k) {
              const Index src = t - pad + k;
              if (src >= 0 && src < time)
                gx.row(s * time + src) += gcols.block(s * time + t, k * in, 1, in);
            }
        xn->accumulate(gx);
      }
    };
  });
}

/// Gated linear unit over the last axis: first_half * sigmoid(second_half).
template <typename Scalar>
Tensor<Scalar> glu(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
  detail::require(x.cols() % 2 == 0, "glu needs an even last extent, got " +
                                         std::to_string(x.cols()));
  const Index d = x.cols() / 2;
  Matrix<Scalar> gate =
      (Scalar(1) + (-x.value().rightCols(d).array()).exp()).inverse().matrix();
  Matrix<Scalar> out = x.value().leftCols(d).cwiseProduct(gate);
  return tape.emit(std::move(out), {&x}, [&] {
    return [xn = x.node(), gate = std::move(gate), d](const Matrix<Scalar>& g) {
      Matrix<Scalar> gx(xn->value.rows(), 2 * d);
      gx.leftCols(d) = g.cwiseProduct(gate);
      gx.rightCols(d) = (g.array() * xn->value.leftCols(d).array() * gate.array() *
                         (Scalar(1) - gate.array()))
                            .matrix();
      xn->accumulate(gx);
    };
  });
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> softmax_impl(Tape<Scalar>& tape, const Tensor<Scalar>& x, const BoolMask* keep) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Index c = 0; c < x.cols(); ++c) {
      if (keep && !(*keep)(r, c)) continue;
      const Scalar v = x.value()(r, c);
      // NaN must survive so callers see a non-finite result.
      mx = any ? (std::isnan(v) || v > mx ? v : mx) : v;
      any = true;
    }
    if (!any) throw ShapeMismatch("softmax row " + std::to_string(r) + " is fully masked");
    Scalar total = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      const Scalar e = (!keep || (*keep)(r, c)) ? std::exp(x.value()(r, c) - mx) : Scalar(0);
      y(r, c) = e;
      total += e;
    }
    y.row(r) /= total;
  }
  Matrix<Scalar> saved = y;
  return tape.emit(std::move(y), {&x}, [&] {
    return [xn = x.node(), y = std::move(saved)](const Matrix<Scalar>& g) {
      const ColVector<Scalar> dots = g.cwiseProduct(y).rowwise().sum();
      Matrix<Scalar> gx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
      xn->accumulate(gx);
    };
  });
}

}  // namespace detail

/// Row-wise softmax (normalizes along the last axis).
template <typename Scalar>
Tensor<Scalar> softmax(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
  return detail::softmax_impl(tape, x, nullptr);
}

/// Row-wise softmax where entries with keep(r, c) == false are treated as
/// -infinity and receive weight exactly 0.
template <typename Scalar>
Tensor<Scalar> masked_softmax(Tape<Scalar>& tape, const Tensor<Scalar>& x, const BoolMask& keep) {
  detail::require(keep.rows() == x.rows() && keep.cols() == x.cols(), "softmax mask shape");
  return detail::softmax_impl(tape, x, &keep);
}

/// Softmax along axis 0 (columns sum to one) or axis 1 (rows sum to one).
template <typename Scalar>
Tensor<Scalar> softmax(Tape<Scalar>& tape, const Tensor<Scalar>& x, int axis) {
  if (axis == 1) return softmax(tape, x);
  if (axis != 0) throw ShapeMismatch("softmax axis must be 0 or 1");
  return transpose(tape, softmax(tape, transpose(tape, x)));
}

/// Mean negative log-likelihood over rows whose target != ignore_index.
/// Returns 0 (with zero gradient) when every row is ignored.
template <typename Scalar>
Tensor<Scalar> cross_entropy(Tape<Scalar>& tape, const Tensor<Scalar>& logits,
                             std::span<const int> targets, int ignore_index) {
  detail::require(static_cast<Index>(targets.size()) == logits.rows(),
                  "cross_entropy target count " + std::to_string(targets.size()) +
                      " != rows " + std::to_string(logits.rows()));
  const Index n = logits.rows(), v = logits.cols();
  Matrix<Scalar> probs(n, v);
  Scalar total = 0;
  Index counted = 0;
  for (Index r = 0; r < n; ++r) {
    const Scalar mx = logits.value().row(r).maxCoeff();
    probs.row(r) = (logits.value().row(r).array() - mx).exp().matrix();
    const Scalar z = probs.row(r).sum();
    probs.row(r) /= z;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_index) continue;
    detail::require(t >= 0 && t < v, "cross_entropy target out of range");
    total += std::log(z) + mx - logits.value()(r, t);
    ++counted;
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = counted > 0 ? total / static_cast<Scalar>(counted) : Scalar(0);
  std::vector<int> tg(targets.begin(), targets.end());
  return tape.emit(std::move(out), {&logits}, [&] {
    return [ln = logits.node(), probs = std::move(probs), tg = std::move(tg), ignore_index,
            counted](const Matrix<Scalar>& g) {
      Matrix<Scalar> gl = Matrix<Scalar>::Zero(probs.rows(), probs.cols());
      if (counted > 0) {
        const Scalar s = g(0, 0) / static_cast<Scalar>(counted);
        for (Index r = 0; r < probs.rows(); ++r) {
          const int t = tg[static_cast<std::size_t>(r)];
          if (t == ignore_index) continue;
          gl.row(r) = probs.row(r) * s;
          gl(r, t) -= s;
        }
      }
      ln->accumulate(gl);
    };
  });
}

/// Gathers rows of `table` [V, d]; result [indices.size(), d].
template <typename Scalar>
Tensor<Scalar> embed(Tape<Scalar>& tape, const Tensor<Scalar>& table,
                     std::span<const int> indices) {
  const Index n = static_cast<Index>(indices.size());
  Matrix<Scalar> out(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    const int idx = indices[static_cast<std::size_t>(i)];
    detail::require(idx >= 0 && idx < table.rows(),
                    "embed index " + std::to_string(idx) + " outside table of " +
                        std::to_string(table.rows()) + " rows");
    out.row(i) = table.value().row(idx);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return tape.emit(std::move(out), {&table}, [&] {
    return [tn = table.node(), idx = std::move(idx)](const Matrix<Scalar>& g) {
      Matrix<Scalar> gt = Matrix<Scalar>::Zero(tn->value.rows(), tn->value.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Index>(i));
      tn->accumulate(gt);
    };
  });
}

/// Inverted dropout. Identity (the same tensor) in eval mode or at rate 0.
template <typename Scalar>
Tensor<Scalar> dropout(Tape<Scalar>& tape, const Tensor<Scalar>& x, double rate, bool train,
                       Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidRate("dropout rate " + std::to_string(rate));
  if (!train || rate == 0.0) return x;
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng.uniform() >= rate ? keep_scale : Scalar(0);
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  return tape.emit(std::move(out), {&x}, [&] {
    return [xn = x.node(), mask = std::move(mask)](const Matrix<Scalar>& g) {
      xn->accumulate(g.cwiseProduct(mask));
    };
  });
}

}  // namespace scanconv::ag
