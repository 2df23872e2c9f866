#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tracelm/rng.hpp"

namespace tracelm::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, which is already a topological order, so the backward pass is a
// single reverse sweep. Templated on the scalar so the same model code runs
// in float for training and double for finite-difference checks.
template <class S>
class Tape {
 public:
  Var constant(Mat<S> value) { return push(std::move(value), nullptr, false); }

  // Differentiable leaf (parameter binding).
  Var leaf(Mat<S> value) { return push(std::move(value), nullptr, true); }

  const Mat<S>& val(Var v) const { return node(v).value; }

  // Zero if the node never received gradient.
  Mat<S> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void reset() { nodes_.clear(); }

  Var matmul(Var a, Var b) {
    const Mat<S>& av = val(a);
    const Mat<S>& bv = val(b);
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Mat<S> out = av * bv;
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a).noalias() += n.grad * t.val(b).transpose();
      if (t.wants_grad(b)) t.grad_ref(b).noalias() += t.val(a).transpose() * n.grad;
    }, wants_grad(a) || wants_grad(b));
  }

  Var transpose(Var a) {
    Mat<S> out = val(a).transpose();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad.transpose();
    }, wants_grad(a));
  }

  Var add(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument("add: shape mismatch");
    Mat<S> out = val(a) + val(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad;
      if (t.wants_grad(b)) t.grad_ref(b) += n.grad;
    }, wants_grad(a) || wants_grad(b));
  }

  // Adds a 1 x C row vector to every row.
  Var add_rowvec(Var a, Var bias) {
    if (val(bias).rows() != 1 || val(bias).cols() != val(a).cols())
      throw std::invalid_argument("add_rowvec: bias must be 1 x cols(a)");
    Mat<S> out = val(a).rowwise() + val(bias).row(0);
    return push(std::move(out), [a, bias](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad;
      if (t.wants_grad(bias)) t.grad_ref(bias) += n.grad.colwise().sum();
    }, wants_grad(a) || wants_grad(bias));
  }

  Var cmul(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument("cmul: shape mismatch");
    Mat<S> out = val(a).cwiseProduct(val(b));
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad.cwiseProduct(t.val(b));
      if (t.wants_grad(b)) t.grad_ref(b) += n.grad.cwiseProduct(t.val(a));
    }, wants_grad(a) || wants_grad(b));
  }

  Var scale(Var a, S factor) {
    Mat<S> out = val(a) * factor;
    return push(std::move(out), [a, factor](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad * factor;
    }, wants_grad(a));
  }

  Var sigmoid(Var a) {
    Mat<S> out = val(a).unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
    Var v = push(std::move(out), nullptr, wants_grad(a));
    if (wants_grad(a)) {
      node(v).back = [a, v](Tape& t, const Node& n) {
        const Mat<S>& y = t.val(v);
        t.grad_ref(a).array() += n.grad.array() * y.array() * (S(1) - y.array());
      };
    }
    return v;
  }

  Var tanh(Var a) {
    Mat<S> out = val(a).array().tanh().matrix();
    Var v = push(std::move(out), nullptr, wants_grad(a));
    if (wants_grad(a)) {
      node(v).back = [a, v](Tape& t, const Node& n) {
        const Mat<S>& y = t.val(v);
        t.grad_ref(a).array() += n.grad.array() * (S(1) - y.array().square());
      };
    }
    return v;
  }

  // Smooth tanh-approximated GELU; smoothness keeps finite-difference
  // gradient checks well-behaved.
  Var gelu(Var a) {
    const S c = static_cast<S>(std::sqrt(2.0 / M_PI));
    const S k = static_cast<S>(0.044715);
    Mat<S> out = val(a).unaryExpr([c, k](S x) {
      return S(0.5) * x * (S(1) + std::tanh(c * (x + k * x * x * x)));
    });
    return push(std::move(out), [a, c, k](Tape& t, const Node& n) {
      if (!t.wants_grad(a)) return;
      const Mat<S>& x = t.val(a);
      Mat<S> dx = x.unaryExpr([c, k](S v) {
        const S u = c * (v + k * v * v * v);
        const S th = std::tanh(u);
        const S sech2 = S(1) - th * th;
        return S(0.5) * (S(1) + th) + S(0.5) * v * sech2 * c * (S(1) + S(3) * k * v * v);
      });
      t.grad_ref(a).array() += n.grad.array() * dx.array();
    }, wants_grad(a));
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    bool any = false;
    for (Var p : parts) {
      if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).cols();
      any = any || wants_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index off = 0;
    for (Var p : parts) {
      out.middleCols(off, val(p).cols()) = val(p);
      off += val(p).cols();
    }
    std::vector<Var> held(parts.begin(), parts.end());
    return push(std::move(out), [held](Tape& t, const Node& n) {
      Eigen::Index off2 = 0;
      for (Var p : held) {
        const Eigen::Index w = t.val(p).cols();
        if (t.wants_grad(p)) t.grad_ref(p) += n.grad.middleCols(off2, w);
        off2 += w;
      }
    }, any);
  }

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const Eigen::Index cols = val(parts[0]).cols();
    Eigen::Index rows = 0;
    bool any = false;
    for (Var p : parts) {
      if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
      rows += val(p).rows();
      any = any || wants_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index off = 0;
    for (Var p : parts) {
      out.middleRows(off, val(p).rows()) = val(p);
      off += val(p).rows();
    }
    std::vector<Var> held(parts.begin(), parts.end());
    return push(std::move(out), [held](Tape& t, const Node& n) {
      Eigen::Index off2 = 0;
      for (Var p : held) {
        const Eigen::Index h = t.val(p).rows();
        if (t.wants_grad(p)) t.grad_ref(p) += n.grad.middleRows(off2, h);
        off2 += h;
      }
    }, any);
  }

  Var slice_cols(Var a, Eigen::Index offset, Eigen::Index count) {
    if (offset < 0 || count < 0 || offset + count > val(a).cols())
      throw std::invalid_argument("slice_cols: out of range");
    Mat<S> out = val(a).middleCols(offset, count);
    return push(std::move(out), [a, offset, count](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a).middleCols(offset, count) += n.grad;
    }, wants_grad(a));
  }

  Var slice_rows(Var a, Eigen::Index offset, Eigen::Index count) {
    if (offset < 0 || count < 0 || offset + count > val(a).rows())
      throw std::invalid_argument("slice_rows: out of range");
    Mat<S> out = val(a).middleRows(offset, count);
    return push(std::move(out), [a, offset, count](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a).middleRows(offset, count) += n.grad;
    }, wants_grad(a));
  }

  // Embedding lookup: out.row(r) = table.row(indices[r]).
  Var gather_rows(Var table, std::vector<int> indices) {
    const Mat<S>& tv = val(table);
    Mat<S> out(static_cast<Eigen::Index>(indices.size()), tv.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] < 0 || indices[r] >= tv.rows())
        throw std::invalid_argument("gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(r)) = tv.row(indices[r]);
    }
    return push(std::move(out), [table, indices = std::move(indices)](Tape& t, const Node& n) {
      if (!t.wants_grad(table)) return;
      Mat<S>& g = t.grad_ref(table);
      for (std::size_t r = 0; r < indices.size(); ++r)
        g.row(indices[r]) += n.grad.row(static_cast<Eigen::Index>(r));
    }, wants_grad(table));
  }

  // Row-wise softmax restricted to `allowed` entries; disallowed entries get
  // probability exactly 0. Every row must allow at least one entry.
  Var masked_softmax_rows(Var a, BoolMask allowed) {
    const Mat<S>& x = val(a);
    if (allowed.rows() != x.rows() || allowed.cols() != x.cols())
      throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S hi = std::numeric_limits<S>::lowest();
      bool seen = false;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (allowed(i, j)) {
          hi = seen ? std::max(hi, x(i, j)) : x(i, j);
          seen = true;
        }
      if (!seen) throw std::invalid_argument("masked_softmax_rows: fully masked row");
      S denom = S(0);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        out(i, j) = allowed(i, j) ? std::exp(x(i, j) - hi) : S(0);
        denom += out(i, j);
      }
      out.row(i) /= denom;
    }
    Var v = push(std::move(out), nullptr, wants_grad(a));
    if (wants_grad(a)) {
      node(v).back = [a, v](Tape& t, const Node& n) {
        const Mat<S>& y = t.val(v);
        Mat<S>& g = t.grad_ref(a);
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          const S dot = y.row(i).dot(n.grad.row(i));
          g.row(i).array() += y.row(i).array() * (n.grad.row(i).array() - dot);
        }
      };
    }
    return v;
  }

  Var log_softmax_rows(Var a) {
    const Mat<S>& x = val(a);
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S hi = x.row(i).maxCoeff();
      const S lse = std::log((x.row(i).array() - hi).exp().sum()) + hi;
      out.row(i) = x.row(i).array() - lse;
    }
    Var v = push(std::move(out), nullptr, wants_grad(a));
    if (wants_grad(a)) {
      node(v).back = [a, v](Tape& t, const Node& n) {
        const Mat<S>& y = t.val(v);
        Mat<S>& g = t.grad_ref(a);
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          const S total = n.grad.row(i).sum();
          g.row(i).array() += n.grad.row(i).array() - y.row(i).array().exp() * total;
        }
      };
    }
    return v;
  }

  // Row-wise layer norm with gain/bias (1 x C each).
  Var layer_norm_rows(Var a, Var gain, Var bias, S eps = static_cast<S>(1e-5)) {
    const Mat<S>& x = val(a);
    const Eigen::Index c = x.cols();
    if (val(gain).rows() != 1 || val(gain).cols() != c || val(bias).rows() != 1 ||
        val(bias).cols() != c)
      throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols");
    Mat<S> xhat(x.rows(), c);
    Mat<S> inv_std(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S mean = x.row(i).mean();
      const S var = (x.row(i).array() - mean).square().sum() / static_cast<S>(c);
      inv_std(i, 0) = S(1) / std::sqrt(var + eps);
      xhat.row(i) = (x.row(i).array() - mean) * inv_std(i, 0);
    }
    Mat<S> out(x.rows(), c);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out.row(i) = xhat.row(i).cwiseProduct(val(gain).row(0)) + val(bias).row(0);
    const bool any = wants_grad(a) || wants_grad(gain) || wants_grad(bias);
    return push(std::move(out),
                [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, const Node& n) {
                  const Eigen::Index cols = xhat.cols();
                  if (t.wants_grad(gain))
                    t.grad_ref(gain) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
                  if (t.wants_grad(bias)) t.grad_ref(bias) += n.grad.colwise().sum();
                  if (!t.wants_grad(a)) return;
                  Mat<S>& g = t.grad_ref(a);
                  const auto& gainrow = t.val(gain).row(0);
                  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                    Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
                        (n.grad.row(i).array() * gainrow.array()).matrix();
                    const S m1 = dxhat.mean();
                    const S m2 = (dxhat.array() * xhat.row(i).array()).sum() / static_cast<S>(cols);
                    g.row(i).array() +=
                        inv_std(i, 0) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
                  }
                },
                any);
  }

  // Inverted dropout. Identity when p == 0 or train == false.
  Var dropout(Var a, double p, bool train, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!train || p == 0.0) return a;
    const Mat<S>& x = val(a);
    Mat<S> mask(x.rows(), x.cols());
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        mask(i, j) = rng.uniform() < p ? S(0) : keep_scale;
    Mat<S> out = x.cwiseProduct(mask);
    return push(std::move(out), [a, mask = std::move(mask)](Tape& t, const Node& n) {
      if (t.wants_grad(a)) t.grad_ref(a) += n.grad.cwiseProduct(mask);
    }, wants_grad(a));
  }

  // Sum over valid targets of the label-smoothed negative log-likelihood.
  // targets[i] == -1 marks a padded row that contributes nothing. The smooth
  // target puts 1-eps on the target and eps/(V-1) on every other class.
  // Returns a 1x1 node; divide by the token count outside.
  Var cross_entropy_label_smoothed_sum(Var logits, std::vector<int> targets, double eps_ls) {
    const Mat<S>& x = val(logits);
    const Eigen::Index v_size = x.cols();
    if (static_cast<Eigen::Index>(targets.size()) != x.rows())
      throw std::invalid_argument("cross_entropy: target count mismatch");
    if (eps_ls < 0.0 || eps_ls >= 1.0) throw std::invalid_argument("cross_entropy: bad smoothing");
    if (eps_ls > 0.0 && v_size < 2)
      throw std::invalid_argument("cross_entropy: smoothing needs vocab >= 2");

    Mat<S> softmax(x.rows(), v_size);
    const S on = static_cast<S>(1.0 - eps_ls);
    const S off = v_size > 1 ? static_cast<S>(eps_ls / (static_cast<double>(v_size) - 1.0)) : S(0);
    S total = S(0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int target = targets[static_cast<std::size_t>(i)];
      const S hi = x.row(i).maxCoeff();
      const S lse = std::log((x.row(i).array() - hi).exp().sum()) + hi;
      softmax.row(i) = (x.row(i).array() - lse).exp();
      if (target < 0) continue;
      if (target >= v_size) throw std::invalid_argument("cross_entropy: target out of range");
      // -sum_y q(y) log p(y) = lse - sum_y q(y) x_y
      S dot = on * x(i, target);
      if (off > S(0)) dot += off * (x.row(i).sum() - x(i, target));
      total += lse - dot;
    }
    Mat<S> out(1, 1);
    out(0, 0) = total;
    return push(std::move(out),
                [logits, targets = std::move(targets), softmax = std::move(softmax), on, off](
                    Tape& t, const Node& n) {
                  if (!t.wants_grad(logits)) return;
                  const S upstream = n.grad(0, 0);
                  Mat<S>& g = t.grad_ref(logits);
                  for (Eigen::Index i = 0; i < softmax.rows(); ++i) {
                    const int target = targets[static_cast<std::size_t>(i)];
                    if (target < 0) continue;
                    g.row(i).array() += upstream * (softmax.row(i).array() - off);
                    g(i, target) += upstream * (off - on);
                  }
                },
                wants_grad(logits));
  }

  void backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
      throw std::invalid_argument("backward: loss must be 1x1");
    grad_ref(loss)(0, 0) = S(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad.size() != 0) n.back(*this, n);
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void(Tape&, const Node&)> back;
    bool requires_grad = false;
  };

  bool wants_grad(Var v) const { return node(v).requires_grad; }

  Mat<S>& grad_ref(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::invalid_argument("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::invalid_argument("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  Var push(Mat<S> value, std::function<void(Tape&, const Node&)> back, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.back = requires_grad ? std::move(back) : nullptr;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

}  // namespace tracelm::ad
