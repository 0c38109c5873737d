#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// Reverse-mode autodiff tape.
///
/// Nodes are appended in topological order; backward() walks them once in
/// reverse, so each op's pullback runs after all gradient contributions to
/// its output have accumulated. mark()/truncate() let a caller reuse the
/// prefix of the tape (e.g. parameter leaves and shared tables) across many
/// short-lived suffixes (per-batch scoring graphs).
template <class Real>
class Tape {
 public:
  struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  using BackwardFn = std::function<void(Tape&, const Tensor<Real>&)>;

  // -- node management ------------------------------------------------------

  Var leaf(Tensor<Real> value) { return push(std::move(value), nullptr); }

  /// Registers an externally computed op. `backward` receives the tape and
  /// the output gradient and must accumulate into its parents' gradBuffer().
  Var apply(Tensor<Real> value, BackwardFn backward) {
    return push(std::move(value), std::move(backward));
  }

  const Tensor<Real>& value(Var v) const { return node(v).value; }

  std::size_t size() const { return nodes_.size(); }
  std::size_t mark() const { return nodes_.size(); }

  /// Drops every node recorded after `m`. Vars handed out past the mark
  /// become invalid; callers must not retain them across a truncate.
  void truncate(std::size_t m) {
    if (m > nodes_.size()) throw std::invalid_argument("tape: truncate past end");
    nodes_.resize(m);
  }

  void clearGrads() {
    for (auto& n : nodes_) n.has_grad = false;
  }

  /// Gradient accumulation buffer for `v`, allocated (zeroed) on first use
  /// since the last clearGrads()/backward().
  Tensor<Real>& gradBuffer(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      if (!n.grad.sameShape(n.value)) {
        n.grad = Tensor<Real>(n.value.shape());
      } else {
        n.grad.fill(Real(0));
      }
      n.has_grad = true;
    }
    return n.grad;
  }

  bool hasGrad(Var v) const { return node(v).has_grad; }

  const Tensor<Real>& grad(Var v) const {
    const Node& n = node(v);
    if (!n.has_grad) throw std::runtime_error("tape: gradient never reached node");
    return n.grad;
  }

  Tensor<Real> gradOrZero(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor<Real>(n.value.shape());
  }

  /// Reverse sweep from a scalar root. Nodes the root does not depend on are
  /// skipped (no gradient ever lands on them).
  void backward(Var root) {
    Node& r = node(root);
    if (r.value.size() != 1) {
      throw std::invalid_argument("tape: backward root must be a scalar, got " +
                                  r.value.shapeString());
    }
    clearGrads();
    gradBuffer(root)[0] = Real(1);
    for (std::int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_grad && n.backward) {
        n.backward(*this, n.grad);
      }
    }
  }

  // -- elementwise / linear ops ---------------------------------------------

  Var add(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    checkSameShape(va, vb, "tape add");
    Tensor<Real> out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return apply(std::move(out), [a, b](Tape& t, const Tensor<Real>& g) {
      auto& ga = t.gradBuffer(a);
      auto& gb = t.gradBuffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }

  Var sub(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    checkSameShape(va, vb, "tape sub");
    Tensor<Real> out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return apply(std::move(out), [a, b](Tape& t, const Tensor<Real>& g) {
      auto& ga = t.gradBuffer(a);
      auto& gb = t.gradBuffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
    });
  }

  Var scale(Var a, Real c) {
    Tensor<Real> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return apply(std::move(out), [a, c](Tape& t, const Tensor<Real>& g) {
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }

  Var hadamard(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    checkSameShape(va, vb, "tape hadamard");
    Tensor<Real> out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return apply(std::move(out), [a, b](Tape& t, const Tensor<Real>& g) {
      const auto& va = t.value(a);
      const auto& vb = t.value(b);
      auto& ga = t.gradBuffer(a);
      auto& gb = t.gradBuffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += vb[i] * g[i];
        gb[i] += va[i] * g[i];
      }
    });
  }

  /// mat (m x n) + vec ({n}), vec broadcast over rows.
  Var addRowVector(Var mat, Var vec) {
    const auto& vm = value(mat);
    const auto& vv = value(vec);
    if (vm.rank() != 2 || vv.rank() != 1 || vm.dim(1) != vv.dim(0)) {
      throw std::invalid_argument("tape addRowVector: want (m x n) + {n}, got " +
                                  vm.shapeString() + " + " + vv.shapeString());
    }
    Tensor<Real> out = vm;
    const std::size_t m = vm.dim(0), n = vm.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
      Real* r = out.row(i);
      for (std::size_t j = 0; j < n; ++j) r[j] += vv[j];
    }
    return apply(std::move(out), [mat, vec, m, n](Tape& t, const Tensor<Real>& g) {
      auto& gm = t.gradBuffer(mat);
      auto& gv = t.gradBuffer(vec);
      for (std::size_t i = 0; i < m; ++i) {
        const Real* gr = g.row(i);
        for (std::size_t j = 0; j < n; ++j) {
          gm.at(i, j) += gr[j];
          gv[j] += gr[j];
        }
      }
    });
  }

  Var matmul(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
      throw std::invalid_argument("tape matmul: " + va.shapeString() + " * " + vb.shapeString());
    }
    const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<Real> out({m, n});
    mmAcc(va.data(), vb.data(), out.data(), m, k, n);
    return apply(std::move(out), [a, b, m, k, n](Tape& t, const Tensor<Real>& g) {
      mmNTAcc(g.data(), t.value(b).data(), t.gradBuffer(a).data(), m, n, k);
      mmTNAcc(t.value(a).data(), g.data(), t.gradBuffer(b).data(), m, k, n);
    });
  }

  /// a (m x k) * b^T with b stored (n x k); used for score/logit matrices.
  Var matmulNT(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1)) {
      throw std::invalid_argument("tape matmulNT: " + va.shapeString() + " * " +
                                  vb.shapeString() + "^T");
    }
    const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(0);
    Tensor<Real> out({m, n});
    mmNTAcc(va.data(), vb.data(), out.data(), m, k, n);
    return apply(std::move(out), [a, b, m, k, n](Tape& t, const Tensor<Real>& g) {
      mmAcc(g.data(), t.value(b).data(), t.gradBuffer(a).data(), m, n, k);
      mmTNAcc(g.data(), t.value(a).data(), t.gradBuffer(b).data(), m, n, k);
    });
  }

  Var gatherRows(Var a, std::vector<std::size_t> rows) {
    const auto& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("tape gatherRows: need rank-2 source");
    const std::size_t n = va.dim(0), d = va.dim(1);
    Tensor<Real> out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= n) throw std::out_of_range("tape gatherRows: row " + std::to_string(rows[i]));
      const Real* src = va.row(rows[i]);
      std::copy(src, src + d, out.row(i));
    }
    return apply(std::move(out), [a, rows = std::move(rows), d](Tape& t, const Tensor<Real>& g) {
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        Real* dst = ga.row(rows[i]);
        const Real* src = g.row(i);
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  /// Stacks k vars of shape {d} or (1 x d) into a (k x d) matrix.
  Var stackRows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("tape stackRows: empty input");
    const std::size_t d = value(parts[0]).size();
    Tensor<Real> out({parts.size(), d});
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto& v = value(parts[i]);
      if (v.size() != d) throw std::invalid_argument("tape stackRows: ragged rows");
      std::copy(v.data(), v.data() + d, out.row(i));
    }
    return apply(std::move(out), [parts, d](Tape& t, const Tensor<Real>& g) {
      for (std::size_t i = 0; i < parts.size(); ++i) {
        auto& gp = t.gradBuffer(parts[i]);
        const Real* src = g.row(i);
        for (std::size_t j = 0; j < d; ++j) gp[j] += src[j];
      }
    });
  }

  /// (n x d) -> (1 x d) column sums.
  Var sumRows(Var a) {
    const auto& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("tape sumRows: need rank-2 input");
    const std::size_t n = va.dim(0), d = va.dim(1);
    Tensor<Real> out({std::size_t(1), d});
    for (std::size_t i = 0; i < n; ++i) {
      const Real* r = va.row(i);
      for (std::size_t j = 0; j < d; ++j) out[j] += r[j];
    }
    return apply(std::move(out), [a, n, d](Tape& t, const Tensor<Real>& g) {
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < n; ++i) {
        Real* r = ga.row(i);
        for (std::size_t j = 0; j < d; ++j) r[j] += g[j];
      }
    });
  }

  /// Row-by-row dot products of two (k x d) matrices -> {k}.
  Var rowwiseDot(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    checkSameShape(va, vb, "tape rowwiseDot");
    if (va.rank() != 2) throw std::invalid_argument("tape rowwiseDot: need rank-2 inputs");
    const std::size_t k = va.dim(0), d = va.dim(1);
    Tensor<Real> out({k});
    for (std::size_t i = 0; i < k; ++i) {
      const Real* ra = va.row(i);
      const Real* rb = vb.row(i);
      Real acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += ra[j] * rb[j];
      out[i] = acc;
    }
    return apply(std::move(out), [a, b, k, d](Tape& t, const Tensor<Real>& g) {
      const auto& va = t.value(a);
      const auto& vb = t.value(b);
      auto& ga = t.gradBuffer(a);
      auto& gb = t.gradBuffer(b);
      for (std::size_t i = 0; i < k; ++i) {
        const Real gi = g[i];
        for (std::size_t j = 0; j < d; ++j) {
          ga.at(i, j) += gi * vb.at(i, j);
          gb.at(i, j) += gi * va.at(i, j);
        }
      }
    });
  }

  // -- nonlinearities ---------------------------------------------------------

  Var sigmoid(Var a) {
    Tensor<Real> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = logistic(out[i]);
    Var o = apply(std::move(out), nullptr);
    node(o).backward = [a, o](Tape& t, const Tensor<Real>& g) {
      const auto& y = t.value(o);
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (Real(1) - y[i]);
    };
    return o;
  }

  Var tanhOp(Var a) {
    Tensor<Real> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    Var o = apply(std::move(out), nullptr);
    node(o).backward = [a, o](Tape& t, const Tensor<Real>& g) {
      const auto& y = t.value(o);
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (Real(1) - y[i] * y[i]);
    };
    return o;
  }

  /// Row-wise softmax with max-subtraction for overflow safety.
  Var softmaxRows(Var a) {
    const auto& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("tape softmaxRows: need rank-2 input");
    const std::size_t n = va.dim(0), w = va.dim(1);
    Tensor<Real> out({n, w});
    for (std::size_t i = 0; i < n; ++i) {
      const Real* r = va.row(i);
      Real mx = r[0];
      for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, r[j]);
      Real sum = 0;
      Real* o = out.row(i);
      for (std::size_t j = 0; j < w; ++j) {
        o[j] = std::exp(r[j] - mx);
        sum += o[j];
      }
      for (std::size_t j = 0; j < w; ++j) o[j] /= sum;
    }
    Var o = apply(std::move(out), nullptr);
    node(o).backward = [a, o, n, w](Tape& t, const Tensor<Real>& g) {
      const auto& y = t.value(o);
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < n; ++i) {
        const Real* yr = y.row(i);
        const Real* gr = g.row(i);
        Real dot = 0;
        for (std::size_t j = 0; j < w; ++j) dot += yr[j] * gr[j];
        Real* gar = ga.row(i);
        for (std::size_t j = 0; j < w; ++j) gar[j] += yr[j] * (gr[j] - dot);
      }
    };
    return o;
  }

  // -- reductions / losses ----------------------------------------------------

  Var sumSquares(Var a) {
    const auto& va = value(a);
    Real acc = 0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * va[i];
    return apply(Tensor<Real>::scalar(acc), [a](Tape& t, const Tensor<Real>& g) {
      const auto& va = t.value(a);
      auto& ga = t.gradBuffer(a);
      for (std::size_t i = 0; i < va.size(); ++i) ga[i] += Real(2) * va[i] * g[0];
    });
  }

  /// c0 + sum_i w_i * s_i over scalar vars.
  Var weightedSum(const std::vector<Var>& scalars, const std::vector<Real>& weights,
                  Real c0 = Real(0)) {
    if (scalars.size() != weights.size()) {
      throw std::invalid_argument("tape weightedSum: size mismatch");
    }
    Real acc = c0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      const auto& v = value(scalars[i]);
      if (v.size() != 1) throw std::invalid_argument("tape weightedSum: non-scalar term");
      acc += weights[i] * v[0];
    }
    return apply(Tensor<Real>::scalar(acc), [scalars, weights](Tape& t, const Tensor<Real>& g) {
      for (std::size_t i = 0; i < scalars.size(); ++i) {
        t.gradBuffer(scalars[i])[0] += weights[i] * g[0];
      }
    });
  }

  /// Mean binary cross-entropy of predictions ({k}, probabilities) against
  /// fixed labels. Predictions are clamped to [eps, 1-eps]; where the clamp
  /// is active the local derivative is zero.
  Var bceMean(Var preds, std::vector<Real> labels, Real eps) {
    const auto& p = value(preds);
    if (p.rank() != 1 || p.size() != labels.size()) {
      throw std::invalid_argument("tape bceMean: preds/labels size mismatch");
    }
    if (p.size() == 0) throw std::invalid_argument("tape bceMean: empty batch");
    const std::size_t k = p.size();
    Real acc = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const Real pc = std::min(std::max(p[i], eps), Real(1) - eps);
      acc += -(labels[i] * std::log(pc) + (Real(1) - labels[i]) * std::log(Real(1) - pc));
    }
    acc /= Real(k);
    return apply(Tensor<Real>::scalar(acc),
                 [preds, labels = std::move(labels), eps, k](Tape& t, const Tensor<Real>& g) {
                   const auto& p = t.value(preds);
                   auto& gp = t.gradBuffer(preds);
                   const Real s = g[0] / Real(k);
                   for (std::size_t i = 0; i < k; ++i) {
                     if (p[i] < eps || p[i] > Real(1) - eps) continue;
                     gp[i] += s * (-(labels[i] / p[i]) + (Real(1) - labels[i]) / (Real(1) - p[i]));
                   }
                 });
  }

  /// mean_i [ logsumexp(row_i) - logits[i,i] ] over a square logit matrix:
  /// the InfoNCE objective with in-batch negatives and matched diagonal.
  Var lseMinusDiagMean(Var logits) {
    const auto& l = value(logits);
    if (l.rank() != 2 || l.dim(0) != l.dim(1)) {
      throw std::invalid_argument("tape lseMinusDiagMean: need square logits, got " +
                                  l.shapeString());
    }
    const std::size_t n = l.dim(0);
    if (n == 0) throw std::invalid_argument("tape lseMinusDiagMean: empty logits");
    Real acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real* r = l.row(i);
      Real mx = r[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
      Real sum = 0;
      for (std::size_t j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
      acc += mx + std::log(sum) - r[i];
    }
    acc /= Real(n);
    return apply(Tensor<Real>::scalar(acc), [logits, n](Tape& t, const Tensor<Real>& g) {
      const auto& l = t.value(logits);
      auto& gl = t.gradBuffer(logits);
      const Real s = g[0] / Real(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Real* r = l.row(i);
        Real mx = r[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        Real sum = 0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
        Real* gr = gl.row(i);
        for (std::size_t j = 0; j < n; ++j) gr[j] += s * (std::exp(r[j] - mx) / sum);
        gr[i] -= s;
      }
    });
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    BackwardFn backward;
    bool has_grad = false;
  };

  Var push(Tensor<Real> value, BackwardFn backward) {
#ifdef STAGEREC_CHECK_FINITE
    checkFinite(value, "tape node " + std::to_string(nodes_.size()));
#endif
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), false});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw std::out_of_range("tape: invalid var id " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw std::out_of_range("tape: invalid var id " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Node> nodes_;
};

}  // namespace stagerec
