#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// Weights of one LSTM cell with square (d x d) input/recurrent maps.
/// Gate order everywhere: input, forget, candidate, output.
template <class Real>
struct LstmWeights {
  Tensor<Real> wx_i, wh_i, b_i;
  Tensor<Real> wx_f, wh_f, b_f;
  Tensor<Real> wx_g, wh_g, b_g;
  Tensor<Real> wx_o, wh_o, b_o;

  static LstmWeights zeros(std::size_t d) {
    LstmWeights w;
    auto mat = [d] { return Tensor<Real>({d, d}); };
    auto vec = [d] { return Tensor<Real>({d}); };
    w.wx_i = mat(); w.wh_i = mat(); w.b_i = vec();
    w.wx_f = mat(); w.wh_f = mat(); w.b_f = vec();
    w.wx_g = mat(); w.wh_g = mat(); w.b_g = vec();
    w.wx_o = mat(); w.wh_o = mat(); w.b_o = vec();
    return w;
  }

  static LstmWeights random(std::size_t d, Rng& rng, Real scale) {
    LstmWeights w = zeros(d);
    w.forEach([&](const char*, Tensor<Real>& t) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<Real>(rng.normal()) * scale;
      }
    });
    return w;
  }

  std::size_t dim() const { return b_i.size(); }

  /// Visits every weight tensor in a fixed order (defines serialization and
  /// optimizer slot order).
  template <class F>
  void forEach(F&& f) {
    f("wx_i", wx_i); f("wh_i", wh_i); f("b_i", b_i);
    f("wx_f", wx_f); f("wh_f", wh_f); f("b_f", b_f);
    f("wx_g", wx_g); f("wh_g", wh_g); f("b_g", b_g);
    f("wx_o", wx_o); f("wh_o", wh_o); f("b_o", b_o);
  }
  template <class F>
  void forEach(F&& f) const {
    f("wx_i", wx_i); f("wh_i", wh_i); f("b_i", b_i);
    f("wx_f", wx_f); f("wh_f", wh_f); f("b_f", b_f);
    f("wx_g", wx_g); f("wh_g", wh_g); f("b_g", b_g);
    f("wx_o", wx_o); f("wh_o", wh_o); f("b_o", b_o);
  }
};

template <class Real>
struct LstmState {
  Tensor<Real> h;
  Tensor<Real> c;
};

namespace detail {

template <class Real>
Tensor<Real> gatePre(const Tensor<Real>& x, const Tensor<Real>& h, const Tensor<Real>& wx,
                     const Tensor<Real>& wh, const Tensor<Real>& b) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor<Real> pre({n, d});
  mmAcc(x.data(), wx.data(), pre.data(), n, d, d);
  mmAcc(h.data(), wh.data(), pre.data(), n, d, d);
  for (std::size_t i = 0; i < n; ++i) {
    Real* r = pre.row(i);
    for (std::size_t j = 0; j < d; ++j) r[j] += b[j];
  }
  return pre;
}

}  // namespace detail

/// One LSTM step over a table of rows: x, h, c are (n x d); every row evolves
/// independently with the shared weights. A single vector is the n = 1 case.
template <class Real>
LstmState<Real> lstmCell(const Tensor<Real>& x, const Tensor<Real>& h, const Tensor<Real>& c,
                         const LstmWeights<Real>& w) {
  const std::size_t d = w.dim();
  auto wantTable = [&](const Tensor<Real>& t, const char* name) {
    if (t.rank() != 2 || t.dim(1) != d) {
      throw std::invalid_argument(std::string("lstmCell: ") + name + " must be (n x " +
                                  std::to_string(d) + "), got " + t.shapeString());
    }
    checkFinite(t, name);
  };
  wantTable(x, "x");
  wantTable(h, "h");
  wantTable(c, "c");
  if (x.dim(0) != h.dim(0) || x.dim(0) != c.dim(0)) {
    throw std::invalid_argument("lstmCell: row count mismatch between x/h/c");
  }

  const std::size_t n = x.dim(0);
  Tensor<Real> gi = detail::gatePre(x, h, w.wx_i, w.wh_i, w.b_i);
  Tensor<Real> gf = detail::gatePre(x, h, w.wx_f, w.wh_f, w.b_f);
  Tensor<Real> gg = detail::gatePre(x, h, w.wx_g, w.wh_g, w.b_g);
  Tensor<Real> go = detail::gatePre(x, h, w.wx_o, w.wh_o, w.b_o);

  LstmState<Real> out{Tensor<Real>({n, d}), Tensor<Real>({n, d})};
  for (std::size_t i = 0; i < n * d; ++i) {
    const Real iv = logistic(gi[i]);
    const Real fv = logistic(gf[i]);
    const Real gv = std::tanh(gg[i]);
    const Real ov = logistic(go[i]);
    out.c[i] = fv * c[i] + iv * gv;
    out.h[i] = ov * std::tanh(out.c[i]);
  }
  return out;
}

// -- tape variant -------------------------------------------------------------

template <class Real>
struct LstmVars {
  using Var = typename Tape<Real>::Var;
  Var wx_i, wh_i, b_i;
  Var wx_f, wh_f, b_f;
  Var wx_g, wh_g, b_g;
  Var wx_o, wh_o, b_o;
};

template <class Real>
LstmVars<Real> liftLstm(Tape<Real>& tape, const LstmWeights<Real>& w) {
  LstmVars<Real> v;
  v.wx_i = tape.leaf(w.wx_i); v.wh_i = tape.leaf(w.wh_i); v.b_i = tape.leaf(w.b_i);
  v.wx_f = tape.leaf(w.wx_f); v.wh_f = tape.leaf(w.wh_f); v.b_f = tape.leaf(w.b_f);
  v.wx_g = tape.leaf(w.wx_g); v.wh_g = tape.leaf(w.wh_g); v.b_g = tape.leaf(w.b_g);
  v.wx_o = tape.leaf(w.wx_o); v.wh_o = tape.leaf(w.wh_o); v.b_o = tape.leaf(w.b_o);
  return v;
}

template <class Real>
struct LstmStateVars {
  typename Tape<Real>::Var h;
  typename Tape<Real>::Var c;
};

template <class Real>
LstmStateVars<Real> lstmStep(Tape<Real>& tape, typename Tape<Real>::Var x,
                             typename Tape<Real>::Var h, typename Tape<Real>::Var c,
                             const LstmVars<Real>& w) {
  using Var = typename Tape<Real>::Var;
  auto pre = [&](Var wx, Var wh, Var b) {
    return tape.addRowVector(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b);
  };
  Var gi = tape.sigmoid(pre(w.wx_i, w.wh_i, w.b_i));
  Var gf = tape.sigmoid(pre(w.wx_f, w.wh_f, w.b_f));
  Var gg = tape.tanhOp(pre(w.wx_g, w.wh_g, w.b_g));
  Var go = tape.sigmoid(pre(w.wx_o, w.wh_o, w.b_o));
  Var c_new = tape.add(tape.hadamard(gf, c), tape.hadamard(gi, gg));
  Var h_new = tape.hadamard(go, tape.tanhOp(c_new));
  return {h_new, c_new};
}

}  // namespace stagerec
