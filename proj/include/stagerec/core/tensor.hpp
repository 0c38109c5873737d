#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stagerec {

/// Dense row-major tensor of rank <= 3. The model only ever needs vectors,
/// matrices and small stacks of matrices, so shape handling stays minimal.
template <class Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), values_(count(shape_), Real(0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<Real> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (count(shape_) != values_.size()) {
      throw std::invalid_argument("tensor: shape " + shapeString() + " does not match " +
                                  std::to_string(values_.size()) + " values");
    }
  }

  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  Real* data() { return values_.data(); }
  const Real* data() const { return values_.data(); }
  std::vector<Real>& values() { return values_; }
  const std::vector<Real>& values() const { return values_; }

  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }

  /// Rank-2 element access; rows() / cols() follow the same convention.
  Real& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  Real* row(std::size_t r) { return values_.data() + r * cols(); }
  const Real* row(std::size_t r) const { return values_.data() + r * cols(); }

  bool sameShape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(Real v) { std::fill(values_.begin(), values_.end(), v); }

  bool allFinite() const {
    for (Real v : values_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::string shapeString() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t(1), std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<Real> values_;
};

template <class Real>
void checkFinite(const Tensor<Real>& t, const std::string& name) {
  if (!t.allFinite()) {
    throw std::runtime_error("non-finite values in tensor '" + name + "' " + t.shapeString());
  }
}

template <class Real>
void checkSameShape(const Tensor<Real>& a, const Tensor<Real>& b, const std::string& what) {
  if (!a.sameShape(b)) {
    throw std::invalid_argument(what + ": shape mismatch " + a.shapeString() + " vs " +
                                b.shapeString());
  }
}

/// Numerically stable logistic function.
template <class Real>
Real logistic(Real x) {
  if (x >= Real(0)) {
    return Real(1) / (Real(1) + std::exp(-x));
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// ---------------------------------------------------------------------------
// Raw matrix kernels. All accumulate into C so backward passes can reuse them.
// Loop order keeps the innermost stride unit-length for row-major storage.
// ---------------------------------------------------------------------------

/// C (m x n) += A (m x k) * B (k x n)
template <class Real>
void mmAcc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Real av = ai[kk];
      if (av == Real(0)) continue;
      const Real* bk = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

/// C (m x n) += A (m x k) * B^T, with B stored (n x k)
template <class Real>
void mmNTAcc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* bj = b + j * k;
      Real acc = 0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] += acc;
    }
  }
}

/// C (k x n) += A^T * B, with A stored (m x k), B stored (m x n)
template <class Real>
void mmTNAcc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    const Real* bi = b + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Real av = ai[kk];
      if (av == Real(0)) continue;
      Real* ck = c + kk * n;
      for (std::size_t j = 0; j < n; ++j) ck[j] += av * bi[j];
    }
  }
}

}  // namespace stagerec
