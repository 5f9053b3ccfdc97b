#pragma once

// Dense 3-way tensors and the multilinear kernels shared by every solver.
//
// Storage is mode-1 fastest: entry (i, j, k) lives at i + p1 * (j + p2 * k).
// Matricizations follow the Kolda-Bader convention relative to that layout,
// so that X_(1) = A (C kr B)^T, X_(2) = B (C kr A)^T, X_(3) = C (B kr A)^T
// for X = [[A, B, C]] and "kr" the Khatri-Rao product.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "logitcp/errors.hpp"

namespace logitcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Factor matrix: p_n rows, one unit-norm column per component.
using FactorMatrix = Eigen::MatrixXd;

struct Dims {
  std::size_t p1 = 1;
  std::size_t p2 = 1;
  std::size_t p3 = 1;

  [[nodiscard]] std::size_t size() const { return p1 * p2 * p3; }
  [[nodiscard]] std::size_t operator[](int mode) const {
    return mode == 1 ? p1 : mode == 2 ? p2 : p3;
  }
  [[nodiscard]] std::array<std::size_t, 3> as_array() const { return {p1, p2, p3}; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.p1) + "x" + std::to_string(d.p2) + "x" + std::to_string(d.p3);
}

namespace detail {

inline void check_mode(int mode) {
  if (mode < 1 || mode > 3) throw ConfigError("mode must be 1, 2 or 3, got " + std::to_string(mode));
}

inline void check_dims(const Dims& d) {
  if (d.p1 == 0 || d.p2 == 0 || d.p3 == 0) throw DimensionError("tensor dims must be >= 1, got " + to_string(d));
}

/// Neumaier-compensated sum; likelihood traces are compared at 1e-9.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

class DenseTensor3 {
 public:
  DenseTensor3() : DenseTensor3(Dims{}) {}

  explicit DenseTensor3(Dims dims, double fill = 0.0) : dims_(dims) {
    detail::check_dims(dims_);
    values_.assign(dims_.size(), fill);
  }

  DenseTensor3(Dims dims, std::vector<double> values) : dims_(dims), values_(std::move(values)) {
    detail::check_dims(dims_);
    if (values_.size() != dims_.size()) {
      throw DimensionError("value count " + std::to_string(values_.size()) + " does not match dims " +
                           to_string(dims_));
    }
  }

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }

  [[nodiscard]] std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims_.p1 * (j + dims_.p2 * k);
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[index(i, j, k)]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return values_[index(i, j, k)]; }
  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] double* data() { return values_.data(); }
  [[nodiscard]] const double* data() const { return values_.data(); }

  /// Flat view as an Eigen column vector.
  [[nodiscard]] Eigen::Map<Vector> vec() { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }
  [[nodiscard]] Eigen::Map<const Vector> vec() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const DenseTensor3&, const DenseTensor3&) = default;

 private:
  Dims dims_;
  std::vector<double> values_;
};

/// Observed 0/1 data with an observation mask (1 = observed).
class BinaryTensor3 {
 public:
  BinaryTensor3() : BinaryTensor3(Dims{}) {}

  explicit BinaryTensor3(Dims dims) : dims_(dims) {
    detail::check_dims(dims_);
    values_.assign(dims_.size(), 0);
    mask_.assign(dims_.size(), 1);
  }

  BinaryTensor3(Dims dims, std::vector<std::uint8_t> values, std::vector<std::uint8_t> mask)
      : dims_(dims), values_(std::move(values)), mask_(std::move(mask)) {
    detail::check_dims(dims_);
    if (values_.size() != dims_.size() || mask_.size() != dims_.size()) {
      throw DimensionError("binary tensor arrays do not match dims " + to_string(dims_));
    }
    for (std::size_t n = 0; n < values_.size(); ++n) {
      if (values_[n] > 1 || mask_[n] > 1) throw ConfigError("binary tensor entries must be 0 or 1");
    }
  }

  /// Fully observed tensor from a 0/1 vector.
  BinaryTensor3(Dims dims, std::vector<std::uint8_t> values)
      : BinaryTensor3(dims, std::move(values), std::vector<std::uint8_t>(dims.size(), 1)) {}

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims_.p1 * (j + dims_.p2 * k);
  }

  [[nodiscard]] std::uint8_t value(std::size_t flat) const { return values_[flat]; }
  [[nodiscard]] bool observed(std::size_t flat) const { return mask_[flat] != 0; }
  [[nodiscard]] std::uint8_t value(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[index(i, j, k)];
  }
  [[nodiscard]] bool observed(std::size_t i, std::size_t j, std::size_t k) const {
    return mask_[index(i, j, k)] != 0;
  }

  void set(std::size_t flat, std::uint8_t v) {
    if (v > 1) throw ConfigError("binary tensor entries must be 0 or 1");
    values_[flat] = v;
  }
  void set_observed(std::size_t flat, bool obs) { mask_[flat] = obs ? 1 : 0; }

  [[nodiscard]] std::span<const std::uint8_t> values() const { return values_; }
  [[nodiscard]] std::span<const std::uint8_t> mask() const { return mask_; }

  [[nodiscard]] std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto m : mask_) n += m;
    return n;
  }
  [[nodiscard]] bool fully_observed() const { return observed_count() == size(); }

  /// Copy with a replacement mask; values outside the new mask are kept but ignored.
  [[nodiscard]] BinaryTensor3 with_mask(std::vector<std::uint8_t> mask) const {
    return BinaryTensor3(dims_, values_, std::move(mask));
  }

  friend bool operator==(const BinaryTensor3&, const BinaryTensor3&) = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> values_;
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// Matricization

/// Mode-n unfolding: rows indexed by mode n, columns by the remaining two
/// modes with the lower-numbered one varying fastest.
inline Matrix matricize(const DenseTensor3& t, int mode) {
  detail::check_mode(mode);
  const auto [p1, p2, p3] = t.dims().as_array();
  if (mode == 1) {
    return Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(p1), static_cast<Eigen::Index>(p2 * p3));
  }
  if (mode == 3) {
    return Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(p1 * p2), static_cast<Eigen::Index>(p3))
        .transpose();
  }
  Matrix m(p2, p1 * p3);
  for (std::size_t k = 0; k < p3; ++k)
    for (std::size_t j = 0; j < p2; ++j)
      for (std::size_t i = 0; i < p1; ++i) m(j, i + p1 * k) = t(i, j, k);
  return m;
}

inline DenseTensor3 fold(const Matrix& m, int mode, Dims dims) {
  detail::check_mode(mode);
  detail::check_dims(dims);
  const auto rows = dims[mode];
  const auto cols = dims.size() / rows;
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    throw DimensionError("fold: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  DenseTensor3 t(dims);
  const auto [p1, p2, p3] = dims.as_array();
  for (std::size_t k = 0; k < p3; ++k)
    for (std::size_t j = 0; j < p2; ++j)
      for (std::size_t i = 0; i < p1; ++i) {
        double v = 0.0;
        switch (mode) {
          case 1: v = m(i, j + p2 * k); break;
          case 2: v = m(j, i + p1 * k); break;
          default: v = m(k, i + p1 * j); break;
        }
        t(i, j, k) = v;
      }
  return t;
}

// ---------------------------------------------------------------------------
// Contractions

/// t x_mode v^T: contracts one mode, returning the remaining two modes as a
/// matrix (rows = lower-numbered remaining mode).
inline Matrix contract(const DenseTensor3& t, int mode, const Vector& v) {
  detail::check_mode(mode);
  const auto [p1, p2, p3] = t.dims().as_array();
  if (static_cast<std::size_t>(v.size()) != t.dims()[mode]) {
    throw DimensionError("contract: vector length " + std::to_string(v.size()) + " does not match mode " +
                         std::to_string(mode) + " size " + std::to_string(t.dims()[mode]));
  }
  Matrix out;
  switch (mode) {
    case 1: {
      out.setZero(p2, p3);
      for (std::size_t k = 0; k < p3; ++k)
        for (std::size_t j = 0; j < p2; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < p1; ++i) s += t(i, j, k) * v[i];
          out(j, k) = s;
        }
      break;
    }
    case 2: {
      out.setZero(p1, p3);
      for (std::size_t k = 0; k < p3; ++k)
        for (std::size_t j = 0; j < p2; ++j)
          for (std::size_t i = 0; i < p1; ++i) out(i, k) += t(i, j, k) * v[j];
      break;
    }
    default: {
      out.setZero(p1, p2);
      for (std::size_t k = 0; k < p3; ++k)
        for (std::size_t j = 0; j < p2; ++j)
          for (std::size_t i = 0; i < p1; ++i) out(i, j) += t(i, j, k) * v[k];
      break;
    }
  }
  return out;
}

/// Contracts every mode except `keep` with the two given vectors (listed in
/// increasing mode order), e.g. keep=1 gives t x_2 a^T x_3 b^T. Writes into `out`.
inline void contract_others_into(const DenseTensor3& t, int keep, const Vector& a, const Vector& b, Vector& out) {
  detail::check_mode(keep);
  const auto& d = t.dims();
  const auto p1 = static_cast<Eigen::Index>(d.p1);
  const auto p2 = static_cast<Eigen::Index>(d.p2);
  const auto p3 = static_cast<Eigen::Index>(d.p3);
  const int ma = keep == 1 ? 2 : 1;
  const int mb = keep == 3 ? 2 : 3;
  if (static_cast<std::size_t>(a.size()) != d[ma] || static_cast<std::size_t>(b.size()) != d[mb]) {
    throw DimensionError("contract_others: vector lengths do not match tensor dims " + to_string(d));
  }
  switch (keep) {
    case 1: {
      // Each frontal slice k is a p1 x p2 matrix.
      out.setZero(p1);
      for (Eigen::Index k = 0; k < p3; ++k) {
        if (b[k] == 0.0) continue;
        Eigen::Map<const Matrix> slice(t.data() + k * p1 * p2, p1, p2);
        out.noalias() += b[k] * (slice * a);
      }
      break;
    }
    case 2: {
      out.setZero(p2);
      for (Eigen::Index k = 0; k < p3; ++k) {
        if (b[k] == 0.0) continue;
        Eigen::Map<const Matrix> slice(t.data() + k * p1 * p2, p1, p2);
        out.noalias() += b[k] * (slice.transpose() * a);
      }
      break;
    }
    default: {
      Eigen::Map<const Matrix> m(t.data(), p1 * p2, p3);
      Vector ab(p1 * p2);
      for (Eigen::Index j = 0; j < p2; ++j) ab.segment(j * p1, p1) = b[j] * a;
      out.noalias() = m.transpose() * ab;
      break;
    }
  }
}

inline Vector contract_others(const DenseTensor3& t, int keep, const Vector& a, const Vector& b) {
  Vector out;
  contract_others_into(t, keep, a, b, out);
  return out;
}

/// t x_1 u^T x_2 v^T x_3 w^T.
inline double contract_all(const DenseTensor3& t, const Vector& u, const Vector& v, const Vector& w) {
  Vector g;
  contract_others_into(t, 1, v, w, g);
  if (g.size() != u.size()) throw DimensionError("contract_all: u length does not match mode 1");
  return u.dot(g);
}

// ---------------------------------------------------------------------------
// Matrix products

/// Column-wise Kronecker product; column k is kron(a_k, b_k) with b's index fastest.
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("khatri_rao: column counts differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index k = 0; k < a.cols(); ++k)
    for (Eigen::Index i = 0; i < a.rows(); ++i) out.col(k).segment(i * b.rows(), b.rows()) = a(i, k) * b.col(k);
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("hadamard: matrix shapes differ");
  return a.cwiseProduct(b);
}

inline DenseTensor3 hadamard(const DenseTensor3& a, const DenseTensor3& b) {
  if (a.dims() != b.dims()) throw DimensionError("hadamard: tensor dims differ");
  DenseTensor3 out(a.dims());
  out.vec() = a.vec().cwiseProduct(b.vec());
  return out;
}

// ---------------------------------------------------------------------------
// CP reconstruction

/// out = mu + sum_r d_r u_r o v_r o w_r. `out` must already have the target dims.
inline void cp_reconstruct_into(double mu, const Vector& d, const FactorMatrix& U, const FactorMatrix& V,
                                const FactorMatrix& W, DenseTensor3& out) {
  const auto R = d.size();
  if (U.cols() != R || V.cols() != R || W.cols() != R) {
    throw DimensionError("cp_reconstruct: factor column counts do not match weight count " + std::to_string(R));
  }
  const Dims dims{static_cast<std::size_t>(U.rows()), static_cast<std::size_t>(V.rows()),
                  static_cast<std::size_t>(W.rows())};
  if (out.dims() != dims) throw DimensionError("cp_reconstruct: output dims do not match factor rows");
  const auto p1 = U.rows();
  const auto p2 = V.rows();
  const auto p3 = W.rows();
  Eigen::Map<Matrix> m(out.data(), p1, p2 * p3);
  m.setConstant(mu);
  if (R == 0) return;
  // Theta_(1) = U diag(d) (W kr V)^T
  const Matrix scaled = U * d.asDiagonal();
  for (Eigen::Index k = 0; k < p3; ++k) {
    const Matrix vw = V * W.row(k).transpose().asDiagonal();  // p2 x R
    m.middleCols(k * p2, p2).noalias() += scaled * vw.transpose();
  }
}

inline DenseTensor3 cp_reconstruct(double mu, const Vector& d, const FactorMatrix& U, const FactorMatrix& V,
                                   const FactorMatrix& W) {
  if (U.rows() == 0 || V.rows() == 0 || W.rows() == 0) throw DimensionError("cp_reconstruct: empty factor");
  DenseTensor3 out(Dims{static_cast<std::size_t>(U.rows()), static_cast<std::size_t>(V.rows()),
                        static_cast<std::size_t>(W.rows())});
  cp_reconstruct_into(mu, d, U, V, W, out);
  return out;
}

/// out = d * u o v o w (rank-one, no offset), written into `out`.
inline void outer_into(double d, const Vector& u, const Vector& v, const Vector& w, DenseTensor3& out) {
  const auto p1 = u.size();
  const auto p2 = v.size();
  const auto p3 = w.size();
  Eigen::Map<Matrix> m(out.data(), p1, p2 * p3);
  for (Eigen::Index k = 0; k < p3; ++k) {
    const double dw = d * w[k];
    m.middleCols(k * p2, p2).noalias() = (dw * u) * v.transpose();
  }
}

// ---------------------------------------------------------------------------
// Norms

inline double inner(const DenseTensor3& a, const DenseTensor3& b) {
  if (a.dims() != b.dims()) throw DimensionError("inner: tensor dims differ");
  detail::CompensatedSum s;
  for (std::size_t n = 0; n < a.size(); ++n) s.add(a[n] * b[n]);
  return s.value();
}

inline double frob_norm(const DenseTensor3& t) { return std::sqrt(inner(t, t)); }

}  // namespace logitcp
