#pragma once

// Bernoulli log-likelihood of a logit tensor, the uniform quadratic
// majorizer, and the working tensors the MM solvers fit by least squares.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "logitcp/tensor.hpp"

namespace logitcp {

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Low-rank logit model: Theta = mu * 1 + sum_r d_r u_r o v_r o w_r.
struct LogitModel {
  double mu = 0.0;
  Vector d;
  FactorMatrix U;
  FactorMatrix V;
  FactorMatrix W;

  [[nodiscard]] Eigen::Index rank() const { return d.size(); }
  [[nodiscard]] Dims dims() const {
    return {static_cast<std::size_t>(U.rows()), static_cast<std::size_t>(V.rows()), static_cast<std::size_t>(W.rows())};
  }
  [[nodiscard]] DenseTensor3 theta() const { return cp_reconstruct(mu, d, U, V, W); }
  /// Theta without the offset.
  [[nodiscard]] DenseTensor3 theta_centered() const { return cp_reconstruct(0.0, d, U, V, W); }

  /// Model with no components: Theta = mu * 1.
  static LogitModel offset_only(Dims dims, double mu) {
    return {mu, Vector(0), FactorMatrix(dims.p1, 0), FactorMatrix(dims.p2, 0), FactorMatrix(dims.p3, 0)};
  }

  /// The first `r` components only.
  [[nodiscard]] LogitModel leading(Eigen::Index r) const {
    return {mu, d.head(r), U.leftCols(r), V.leftCols(r), W.leftCols(r)};
  }

  /// A single component plus the offset.
  [[nodiscard]] LogitModel component(Eigen::Index r) const {
    return {mu, d.segment(r, 1), U.middleCols(r, 1), V.middleCols(r, 1), W.middleCols(r, 1)};
  }

  friend bool operator==(const LogitModel& a, const LogitModel& b) {
    return a.mu == b.mu && a.d.size() == b.d.size() && a.d == b.d && a.U.rows() == b.U.rows() &&
           a.V.rows() == b.V.rows() && a.W.rows() == b.W.rows() && a.U == b.U && a.V == b.V && a.W == b.W;
  }
};

/// Throws unless every column is unit norm (tol) and d is positive and nonincreasing.
inline void validate_model(const LogitModel& m, double tol = 1e-10) {
  const auto R = m.d.size();
  if (m.U.cols() != R || m.V.cols() != R || m.W.cols() != R) throw DimensionError("model factor/weight count mismatch");
  for (Eigen::Index r = 0; r < R; ++r) {
    for (const FactorMatrix* f : {&m.U, &m.V, &m.W}) {
      if (std::abs(f->col(r).norm() - 1.0) > tol) throw ConfigError("model factor column is not unit norm");
    }
    if (!(m.d[r] > 0.0)) throw ConfigError("model weights must be positive");
    if (r > 0 && m.d[r] > m.d[r - 1]) throw ConfigError("model weights must be nonincreasing");
  }
}

/// Makes weights nonnegative (sign pushed into W) and sorts components by
/// decreasing weight. Theta is unchanged.
inline void canonicalize(LogitModel& m) {
  const auto R = m.d.size();
  for (Eigen::Index r = 0; r < R; ++r) {
    if (m.d[r] < 0.0) {
      m.d[r] = -m.d[r];
      m.W.col(r) = -m.W.col(r);
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return m.d[a] > m.d[b]; });
  LogitModel sorted = m;
  for (Eigen::Index r = 0; r < R; ++r) {
    const auto src = order[static_cast<std::size_t>(r)];
    sorted.d[r] = m.d[src];
    sorted.U.col(r) = m.U.col(src);
    sorted.V.col(r) = m.V.col(src);
    sorted.W.col(r) = m.W.col(src);
  }
  m = std::move(sorted);
}

enum class WorkingKind { full, centered, missing_filled };

/// Least-squares targets of the quadratic surrogate, in logit units.
struct WorkingTensor {
  DenseTensor3 z;
  WorkingKind kind = WorkingKind::full;
};

// ---------------------------------------------------------------------------

inline void check_same_dims(const BinaryTensor3& x, const DenseTensor3& t) {
  if (x.dims() != t.dims()) {
    throw DimensionError("data dims " + to_string(x.dims()) + " do not match tensor dims " + to_string(t.dims()));
  }
}

/// -l(X; Theta) summed over observed entries.
inline double neg_loglik(const BinaryTensor3& x, const DenseTensor3& theta) {
  check_same_dims(x, theta);
  detail::CompensatedSum s;
  const auto mask = x.mask();
  const auto vals = x.values();
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (!mask[n]) continue;
    const double th = theta[n];
    s.add(softplus(th) - (vals[n] ? th : 0.0));
  }
  return s.value();
}

inline double neg_loglik(const BinaryTensor3& x, const LogitModel& model) {
  if (x.dims() != model.dims()) throw DimensionError("data dims do not match model dims");
  return neg_loglik(x, model.theta());
}

/// Saturated log-likelihood is 0 for binary data, so D = -2 l.
inline double deviance(const BinaryTensor3& x, const DenseTensor3& theta) { return 2.0 * neg_loglik(x, theta); }
inline double deviance(const BinaryTensor3& x, const LogitModel& model) { return 2.0 * neg_loglik(x, model); }

inline DenseTensor3 sigmoid_tensor(const DenseTensor3& t) {
  DenseTensor3 out(t.dims());
  for (std::size_t n = 0; n < t.size(); ++n) out[n] = sigmoid(t[n]);
  return out;
}

/// Observed: z = theta + 4 (x - sigma(theta)); unobserved: z = theta.
inline void working_tensor_into(const BinaryTensor3& x, const DenseTensor3& theta, WorkingTensor& out) {
  check_same_dims(x, theta);
  if (out.z.dims() != theta.dims()) out.z = DenseTensor3(theta.dims());
  const auto mask = x.mask();
  const auto vals = x.values();
  bool any_missing = false;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double th = theta[n];
    if (mask[n]) {
      out.z[n] = th + 4.0 * (static_cast<double>(vals[n]) - sigmoid(th));
    } else {
      out.z[n] = th;
      any_missing = true;
    }
  }
  out.kind = any_missing ? WorkingKind::missing_filled : WorkingKind::full;
}

inline WorkingTensor working_tensor(const BinaryTensor3& x, const DenseTensor3& theta) {
  WorkingTensor w{DenseTensor3(theta.dims()), WorkingKind::full};
  working_tensor_into(x, theta, w);
  return w;
}

/// Quadratic upper bound on -log sigma(q theta) at `anchor`, with q = 2x - 1.
inline double majorizer(int x_entry, double theta, double anchor) {
  const double q = 2.0 * x_entry - 1.0;
  const double a = q * anchor;
  const double diff = q * theta - a;
  return softplus(-a) + (sigmoid(a) - 1.0) * diff + 0.125 * diff * diff;
}

/// surrogate - true loss at one entry; nonnegative, zero at the anchor.
inline double majorizer_gap(int x_entry, double theta, double anchor) {
  const double q = 2.0 * x_entry - 1.0;
  return majorizer(x_entry, theta, anchor) - softplus(-q * theta);
}

/// Fitted Bernoulli probabilities sigma(Theta).
inline DenseTensor3 predict_probs(const LogitModel& model) { return sigmoid_tensor(model.theta()); }

/// Labels 1 iff p >= threshold (inclusive); fully observed result.
inline BinaryTensor3 impute(const DenseTensor3& probs, double threshold = 0.5) {
  std::vector<std::uint8_t> labels(probs.size());
  for (std::size_t n = 0; n < probs.size(); ++n) labels[n] = probs[n] >= threshold ? 1 : 0;
  return BinaryTensor3(probs.dims(), std::move(labels));
}

}  // namespace logitcp
