#pragma once

// Estimation and support-recovery metrics of a fitted model against the
// generating one. Components are matched by index after both models are
// sorted by decreasing weight.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "logitcp/likelihood.hpp"

namespace logitcp {

namespace detail {

inline void check_same_rank(const LogitModel& fit, const LogitModel& truth, const char* what) {
  if (fit.rank() != truth.rank()) {
    throw DimensionError(std::string(what) + ": fitted rank " + std::to_string(fit.rank()) + " differs from true rank " +
                         std::to_string(truth.rank()));
  }
  if (fit.dims() != truth.dims()) throw DimensionError(std::string(what) + ": dims differ");
}

inline LogitModel canonical_copy(LogitModel m) {
  canonicalize(m);
  return m;
}

inline const Matrix& factor(const LogitModel& m, int mode) { return mode == 1 ? m.U : mode == 2 ? m.V : m.W; }

}  // namespace detail

/// ||Theta_hat - Theta*||_F / sqrt(p1 p2 p3).
inline double rmse(const LogitModel& fit, const LogitModel& truth) {
  if (fit.dims() != truth.dims()) throw DimensionError("rmse: dims differ");
  const auto a = fit.theta();
  const auto b = truth.theta();
  return (a.vec() - b.vec()).norm() / std::sqrt(static_cast<double>(a.size()));
}

/// (1/R) sum_r min ||a_r -+ b_r|| for each mode.
inline std::array<double, 3> mean_error_per_mode(const LogitModel& fit, const LogitModel& truth) {
  detail::check_same_rank(fit, truth, "mean_error");
  const auto f = detail::canonical_copy(fit);
  const auto t = detail::canonical_copy(truth);
  std::array<double, 3> out{0.0, 0.0, 0.0};
  const auto R = f.rank();
  if (R == 0) return out;
  for (int mode = 1; mode <= 3; ++mode) {
    const Matrix& a = detail::factor(f, mode);
    const Matrix& b = detail::factor(t, mode);
    double s = 0.0;
    for (Eigen::Index r = 0; r < R; ++r) s += std::min((a.col(r) - b.col(r)).norm(), (a.col(r) + b.col(r)).norm());
    out[static_cast<std::size_t>(mode - 1)] = s / static_cast<double>(R);
  }
  return out;
}

inline double mean_error(const LogitModel& fit, const LogitModel& truth) {
  const auto m = mean_error_per_mode(fit, truth);
  return (m[0] + m[1] + m[2]) / 3.0;
}

/// ||d_hat - d*|| / ||d*||.
inline double weight_error(const LogitModel& fit, const LogitModel& truth) {
  detail::check_same_rank(fit, truth, "weight_error");
  const auto f = detail::canonical_copy(fit);
  const auto t = detail::canonical_copy(truth);
  const double denom = t.d.norm();
  if (!(denom > 0.0)) throw UndefinedRatio("weight_error: true weights are zero");
  return (f.d - t.d).norm() / denom;
}

struct SupportRates {
  double tpr = 0.0;
  double fpr = 0.0;
  std::array<double, 3> tpr_per_mode{};
  std::array<double, 3> fpr_per_mode{};
  /// Columns left out of a rate because its denominator was empty.
  std::vector<std::string> notes;
};

/// Support recovery per factor matrix, averaged over columns (the 1/r
/// prefactor of the published formula is read as 1/R) and then over modes.
inline SupportRates tpr_fpr(const LogitModel& fit, const LogitModel& truth, double zero_tol = 1e-10) {
  detail::check_same_rank(fit, truth, "tpr_fpr");
  const auto f = detail::canonical_copy(fit);
  const auto t = detail::canonical_copy(truth);
  SupportRates out;
  for (int mode = 1; mode <= 3; ++mode) {
    const Matrix& a = detail::factor(f, mode);
    const Matrix& b = detail::factor(t, mode);
    double tpr_sum = 0.0, fpr_sum = 0.0;
    int tpr_n = 0, fpr_n = 0;
    for (Eigen::Index r = 0; r < a.cols(); ++r) {
      std::size_t true_nz = 0, true_z = 0, hit = 0, false_alarm = 0;
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const bool est = std::abs(a(i, r)) > zero_tol;
        if (std::abs(b(i, r)) > zero_tol) {
          ++true_nz;
          hit += est;
        } else {
          ++true_z;
          false_alarm += est;
        }
      }
      const std::string where = "mode " + std::to_string(mode) + " column " + std::to_string(r + 1);
      if (true_nz > 0) {
        tpr_sum += static_cast<double>(hit) / static_cast<double>(true_nz);
        ++tpr_n;
      } else {
        out.notes.push_back(where + ": no true nonzeros, TPR term skipped");
      }
      if (true_z > 0) {
        fpr_sum += static_cast<double>(false_alarm) / static_cast<double>(true_z);
        ++fpr_n;
      } else {
        out.notes.push_back(where + ": no true zeros, FPR term skipped");
      }
    }
    out.tpr_per_mode[static_cast<std::size_t>(mode - 1)] = tpr_n ? tpr_sum / tpr_n : 0.0;
    out.fpr_per_mode[static_cast<std::size_t>(mode - 1)] = fpr_n ? fpr_sum / fpr_n : 0.0;
  }
  out.tpr = (out.tpr_per_mode[0] + out.tpr_per_mode[1] + out.tpr_per_mode[2]) / 3.0;
  out.fpr = (out.fpr_per_mode[0] + out.fpr_per_mode[1] + out.fpr_per_mode[2]) / 3.0;
  return out;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  /// Sorted by fpr, then tpr.
  std::vector<RocPoint> points;
  /// Trapezoid area of (0,0), the points, (1,1), taking the upper staircase
  /// at repeated fpr values.
  double auc = 0.0;
};

inline RocCurve roc_points(const std::vector<LogitModel>& fits, const LogitModel& truth) {
  if (fits.empty()) throw ConfigError("roc_points: need at least one fit");
  RocCurve out;
  for (const auto& f : fits) {
    const auto r = tpr_fpr(f, truth);
    out.points.push_back({r.fpr, r.tpr});
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const RocPoint& a, const RocPoint& b) { return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr; });
  std::vector<RocPoint> path{{0.0, 0.0}};
  path.insert(path.end(), out.points.begin(), out.points.end());
  path.push_back({1.0, 1.0});
  // The curve is monotone: carry the running maximum tpr forward.
  double best = 0.0;
  for (auto& p : path) {
    best = std::max(best, p.tpr);
    p.tpr = best;
  }
  for (std::size_t i = 1; i < path.size(); ++i) {
    out.auc += (path[i].fpr - path[i - 1].fpr) * 0.5 * (path[i].tpr + path[i - 1].tpr);
  }
  out.auc = std::clamp(out.auc, 0.0, 1.0);
  return out;
}

/// Rank-based (Mann-Whitney) AUC of probs against the observed entries of
/// `heldout`; tied scores share their average rank.
inline double completion_auc(const BinaryTensor3& heldout, const DenseTensor3& probs) {
  check_same_dims(heldout, probs);
  std::vector<std::pair<double, std::uint8_t>> items;
  for (std::size_t n = 0; n < heldout.size(); ++n)
    if (heldout.observed(n)) items.emplace_back(probs[n], heldout.value(n));
  std::size_t pos = 0;
  for (const auto& it : items) pos += it.second;
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) throw ConfigError("completion_auc: held-out entries contain a single class");
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (items[k].second) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

struct EvalReport {
  double rmse = 0.0;
  double mean_error = 0.0;
  double weight_error = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::array<double, 3> mean_error_per_mode{};
  std::array<double, 3> tpr_per_mode{};
  std::array<double, 3> fpr_per_mode{};
  std::vector<std::string> notes;
};

inline EvalReport evaluate(const LogitModel& fit, const LogitModel& truth) {
  EvalReport r;
  r.rmse = rmse(fit, truth);
  r.mean_error_per_mode = mean_error_per_mode(fit, truth);
  r.mean_error = (r.mean_error_per_mode[0] + r.mean_error_per_mode[1] + r.mean_error_per_mode[2]) / 3.0;
  r.weight_error = weight_error(fit, truth);
  auto s = tpr_fpr(fit, truth);
  r.tpr = s.tpr;
  r.fpr = s.fpr;
  r.tpr_per_mode = s.tpr_per_mode;
  r.fpr_per_mode = s.fpr_per_mode;
  r.notes = std::move(s.notes);
  return r;
}

}  // namespace logitcp
