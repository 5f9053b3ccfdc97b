#pragma once

// Vector operators behind the sparse power updates: soft-thresholding,
// hard truncation, and the l1-constrained unit-vector projection.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "logitcp/config.hpp"

namespace logitcp {

/// sign(v) (|v| - lambda)_+ elementwise.
inline Vector soft_threshold(const Vector& v, double lambda) {
  if (lambda < 0.0) throw ConfigError("soft_threshold: lambda must be >= 0");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) - lambda;
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

/// Keeps the s largest-magnitude entries; ties at the cut keep the lowest index.
inline Vector truncate_top(const Vector& v, std::size_t s) {
  const auto n = static_cast<std::size_t>(v.size());
  if (s < 1 || s > n) throw ConfigError("truncate_top: s must lie in [1, " + std::to_string(n) + "]");
  if (s == n) return v;
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double fa = std::abs(v[a]);
                      const double fb = std::abs(v[b]);
                      return fa != fb ? fa > fb : a < b;
                    });
  Vector out = Vector::Zero(v.size());
  for (std::size_t t = 0; t < s; ++t) out[idx[t]] = v[idx[t]];
  return out;
}

/// v / ||v||_2; throws DegenerateDirection on a zero (or non-finite) vector.
inline Vector normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateDirection("cannot normalize a zero or non-finite vector");
  return v / n;
}

/// Normalize(S(g, lambda)) with lambda the smallest value giving ||.||_1 <= c,
/// found by bisection on [0, max|g|].
inline Vector l1_project(const Vector& g, double c) {
  const double max_abs = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (!(max_abs > 0.0)) throw DegenerateDirection("l1_project: all-zero direction");
  if (c < 1.0 - 1e-12) throw ConfigError("l1_project: bound must be >= 1");
  Vector u = normalize(g);
  // c = sqrt(p) is always feasible up to rounding.
  if (u.lpNorm<1>() <= c * (1.0 + 1e-12)) return u;

  auto l1_at = [&](double lambda) {
    const Vector s = soft_threshold(g, lambda);
    return s.lpNorm<1>() / s.norm();
  };
  double lo = 0.0;
  double hi = max_abs;
  for (int it = 0; it < 60 && hi - lo >= 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    // mid < max|g| keeps at least one entry, so l1_at(mid) >= 1.
    if (l1_at(mid) > c) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Vector s = soft_threshold(g, hi);
  if (s.norm() > 0.0) {
    s /= s.norm();
    if (s.lpNorm<1>() <= c + 1e-9) return s;
  }
  // Tied maxima can keep ||.||_1 above c for every lambda < max|g|; the
  // one-hot vector at the first maximum is always feasible.
  Eigen::Index arg = 0;
  g.cwiseAbs().maxCoeff(&arg);
  Vector one_hot = Vector::Zero(g.size());
  one_hot[arg] = g[arg] > 0.0 ? 1.0 : -1.0;
  return one_hot;
}

/// Unit vector maximizing u^T g over the constraint set of `mode`.
inline Vector constrained_direction(const Vector& g, const Penalty& penalty, int mode) {
  return std::visit(
      [&](const auto& p) -> Vector {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, NoPenalty>) {
          return normalize(g);
        } else if constexpr (std::is_same_v<P, L1Penalty>) {
          return l1_project(g, p.c[static_cast<std::size_t>(mode - 1)]);
        } else {
          const auto s = std::min<std::size_t>(p.s[static_cast<std::size_t>(mode - 1)], static_cast<std::size_t>(g.size()));
          return normalize(truncate_top(g, s));
        }
      },
      penalty);
}

}  // namespace logitcp
