#pragma once

// Spectral and random starting points for the MM solvers. All of them
// work from the centered sign tensor Q = (2X - 1) - mean(2X - 1), with
// missing entries of 2X - 1 set to zero.

#include "logitcp/config.hpp"
#include "logitcp/linalg.hpp"
#include "logitcp/operators.hpp"
#include "logitcp/rng.hpp"

namespace logitcp {

struct SignTensor {
  double mean = 0.0;
  DenseTensor3 q;
};

inline SignTensor centered_sign_tensor(const BinaryTensor3& x) {
  SignTensor s{0.0, DenseTensor3(x.dims())};
  const auto vals = x.values();
  const auto mask = x.mask();
  double total = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    s.q[n] = mask[n] ? 2.0 * vals[n] - 1.0 : 0.0;
    total += s.q[n];
  }
  s.mean = total / static_cast<double>(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) s.q[n] -= s.mean;
  return s;
}

/// Starting point of a rank-one MM run: Theta^[0] = mu 1 + d u o v o w.
struct RankOneStart {
  Vector u;
  Vector v;
  Vector w;
  double mu = 0.0;
  double d = 0.0;
};

namespace detail {

inline RankOneStart finish_rank_one_start(const SignTensor& sign, const FitConfig& cfg, Vector u, Vector v) {
  u = constrained_direction(u, cfg.penalty, 1);
  v = cfg.symmetric_uv ? u : constrained_direction(v, cfg.penalty, 2);
  const Vector wbar = contract_others(sign.q, 3, u, v);
  Vector w = constrained_direction(wbar, cfg.penalty, 3);
  // Theta^[0] = mu 1 + u o v o wbar: the weight is the part of wbar along w.
  const double d = wbar.dot(w);
  return {std::move(u), std::move(v), std::move(w), sign.mean, d};
}

}  // namespace detail

inline RankOneStart init_random_rank_one(const SignTensor& sign, const FitConfig& cfg, Rng& rng) {
  const auto& dims = sign.q.dims();
  for (int attempt = 0; attempt < 16; ++attempt) {
    Vector u = gaussian_vector(static_cast<Eigen::Index>(dims.p1), rng);
    Vector v = gaussian_vector(static_cast<Eigen::Index>(dims.p2), rng);
    try {
      return detail::finish_rank_one_start(sign, cfg, std::move(u), std::move(v));
    } catch (const DegenerateDirection&) {
      // Q x_1 u x_2 v vanished (e.g. constant data); draw again.
    }
  }
  // Constant data leaves Q == 0; any unit w is as good as another.
  Vector u = constrained_direction(gaussian_vector(static_cast<Eigen::Index>(dims.p1), rng), cfg.penalty, 1);
  Vector v = cfg.symmetric_uv ? u : constrained_direction(gaussian_vector(static_cast<Eigen::Index>(dims.p2), rng), cfg.penalty, 2);
  Vector w = constrained_direction(gaussian_vector(static_cast<Eigen::Index>(dims.p3), rng), cfg.penalty, 3);
  return {std::move(u), std::move(v), std::move(w), sign.mean, 0.0};
}

/// Random mode-3 weights theta' (truncated to max s_i under l0), then the
/// leading singular pair of Q x_3 theta'. Falls back to random on a zero SVD.
inline RankOneStart init_spectral_rank_one(const SignTensor& sign, const FitConfig& cfg, Rng& rng) {
  const auto& dims = sign.q.dims();
  Vector theta = gaussian_vector(static_cast<Eigen::Index>(dims.p3), rng);
  if (const auto* p = std::get_if<L0Penalty>(&cfg.penalty)) {
    const auto s = std::min(std::max({p->s[0], p->s[1], p->s[2]}), dims.p3);
    theta = truncate_top(theta, s);
  }
  const Matrix slice = contract(sign.q, 3, theta);
  Eigen::BDCSVD<Matrix> svd(slice, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().size() == 0 || !(svd.singularValues()[0] > 0.0)) {
    return init_random_rank_one(sign, cfg, rng);
  }
  try {
    return detail::finish_rank_one_start(sign, cfg, svd.matrixU().col(0), svd.matrixV().col(0));
  } catch (const DegenerateDirection&) {
    return init_random_rank_one(sign, cfg, rng);
  }
}

inline RankOneStart init_rank_one(const SignTensor& sign, const FitConfig& cfg, Rng& rng) {
  return cfg.init == InitKind::spectral ? init_spectral_rank_one(sign, cfg, rng) : init_random_rank_one(sign, cfg, rng);
}

/// Starting model for MM-ALS.
struct AlsStart {
  double mu = 0.0;
  Vector d;
  FactorMatrix U;
  FactorMatrix V;
  FactorMatrix W;
};

namespace detail {

inline Matrix pad_random_columns(Matrix m, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const auto have = m.cols();
  m.conservativeResize(rows, cols);
  for (Eigen::Index r = have; r < cols; ++r) m.col(r) = gaussian_vector(rows, rng).normalized();
  return m;
}

/// W = Q_(3) [(V kr U)^T]^+ via the R x R Gram form; d = column norms.
inline void solve_mode3_start(const SignTensor& sign, AlsStart& s, Rng& rng) {
  const Matrix kr = khatri_rao(s.V, s.U);
  const Matrix gram = (s.V.transpose() * s.V).cwiseProduct(s.U.transpose() * s.U);
  const Matrix raw = matricize(sign.q, 3) * kr * pseudo_inverse(gram);
  const auto R = raw.cols();
  s.d.resize(R);
  s.W.resize(raw.rows(), R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double n = raw.col(r).norm();
    if (n > 0.0) {
      s.d[r] = n;
      s.W.col(r) = raw.col(r) / n;
    } else {
      s.d[r] = 0.0;
      s.W.col(r) = gaussian_vector(raw.rows(), rng).normalized();
    }
  }
}

}  // namespace detail

inline AlsStart init_als(const SignTensor& sign, const FitConfig& cfg, Rng& rng) {
  const auto& dims = sign.q.dims();
  const auto R = static_cast<Eigen::Index>(cfg.rank);
  const auto p1 = static_cast<Eigen::Index>(dims.p1);
  const auto p2 = static_cast<Eigen::Index>(dims.p2);
  AlsStart s;
  s.mu = sign.mean;
  const bool zero_q = sign.q.vec().cwiseAbs().maxCoeff() == 0.0;
  if (cfg.init == InitKind::spectral && !zero_q) {
    s.U = detail::pad_random_columns(leading_left_singular_vectors(matricize(sign.q, 1), R), p1, R, rng);
    s.V = cfg.symmetric_uv ? s.U
                           : detail::pad_random_columns(leading_left_singular_vectors(matricize(sign.q, 2), R), p2, R, rng);
  } else {
    s.U.resize(p1, R);
    s.V.resize(p2, R);
    for (Eigen::Index r = 0; r < R; ++r) s.U.col(r) = gaussian_vector(p1, rng).normalized();
    if (cfg.symmetric_uv) {
      s.V = s.U;
    } else {
      for (Eigen::Index r = 0; r < R; ++r) s.V.col(r) = gaussian_vector(p2, rng).normalized();
    }
  }
  detail::solve_mode3_start(sign, s, rng);
  return s;
}

}  // namespace logitcp
