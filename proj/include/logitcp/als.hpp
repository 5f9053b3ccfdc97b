#pragma once

// MM with alternating least squares on the centered working tensor.

#include <cmath>
#include <string>

#include "logitcp/init.hpp"
#include "logitcp/power.hpp"

namespace logitcp {

/// Deviance of mu * 1 + d_r u_r o v_r o w_r for each component r.
inline std::vector<ComponentSummary> component_summaries(const BinaryTensor3& x, const LogitModel& model) {
  std::vector<ComponentSummary> out;
  for (Eigen::Index r = 0; r < model.rank(); ++r) {
    out.push_back({model.d[r], deviance(x, model.component(r))});
  }
  return out;
}

namespace detail {

/// Z_(1) (W kr V): the mode-1 MTTKRP without forming Z_(1) explicitly.
inline Matrix mttkrp(const DenseTensor3& z, int mode, const Matrix& U, const Matrix& V, const Matrix& W) {
  const auto& d = z.dims();
  const auto p1 = static_cast<Eigen::Index>(d.p1);
  const auto p2 = static_cast<Eigen::Index>(d.p2);
  const auto p3 = static_cast<Eigen::Index>(d.p3);
  const auto R = U.cols();
  switch (mode) {
    case 1: {
      Matrix out = Matrix::Zero(p1, R);
      for (Eigen::Index k = 0; k < p3; ++k) {
        Eigen::Map<const Matrix> slice(z.data() + k * p1 * p2, p1, p2);
        out.noalias() += slice * (V * W.row(k).asDiagonal());
      }
      return out;
    }
    case 2: {
      Matrix out = Matrix::Zero(p2, R);
      for (Eigen::Index k = 0; k < p3; ++k) {
        Eigen::Map<const Matrix> slice(z.data() + k * p1 * p2, p1, p2);
        out.noalias() += slice.transpose() * (U * W.row(k).asDiagonal());
      }
      return out;
    }
    default: {
      Eigen::Map<const Matrix> m(z.data(), p1 * p2, p3);
      return m.transpose() * khatri_rao(V, U);
    }
  }
}

/// Splits a least-squares solution A = F diag(d) into unit columns and norms.
/// A vanishing column keeps its previous direction with weight 0.
inline void split_columns(const Matrix& a, Matrix& factor, Vector& d) {
  d.resize(a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    const double n = a.col(r).norm();
    d[r] = n;
    if (n > 0.0) factor.col(r) = a.col(r) / n;
  }
}

inline double surrogate_residual(const DenseTensor3& zc, const Vector& d, const Matrix& U, const Matrix& V,
                                 const Matrix& W, DenseTensor3& scratch) {
  cp_reconstruct_into(0.0, d, U, V, W, scratch);
  return (zc.vec() - scratch.vec()).squaredNorm();
}

}  // namespace detail

/// A_mode = Z_(mode) K (Gram)^+ with K the Khatri-Rao product of the other
/// two factors and Gram the Hadamard product of their Gram matrices.
inline Matrix als_solve(const DenseTensor3& zc, int mode, const Matrix& U, const Matrix& V, const Matrix& W) {
  Matrix gram;
  switch (mode) {
    case 1: gram = (W.transpose() * W).cwiseProduct(V.transpose() * V); break;
    case 2: gram = (W.transpose() * W).cwiseProduct(U.transpose() * U); break;
    default: gram = (V.transpose() * V).cwiseProduct(U.transpose() * U); break;
  }
  return detail::mttkrp(zc, mode, U, V, W) * pseudo_inverse(gram);
}

/// The same update through the explicit pseudo-inverse of the p_{-n} x R
/// Khatri-Rao matrix. Only practical for small tensors; used to check als_solve.
inline Matrix als_solve_direct(const DenseTensor3& zc, int mode, const Matrix& U, const Matrix& V, const Matrix& W) {
  Matrix kr;
  switch (mode) {
    case 1: kr = khatri_rao(W, V); break;
    case 2: kr = khatri_rao(W, U); break;
    default: kr = khatri_rao(V, U); break;
  }
  return matricize(zc, mode) * pseudo_inverse(kr.transpose());
}

inline FitReport als_fit(const BinaryTensor3& x, const FitConfig& cfg, const AlsStart& start) {
  validate_config(cfg, x.dims());
  if (cfg.method != Method::als) throw ConfigError("als_fit requires method als");
  const Dims dims = x.dims();
  double mu = start.mu;
  Vector d = start.d;
  Matrix U = start.U;
  Matrix V = cfg.symmetric_uv ? start.U : start.V;
  Matrix W = start.W;
  const auto R = static_cast<double>(d.size());
  const double factor_tol = std::sqrt(R) * cfg.inner_tol;

  FitReport report;
  report.n_starts_used = 1;
  DenseTensor3 theta(dims);
  DenseTensor3 scratch(dims);
  WorkingTensor work{DenseTensor3(dims), WorkingKind::full};
  cp_reconstruct_into(mu, d, U, V, W, theta);
  double loss = neg_loglik(x, theta);
  report.loss_trace.push_back(loss);
  report.reason = "maximum outer iterations reached";
  const double n_entries = static_cast<double>(dims.size());

  for (std::size_t m = 0; m < cfg.max_outer_iters; ++m) {
    working_tensor_into(x, theta, work);
    const double mu_new = mu + (work.z.vec().sum() - theta.vec().sum()) / n_entries;
    DenseTensor3& zc = work.z;
    zc.vec().array() -= mu_new;

    const Vector d0 = d;
    const Matrix U0 = U, V0 = V, W0 = W;
    const double before = detail::surrogate_residual(zc, d0, U0, V0, W0, scratch);
    for (std::size_t it = 0; it < cfg.max_inner_iters; ++it) {
      const Matrix Ui = U, Vi = V, Wi = W;
      detail::split_columns(als_solve(zc, 1, U, V, W), U, d);
      if (cfg.symmetric_uv) {
        V = U;
      } else {
        detail::split_columns(als_solve(zc, 2, U, V, W), V, d);
      }
      detail::split_columns(als_solve(zc, 3, U, V, W), W, d);
      const double change = std::max({(U - Ui).norm(), (V - Vi).norm(), (W - Wi).norm()});
      if (change <= factor_tol) break;
    }
    // Keep the previous components if the inner sweep raised the surrogate
    // (possible only under the u = v tie).
    if (detail::surrogate_residual(zc, d, U, V, W, scratch) > before) {
      d = d0;
      U = U0;
      V = V0;
      W = W0;
    }

    const double factor_change = std::max({(U - U0).norm(), (V - V0).norm(), (W - W0).norm()});
    mu = mu_new;
    cp_reconstruct_into(mu, d, U, V, W, theta);
    const double loss_new = neg_loglik(x, theta);
    report.loss_trace.push_back(loss_new);
    const double delta = loss_new - loss;
    loss = loss_new;
    if (std::abs(delta) < cfg.outer_abs_tol) {
      report.converged = true;
      report.reason = "loss change below absolute tolerance";
      break;
    }
    if (std::abs(delta / (loss - delta)) < cfg.outer_rel_tol) {
      report.converged = true;
      report.reason = "loss change below relative tolerance";
      break;
    }
    if (factor_change <= factor_tol) {
      report.converged = true;
      report.reason = "factor change below tolerance";
      break;
    }
  }

  report.model = LogitModel{mu, d, U, V, W};
  canonicalize(report.model);
  report.clusters_found = static_cast<std::size_t>(d.size());
  report.per_component = component_summaries(x, report.model);
  return report;
}

inline FitReport als_fit(const BinaryTensor3& x, const FitConfig& cfg) {
  validate_config(cfg, x.dims());
  Rng rng(derive_seed(cfg.seed, 0));
  return als_fit(x, cfg, init_als(centered_sign_tensor(x), cfg, rng));
}

}  // namespace logitcp
