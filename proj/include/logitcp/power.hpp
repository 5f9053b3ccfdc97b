#pragma once

// Rank-one MM fits: each outer step builds the working tensor, refreshes
// the offset, and runs (optionally sparse) tensor power iterations on the
// centered working tensor.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "logitcp/init.hpp"

namespace logitcp {

/// One block update of factor `mode` given the other two (unit vectors).
inline Vector power_update(const DenseTensor3& zc, const Vector& u, const Vector& v, const Vector& w,
                           const Penalty& penalty, int mode) {
  detail::check_mode(mode);
  Vector g;
  switch (mode) {
    case 1: contract_others_into(zc, 1, v, w, g); break;
    case 2: contract_others_into(zc, 2, u, w, g); break;
    default: contract_others_into(zc, 3, u, v, g); break;
  }
  return constrained_direction(g, penalty, mode);
}

/// mean(z - theta_c) over all entries.
inline double offset_update(const WorkingTensor& working, const DenseTensor3& theta_c) {
  if (working.z.dims() != theta_c.dims()) throw DimensionError("offset_update: dims differ");
  detail::CompensatedSum s;
  for (std::size_t n = 0; n < theta_c.size(); ++n) s.add(working.z[n] - theta_c[n]);
  return s.value() / static_cast<double>(theta_c.size());
}

/// argmax_mu l(X; mu * 1 + theta_c) over observed entries, by Newton's
/// method safeguarded with bisection. Data with only ones (or only zeros)
/// has no finite maximizer; the bracket is capped at +-1e3.
inline double final_offset(const BinaryTensor3& x, const DenseTensor3& theta_c) {
  check_same_dims(x, theta_c);
  const auto mask = x.mask();
  const auto vals = x.values();
  if (x.observed_count() == 0) return 0.0;

  auto grad_hess = [&](double mu, double& hess) {
    detail::CompensatedSum g;
    double h = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      if (!mask[n]) continue;
      const double p = sigmoid(mu + theta_c[n]);
      g.add(static_cast<double>(vals[n]) - p);
      h += p * (1.0 - p);
    }
    hess = h;
    return g.value();
  };

  constexpr double cap = 1e3;
  double h = 0.0;
  double lo = -1.0;
  double hi = 1.0;
  while (grad_hess(lo, h) < 0.0 && lo > -cap) lo = std::max(2.0 * lo, -cap);
  while (grad_hess(hi, h) > 0.0 && hi < cap) hi = std::min(2.0 * hi, cap);
  if (grad_hess(lo, h) <= 0.0) return lo;
  if (grad_hess(hi, h) >= 0.0) return hi;

  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double g = grad_hess(mu, h);
    if (std::abs(g) < 1e-8) break;
    if (g > 0.0) lo = mu; else hi = mu;
    double next = h > 0.0 ? mu + g / h : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == mu || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mu))) break;
    mu = next;
  }
  return mu;
}

struct RankOneFit {
  double mu = 0.0;
  double d = 0.0;
  Vector u;
  Vector v;
  Vector w;
  std::vector<double> loss_trace;
  std::size_t outer_iters = 0;
  bool converged = false;
  std::string reason;
};

/// One rank-one MM run (the body of the MM-TP / MM-TSP / MM-TTP loops).
/// The penalty in `cfg` selects plain, soft-thresholded or truncated power steps.
inline RankOneFit rank_one_mm_fit(const BinaryTensor3& x, const FitConfig& cfg, const RankOneStart& start) {
  const Dims dims = x.dims();
  if (static_cast<std::size_t>(start.u.size()) != dims.p1 || static_cast<std::size_t>(start.v.size()) != dims.p2 ||
      static_cast<std::size_t>(start.w.size()) != dims.p3) {
    throw DimensionError("rank_one_mm_fit: start vectors do not match data dims " + to_string(dims));
  }
  RankOneFit fit;
  fit.u = start.u;
  fit.v = cfg.symmetric_uv ? start.u : start.v;
  fit.w = start.w;
  fit.mu = start.mu;
  fit.d = start.d;

  DenseTensor3 theta(dims);
  WorkingTensor work{DenseTensor3(dims), WorkingKind::full};
  auto rebuild_theta = [&] {
    outer_into(fit.d, fit.u, fit.v, fit.w, theta);
    theta.vec().array() += fit.mu;
  };
  rebuild_theta();
  double loss = neg_loglik(x, theta);
  fit.loss_trace.push_back(loss);
  const double n_entries = static_cast<double>(dims.size());

  for (std::size_t m = 0; m < cfg.max_outer_iters; ++m) {
    working_tensor_into(x, theta, work);
    // mu <- mean(Z - Theta_c), Theta_c = Theta - mu.
    const double mu_new = fit.mu + (work.z.vec().sum() - theta.vec().sum()) / n_entries;
    DenseTensor3& zc = work.z;
    zc.vec().array() -= mu_new;

    const Vector u0 = fit.u;
    const Vector v0 = fit.v;
    const Vector w0 = fit.w;
    const double d_prev = contract_all(zc, u0, v0, w0);

    Vector u = u0;
    Vector v = v0;
    Vector w = w0;
    bool degenerate = false;
    try {
      for (std::size_t it = 0; it < cfg.max_inner_iters; ++it) {
        Vector un = power_update(zc, u, v, w, cfg.penalty, 1);
        Vector vn = cfg.symmetric_uv ? un : power_update(zc, un, v, w, cfg.penalty, 2);
        Vector wn = power_update(zc, un, vn, w, cfg.penalty, 3);
        const double change = std::max({(un - u).norm(), (vn - v).norm(), (wn - w).norm()});
        u = std::move(un);
        v = std::move(vn);
        w = std::move(wn);
        if (change <= cfg.inner_tol) break;
      }
    } catch (const DegenerateDirection&) {
      degenerate = true;
    }

    double d_new = degenerate ? 0.0 : contract_all(zc, u, v, w);
    if (d_new < 0.0) {
      w = -w;
      d_new = -d_new;
    }
    // The surrogate at fixed mu is ||Zc||^2 - d^2; keep the previous
    // factors if the power loop did not improve on them.
    if (degenerate || d_new * d_new < d_prev * d_prev) {
      u = u0;
      v = v0;
      w = d_prev < 0.0 ? Vector(-w0) : w0;
      d_new = std::abs(d_prev);
    }

    const double factor_change = std::max({(u - fit.u).norm(), (v - fit.v).norm(), (w - fit.w).norm()});
    fit.u = std::move(u);
    fit.v = std::move(v);
    fit.w = std::move(w);
    fit.mu = mu_new;
    fit.d = d_new;
    rebuild_theta();
    const double loss_new = neg_loglik(x, theta);
    fit.loss_trace.push_back(loss_new);
    fit.outer_iters = m + 1;

    const double delta = loss_new - loss;
    loss = loss_new;
    if (degenerate) {
      fit.reason = "degenerate direction";
      fit.converged = false;
      return fit;
    }
    if (std::abs(delta) < cfg.outer_abs_tol) {
      fit.converged = true;
      fit.reason = "loss change below absolute tolerance";
      return fit;
    }
    if (loss != 0.0 && std::abs(delta / (loss - delta)) < cfg.outer_rel_tol) {
      fit.converged = true;
      fit.reason = "loss change below relative tolerance";
      return fit;
    }
    if (factor_change <= cfg.inner_tol) {
      fit.converged = true;
      fit.reason = "factor change below tolerance";
      return fit;
    }
  }
  fit.reason = "maximum outer iterations reached";
  return fit;
}

}  // namespace logitcp
