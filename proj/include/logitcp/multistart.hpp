#pragma once

// Multi-start rank-one MM fits followed by greedy clustering of the
// resulting tuples into R components.

#include <algorithm>
#include <string>
#include <vector>

#include "logitcp/als.hpp"
#include "logitcp/parallel.hpp"
#include "logitcp/power.hpp"

namespace logitcp {

/// min over modes and signs of ||a_m -+ b_m||_2.
inline double tuple_distance(const RankOneFit& a, const RankOneFit& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : {std::pair{&a.u, &b.u}, std::pair{&a.v, &b.v}, std::pair{&a.w, &b.w}}) {
    best = std::min({best, (*x - *y).norm(), (*x + *y).norm()});
  }
  return best;
}

/// Extra random starts tried per missing cluster when the L tuples run out.
inline constexpr std::size_t kTopUpStarts = 10;

struct MultiStartTrace {
  std::vector<RankOneFit> starts;
  std::vector<RankOneFit> components;
};

inline FitReport multi_start_fit(const BinaryTensor3& x, const FitConfig& cfg, MultiStartTrace* trace = nullptr) {
  validate_config(cfg, x.dims());
  if (cfg.method == Method::als) throw ConfigError("multi_start_fit requires a power method (tp|tsp|ttp)");
  const SignTensor sign = centered_sign_tensor(x);
  const std::size_t L = cfg.starts();

  std::vector<RankOneFit> tuples(L);
  parallel_for(L, [&](std::size_t tau) {
    Rng rng(derive_seed(cfg.seed, tau));
    tuples[tau] = rank_one_mm_fit(x, cfg, init_rank_one(sign, cfg, rng));
  });
  std::vector<bool> alive(L, true);

  FitReport report;
  report.n_starts_used = L;
  std::vector<RankOneFit> reps;
  std::vector<RankOneFit> components;
  std::uint64_t next_stream = L;
  bool all_converged = true;

  for (std::size_t j = 0; j < cfg.rank; ++j) {
    auto pick = [&]() -> std::ptrdiff_t {
      std::ptrdiff_t best = -1;
      for (std::size_t t = 0; t < tuples.size(); ++t)
        if (alive[t] && (best < 0 || tuples[t].d > tuples[static_cast<std::size_t>(best)].d)) best = static_cast<std::ptrdiff_t>(t);
      return best;
    };
    std::ptrdiff_t chosen = pick();
    if (chosen < 0) {
      // Every tuple was absorbed by an earlier cluster: try fresh random starts.
      FitConfig rand_cfg = cfg;
      rand_cfg.init = InitKind::random;
      for (std::size_t t = 0; t < kTopUpStarts && chosen < 0; ++t) {
        Rng rng(derive_seed(cfg.seed, next_stream++));
        RankOneFit f = rank_one_mm_fit(x, rand_cfg, init_random_rank_one(sign, rand_cfg, rng));
        ++report.n_starts_used;
        const bool novel = std::none_of(reps.begin(), reps.end(), [&](const RankOneFit& r) {
          return tuple_distance(f, r) <= cfg.cluster_threshold;
        });
        if (novel) {
          tuples.push_back(std::move(f));
          alive.push_back(true);
          chosen = static_cast<std::ptrdiff_t>(tuples.size() - 1);
        }
      }
      if (chosen < 0) break;
    }
    const RankOneFit rep = tuples[static_cast<std::size_t>(chosen)];
    RankOneFit comp = cfg.reestimate ? rank_one_mm_fit(x, cfg, RankOneStart{rep.u, rep.v, rep.w, rep.mu, rep.d}) : rep;
    all_converged = all_converged && comp.converged;
    for (std::size_t t = 0; t < tuples.size(); ++t)
      if (alive[t] && tuple_distance(tuples[t], rep) <= cfg.cluster_threshold) alive[t] = false;
    reps.push_back(rep);
    components.push_back(std::move(comp));
  }

  const auto found = static_cast<Eigen::Index>(components.size());
  LogitModel model{0.0, Vector(found), FactorMatrix(x.dims().p1, found), FactorMatrix(x.dims().p2, found),
                   FactorMatrix(x.dims().p3, found)};
  for (Eigen::Index r = 0; r < found; ++r) {
    const auto& c = components[static_cast<std::size_t>(r)];
    model.d[r] = c.d;
    model.U.col(r) = c.u;
    model.V.col(r) = c.v;
    model.W.col(r) = c.w;
  }
  canonicalize(model);
  model.mu = final_offset(x, model.theta_centered());

  report.model = std::move(model);
  report.clusters_found = components.size();
  if (!components.empty()) {
    // Trace of the strongest component's final run.
    const auto lead = std::max_element(components.begin(), components.end(),
                                       [](const auto& a, const auto& b) { return a.d < b.d; });
    report.loss_trace = lead->loss_trace;
  }
  report.per_component = component_summaries(x, report.model);
  if (report.clusters_found < cfg.rank) {
    report.converged = false;
    report.reason = "only " + std::to_string(report.clusters_found) + " of " + std::to_string(cfg.rank) +
                    " clusters found";
  } else if (!all_converged) {
    report.converged = false;
    report.reason = "a component fit reached the outer iteration limit";
  } else {
    report.converged = true;
    report.reason = "converged";
  }
  if (trace) {
    trace->starts = std::move(tuples);
    trace->components = std::move(components);
  }
  return report;
}

/// Dispatches on cfg.method.
inline FitReport fit(const BinaryTensor3& x, const FitConfig& cfg) {
  return cfg.method == Method::als ? als_fit(x, cfg) : multi_start_fit(x, cfg);
}

}  // namespace logitcp
