#pragma once

// Information criteria, stratified cross-validation, explained deviance,
// and the two-stage (ratio, then rank) grid search.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "logitcp/multistart.hpp"

namespace logitcp {

/// Entries with |x| above this count as nonzero in degrees of freedom.
inline constexpr double kNonzeroTol = 1e-10;

/// 1 + ||U||_0 + ||V||_0 + ||W||_0 - 2R.
inline std::size_t model_df(const LogitModel& model) {
  auto nnz = [](const Matrix& m) { return static_cast<std::size_t>((m.array().abs() > kNonzeroTol).count()); };
  const auto R = static_cast<std::size_t>(model.rank());
  const std::size_t total = 1 + nnz(model.U) + nnz(model.V) + nnz(model.W);
  return total >= 2 * R ? total - 2 * R : 0;
}

/// -2 l(X_Omega; Theta) + log(|Omega|) df.
inline double bic(const BinaryTensor3& x, const LogitModel& model) {
  return deviance(x, model) + std::log(static_cast<double>(x.observed_count())) * static_cast<double>(model_df(model));
}

/// -2 l(X_Omega; Theta) + 2 df.
inline double aic(const BinaryTensor3& x, const LogitModel& model) {
  return deviance(x, model) + 2.0 * static_cast<double>(model_df(model));
}

struct CvFold {
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> test;
};

/// Splits the observed entries into `folds` parts, ones and zeros separately,
/// so every fold keeps the global share of ones up to rounding.
inline std::vector<CvFold> cv_split(const BinaryTensor3& x, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cv_split: need at least 2 folds");
  std::vector<std::size_t> strata[2];
  for (std::size_t n = 0; n < x.size(); ++n)
    if (x.observed(n)) strata[x.value(n)].push_back(n);
  for (int v = 0; v < 2; ++v) {
    if (strata[v].size() < folds) {
      throw ConfigError("cv_split: stratum x=" + std::to_string(v) + " has " + std::to_string(strata[v].size()) +
                        " observed entries, fewer than " + std::to_string(folds) + " folds");
    }
  }
  std::vector<CvFold> out(folds);
  const auto observed = x.mask();
  for (auto& f : out) {
    f.train.assign(observed.begin(), observed.end());
    f.test.assign(x.size(), 0);
  }
  for (int v = 0; v < 2; ++v) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(v)));
    auto idx = strata[v];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t t = 0; t < idx.size(); ++t) {
      auto& f = out[t % folds];
      f.test[idx[t]] = 1;
      f.train[idx[t]] = 0;
    }
  }
  return out;
}

struct DevianceDecomposition {
  /// 1 - D(Theta_r) / D(Theta_0), Theta_r = mu + first r components.
  std::vector<double> cumulative;
  /// (D(Theta_{r-1}) - D(Theta_r)) / D(Theta_0).
  std::vector<double> marginal;
  /// D(mu + component r alone).
  std::vector<double> marginal_dev;
  double null_deviance = 0.0;
};

/// Deviance shares over the observed entries, relative to the offset-only
/// model mu * 1 with the fitted mu.
inline DevianceDecomposition explained_deviance(const BinaryTensor3& x, const LogitModel& model) {
  DevianceDecomposition out;
  DenseTensor3 theta(x.dims(), model.mu);
  out.null_deviance = deviance(x, theta);
  if (!(out.null_deviance > 0.0)) throw UndefinedRatio("explained_deviance: null deviance is zero");
  DenseTensor3 comp(x.dims());
  double prev = out.null_deviance;
  double cum = 0.0;
  for (Eigen::Index r = 0; r < model.rank(); ++r) {
    outer_into(model.d[r], model.U.col(r), model.V.col(r), model.W.col(r), comp);
    theta.vec() += comp.vec();
    const double dev = deviance(x, theta);
    const double marg = (prev - dev) / out.null_deviance;
    // Accumulating the marginal shares keeps the telescoping identity exact.
    cum += marg;
    out.marginal.push_back(marg);
    out.cumulative.push_back(cum);
    comp.vec().array() += model.mu;
    out.marginal_dev.push_back(deviance(x, comp));
    prev = dev;
  }
  return out;
}

enum class Criterion { aic, bic, cv, deviance };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::aic: return "aic";
    case Criterion::bic: return "bic";
    case Criterion::cv: return "cv";
    default: return "deviance";
  }
}

inline Criterion parse_criterion(const std::string& s) {
  if (s == "aic") return Criterion::aic;
  if (s == "bic") return Criterion::bic;
  if (s == "cv") return Criterion::cv;
  if (s == "deviance") return Criterion::deviance;
  throw ConfigError("unknown criterion '" + s + "' (expected aic|bic|cv|deviance)");
}

struct SelectionGrid {
  std::vector<std::size_t> ranks;
  /// c-ratios for tsp, s-ratios for ttp; ignored by als and tp.
  std::vector<double> ratios;
  Criterion criterion = Criterion::bic;
  std::size_t cv_folds = 5;
  /// Deviance criterion: smallest marginal share a kept component must explain.
  double min_marginal = 0.01;
};

struct ScoreRow {
  std::size_t rank = 0;
  std::optional<double> ratio;
  /// aic/bic value, mean held-out -l for cv, cumulative share for deviance.
  double score = 0.0;
  std::size_t df = 0;
  /// Training -l (mean over folds for cv).
  double neg_loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::vector<double> cumulative;
  std::vector<double> marginal;
  bool valid = true;
  bool converged = true;
  std::string note;
};

using ScoreTable = std::vector<ScoreRow>;

struct SelectionResult {
  ScoreTable table;
  std::size_t rank = 0;
  std::optional<double> ratio;
};

inline bool uses_ratio(Method m) { return m == Method::tsp || m == Method::ttp; }

/// Penalty for `method` at a grid ratio: c_j = sqrt(p_j) c or s_j = floor(p_j s).
inline Penalty penalty_for(Method method, const Dims& dims, std::optional<double> ratio) {
  if (!uses_ratio(method)) return NoPenalty{};
  if (!ratio) throw ConfigError(to_string(method) + " needs a sparsity ratio");
  double lo = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const double p = static_cast<double>(dims[n]);
    lo = std::max(lo, method == Method::tsp ? 1.0 / std::sqrt(p) : 1.0 / p);
  }
  if (*ratio < lo - 1e-12 || *ratio > 1.0 + 1e-12) {
    throw ConfigError("ratio " + std::to_string(*ratio) + " outside [" + std::to_string(lo) + ", 1]");
  }
  if (method == Method::tsp) return l1_from_ratio(dims, *ratio);
  return l0_from_ratio(dims, *ratio);
}

namespace detail {

inline void fill_fit_scores(const BinaryTensor3& x, const FitReport& r, ScoreRow& row) {
  row.df = model_df(r.model);
  row.neg_loglik = neg_loglik(x, r.model.theta());
  row.aic = 2.0 * row.neg_loglik + 2.0 * static_cast<double>(row.df);
  row.bic = 2.0 * row.neg_loglik + std::log(static_cast<double>(x.observed_count())) * static_cast<double>(row.df);
  row.converged = r.converged;
  if (!r.converged) row.note = r.reason;
}

}  // namespace detail

/// Mean held-out -l over stratified folds; each fold is fit through the
/// missing-data path with the test entries masked out.
inline ScoreRow cross_validate(const BinaryTensor3& x, const FitConfig& cfg, std::size_t folds) {
  ScoreRow row;
  row.rank = cfg.rank;
  const auto splits = cv_split(x, folds, derive_seed(cfg.seed, 0xCF));
  double held = 0.0;
  double train = 0.0;
  double df = 0.0;
  for (const auto& f : splits) {
    const BinaryTensor3 xtrain = x.with_mask(f.train);
    const FitReport r = fit(xtrain, cfg);
    const auto theta = r.model.theta();
    held += neg_loglik(x.with_mask(f.test), theta);
    train += neg_loglik(xtrain, theta);
    df += static_cast<double>(model_df(r.model));
    if (!r.converged) {
      row.converged = false;
      row.note = r.reason;
    }
  }
  const auto k = static_cast<double>(splits.size());
  row.score = held / k;
  row.neg_loglik = train / k;
  row.df = static_cast<std::size_t>(std::lround(df / k));
  return row;
}

/// Scores one grid cell. Fit failures mark the row invalid instead of throwing.
inline ScoreRow score_cell(const BinaryTensor3& x, const FitConfig& base, const SelectionGrid& grid, std::size_t rank,
                           std::optional<double> ratio) {
  ScoreRow row;
  row.rank = rank;
  row.ratio = ratio;
  try {
    FitConfig cfg = base;
    cfg.rank = rank;
    cfg.penalty = penalty_for(base.method, x.dims(), ratio);
    if (grid.criterion == Criterion::cv) {
      row = cross_validate(x, cfg, grid.cv_folds);
      row.ratio = ratio;
      return row;
    }
    const FitReport r = fit(x, cfg);
    detail::fill_fit_scores(x, r, row);
    if (grid.criterion == Criterion::aic) {
      row.score = row.aic;
    } else if (grid.criterion == Criterion::bic) {
      row.score = row.bic;
    } else {
      const auto dev = explained_deviance(x, r.model);
      row.cumulative = dev.cumulative;
      row.marginal = dev.marginal;
      row.score = dev.cumulative.empty() ? 0.0 : dev.cumulative.back();
    }
  } catch (const std::exception& e) {
    row.valid = false;
    row.note = e.what();
  }
  return row;
}

namespace detail {

/// Index of the smallest valid value of key(row); earlier rows win ties.
template <class Key>
std::optional<std::size_t> argmin_valid(const std::vector<const ScoreRow*>& rows, Key key) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]->valid) continue;
    if (!best || key(*rows[i]) < key(*rows[*best])) best = i;
  }
  return best;
}

}  // namespace detail

/// Fixes R at the first listed rank and sweeps the ratios, then sweeps the
/// ranks at the chosen ratio. Ties go to the sparser ratio and the smaller rank.
inline SelectionResult select_model(const BinaryTensor3& x, const FitConfig& base, const SelectionGrid& grid) {
  if (grid.ranks.empty()) throw ConfigError("selection grid needs at least one rank");
  for (auto r : grid.ranks)
    if (r < 1) throw ConfigError("selection grid ranks must be >= 1");
  SelectionResult out;
  const std::size_t first_rank = grid.ranks.front();
  std::vector<std::size_t> ranks = grid.ranks;
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());

  // The deviance share always grows with the ratio, so ratios are compared by BIC there.
  auto ratio_key = [&](const ScoreRow& r) { return grid.criterion == Criterion::deviance ? r.bic : r.score; };

  std::optional<double> ratio;
  std::optional<std::size_t> first_rank_row;
  if (uses_ratio(base.method)) {
    if (grid.ratios.empty()) throw ConfigError(to_string(base.method) + " selection needs at least one ratio");
    std::vector<double> ratios = grid.ratios;
    std::sort(ratios.begin(), ratios.end());
    ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());
    std::vector<const ScoreRow*> sweep;
    const std::size_t start = out.table.size();
    for (double c : ratios) out.table.push_back(score_cell(x, base, grid, first_rank, c));
    for (std::size_t i = start; i < out.table.size(); ++i) sweep.push_back(&out.table[i]);
    const auto best = detail::argmin_valid(sweep, ratio_key);
    if (!best) throw std::runtime_error("selection: every ratio failed at rank " + std::to_string(first_rank));
    ratio = ratios[*best];
    first_rank_row = start + *best;
  }

  std::vector<std::size_t> rank_rows;
  for (std::size_t R : ranks) {
    if (first_rank_row && R == first_rank) {
      rank_rows.push_back(*first_rank_row);
      continue;
    }
    out.table.push_back(score_cell(x, base, grid, R, ratio));
    rank_rows.push_back(out.table.size() - 1);
  }
  std::vector<const ScoreRow*> sweep;
  for (auto i : rank_rows) sweep.push_back(&out.table[i]);

  std::optional<std::size_t> best;
  if (grid.criterion == Criterion::deviance) {
    // Largest rank that found all its components, each explaining at least min_marginal.
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const auto& m = sweep[i]->marginal;
      if (sweep[i]->valid && m.size() == sweep[i]->rank &&
          std::all_of(m.begin(), m.end(), [&](double v) { return v >= grid.min_marginal; })) {
        best = i;
      }
    }
    if (!best) best = detail::argmin_valid(sweep, [](const ScoreRow& r) { return static_cast<double>(r.rank); });
  } else {
    best = detail::argmin_valid(sweep, [](const ScoreRow& r) { return r.score; });
  }
  if (!best) throw std::runtime_error("selection: every rank failed");
  out.rank = sweep[*best]->rank;
  out.ratio = ratio;
  return out;
}

}  // namespace logitcp
