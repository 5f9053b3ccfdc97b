#pragma once

// Spiked sparse logit tensors: sparse unit factors, baseline noise level
// calibration on coin-flip tensors, and the four named scenarios.

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "logitcp/multistart.hpp"

namespace logitcp {

struct SimConfig {
  Dims dims{1, 1, 1};
  std::size_t rank = 1;
  /// Share of nonzero entries per factor column.
  double sparsity = 0.2;
  std::vector<double> snr{3.0};
  double mu_star = 0.0;
  std::uint64_t seed = 0;
  std::size_t baseline_reps = 100;
};

inline void validate_sim_config(const SimConfig& cfg) {
  if (cfg.rank < 1) throw ConfigError("simulation rank must be >= 1");
  if (!(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0)) throw ConfigError("sparsity must lie in (0, 1]");
  if (cfg.snr.size() != cfg.rank) {
    throw ConfigError("got " + std::to_string(cfg.snr.size()) + " SNR values for rank " + std::to_string(cfg.rank));
  }
  for (std::size_t r = 0; r < cfg.snr.size(); ++r) {
    if (!(cfg.snr[r] > 0.0)) throw ConfigError("SNR values must be positive");
    if (r > 0 && cfg.snr[r] > cfg.snr[r - 1]) throw ConfigError("SNR values must be nonincreasing");
  }
  if (cfg.baseline_reps < 1) throw ConfigError("baseline_reps must be >= 1");
}

/// Nonzeros per column: ceil(sparsity * p), at least 1.
inline std::size_t nonzeros_per_column(std::size_t p, double sparsity) {
  const auto k = static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(p) - 1e-9));
  return std::clamp<std::size_t>(k, 1, p);
}

struct SparseFactors {
  FactorMatrix U;
  FactorMatrix V;
  FactorMatrix W;
};

namespace detail {

inline FactorMatrix sparse_unit_columns(std::size_t p, std::size_t R, std::size_t nonzeros, Rng& rng) {
  std::normal_distribution<double> normal;
  FactorMatrix f = FactorMatrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(R));
  std::vector<std::size_t> idx(p);
  for (std::size_t r = 0; r < R; ++r) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t t = 0; t < nonzeros; ++t) {
      double v = 0.0;
      while (v == 0.0) v = normal(rng);
      f(static_cast<Eigen::Index>(idx[t]), static_cast<Eigen::Index>(r)) = v;
    }
    f.col(static_cast<Eigen::Index>(r)).normalize();
  }
  return f;
}

}  // namespace detail

/// Gaussian factor columns with a uniformly random support of fixed size, normalized.
inline SparseFactors gen_sparse_factors(const SimConfig& cfg, Rng& rng) {
  const auto& d = cfg.dims;
  SparseFactors f;
  f.U = detail::sparse_unit_columns(d.p1, cfg.rank, nonzeros_per_column(d.p1, cfg.sparsity), rng);
  f.V = detail::sparse_unit_columns(d.p2, cfg.rank, nonzeros_per_column(d.p2, cfg.sparsity), rng);
  f.W = detail::sparse_unit_columns(d.p3, cfg.rank, nonzeros_per_column(d.p3, cfg.sparsity), rng);
  return f;
}

/// Independent Bernoulli(sigmoid(theta)) draws, fully observed.
inline BinaryTensor3 sample_binary(const DenseTensor3& theta, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint8_t> vals(theta.size());
  for (std::size_t n = 0; n < theta.size(); ++n) vals[n] = unif(rng) < sigmoid(theta[n]) ? 1 : 0;
  return BinaryTensor3(theta.dims(), std::move(vals));
}

struct BaselineResult {
  double d_b = 0.0;
  std::size_t successes = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_notes;
};

/// Number of starts used by the baseline fits.
inline constexpr std::size_t kBaselineStarts = 10;

/// Mean, over `reps` coin-flip tensors, of the mean fitted weight of a
/// rank-R MM-TP fit. Replicates whose fit throws or finds fewer than R
/// components are skipped; at least 80% must succeed.
inline BaselineResult calibrate_baseline(const Dims& dims, std::size_t rank, std::uint64_t seed, std::size_t reps) {
  if (reps < 1) throw ConfigError("baseline calibration needs at least one replicate");
  FitConfig cfg;
  cfg.method = Method::tp;
  cfg.rank = rank;
  cfg.n_starts = std::max(kBaselineStarts, rank);
  std::vector<double> weights(reps, 0.0);
  std::vector<std::string> errors(reps);
  for (std::size_t b = 0; b < reps; ++b) {
    Rng rng(derive_seed(seed, b));
    const BinaryTensor3 x = sample_binary(DenseTensor3(dims), rng);
    cfg.seed = derive_seed(seed, reps + b);
    try {
      const FitReport r = multi_start_fit(x, cfg);
      if (r.clusters_found < rank) {
        errors[b] = r.reason;
      } else {
        weights[b] = r.model.d.mean();
      }
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  BaselineResult out;
  double total = 0.0;
  for (std::size_t b = 0; b < reps; ++b) {
    if (errors[b].empty()) {
      total += weights[b];
      ++out.successes;
    } else {
      ++out.failures;
      out.failure_notes.push_back("replicate " + std::to_string(b) + ": " + errors[b]);
    }
  }
  if (static_cast<double>(out.successes) < 0.8 * static_cast<double>(reps)) {
    throw std::runtime_error("baseline calibration: only " + std::to_string(out.successes) + " of " +
                             std::to_string(reps) + " replicates succeeded");
  }
  out.d_b = total / static_cast<double>(out.successes);
  return out;
}

/// Memoizes calibrate_baseline by (dims, rank, seed, reps).
class BaselineCache {
 public:
  double get(const Dims& dims, std::size_t rank, std::uint64_t seed, std::size_t reps) {
    const Key key{dims.p1, dims.p2, dims.p3, rank, seed, reps};
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const double d_b = calibrate_baseline(dims, rank, seed, reps).d_b;
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, d_b).first->second;
  }

  void put(const Dims& dims, std::size_t rank, std::uint64_t seed, std::size_t reps, double d_b) {
    std::lock_guard lock(mutex_);
    cache_[Key{dims.p1, dims.p2, dims.p3, rank, seed, reps}] = d_b;
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::uint64_t, std::size_t>;
  mutable std::mutex mutex_;
  std::map<Key, double> cache_;
};

struct GroundTruth {
  LogitModel model;
  DenseTensor3 probs;
};

struct Dataset {
  BinaryTensor3 x;
  GroundTruth truth;
  double d_b = 0.0;
};

/// Theta* = mu* 1 + sum_r (snr_r d_b) u*_r o v*_r o w*_r and one Bernoulli draw of it.
inline Dataset gen_dataset(const SimConfig& cfg, double d_b) {
  validate_sim_config(cfg);
  if (!(d_b > 0.0)) throw ConfigError("baseline noise level must be positive");
  Rng factor_rng(derive_seed(cfg.seed, 1));
  SparseFactors f = gen_sparse_factors(cfg, factor_rng);
  Vector d(static_cast<Eigen::Index>(cfg.rank));
  for (std::size_t r = 0; r < cfg.rank; ++r) d[static_cast<Eigen::Index>(r)] = cfg.snr[r] * d_b;
  LogitModel model{cfg.mu_star, d, std::move(f.U), std::move(f.V), std::move(f.W)};
  DenseTensor3 theta = model.theta();
  Rng draw_rng(derive_seed(cfg.seed, 2));
  BinaryTensor3 x = sample_binary(theta, draw_rng);
  DenseTensor3 probs = sigmoid_tensor(theta);
  return {std::move(x), {std::move(model), std::move(probs)}, d_b};
}

/// Calibrates d_b (seeded from cfg.seed) and generates the dataset.
inline Dataset gen_dataset(const SimConfig& cfg) {
  validate_sim_config(cfg);
  return gen_dataset(cfg, calibrate_baseline(cfg.dims, cfg.rank, derive_seed(cfg.seed, 3), cfg.baseline_reps).d_b);
}

/// The published scenarios; `scale` shrinks p1 only (p1 = round(scale * 1000)).
inline SimConfig scenario(const std::string& name, double scale = 1.0) {
  if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scenario scale must lie in (0, 1]");
  SimConfig cfg;
  std::size_t p2 = 10;
  if (name == "I") {
    cfg.rank = 1;
  } else if (name == "II") {
    cfg.rank = 2;
  } else if (name == "III") {
    cfg.rank = 1;
    p2 = 100;
  } else if (name == "IV") {
    cfg.rank = 2;
    p2 = 100;
  } else {
    throw ConfigError("unknown scenario '" + name + "' (expected I|II|III|IV)");
  }
  const auto p1 = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1000.0 * scale)));
  cfg.dims = Dims{p1, p2, 10};
  cfg.snr = cfg.rank == 1 ? std::vector<double>{3.0} : std::vector<double>{5.0, 3.0};
  return cfg;
}

/// Keeps each observed entry with probability 1 - drop_rate.
inline BinaryTensor3 drop_uniform(const BinaryTensor3& x, double drop_rate, Rng& rng) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ConfigError("drop rate must lie in [0, 1)");
  std::bernoulli_distribution drop(drop_rate);
  std::vector<std::uint8_t> mask(x.mask().begin(), x.mask().end());
  for (auto& m : mask)
    if (m && drop(rng)) m = 0;
  return x.with_mask(std::move(mask));
}

}  // namespace logitcp
