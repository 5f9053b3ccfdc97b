#pragma once

#include <random>

#include "logitcp/likelihood.hpp"
#include "logitcp/rng.hpp"

namespace logitcp::testing {

inline Vector random_unit(Eigen::Index n, Rng& rng) { return gaussian_vector(n, rng).normalized(); }

inline DenseTensor3 random_dense(Dims dims, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  DenseTensor3 t(dims);
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

/// Bernoulli(sigmoid(theta)) draws, fully observed.
inline BinaryTensor3 sample_bernoulli(const DenseTensor3& theta, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint8_t> vals(theta.size());
  for (std::size_t n = 0; n < theta.size(); ++n) vals[n] = unif(rng) < sigmoid(theta[n]) ? 1 : 0;
  return BinaryTensor3(theta.dims(), std::move(vals));
}

inline BinaryTensor3 random_binary(Dims dims, Rng& rng, double observed_fraction = 1.0) {
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution keep(observed_fraction);
  std::vector<std::uint8_t> vals(dims.size()), mask(dims.size());
  for (std::size_t n = 0; n < dims.size(); ++n) {
    vals[n] = coin(rng);
    mask[n] = keep(rng);
  }
  return BinaryTensor3(dims, std::move(vals), std::move(mask));
}

/// Rank-R logit model with Gaussian unit factors and the given weights.
inline LogitModel random_model(Dims dims, double mu, const std::vector<double>& weights, Rng& rng) {
  const auto R = static_cast<Eigen::Index>(weights.size());
  LogitModel m{mu, Vector(R), Matrix(dims.p1, R), Matrix(dims.p2, R), Matrix(dims.p3, R)};
  for (Eigen::Index r = 0; r < R; ++r) {
    m.d[r] = weights[static_cast<std::size_t>(r)];
    m.U.col(r) = random_unit(static_cast<Eigen::Index>(dims.p1), rng);
    m.V.col(r) = random_unit(static_cast<Eigen::Index>(dims.p2), rng);
    m.W.col(r) = random_unit(static_cast<Eigen::Index>(dims.p3), rng);
  }
  return m;
}

inline bool nonincreasing(const std::vector<double>& trace, double slack = 1e-9) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + slack) return false;
  return true;
}

}  // namespace logitcp::testing
