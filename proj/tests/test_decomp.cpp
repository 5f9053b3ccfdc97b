#include <gtest/gtest.h>

#include "logitcp/multistart.hpp"
#include "support.hpp"

namespace logitcp {
namespace {

using testing::nonincreasing;
using testing::random_binary;
using testing::random_dense;
using testing::random_model;
using testing::random_unit;
using testing::sample_bernoulli;

FitConfig config(Method m, std::size_t rank, Penalty p = NoPenalty{}) {
  FitConfig cfg;
  cfg.method = m;
  cfg.rank = rank;
  cfg.penalty = p;
  return cfg;
}

// Data with a planted rank-R signal; weights are in logit units.
BinaryTensor3 planted(Dims dims, const std::vector<double>& weights, std::uint64_t seed, LogitModel* truth = nullptr) {
  Rng rng(seed);
  const auto m = random_model(dims, 0.0, weights, rng);
  if (truth) *truth = m;
  return sample_bernoulli(m.theta(), rng);
}

TEST(PowerUpdate, ExactRankOneFixedPoint) {
  Rng rng(1);
  const Vector a = random_unit(4, rng), b = random_unit(3, rng), c = random_unit(5, rng);
  DenseTensor3 zc(Dims{4, 3, 5});
  outer_into(5.0, a, b, c, zc);
  const Vector u = power_update(zc, random_unit(4, rng), b, c, NoPenalty{}, 1);
  EXPECT_LT(std::min((u - a).norm(), (u + a).norm()), 1e-12);
}

TEST(PowerUpdate, FullSupportL0EqualsPlain) {
  Rng rng(2);
  const auto zc = random_dense(Dims{4, 3, 3}, rng);
  const Vector u = random_unit(4, rng), v = random_unit(3, rng), w = random_unit(3, rng);
  for (int mode = 1; mode <= 3; ++mode) {
    EXPECT_EQ(power_update(zc, u, v, w, L0Penalty{{4, 3, 3}}, mode), power_update(zc, u, v, w, NoPenalty{}, mode));
  }
}

TEST(PowerUpdate, SweepNeverDecreasesObjective) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto zc = random_dense(Dims{4, 3, 3}, rng);
    Vector u = random_unit(4, rng), v = random_unit(3, rng), w = random_unit(3, rng);
    double obj = std::abs(contract_all(zc, u, v, w));
    for (int sweep = 0; sweep < 5; ++sweep) {
      u = power_update(zc, u, v, w, NoPenalty{}, 1);
      const double after_u = contract_all(zc, u, v, w);
      EXPECT_GE(after_u, obj - 1e-12);
      v = power_update(zc, u, v, w, NoPenalty{}, 2);
      const double after_v = contract_all(zc, u, v, w);
      EXPECT_GE(after_v, after_u - 1e-12);
      w = power_update(zc, u, v, w, NoPenalty{}, 3);
      const double after_w = contract_all(zc, u, v, w);
      EXPECT_GE(after_w, after_v - 1e-12);
      obj = after_w;
    }
  }
}

TEST(OffsetUpdate, Examples) {
  Rng rng(4);
  const auto theta = random_dense(Dims{3, 2, 4}, rng);
  EXPECT_NEAR(offset_update(WorkingTensor{theta, WorkingKind::full}, theta), 0.0, 1e-15);
  DenseTensor3 shifted = theta;
  shifted.vec().array() += 3.0;
  EXPECT_NEAR(offset_update(WorkingTensor{shifted, WorkingKind::full}, theta), 3.0, 1e-12);
  const auto z = random_dense(Dims{3, 2, 4}, rng);
  double loop = 0;
  for (std::size_t n = 0; n < z.size(); ++n) loop += z[n] - theta[n];
  EXPECT_NEAR(offset_update(WorkingTensor{z, WorkingKind::full}, theta), loop / 24.0, 1e-12);
}

TEST(FinalOffset, AllOnesGoesLargeAndHalfOnesIsZero) {
  const Dims dims{2, 2, 2};
  BinaryTensor3 ones(dims, std::vector<std::uint8_t>(8, 1));
  const double mu = final_offset(ones, DenseTensor3(dims));
  EXPECT_GT(mu, 15.0);
  // The gradient sum(x - sigma(mu)) stays positive, so no finite root exists.
  EXPECT_GT(8.0 * (1.0 - sigmoid(10.0)), 0.0);
  BinaryTensor3 half(dims, {1, 0, 1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(final_offset(half, DenseTensor3(dims)), 0.0, 1e-6);
}

TEST(FinalOffset, MatchesGridArgmax) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_binary(Dims{3, 2, 2}, rng, 0.8);
    const auto theta_c = random_dense(x.dims(), rng);
    double best_mu = 0, best = std::numeric_limits<double>::infinity();
    for (int i = -100000; i <= 100000; ++i) {
      const double mu = i * 1e-4;
      DenseTensor3 t = theta_c;
      t.vec().array() += mu;
      const double v = neg_loglik(x, t);
      if (v < best) {
        best = v;
        best_mu = mu;
      }
    }
    if (std::abs(best_mu) < 9.9) {
      EXPECT_NEAR(final_offset(x, theta_c), best_mu, 1e-4);
    }
  }
}

TEST(Init, SpectralRecoversRankOneSignDirection) {
  // 2X - 1 = a o b o c with balanced +-1 vectors, so the mean is zero.
  Vector a(4), b(2), c(3);
  a << 1, -1, 1, -1;
  b << 1, -1;
  c << 1, 1, -1;
  std::vector<std::uint8_t> vals(24);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 4; ++i) vals[i + 4 * (j + 2 * k)] = a[i] * b[j] * c[k] > 0 ? 1 : 0;
  BinaryTensor3 x(Dims{4, 2, 3}, vals);
  const auto sign = centered_sign_tensor(x);
  EXPECT_EQ(sign.mean, 0.0);
  Rng rng(7);
  const auto start = init_spectral_rank_one(sign, config(Method::tp, 1), rng);
  const Vector ua = a.normalized(), vb = b.normalized(), wc = c.normalized();
  EXPECT_LT(std::min((start.u - ua).norm(), (start.u + ua).norm()), 1e-10);
  EXPECT_LT(std::min((start.v - vb).norm(), (start.v + vb).norm()), 1e-10);
  EXPECT_LT(std::min((start.w - wc).norm(), (start.w + wc).norm()), 1e-10);
}

TEST(Init, SeedDeterminismAndMissingAsZero) {
  Rng data_rng(8);
  const auto x = random_binary(Dims{5, 4, 3}, data_rng, 0.7);
  const auto sign = centered_sign_tensor(x);
  double raw_sum = 0;
  for (std::size_t n = 0; n < x.size(); ++n) raw_sum += x.observed(n) ? 2.0 * x.value(n) - 1.0 : 0.0;
  EXPECT_NEAR(sign.mean, raw_sum / 60.0, 1e-15);
  for (std::size_t n = 0; n < x.size(); ++n)
    if (!x.observed(n)) {
      EXPECT_EQ(sign.q[n], -sign.mean);
    }

  // Flipping a masked-out value leaves the initialization unchanged.
  std::vector<std::uint8_t> vals(x.values().begin(), x.values().end());
  for (std::size_t n = 0; n < x.size(); ++n)
    if (!x.observed(n)) vals[n] = 1 - vals[n];
  const BinaryTensor3 flipped(x.dims(), vals, std::vector<std::uint8_t>(x.mask().begin(), x.mask().end()));
  const auto cfg = config(Method::tp, 1);
  Rng r1(42), r2(42), r3(42);
  const auto s1 = init_rank_one(sign, cfg, r1);
  const auto s2 = init_rank_one(sign, cfg, r2);
  const auto s3 = init_rank_one(centered_sign_tensor(flipped), cfg, r3);
  EXPECT_EQ(s1.u, s2.u);
  EXPECT_EQ(s1.w, s2.w);
  EXPECT_EQ(s1.u, s3.u);
  EXPECT_EQ(s1.w, s3.w);
}

TEST(Init, AlsStartSolvesModeThreeLeastSquares) {
  Rng rng(9);
  const auto x = random_binary(Dims{5, 4, 3}, rng);
  const auto sign = centered_sign_tensor(x);
  auto cfg = config(Method::als, 2);
  const auto s = init_als(sign, cfg, rng);
  const Matrix direct = matricize(sign.q, 3) * pseudo_inverse(khatri_rao(s.V, s.U).transpose());
  const Matrix ours = s.W * s.d.asDiagonal();
  EXPECT_LT((direct - ours).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RankOneFit, LossTraceNonincreasing) {
  Rng rng(10);
  for (const Penalty& p : {Penalty{NoPenalty{}}, Penalty{L1Penalty{{1.5, 1.5, 1.5}}}, Penalty{L0Penalty{{2, 2, 2}}}}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_binary(Dims{6, 5, 4}, rng, trial % 2 ? 0.8 : 1.0);
      const Method m = std::holds_alternative<NoPenalty>(p) ? Method::tp
                       : std::holds_alternative<L1Penalty>(p) ? Method::tsp
                                                             : Method::ttp;
      auto cfg = config(m, 1, p);
      cfg.outer_abs_tol = 0;
      cfg.outer_rel_tol = 0;
      Rng start_rng(trial);
      const auto fit = rank_one_mm_fit(x, cfg, init_rank_one(centered_sign_tensor(x), cfg, start_rng));
      EXPECT_TRUE(nonincreasing(fit.loss_trace)) << to_string(m);
      EXPECT_GE(fit.d, 0.0);
    }
  }
}

TEST(RankOneFit, PenaltyOffEquivalence) {
  const Dims dims{6, 5, 4};
  const auto x = planted(dims, {8.0}, 11);
  const auto tp = config(Method::tp, 1);
  auto tsp = config(Method::tsp, 1, L1Penalty{{std::sqrt(6.0), std::sqrt(5.0), 2.0}});
  auto ttp = config(Method::ttp, 1, L0Penalty{{6, 5, 4}});
  Rng rng(12);
  const auto start = init_rank_one(centered_sign_tensor(x), tp, rng);
  const auto a = rank_one_mm_fit(x, tp, start);
  const auto b = rank_one_mm_fit(x, tsp, start);
  const auto c = rank_one_mm_fit(x, ttp, start);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.loss_trace, c.loss_trace);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.u, c.u);
  EXPECT_EQ(a.w, c.w);
}

TEST(RankOneFit, SymmetricKeepsUEqualV) {
  Rng rng(13);
  const auto x = random_binary(Dims{5, 5, 3}, rng);
  auto cfg = config(Method::tp, 1);
  cfg.symmetric_uv = true;
  Rng start_rng(1);
  const auto fit = rank_one_mm_fit(x, cfg, init_rank_one(centered_sign_tensor(x), cfg, start_rng));
  EXPECT_EQ(fit.u, fit.v);
  EXPECT_TRUE(nonincreasing(fit.loss_trace));
}

TEST(AlsSolve, PseudoInverseFormsAgree) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_dense(Dims{5, 4, 3}, rng);
    const Matrix U = random_dense(Dims{5, 2, 1}, rng).vec().reshaped(5, 2);
    const Matrix V = random_dense(Dims{4, 2, 1}, rng).vec().reshaped(4, 2);
    const Matrix W = random_dense(Dims{3, 2, 1}, rng).vec().reshaped(3, 2);
    for (int mode = 1; mode <= 3; ++mode) {
      EXPECT_LT((als_solve(z, mode, U, V, W) - als_solve_direct(z, mode, U, V, W)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(AlsFit, RankOneHighSignalMatchesSignPattern) {
  // Flat +-1 factors keep every |theta| = 400 / sqrt(336), about 22, so the
  // draw is (almost surely) the sign pattern of the planted tensor.
  Rng rng(15);
  std::bernoulli_distribution coin(0.5);
  auto flat = [&](Eigen::Index n) {
    Vector v(n);
    for (auto& e : v) e = coin(rng) ? 1.0 : -1.0;
    return Vector(v.normalized());
  };
  LogitModel truth{0.0, Vector::Constant(1, 400.0), flat(8), flat(7), flat(6)};
  const auto x = sample_bernoulli(truth.theta(), rng);
  const auto report = als_fit(x, config(Method::als, 1));
  const auto probs = predict_probs(report.model);
  std::size_t agree = 0;
  for (std::size_t n = 0; n < x.size(); ++n) agree += (probs[n] >= 0.5) == (x.value(n) == 1);
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(x.size()), 0.99);
}

TEST(AlsFit, MonotoneUnitColumnsCanonical) {
  Rng rng(16);
  for (int trial = 0; trial < 6; ++trial) {
    const auto x = random_binary(Dims{6, 5, 4}, rng, trial % 2 ? 0.75 : 1.0);
    auto cfg = config(Method::als, 1 + trial % 3);
    cfg.seed = static_cast<std::uint64_t>(trial);
    cfg.symmetric_uv = false;
    const auto r = als_fit(x, cfg);
    EXPECT_TRUE(nonincreasing(r.loss_trace));
    EXPECT_NO_THROW(validate_model(r.model));
  }
}

TEST(AlsFit, SymmetricModeIsBitExact) {
  Rng rng(17);
  const auto x = random_binary(Dims{5, 5, 4}, rng);
  auto cfg = config(Method::als, 2);
  cfg.symmetric_uv = true;
  const auto r = als_fit(x, cfg);
  EXPECT_EQ(r.model.U, r.model.V);
  EXPECT_TRUE(nonincreasing(r.loss_trace));
}

TEST(MultiStart, SingleStartEqualsRankOneFitPlusFinalOffset) {
  const Dims dims{6, 5, 4};
  const auto x = planted(dims, {10.0}, 18);
  auto cfg = config(Method::tp, 1);
  cfg.n_starts = 1;
  cfg.reestimate = false;
  const auto report = multi_start_fit(x, cfg);
  Rng rng(derive_seed(cfg.seed, 0));
  const auto direct = rank_one_mm_fit(x, cfg, init_rank_one(centered_sign_tensor(x), cfg, rng));
  EXPECT_EQ(report.model.d[0], direct.d);
  EXPECT_EQ(Vector(report.model.U.col(0)), direct.u);
  DenseTensor3 theta_c(dims);
  outer_into(direct.d, direct.u, direct.v, direct.w, theta_c);
  EXPECT_EQ(report.model.mu, final_offset(x, theta_c));
}

TEST(MultiStart, DeterministicUnderSeed) {
  const auto x = planted(Dims{7, 6, 5}, {12.0, 8.0}, 19);
  auto cfg = config(Method::tsp, 2, L1Penalty{{2.0, 2.0, 2.0}});
  cfg.seed = 77;
  const auto a = multi_start_fit(x, cfg);
  const auto b = multi_start_fit(x, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.clusters_found, b.clusters_found);
}

TEST(MultiStart, ConstraintsHoldAtExit) {
  const Dims dims{8, 7, 6};
  const auto x = planted(dims, {15.0, 10.0}, 20);
  {
    const auto r = multi_start_fit(x, config(Method::ttp, 2, L0Penalty{{3, 2, 4}}));
    const std::size_t s[3] = {3, 2, 4};
    const Matrix* f[3] = {&r.model.U, &r.model.V, &r.model.W};
    for (int n = 0; n < 3; ++n)
      for (Eigen::Index c = 0; c < f[n]->cols(); ++c)
        EXPECT_LE(static_cast<std::size_t>((f[n]->col(c).array() != 0.0).count()), s[n]);
  }
  {
    const double c[3] = {1.5, 2.0, 1.2};
    const auto r = multi_start_fit(x, config(Method::tsp, 2, L1Penalty{{c[0], c[1], c[2]}}));
    const Matrix* f[3] = {&r.model.U, &r.model.V, &r.model.W};
    for (int n = 0; n < 3; ++n)
      for (Eigen::Index k = 0; k < f[n]->cols(); ++k) {
        EXPECT_LE(f[n]->col(k).lpNorm<1>(), c[n] + 1e-6);
        EXPECT_LE(f[n]->col(k).norm(), 1.0 + 1e-10);
      }
  }
}

TEST(MultiStart, CanonicalOutputAndSymmetricMode) {
  const auto x = planted(Dims{6, 6, 5}, {12.0, 9.0}, 21);
  auto cfg = config(Method::tp, 2);
  cfg.symmetric_uv = true;
  const auto r = multi_start_fit(x, cfg);
  EXPECT_EQ(r.model.U, r.model.V);
  EXPECT_NO_THROW(validate_model(r.model));
  EXPECT_EQ(r.per_component.size(), static_cast<std::size_t>(r.model.rank()));
}

TEST(MultiStart, TopUpReportsShortfall) {
  // Pure noise with a tiny threshold still yields R clusters or says why not.
  Rng rng(22);
  const auto x = random_binary(Dims{5, 4, 3}, rng);
  auto cfg = config(Method::tp, 3);
  cfg.cluster_threshold = 1.0;
  cfg.n_starts = 3;
  const auto r = multi_start_fit(x, cfg);
  if (r.clusters_found < 3) {
    EXPECT_FALSE(r.converged);
    EXPECT_NE(r.reason.find("clusters"), std::string::npos);
  }
  EXPECT_EQ(static_cast<std::size_t>(r.model.rank()), r.clusters_found);
}

TEST(Config, Validation) {
  const Dims dims{4, 4, 9};
  auto cfg = config(Method::tsp, 1, L1Penalty{{0.5, 1.0, 1.0}});
  EXPECT_THROW(validate_config(cfg, dims), ConfigError);
  cfg.penalty = L1Penalty{{1.0, 2.1, 1.0}};
  EXPECT_THROW(validate_config(cfg, dims), ConfigError);
  cfg.penalty = L1Penalty{{2.0, 2.0, 3.0}};
  EXPECT_NO_THROW(validate_config(cfg, dims));
  auto l0 = config(Method::ttp, 1, L0Penalty{{0, 1, 1}});
  EXPECT_THROW(validate_config(l0, dims), ConfigError);
  auto nu = config(Method::tp, 1);
  nu.cluster_threshold = 2.0;
  EXPECT_THROW(validate_config(nu, dims), ConfigError);
  auto sym = config(Method::tp, 1);
  sym.symmetric_uv = true;
  EXPECT_THROW(validate_config(sym, Dims{3, 4, 2}), ConfigError);
  EXPECT_EQ(config(Method::tp, 3).starts(), 27u);
  EXPECT_EQ(config(Method::tp, 2).starts(), 10u);
}

}  // namespace
}  // namespace logitcp
