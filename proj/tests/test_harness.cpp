#include "ergow2/harness.hpp"

#include <gtest/gtest.h>

using namespace ergow2;

TEST(harness, exponent_formulas_hand_derived) {
  TheoreticalRates r = theoretical_exponents(1, 2.0);
  EXPECT_DOUBLE_EQ(r.l2_exponent, 1.0 / 14.0);   // 2 / (2 (6 + 8))
  EXPECT_DOUBLE_EQ(r.as_exponent, 1.0 / 36.0);   // 4 / (2 * 4 * 18)
  EXPECT_DOUBLE_EQ(r.exp_l2_exponent, 0.125);
  EXPECT_DOUBLE_EQ(r.exp_l2_log_power, 0.375);
  EXPECT_DOUBLE_EQ(r.exp_as_exponent, 0.125);
  EXPECT_THROW(theoretical_exponents(0, 1.0), Error);
  EXPECT_THROW(theoretical_exponents(1, 0.0), Error);
}

TEST(harness, exponent_limits_and_ranges) {
  for (int d : {1, 2, 3}) {
    TheoreticalRates lim = theoretical_exponents(d, 1e6);
    EXPECT_LT(std::abs(lim.l2_exponent - 1.0 / (2.0 * (d + 3))), 1e-4);
    EXPECT_LT(std::abs(lim.as_exponent - 1.0 / (2.0 * (d + 3))), 1e-4);
    for (double a : {0.1, 0.5, 1.0, 2.0, 8.0, 100.0}) {
      TheoreticalRates r = theoretical_exponents(d, a);
      for (double e : {r.l2_exponent, r.as_exponent, r.exp_l2_exponent, r.exp_as_exponent}) {
        EXPECT_GT(e, 0.0);
        EXPECT_LE(e, 0.5);
      }
      EXPECT_LT(r.as_exponent, r.l2_exponent);  // a.s. rate is weaker
    }
  }
}

TEST(harness, fit_rate_exact_power_laws) {
  std::vector<double> ts = {10.0, 100.0, 1000.0, 10000.0};
  std::vector<double> half, scaled, flat;
  for (double t : ts) {
    half.push_back(std::pow(t, -0.5));
    scaled.push_back(3.0 * std::pow(t, -1.0 / 14.0));
    flat.push_back(2.5);
  }
  RateFitResult f1 = fit_rate(ts, half);
  EXPECT_DOUBLE_EQ(f1.slope, -0.5);
  EXPECT_DOUBLE_EQ(f1.r_squared, 1.0);
  EXPECT_NEAR(f1.slope_ci_halfwidth, 0.0, 1e-12);
  RateFitResult f2 = fit_rate(ts, scaled);
  EXPECT_NEAR(f2.slope, -1.0 / 14.0, 1e-12);
  EXPECT_NEAR(f2.intercept, std::log(3.0), 1e-12);
  RateFitResult f3 = fit_rate(ts, flat);
  EXPECT_NEAR(f3.slope, 0.0, 1e-15);
  EXPECT_THROW(fit_rate({1.0, 2.0, 3.0}, {1.0, -1.0, 1.0}), Error);
  EXPECT_THROW(fit_rate({1.0, 2.0}, {1.0, 1.0}), Error);
}

TEST(harness, synthetic_injection_echoes_law) {
  std::vector<double> ts = {100.0, 1000.0, 10000.0};
  RateTable table = rate_table_from_law(ts, [](double t) { return std::pow(t, -0.5); });
  ASSERT_EQ(table.rows.size(), 3u);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    EXPECT_DOUBLE_EQ(table.rows[k].w2_mean, std::pow(ts[k], -0.5));
    EXPECT_DOUBLE_EQ(table.rows[k].w2_adj, table.rows[k].w2_mean);
  }
  RateFitResult fit = fit_rate(table.ts(), table.adjusted());
  EXPECT_DOUBLE_EQ(fit.slope, -0.5);
}

TEST(harness, rate_experiment_deterministic_and_decreasing) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  cfg.seed = 21;
  W2Spec spec;
  spec.n_ref = 2000;
  std::vector<double> ts = {25.0, 50.0, 100.0, 200.0};
  RateTable a = rate_experiment(ou, ts, 16, spec, cfg);
  RateTable b = rate_experiment(ou, ts, 16, spec, cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].w2_mean, b.rows[k].w2_mean);  // bitwise determinism
    EXPECT_EQ(a.rows[k].method, W2Method::Quantile1D);
  }
  // decay beyond twice the Monte Carlo error across the extremes
  EXPECT_LT(a.rows.back().w2_mean + 2.0 * a.rows.back().se,
            a.rows.front().w2_mean - 2.0 * a.rows.front().se);
  EXPECT_GT(a.ref_floor, 0.0);
}

TEST(harness, rate_experiment_d2_exact_lp) {
  Mat A(2, 2);
  A << 2.0, 0.5, -0.5, 1.0;
  SDEModel model = make_anisotropic_ou(A, Mat::Identity(2, 2));
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  W2Spec spec;
  spec.n_ref = 2000;
  spec.max_support = 128;
  std::vector<double> ts = {20.0, 40.0, 80.0, 160.0};
  RateTable table = rate_experiment(model, ts, 8, spec, cfg);
  EXPECT_EQ(table.rows.front().method, W2Method::ExactLP);
  EXPECT_LT(table.rows.back().w2_mean, table.rows.front().w2_mean);
  RateFitResult fit = fit_rate(table.ts(), table.adjusted());
  double bound = -theoretical_exponents(2, 2.0).l2_exponent;
  EXPECT_LE(fit.slope, bound + fit.slope_ci_halfwidth);
}

TEST(harness, as_path_guards_and_zeta_selection) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  EXPECT_THROW(as_path_study(ou, 100.0, {50.0}, cfg), Error);

  ASPathOptions opts;
  opts.n_ref = 1000;
  ASPathTable t = as_path_study(ou, 400.0, {50.0, 100.0, 200.0, 400.0}, cfg, opts);
  EXPECT_DOUBLE_EQ(t.zeta, 0.125);  // sigma bounded: exp route
  ASSERT_EQ(t.rows.size(), 4u);
  for (const auto& r : t.rows) EXPECT_TRUE(std::isfinite(r.ratio));

  opts.zeta_override = 0.0;
  ASPathTable t0 = as_path_study(ou, 400.0, {50.0, 100.0, 200.0, 400.0}, cfg, opts);
  for (const auto& r : t0.rows) {
    EXPECT_NEAR(r.ratio, r.w2 / std::pow(std::log(r.t), 0.6), 1e-12);
  }
}

TEST(harness, displacement_decay_ou) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  cfg.seed = 4;
  DisplacementTable table = displacement_decay_check(ou, {100.0, 400.0, 1600.0}, 200, cfg);
  // E|X_t - X_0| -> E|N(0, 2v)| = sqrt(2/pi) for v = 0.5
  double expect = std::sqrt(2.0 / M_PI) / 100.0;
  EXPECT_NEAR(table.rows[0].mean_over_t, expect, 3.0 * table.rows[0].se);
  RateFitResult fit = table.fit();
  EXPECT_NEAR(fit.slope, -1.0, 0.1);
  EXPECT_THROW(displacement_decay_check(ou, {0.0, 1.0}, 10, cfg), Error);
}

TEST(harness, concentration_bounded_gaussian_tail) {
  ZSpec z;  // Z == 1
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  ConcentrationReport rep = concentration_check(ConcentrationKind::Bounded, z, 4.0, PsiSpec{},
                                                {0.0, 2.0, 8.0}, 10000, cfg);
  // ell = 0: frequency ~ 1 and the bound is the vacuous 2
  EXPECT_DOUBLE_EQ(rep.bound[0], 2.0);
  EXPECT_GT(rep.empirical_tail[0], 0.99);
  // ell = 2: P(|W_t| > 2 sqrt(t)) = 2 Phi(-2), under the Hoeffding bound 2e^{-2}
  double expect = 2.0 * normal_cdf(-2.0);
  EXPECT_NEAR(rep.empirical_tail[1], expect, 3.0 * rep.binomial_se[1]);
  EXPECT_NEAR(rep.bound[1], 2.0 * std::exp(-2.0), 1e-12);
  EXPECT_LE(rep.empirical_tail[1], rep.bound[1]);
  // huge ell: zero frequency
  EXPECT_DOUBLE_EQ(rep.empirical_tail[2], 0.0);
}

TEST(harness, concentration_guards) {
  ZSpec z;
  z.kind = ZKind::StateLinear;
  z.model = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  try {
    concentration_check(ConcentrationKind::Bounded, z, 1.0, PsiSpec{}, {1.0}, 1000, cfg);
    FAIL() << "expected UnboundedZ";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Err::UnboundedZ);
  }
}

TEST(harness, concentration_polynomial_state_linear) {
  ZSpec z;
  z.kind = ZKind::StateLinear;
  z.model = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  ConcentrationReport rep = concentration_check(ConcentrationKind::Polynomial, z, 4.0, PsiSpec{},
                                                {1.0, 2.0, 4.0}, 2000, cfg);
  for (std::size_t i = 0; i < rep.ell_grid.size(); ++i) {
    EXPECT_LE(rep.empirical_tail[i], rep.bound[i] + 3.0 * rep.binomial_se[i])
        << "ell=" << rep.ell_grid[i];
  }
  // the BDG-route constant is what makes the bound concrete
  EXPECT_NEAR(bdg_constant(4.0), 113.7777777777778, 1e-9);
}

TEST(harness, averaging_cesaro_constant) {
  auto rows = averaging_lemma_check(AveragingKind::Cesaro, PowerFunc{1.0, 0.0}, PowerFunc{2.5, 0.0},
                                    1000.0);
  for (const auto& r : rows) EXPECT_NEAR(r.value, 2.5, 1e-9);
}

TEST(harness, averaging_kronecker_closed_form) {
  auto rows = averaging_lemma_check(AveragingKind::Kronecker, PowerFunc{1.0, 0.0},
                                    PowerFunc{1.0, -0.5}, 10000.0);
  double target = 2.0 * (std::sqrt(10000.0) - 1.0) / 10000.0;
  EXPECT_NEAR(rows.back().value, target, 1e-6);
  EXPECT_NEAR(rows.back().value, 0.0198, 1e-4);
}

TEST(harness, averaging_stochastic_kronecker_rms) {
  AveragingOptions opts;
  opts.replications = 2000;
  auto rows = averaging_lemma_check(AveragingKind::StochasticKronecker, PowerFunc{1.0, -0.25},
                                    PowerFunc{1.0, 0.0}, 10000.0, opts);
  const auto& last = rows.back();
  // Ito isometry: RMS = sqrt(2) * T^{-1/2}
  EXPECT_NEAR(last.target, std::sqrt(2.0) / 100.0, 1e-4);
  EXPECT_NEAR(last.value, last.target, 3.0 * last.se);
}

TEST(harness, averaging_spec_violation) {
  EXPECT_THROW(
      averaging_lemma_check(AveragingKind::Kronecker, PowerFunc{1.0, -2.0}, PowerFunc{1.0, 0.0}, 100.0),
      Error);
  EXPECT_THROW(
      averaging_lemma_check(AveragingKind::Cesaro, PowerFunc{-1.0, 0.0}, PowerFunc{1.0, 0.0}, 100.0),
      Error);
}

TEST(harness, proof_schedule_presets) {
  EXPECT_DOUBLE_EQ(ProofSchedules::eps_poly(100, 0.5), 0.1);
  EXPECT_DOUBLE_EQ(ProofSchedules::radius_poly(16, 1, 0.5), 2.0 * 4.0);
  EXPECT_NEAR(ProofSchedules::eps_exp(100, 1), std::pow(100.0, -0.125) * std::sqrt(std::log(100.0) / 4.0),
              1e-15);
  EXPECT_GT(ProofSchedules::radius_exp(100, 1, 0.5), 0.0);
}
