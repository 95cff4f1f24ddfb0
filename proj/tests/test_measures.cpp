#include "ergow2/measures.hpp"

#include <gtest/gtest.h>

using namespace ergow2;

namespace {

Trajectory constant_path(double c, int n) {
  Trajectory t;
  t.times.resize(static_cast<std::size_t>(n));
  t.states = Mat::Constant(n, 1, c);
  for (int i = 0; i < n; ++i) t.times[static_cast<std::size_t>(i)] = 0.1 * i;
  return t;
}

}  // namespace

TEST(measures, occupation_constant_path_merges) {
  OccupationMeasure occ = occupation_measure(constant_path(2.5, 11));
  EXPECT_EQ(occ.measure.size(), 1);
  EXPECT_DOUBLE_EQ(occ.measure.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(occ.measure.points(0, 0), 2.5);
}

TEST(measures, occupation_left_point_rule) {
  Trajectory t;
  t.times = {0.0, 1.0, 2.0};
  t.states = Mat(3, 1);
  t.states << 0.0, 1.0, 5.0;
  OccupationMeasure occ = occupation_measure(t);
  ASSERT_EQ(occ.measure.size(), 2);  // last state dropped
  EXPECT_DOUBLE_EQ(occ.measure.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(occ.measure.weights[1], 0.5);
  EXPECT_DOUBLE_EQ(occ.horizon, 2.0);

  Trajectory empty;
  empty.times = {0.0};
  empty.states = Mat::Zero(1, 1);
  EXPECT_THROW(occupation_measure(empty), Error);
}

TEST(measures, occupation_mass_exact_at_scale) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  Trajectory traj = integrate(ou, Vec::Zero(1), 200.0, cfg);  // 2e5 atoms
  OccupationMeasure occ = occupation_measure(traj, false);
  occ.measure.validate(1e-12);
  EXPECT_LE(std::abs(occ.measure.weights.sum() - 1.0), 1e-12);
}

TEST(measures, occupation_ou_second_moment) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  cfg.record_stride = 10;
  cfg.seed = 3;
  Vec x0 = warm_start(ou, cfg, 0.0);
  Trajectory traj = integrate(ou, x0, 1000.0, cfg);
  OccupationMeasure occ = occupation_measure(traj, false);
  double m2 = occ.measure.integrate([](const Vec& x) { return x.squaredNorm(); });
  // asymptotic sd of the time average of X^2: sqrt(2 v^2 / (theta t)) with v=0.5
  double sd = std::sqrt(2.0 * 0.25 / 1000.0);
  EXPECT_NEAR(m2, 0.5, 3.0 * sd);
}

// Halving the record grid moves Lipschitz integrals by O(recorded spacing).
TEST(measures, occupation_quadrature_consistency) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig fine;
  fine.dt = 1e-3;
  fine.seed = 5;
  Vec x0 = warm_start(ou, fine, 0.0);
  Trajectory traj = integrate(ou, x0, 100.0, fine);
  auto eval = [&](long stride, const std::function<double(const Vec&)>& f) {
    Trajectory sub;
    long rows = (traj.n() - 1) / stride;
    sub.times.resize(static_cast<std::size_t>(rows + 1));
    sub.states.resize(rows + 1, 1);
    for (long i = 0; i <= rows; ++i) {
      sub.times[static_cast<std::size_t>(i)] = traj.times[static_cast<std::size_t>(i * stride)];
      sub.states.row(i) = traj.states.row(i * stride);
    }
    return occupation_measure(sub, false).measure.integrate(f);
  };
  for (const auto& f : {std::function<double(const Vec&)>([](const Vec& x) { return x[0]; }),
                        std::function<double(const Vec&)>([](const Vec& x) { return x.squaredNorm(); })}) {
    double i1 = eval(1, f), i2 = eval(2, f), i8 = eval(8, f);
    EXPECT_LE(std::abs(i2 - i1), 0.5 * 2e-3 * 10.0 + 1e-4);
    EXPECT_LE(std::abs(i8 - i1), 0.5 * 8e-3 * 10.0 + 1e-4);
  }
}

TEST(measures, mollifier_kernel_basics) {
  MollifierKernel tri = MollifierKernel::make(MollifierBase::TriangleProduct, 1.0, 1);
  Vec z = Vec::Zero(1), one = Vec::Ones(1);
  EXPECT_DOUBLE_EQ(tri.rho(z), 1.0);
  EXPECT_DOUBLE_EQ(tri.rho(one), 0.0);
  EXPECT_DOUBLE_EQ(tri.zeta_sq(), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(tri.lip_rho(), 1.0);

  MollifierKernel ep = MollifierKernel::make(MollifierBase::EpanechnikovProduct, 1.0, 1);
  EXPECT_DOUBLE_EQ(ep.rho(z), 0.75);
  EXPECT_DOUBLE_EQ(ep.zeta_sq(), 0.2);
  EXPECT_DOUBLE_EQ(ep.lip_rho(), 1.5);

  EXPECT_THROW(MollifierKernel::make(MollifierBase::TriangleProduct, 0.0, 1), Error);
}

TEST(measures, kernel_mass_and_second_moment_by_quadrature) {
  for (auto base : {MollifierBase::TriangleProduct, MollifierBase::EpanechnikovProduct}) {
    for (double eps : {1.0, 0.5, 0.1}) {
      MollifierKernel k = MollifierKernel::make(base, eps, 1);
      const int n = 20000;
      double mass = 0.0, m2 = 0.0;
      for (int i = 0; i < n; ++i) {
        Vec u(1);
        u[0] = -eps + 2.0 * eps * (i + 0.5) / n;
        double w = k.rho_eps(u) * (2.0 * eps / n);
        mass += w;
        m2 += u.squaredNorm() * w;
      }
      EXPECT_NEAR(mass, 1.0, 1e-3);
      EXPECT_NEAR(m2, eps * eps * k.zeta_sq(), 1e-3 * eps * eps);
    }
  }
}

// Lipschitz constant of rho_eps estimated from difference ratios on a fine grid
// matches eps^{-(d+1)} Lip(rho) within 5%.
TEST(measures, kernel_lipschitz_law) {
  for (double eps : {1.0, 0.5, 0.1}) {
    MollifierKernel k = MollifierKernel::make(MollifierBase::TriangleProduct, eps, 1);
    double lip_est = 0.0;
    const int n = 4000;
    for (int i = 0; i + 1 < n; ++i) {
      Vec a(1), b(1);
      a[0] = -1.5 * eps + 3.0 * eps * i / n;
      b[0] = -1.5 * eps + 3.0 * eps * (i + 1) / n;
      lip_est = std::max(lip_est, std::abs(k.rho_eps(a) - k.rho_eps(b)) / (b[0] - a[0]));
    }
    EXPECT_NEAR(lip_est, k.lip_rho_eps(), 0.05 * k.lip_rho_eps()) << "eps=" << eps;
  }
  // d = 2: gradient magnitude near the center approaches sqrt(2) * eps^{-3}
  MollifierKernel k2 = MollifierKernel::make(MollifierBase::TriangleProduct, 0.5, 2);
  Vec p(2), q(2);
  p << 0.01, 0.01;
  q << 0.012, 0.012;
  double slope = std::abs(k2.rho_eps(p) - k2.rho_eps(q)) / (q - p).norm();
  EXPECT_NEAR(slope, k2.lip_rho_eps(), 0.05 * k2.lip_rho_eps());
}

TEST(measures, mollified_density_values_and_mass) {
  MollifierKernel k = MollifierKernel::make(MollifierBase::TriangleProduct, 1.0, 1);
  auto d0 = mollified_density(DiscreteMeasure::dirac(Vec::Zero(1)), k);
  EXPECT_DOUBLE_EQ(d0(Vec::Zero(1)), 1.0);
  EXPECT_DOUBLE_EQ(d0(Vec::Ones(1)), 0.0);
  EXPECT_DOUBLE_EQ(d0(Vec::Constant(1, -1.0)), 0.0);

  // two atoms at +-2 with eps = 1: disjoint lobes of mass 1/2
  Mat pts(2, 1);
  pts << -2.0, 2.0;
  auto two = mollified_density(DiscreteMeasure::equal_weights(pts), k);
  double left = 0.0, right = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    Vec x(1);
    x[0] = -4.0 + 8.0 * (i + 0.5) / n;
    double w = two(x) * 8.0 / n;
    (x[0] < 0 ? left : right) += w;
  }
  EXPECT_NEAR(left, 0.5, 1e-3);
  EXPECT_NEAR(right, 0.5, 1e-3);

  // random 50-atom measure: grid mass in [0.999, 1.001]
  NoiseStream ns(4, 4);
  Mat rp(50, 1);
  for (int i = 0; i < 50; ++i) rp(i, 0) = 2.0 * ns.normal(static_cast<std::uint64_t>(i), 0);
  auto dens = mollified_density(DiscreteMeasure::equal_weights(rp), k);
  GridSpec grid;
  grid.lo = Vec::Constant(1, rp.minCoeff() - 1.5);
  grid.hi = Vec::Constant(1, rp.maxCoeff() + 1.5);
  grid.spacing = 1.0 / 512.0;
  double mass = 0.0;
  grid.for_each_center([&](const Vec& c) { mass += dens(c) * grid.cell_volume(); });
  EXPECT_GE(mass, 0.999);
  EXPECT_LE(mass, 1.001);

  Mat pts2(1, 2);
  EXPECT_THROW(mollified_density(DiscreteMeasure::equal_weights(pts2), k), Error);
}

TEST(measures, phi_eps_centering) {
  MollifierKernel k = MollifierKernel::make(MollifierBase::TriangleProduct, 0.7, 1);
  Vec x(1);
  x << 0.4;
  // mu_ref = delta_x: centering removes the atom entirely
  DiscreteMeasure dx = DiscreteMeasure::dirac(x);
  for (double xi : {-0.5, 0.0, 0.4, 1.0}) {
    EXPECT_DOUBLE_EQ(phi_eps(Vec::Constant(1, xi), x, dx, k), 0.0);
  }
  // far xi: compact support kills both terms
  NoiseStream ns(8, 1);
  Mat pts(20, 1);
  for (int i = 0; i < 20; ++i) pts(i, 0) = ns.normal(static_cast<std::uint64_t>(i), 0);
  DiscreteMeasure mu = DiscreteMeasure::equal_weights(pts);
  EXPECT_DOUBLE_EQ(phi_eps(Vec::Constant(1, 50.0), x, mu, k), 0.0);
  // exact centering identity: sum_j w_j phi(xi, y_j) = 0
  for (double xi : {-0.3, 0.1, 0.8}) {
    double s = 0.0;
    for (long j = 0; j < mu.size(); ++j) {
      s += mu.weights[j] * phi_eps(Vec::Constant(1, xi), mu.point(j), mu, k);
    }
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
}

TEST(measures, kernel_discretize_preserves_mass_and_bounds_moment) {
  for (auto base : {MollifierBase::TriangleProduct, MollifierBase::EpanechnikovProduct}) {
    for (int d : {1, 2}) {
      MollifierKernel k = MollifierKernel::make(base, 0.4, d);
      DiscreteMeasure m = k.discretize(d == 1 ? 16 : 6);
      m.validate(1e-9);
      double m2 = 0.0;
      for (long i = 0; i < m.size(); ++i) m2 += m.weights[i] * m.point(i).squaredNorm();
      EXPECT_LE(m2, 0.16 * k.zeta_sq() + 1e-12);      // Jensen
      EXPECT_GE(m2, 0.16 * k.zeta_sq() * 0.8);        // and not degenerate
    }
  }
}

TEST(measures, empirical_moment_examples) {
  SDEModel ou = make_ou(1.0, 1.0);
  DiscreteMeasure mu = reference_invariant(ou, 10000, 0.0);

  MomentReport p0 = empirical_moment(mu, 0.0);
  EXPECT_DOUBLE_EQ(p0.p_moments.at(0.0).mean, 1.0);

  MomentReport p2 = empirical_moment(mu, 2.0, 0.5);
  EXPECT_NEAR(p2.p_moments.at(2.0).mean, 0.5, 3.0 * std::max(p2.p_moments.at(2.0).se, 1e-3));
  // Gaussian square MGF (1 - 2 lambda v)^{-1/2} with v = 0.5
  ASSERT_TRUE(p2.exp_moment.has_value());
  double expect = 1.0 / std::sqrt(1.0 - 2.0 * 0.5 * 0.5);
  EXPECT_NEAR(p2.exp_moment->second.mean, expect, 3.0 * std::max(p2.exp_moment->second.se, 1e-3));
  EXPECT_GE(p2.a_certified, 2.0);  // all Gaussian moments stabilize

  EXPECT_THROW(empirical_moment(mu, -1.0), Error);
}

TEST(measures, default_exp_lambda_matches_appendix_constraint) {
  SDEModel ou = make_ou(1.0, 1.0);
  double lam = default_exp_lambda(ou, 2.0);
  EXPECT_DOUBLE_EQ(lam, 0.5);  // alpha / (4 sigma_sup^2)
  SDEModel cubic = make_cubic(1.0, 1.0);
  EXPECT_GT(default_exp_lambda(cubic, 2.0), 0.0);
}

TEST(measures, invariant_mean_gauss_hermite) {
  SDEModel ou = make_ou(1.0, 1.0);
  EXPECT_NEAR(invariant_mean(ou, [](const Vec& x) { return x[0]; }), 0.0, 1e-12);
  EXPECT_NEAR(invariant_mean(ou, [](const Vec& x) { return x.squaredNorm(); }), 0.5, 1e-10);
  EXPECT_NEAR(invariant_mean(ou, [](const Vec& x) { return x[0] * x[0] * x[0] * x[0]; }),
              3.0 * 0.25, 1e-8);
}

TEST(measures, thin_measure_systematic) {
  Mat pts(1000, 1);
  for (int i = 0; i < 1000; ++i) pts(i, 0) = i;
  DiscreteMeasure mu = DiscreteMeasure::equal_weights(pts);
  DiscreteMeasure t = thin_measure(mu, 100);
  EXPECT_EQ(t.size(), 100);
  EXPECT_NEAR(t.weights.sum(), 1.0, 1e-12);
  double m1_full = mu.integrate([](const Vec& x) { return x[0]; });
  double m1_thin = t.integrate([](const Vec& x) { return x[0]; });
  EXPECT_NEAR(m1_thin, m1_full, 5.0);
}
