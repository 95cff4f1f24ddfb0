// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Dynamics-sensitive criteria run at two dt values to expose
// discretization bias.

#include "ergow2/harness.hpp"

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace ergow2;

namespace {

struct Gate {
  bool all_ok = true;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void line(int n, const std::string& name, bool ok, const std::string& detail) {
    auto now = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(now - t0).count();
    t0 = now;
    std::printf("[%s] criterion %2d: %-34s %s (%.1fs)\n", ok ? "PASS" : "FAIL", n, name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
};

DiscreteMeasure random_measure(std::uint64_t seed, long n, double scale = 1.0, double shift = 0.0) {
  NoiseStream ns(seed, 1);
  Mat pts(n, 1);
  Vec w(n);
  for (long i = 0; i < n; ++i) {
    pts(i, 0) = scale * ns.normal(static_cast<std::uint64_t>(i), 0) + shift;
    w[i] = 0.05 + ns.uniform(static_cast<std::uint64_t>(i), 8);
  }
  return DiscreteMeasure::from_rows(std::move(pts), std::move(w));
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

// --- criterion 1 -----------------------------------------------------------
void criterion_1(Gate& gate) {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    long n = 32 + static_cast<long>((i * 37) % 97);   // up to 128 atoms
    long m = 32 + static_cast<long>((i * 53) % 97);
    DiscreteMeasure mu = random_measure(10 + i, n);
    DiscreteMeasure nu = random_measure(500 + i, m, 1.0 + 0.01 * static_cast<double>(i % 7),
                                        0.02 * static_cast<double>(i % 11));
    double q = w2_1d_quantile(mu, nu).value;
    double e = w2_exact_discrete(mu, nu, false).value;
    worst = std::max(worst, std::abs(q - e) / std::max(q, 1e-30));
  }
  bool ok = worst <= 1e-9;
  double worst_gap_violation = -1.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    DiscreteMeasure mu = random_measure(900 + i, 64);
    DiscreteMeasure nu = random_measure(950 + i, 64, 1.3, 0.4);
    double e = w2_exact_discrete(mu, nu, false).value;
    W2Result s = w2_entropic(mu, nu, 0.05);
    worst_gap_violation = std::max(worst_gap_violation, std::abs(s.value - e) - s.gap);
  }
  ok = ok && worst_gap_violation <= 1e-12;
  gate.line(1, "OT solver oracle equivalence", ok,
            "max rel diff " + fmt(worst) + ", entropic slack " + fmt(-worst_gap_violation));
}

// --- criterion 2 -----------------------------------------------------------
void criterion_2(Gate& gate) {
  SDEModel ou = make_ou(1.0, 1.0);
  IntegratorConfig cfg;
  cfg.dt = 1e-4;
  cfg.record_stride = 10000;
  Vec x0(1), y0(1);
  x0 << 2.0;
  y0 << -1.0;
  CouplingRecord rec = simulate_coupled(ou, x0, y0, 4.0, cfg);
  double worst_ou = 0.0;
  for (std::size_t k : {1u, 2u, 4u}) {
    worst_ou = std::max(worst_ou, std::abs(rec.ratios[k] - std::exp(-rec.times[k])));
  }
  bool ok = worst_ou <= 1e-3;

  SDEModel cubic = make_cubic(1.0, 1.0);
  double worst_margin = 1e300;
  for (double dt : {1e-3, 2e-3}) {
    const long reps = 200;
    IntegratorConfig c;
    c.dt = dt;
    c.record_stride = static_cast<long>(std::llround(1.0 / dt));
    Mat ratios(reps, 4);
    for (long r = 0; r < reps; ++r) {
      IntegratorConfig cr = c;
      cr.stream = make_stream(StreamPurpose::Path, static_cast<std::uint64_t>(r));
      CouplingRecord rc = simulate_coupled(cubic, x0, y0, 4.0, cr);
      for (int k = 1; k <= 4; ++k) ratios(r, k - 1) = rc.ratios[static_cast<std::size_t>(k)];
    }
    const double rel_se = 1.0 / std::sqrt(2.0 * reps);
    for (int k : {1, 2, 4}) {
      double ms = 0.0;
      for (long r = 0; r < reps; ++r) ms += ratios(r, k - 1) * ratios(r, k - 1);
      double rms = std::sqrt(ms / reps);
      double envelope = std::exp(-static_cast<double>(k)) * (1.0 + 3.0 * rel_se);
      ok = ok && rms <= envelope;
      worst_margin = std::min(worst_margin, envelope - rms);
    }
  }
  gate.line(2, "coupling contraction", ok,
            "ou max err " + fmt(worst_ou) + ", cubic min margin " + fmt(worst_margin));
}

// --- criterion 3 -----------------------------------------------------------
void criterion_3(Gate& gate) {
  SDEModel ou = make_ou(1.0, 1.0);
  bool ok = true;
  std::string detail;
  for (double dt : {1e-2, 5e-3}) {
    IntegratorConfig cfg;
    cfg.dt = dt;
    auto rows = time_average_error(ou, test_function("id"), {100.0, 1000.0, 10000.0}, 200, cfg);
    double expect = std::sqrt(2.0 / M_PI) * 0.1;  // 0.0798 at t = 100
    bool level_ok = std::abs(rows[0].mean_abs - expect) <= 3.0 * rows[0].se;
    std::vector<double> ts, ys;
    for (const auto& r : rows) {
      ts.push_back(r.t);
      ys.push_back(r.mean_abs);
    }
    RateFitResult fit = fit_rate(ts, ys);
    bool slope_ok = fit.slope <= -0.4;
    ok = ok && level_ok && slope_ok;
    if (dt == 1e-2) {
      detail = "mean(100)=" + fmt(rows[0].mean_abs) + " (target 0.0798), slope=" + fmt(fit.slope);
    }
  }
  gate.line(3, "Lemma 2.2 time-average rate", ok, detail);
}

// --- criterion 4 -----------------------------------------------------------
void criterion_4(Gate& gate) {
  SDEModel ou = make_ou(1.0, 1.0);
  Mat grid(9, 1);
  for (int i = 0; i < 9; ++i) grid(i, 0) = -2.0 + 0.5 * i;
  CoboundaryOptions opts;
  opts.dt = 2e-3;
  CoboundaryEstimate est = estimate_coboundary(ou, test_function("id"), grid, 1e-3, 600, opts);
  bool value_ok = true;
  double worst_z = 0.0;
  for (long r = 0; r < grid.rows(); ++r) {
    PointEstimate pe = est.evaluate(grid.row(r).transpose());
    double z = std::abs(pe.value - grid(r, 0)) / std::max(pe.se, 1e-12);
    worst_z = std::max(worst_z, z);
    value_ok = value_ok && std::abs(pe.value - grid(r, 0)) <= 3.0 * pe.se + 5e-3;
  }
  bool lip_ok = true;
  const double bound = 2.0 * 1.0 / est.alpha;  // = 1, attained for OU f = id
  for (long r = 0; r + 1 < grid.rows(); ++r) {
    PointEstimate a = est.evaluate(grid.row(r).transpose());
    PointEstimate b = est.evaluate(grid.row(r + 1).transpose());
    double dx = grid(r + 1, 0) - grid(r, 0);
    double ratio = std::abs(b.value - a.value) / dx;
    double pair_se = std::sqrt(a.se * a.se + b.se * b.se) / dx;
    lip_ok = lip_ok && ratio <= bound + 3.0 * pair_se;
  }

  // mean-square windowed residual halves with dt (f = x^2, closed-form omega)
  TestFunction sq{"square", [](const Vec& x) { return x[0] * x[0]; }, 4.0};
  CoboundaryEstimate closed = CoboundaryEstimate::from_function(
      ou, sq, [](const Vec& x) { return (x[0] * x[0] - 0.5) / 2.0; }, 0.5,
      [](const Vec& x) { return Vec::Constant(1, x[0]); });
  const double window = 0.5;
  const double horizon = 85.5;
  auto mean_square = [&](double dt) {
    double acc = 0.0;
    long count = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      IntegratorConfig cfg;
      cfg.dt = dt;
      cfg.seed = seed;
      cfg.record_increments = true;
      IntegratorConfig wc = cfg;
      wc.stream = 999;
      Trajectory traj = integrate(ou, warm_start(ou, wc, 0.0), horizon, cfg);
      long rows_per_window = static_cast<long>(std::llround(window / dt));
      long n_windows = (traj.n() - 1) / rows_per_window;
      for (long w = 0; w < n_windows; ++w) {
        Trajectory sub;
        sub.times.assign(static_cast<std::size_t>(rows_per_window + 1), 0.0);
        sub.states = traj.states.middleRows(w * rows_per_window, rows_per_window + 1);
        sub.increments = traj.increments.middleRows(w * rows_per_window, rows_per_window);
        for (long i = 0; i <= rows_per_window; ++i) {
          sub.times[static_cast<std::size_t>(i)] = static_cast<double>(i) * dt;
        }
        double r = decomposition_residual(ou, closed, sub).residual;
        acc += r * r;
        ++count;
      }
    }
    return acc / static_cast<double>(count);
  };
  double ms1 = mean_square(1e-2);
  double ms2 = mean_square(5e-3);
  double ms3 = mean_square(2.5e-3);
  double ratio21 = ms2 / ms1, ratio32 = ms3 / ms2;
  bool halving_ok = ratio21 >= 0.35 && ratio21 <= 0.65 && ratio32 >= 0.35 && ratio32 <= 0.65;

  gate.line(4, "coboundary identities", value_ok && lip_ok && halving_ok,
            "max |omega-x|/se " + fmt(worst_z) + ", msq ratios " + fmt(ratio21) + "/" + fmt(ratio32));
}

// --- criterion 5 -----------------------------------------------------------
void criterion_5(Gate& gate) {
  SDEModel ou = make_ou(1.0, 1.0);
  std::vector<double> ts = {100.0, 464.0, 2154.0, 10000.0};
  bool ok = true;
  std::string detail;
  for (double dt : {1e-2, 5e-3}) {
    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.seed = 2;
    W2Spec spec;
    RateTable table = rate_experiment(ou, ts, 64, spec, cfg);
    RateFitResult fit = fit_rate(table.ts(), table.adjusted());
    double b12 = -theoretical_exponents(1, 2.0).l2_exponent;      // -1/14
    double b13 = -theoretical_exponents(1, 2.0).exp_l2_exponent;  // -1/8
    ok = ok && fit.slope + fit.slope_ci_halfwidth <= b12 && fit.slope + fit.slope_ci_halfwidth <= b13;
    if (dt == 1e-2) {
      detail = "slope=" + fmt(fit.slope) + " ci=" + fmt(fit.slope_ci_halfwidth) + " floor=" +
               fmt(table.ref_floor);
    }
  }
  gate.line(5, "Theorem 1.2(i)/1.3(i) direction", ok, detail);
}

// --- criterion 6 -----------------------------------------------------------
void criterion_6(Gate& gate) {
  TheoreticalRates r = theoretical_exponents(1, 2.0);
  bool ok = r.l2_exponent == 1.0 / 14.0 && r.as_exponent == 1.0 / 36.0 &&
            r.exp_l2_exponent == 0.125 && r.exp_l2_log_power == 0.375;
  double worst = 0.0;
  for (int d : {1, 2, 3}) {
    double lim = std::abs(theoretical_exponents(d, 1e6).l2_exponent - 1.0 / (2.0 * (d + 3)));
    worst = std::max(worst, lim);
    ok = ok && lim < 1e-4;
  }
  gate.line(6, "theoretical exponent formulas", ok, "a->inf defect " + fmt(worst));
}

// --- criterion 7 -----------------------------------------------------------
void criterion_7(Gate& gate) {
  ZSpec unit;  // Z == 1
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  ConcentrationReport b = concentration_check(ConcentrationKind::Bounded, unit, 4.0, PsiSpec{},
                                              {2.0}, 10000, cfg);
  double expect = 2.0 * normal_cdf(-2.0);  // 0.0455
  bool ok = std::abs(b.empirical_tail[0] - expect) <= 3.0 * b.binomial_se[0] &&
            b.empirical_tail[0] <= 2.0 * std::exp(-2.0);

  ZSpec lin;
  lin.kind = ZKind::StateLinear;
  lin.model = make_ou(1.0, 1.0);
  double worst_excess = -1e300;
  for (double dt : {1e-3, 2e-3}) {
    IntegratorConfig c;
    c.dt = dt;
    ConcentrationReport p = concentration_check(ConcentrationKind::Polynomial, lin, 4.0, PsiSpec{},
                                                {1.0, 2.0, 4.0}, 4000, c);
    for (std::size_t i = 0; i < p.ell_grid.size(); ++i) {
      double excess = p.empirical_tail[i] - (p.bound[i] + 3.0 * p.binomial_se[i]);
      worst_excess = std::max(worst_excess, excess);
      ok = ok && excess <= 0.0;
    }
  }
  gate.line(7, "Lemma 2.5 concentration", ok,
            "P(|W_t|>2sqrt(t))=" + fmt(b.empirical_tail[0]) + " (target " + fmt(expect) + ")");
}

// --- criterion 8 -----------------------------------------------------------
void criterion_8(Gate& gate) {
  MollifierKernel k = MollifierKernel::make(MollifierBase::TriangleProduct, 0.3, 1);
  bool ok = true;
  double worst_slack = 1e300;
  for (std::uint64_t i = 0; i < 20; ++i) {
    DiscreteMeasure mu = random_measure(3000 + i, 20);
    DiscreteMeasure nu = random_measure(4000 + i, 20, 1.1, 0.2);
    GridSpec grid = default_density_grid(nu, mu, k);
    SmoothingDecomposition dec = w2_smoothing_decomposition({nu, 1.0}, mu, k, grid);
    ok = ok && dec.lhs <= dec.rhs + 1e-9 && dec.ident1_contraction_residual >= -1e-9 &&
         dec.ident1_second_moment_residual >= -1e-9;
    worst_slack = std::min(worst_slack, dec.rhs - dec.lhs);
    double self_smooth = w2_1d_quantile(mu, convolve(mu, k.discretize(16))).value;
    ok = ok && self_smooth <= k.eps * std::sqrt(k.zeta_sq()) + 1e-6;
  }
  GridSpec grid;
  grid.lo = Vec::Constant(1, -10.0);
  grid.hi = Vec::Constant(1, 10.0);
  grid.spacing = 1.0 / 64.0;
  auto gauss = [](double mean, double sd) {
    return std::function<double(const Vec&)>([mean, sd](const Vec& x) {
      double z = (x[0] - mean) / sd;
      return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    });
  };
  struct Case {
    double m1, s1, m2, s2;
  };
  for (const Case& c : {Case{0, 1, 0.1, 1}, Case{0, 1, 0.3, 1.2}, Case{-0.4, 0.9, 0.4, 1.1}}) {
    double exact_sq = (c.m1 - c.m2) * (c.m1 - c.m2) + (c.s1 - c.s2) * (c.s1 - c.s2);
    double bound = w2_density_bound(gauss(c.m1, c.s1), gauss(c.m2, c.s2), grid);
    ok = ok && bound >= exact_sq - 1e-6;
  }
  gate.line(8, "smoothing machinery", ok, "min rhs-lhs slack " + fmt(worst_slack));
}

// --- criterion 9 -----------------------------------------------------------
void criterion_9(Gate& gate) {
  std::vector<double> checkpoints = {10.0, 31.6, 100.0, 316.0, 1000.0, 3162.0, 10000.0};
  bool envelope_ok = true;
  for (const auto& model : {make_ou(1.0, 1.0), make_bounded_sigma(4.0, 1.0, 0.5)}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      IntegratorConfig cfg;
      cfg.dt = 1e-2;
      cfg.seed = seed;
      ASPathOptions opts;
      ASPathTable t = as_path_study(model, 10000.0, checkpoints, cfg, opts);
      envelope_ok = envelope_ok && t.max_attained_by(1000.0);
    }
  }
  bool slope_ok = true;
  double slope1 = 0.0;
  for (double dt : {1e-2, 5e-3}) {
    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.seed = 6;
    DisplacementTable disp =
        displacement_decay_check(make_ou(1.0, 1.0), {100.0, 1000.0, 10000.0}, 400, cfg);
    RateFitResult fit = disp.fit();
    slope_ok = slope_ok && std::abs(fit.slope + 1.0) <= 0.05;
    if (dt == 1e-2) slope1 = fit.slope;
  }
  gate.line(9, "a.s. envelopes + displacement", envelope_ok && slope_ok,
            "disp slope " + fmt(slope1) + " (target -1 +- 0.05)");
}

// --- criterion 10 ----------------------------------------------------------
void criterion_10(Gate& gate) {
  auto kron = averaging_lemma_check(AveragingKind::Kronecker, PowerFunc{1.0, 0.0},
                                    PowerFunc{1.0, -0.5}, 10000.0);
  double target = 2.0 * (std::sqrt(10000.0) - 1.0) / 10000.0;
  bool ok = std::abs(kron.back().value - target) <= 1e-6;

  AveragingOptions opts;
  opts.replications = 2000;
  auto sk = averaging_lemma_check(AveragingKind::StochasticKronecker, PowerFunc{1.0, -0.25},
                                  PowerFunc{1.0, 0.0}, 10000.0, opts);
  double sk_target = std::sqrt(2.0) / 100.0;
  ok = ok && std::abs(sk.back().value - sk_target) <= 3.0 * sk.back().se;
  gate.line(10, "averaging lemmas", ok,
            "kronecker err " + fmt(std::abs(kron.back().value - target)) + ", sk rms " +
                fmt(sk.back().value));
}

}  // namespace

int main() {
  Gate gate;
  criterion_1(gate);
  criterion_2(gate);
  criterion_3(gate);
  criterion_4(gate);
  criterion_5(gate);
  criterion_6(gate);
  criterion_7(gate);
  criterion_8(gate);
  criterion_9(gate);
  criterion_10(gate);
  std::printf("%s\n", gate.all_ok ? "ALL ACCEPTANCE CRITERIA PASSED" : "ACCEPTANCE FAILURES PRESENT");
  return gate.all_ok ? 0 : 1;
}
