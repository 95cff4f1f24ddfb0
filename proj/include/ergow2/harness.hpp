#pragma once

#include "ergow2/coboundary.hpp"
#include "ergow2/transport.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ergow2 {

// ---------------------------------------------------------------------------
// Rate exponents.

struct TheoreticalRates {
  int d = 1;
  double a = 1.0;
  double l2_exponent = 0.0;       // a / (2 (2(d+2) + a(d+3)))
  double as_exponent = 0.0;       // zeta_a = a^2 / (2(2+a){2(d+2) + (d+3)(a+d)})
  double exp_l2_exponent = 0.0;   // 1 / (2(d+3))
  double exp_l2_log_power = 0.0;  // (d+2) / (2(d+3))
  double exp_as_exponent = 0.0;   // 1 / (2(d+3))
};

inline TheoreticalRates theoretical_exponents(int d, double a) {
  require(d >= 1, Err::InvalidParameter, "theoretical_exponents: d >= 1");
  require(a > 0.0, Err::InvalidParameter, "theoretical_exponents: a > 0");
  TheoreticalRates r;
  r.d = d;
  r.a = a;
  const double dd = static_cast<double>(d);
  r.l2_exponent = a / (2.0 * (2.0 * (dd + 2.0) + a * (dd + 3.0)));
  r.as_exponent = a * a / (2.0 * (2.0 + a) * (2.0 * (dd + 2.0) + (dd + 3.0) * (a + dd)));
  r.exp_l2_exponent = 1.0 / (2.0 * (dd + 3.0));
  r.exp_l2_log_power = (dd + 2.0) / (2.0 * (dd + 3.0));
  r.exp_as_exponent = r.exp_l2_exponent;
  return r;
}

// Smoothing/truncation schedules used in the paper's proofs, exposed as presets
// for exploratory runs only; the constants carry no optimality claim.
struct ProofSchedules {
  static double eps_poly(long n, double r) { return std::pow(static_cast<double>(n), -r); }
  static double radius_poly(long n, int d, double kappa) {
    return 2.0 * std::sqrt(static_cast<double>(d)) * std::pow(static_cast<double>(n), kappa);
  }
  static double eps_exp(long n, int d) {
    double nn = static_cast<double>(std::max<long>(n, 2));
    return std::pow(nn, -1.0 / (2.0 * (d + 3))) * std::sqrt(std::log(nn) / (d + 3));
  }
  static double radius_exp(long n, int d, double lambda) {
    double nn = static_cast<double>(std::max<long>(n, 2));
    return 2.0 * std::sqrt(std::log(nn) / (std::min(lambda, 1.0) * (d + 3)));
  }
};

// ---------------------------------------------------------------------------
// Log-log least squares.

struct RateFitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  double slope_ci_halfwidth = 0.0;  // 95%
  int n_points = 0;
};

inline RateFitResult fit_rate(const std::vector<double>& ts, const std::vector<double>& ys) {
  require(ts.size() == ys.size(), Err::InvalidParameter, "fit_rate: length mismatch");
  const int n = static_cast<int>(ts.size());
  require(n >= 3, Err::InvalidParameter, "fit_rate: need >= 3 points");
  std::vector<double> lx(ts.size()), ly(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    require(ts[i] > 0.0 && ys[i] > 0.0, Err::NonPositiveValue, "fit_rate: non-positive input");
    lx[i] = std::log(ts[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += lx[static_cast<std::size_t>(i)];
    my += ly[static_cast<std::size_t>(i)];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    double dx = lx[static_cast<std::size_t>(i)] - mx, dy = ly[static_cast<std::size_t>(i)] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0.0, Err::InvalidParameter, "fit_rate: degenerate abscissae");
  RateFitResult fit;
  fit.n_points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    double r = ly[static_cast<std::size_t>(i)] - (fit.intercept + fit.slope * lx[static_cast<std::size_t>(i)]);
    ssr += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  if (n > 2) {
    double se = std::sqrt(std::max(0.0, ssr / (n - 2)) / sxx);
    fit.slope_ci_halfwidth = student_t_975(n - 2) * se;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// W2 rate experiment (Theorems 1.2(i)/1.3(i) at desk scale).

struct W2Spec {
  std::optional<W2Method> method;  // default: quantile in d=1, exact_lp otherwise
  double reg = 0.05;               // entropic regularization
  long max_support = 512;          // thinning bound for exact/entropic in d >= 2
  long n_ref = 10000;

  W2Method resolved(int d) const {
    if (method) return *method;
    return d == 1 ? W2Method::Quantile1D : W2Method::ExactLP;
  }
};

struct RateRow {
  double t = 0.0;
  double w2_mean = 0.0;
  double w2_sq_mean = 0.0;
  double se = 0.0;
  double w2_adj = 0.0;  // sqrt(max(w2_sq_mean - floor^2, 0)): reference floor removed
  W2Method method = W2Method::Quantile1D;
  double gap_mean = 0.0;
};

struct RateTable {
  std::vector<RateRow> rows;
  double ref_floor = 0.0;  // split-half self-distance of the reference sample
  long replications = 0;

  std::vector<double> ts() const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.t);
    return v;
  }
  std::vector<double> adjusted() const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(std::max(r.w2_adj, 1e-12));
    return v;
  }
};

namespace detail {

inline W2Result w2_dispatch(const DiscreteMeasure& a, const DiscreteMeasure& b, const W2Spec& spec,
                            int d) {
  switch (spec.resolved(d)) {
    case W2Method::Quantile1D: return w2_1d_quantile(a, b);
    case W2Method::ExactLP:
      return w2_exact_discrete(thin_measure(a, spec.max_support), thin_measure(b, spec.max_support),
                               false);
    case W2Method::Entropic:
      return w2_entropic(thin_measure(a, spec.max_support), thin_measure(b, spec.max_support),
                         spec.reg);
    case W2Method::Synthetic: break;
  }
  throw Error(Err::Internal, "bad W2 method");
}

}  // namespace detail

struct RateOptions {
  double record_spacing = 0.05;  // occupation grid resolution (time units)
  double burn_in_factor = 10.0;  // burn_in = factor / alpha for warm starts
};

// Geometric grids with >= 4 checkpoints are recommended for theorem-grade
// fits; the table itself is defined for any >= 2.
inline RateTable rate_experiment(const SDEModel& model, const std::vector<double>& t_grid,
                                 long replications, const W2Spec& w2_spec,
                                 const IntegratorConfig& cfg, const RateOptions& opts = {}) {
  require(t_grid.size() >= 2, Err::InvalidParameter, "rate_experiment: need >= 2 checkpoints");
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    require(t_grid[k] > t_grid[k - 1], Err::InvalidParameter, "rate_experiment: t grid not increasing");
  }
  double alpha = model.alpha_or_throw();
  const int d = model.dim;

  IntegratorConfig ref_cfg = cfg;
  ref_cfg.stream = make_stream(StreamPurpose::Invariant, 7);
  DiscreteMeasure ref = reference_invariant(model, w2_spec.n_ref, 10.0 / alpha, ref_cfg);

  // Reference sampling floor from the split-half self-distance. Each half
  // carries twice the full sample's W2^2 error and the cross-distance adds the
  // two, so E W2^2(h1, h2) ~ 4 E W2^2(ref, mu): the floor is half that distance.
  const long half = ref.size() / 2;
  DiscreteMeasure refA, refB;
  refA.points = ref.points.topRows(half);
  refA.weights = Vec::Constant(half, 1.0 / static_cast<double>(half));
  refB.points = ref.points.bottomRows(ref.size() - half);
  refB.weights = Vec::Constant(ref.size() - half, 1.0 / static_cast<double>(ref.size() - half));
  double floor = 0.5 * detail::w2_dispatch(refA, refB, w2_spec, d).value;

  const long stride = std::max<long>(1, static_cast<long>(std::llround(opts.record_spacing / cfg.dt)));
  const double horizon = t_grid.back();
  const double spacing = static_cast<double>(stride) * cfg.dt;
  std::vector<long> check_rows;
  for (double t : t_grid) {
    long rows = static_cast<long>(std::llround(t / spacing));
    require(rows >= 2, Err::InvalidParameter, "rate_experiment: checkpoint below record spacing");
    check_rows.push_back(rows);
  }

  const std::size_t K = t_grid.size();
  Mat w2(replications, static_cast<long>(K));
  Mat gap(replications, static_cast<long>(K));
  parallel_for(static_cast<std::size_t>(replications), [&](std::size_t rep) {
    IntegratorConfig c = cfg;
    c.stream = make_stream(StreamPurpose::Path, rep);
    c.record_stride = stride;
    IntegratorConfig warm_cfg = cfg;
    warm_cfg.stream = make_stream(StreamPurpose::Warm, rep);
    Vec x0 = warm_start(model, warm_cfg, opts.burn_in_factor / alpha);
    Trajectory traj = integrate(model, x0, horizon, c);
    for (std::size_t k = 0; k < K; ++k) {
      long rows = std::min<long>(check_rows[k], traj.n() - 1);
      DiscreteMeasure occ;
      occ.points = traj.states.topRows(rows);
      occ.weights = Vec::Constant(rows, 1.0 / static_cast<double>(rows));
      W2Result res = detail::w2_dispatch(occ, ref, w2_spec, d);
      w2(static_cast<long>(rep), static_cast<long>(k)) = res.value;
      gap(static_cast<long>(rep), static_cast<long>(k)) = res.gap;
    }
  });

  RateTable table;
  table.replications = replications;
  table.ref_floor = floor;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> col(static_cast<std::size_t>(replications));
    double sq = 0.0, g = 0.0;
    for (long r = 0; r < replications; ++r) {
      double v = w2(r, static_cast<long>(k));
      col[static_cast<std::size_t>(r)] = v;
      sq += v * v;
      g += gap(r, static_cast<long>(k));
    }
    auto ms = mean_stderr(col);
    RateRow row;
    row.t = t_grid[k];
    row.w2_mean = ms.mean;
    row.w2_sq_mean = sq / replications;
    row.se = ms.se;
    row.method = w2_spec.resolved(d);
    row.gap_mean = g / replications;
    row.w2_adj = std::sqrt(std::max(row.w2_sq_mean - floor * floor, 0.0));
    table.rows.push_back(row);
  }
  return table;
}

// Synthetic injection mode: bypasses simulation entirely and echoes the given
// law through the table plumbing.
inline RateTable rate_table_from_law(const std::vector<double>& t_grid,
                                     const std::function<double(double)>& w2_law) {
  RateTable table;
  table.replications = 1;
  table.ref_floor = 0.0;
  for (double t : t_grid) {
    RateRow row;
    row.t = t;
    row.w2_mean = w2_law(t);
    row.w2_sq_mean = row.w2_mean * row.w2_mean;
    row.w2_adj = row.w2_mean;
    row.method = W2Method::Synthetic;
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Almost-sure envelope study on a single long path.

struct ASPathRow {
  double t = 0.0;
  double w2 = 0.0;
  double ratio = 0.0;        // w2 * t^zeta / log^{1/2+eta}(t)
  double running_max = 0.0;
};

struct ASPathTable {
  std::vector<ASPathRow> rows;
  double zeta = 0.0;
  double eta = 0.1;
  double a_certified = 0.0;

  // finite-horizon surrogate for the o_eta claim: the running max must be
  // attained no later than t_star ...
  bool max_attained_by(double t_star) const {
    double mx = 0.0;
    double arg = rows.empty() ? 0.0 : rows.front().t;
    for (const auto& r : rows) {
      if (r.ratio > mx) {
        mx = r.ratio;
        arg = r.t;
      }
    }
    return arg <= t_star;
  }
  // ... equivalently, non-increasing running max after the first checkpoint
  // beyond t0.
  bool running_max_flat_after(double t0) const {
    double mx = 0.0;
    bool past = false;
    for (const auto& r : rows) {
      if (past && r.ratio > mx + 1e-15) return false;
      mx = std::max(mx, r.ratio);
      if (r.t > t0) past = true;
    }
    return true;
  }
};

struct ASPathOptions {
  long n_ref = 10000;
  double eta = 0.1;
  double record_spacing = 0.05;
  std::optional<double> zeta_override;
};

inline ASPathTable as_path_study(const SDEModel& model, double horizon,
                                 const std::vector<double>& checkpoints,
                                 const IntegratorConfig& cfg, const ASPathOptions& opts = {}) {
  require(checkpoints.size() >= 4, Err::InvalidParameter, "as_path_study: need >= 4 checkpoints");
  double alpha = model.alpha_or_throw();
  IntegratorConfig ref_cfg = cfg;
  ref_cfg.stream = make_stream(StreamPurpose::Invariant, 11);
  DiscreteMeasure ref = reference_invariant(model, opts.n_ref, 10.0 / alpha, ref_cfg);

  ASPathTable table;
  table.eta = opts.eta;
  MomentReport mom = empirical_moment(ref, 2.0, std::nullopt, cfg.seed);
  table.a_certified = mom.a_certified;
  if (opts.zeta_override) {
    table.zeta = *opts.zeta_override;
  } else if (model.sigma_bounded) {
    table.zeta = theoretical_exponents(model.dim, 2.0).exp_as_exponent;
  } else {
    double a = std::max(0.5, mom.a_certified);
    table.zeta = theoretical_exponents(model.dim, a).as_exponent;
  }

  IntegratorConfig c = cfg;
  c.record_stride = std::max<long>(1, static_cast<long>(std::llround(opts.record_spacing / cfg.dt)));
  IntegratorConfig warm_cfg = cfg;
  warm_cfg.stream = cfg.stream ^ kWarmSalt;
  Vec x0 = warm_start(model, warm_cfg, 10.0 / alpha);
  Trajectory traj = integrate(model, x0, horizon, c);
  const double spacing = static_cast<double>(c.record_stride) * cfg.dt;

  double running = 0.0;
  for (double t : checkpoints) {
    long rows = std::min<long>(static_cast<long>(std::llround(t / spacing)), traj.n() - 1);
    require(rows >= 2, Err::InvalidParameter, "as_path_study: checkpoint below record spacing");
    DiscreteMeasure occ;
    occ.points = traj.states.topRows(rows);
    occ.weights = Vec::Constant(rows, 1.0 / static_cast<double>(rows));
    double w2 = model.dim == 1 ? w2_1d_quantile(occ, ref).value
                               : w2_exact_discrete(thin_measure(occ, 256), thin_measure(ref, 256), false).value;
    ASPathRow row;
    row.t = t;
    row.w2 = w2;
    row.ratio = w2 * std::pow(t, table.zeta) / std::pow(std::log(std::max(t, 2.0)), 0.5 + opts.eta);
    running = std::max(running, row.ratio);
    row.running_max = running;
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Displacement decay (Lemma 2.3): E|X_t - X_0|/t = O(1/t) plus the single-path
// almost-sure envelope with a' = min(a_certified, 2).

struct DisplacementRow {
  double t = 0.0;
  double mean_over_t = 0.0;  // E|X_t - X_0| / t
  double se = 0.0;
  double path_ratio = 0.0;   // single-path (|X_t-X_0|/t) / envelope(t)
  double running_max = 0.0;
};

struct DisplacementTable {
  std::vector<DisplacementRow> rows;
  double a_prime = 2.0;
  double eta = 0.1;

  RateFitResult fit() const {
    std::vector<double> ts, ys;
    for (const auto& r : rows) {
      ts.push_back(r.t);
      ys.push_back(std::max(r.mean_over_t, 1e-300));
    }
    return fit_rate(ts, ys);
  }
  bool max_attained_by(double t_star) const {
    double mx = 0.0, arg = rows.empty() ? 0.0 : rows.front().t;
    for (const auto& r : rows) {
      if (r.path_ratio > mx) {
        mx = r.path_ratio;
        arg = r.t;
      }
    }
    return arg <= t_star;
  }
};

inline DisplacementTable displacement_decay_check(const SDEModel& model,
                                                  const std::vector<double>& t_grid,
                                                  long replications, const IntegratorConfig& cfg,
                                                  double a_certified = 2.0, double eta = 0.1) {
  require(!t_grid.empty() && t_grid.front() > 0.0, Err::InvalidParameter,
          "displacement_decay_check: t grid must start above 0");
  double alpha = model.alpha_or_throw();
  DisplacementTable table;
  table.a_prime = std::min(a_certified, 2.0);
  table.eta = eta;

  std::vector<long> check_steps;
  for (double t : t_grid) check_steps.push_back(static_cast<long>(std::llround(t / cfg.dt)));
  const double horizon = t_grid.back();
  Mat disp(replications, static_cast<long>(t_grid.size()));

  parallel_for(static_cast<std::size_t>(replications), [&](std::size_t rep) {
    IntegratorConfig c = cfg;
    c.stream = make_stream(StreamPurpose::Path, rep);
    IntegratorConfig warm_cfg = cfg;
    warm_cfg.stream = make_stream(StreamPurpose::Warm, rep);
    Vec x0 = warm_start(model, warm_cfg, 10.0 / alpha);
    std::size_t next = 0;
    integrate_visit(model, x0, horizon, c, [&](long step, double t_now, const Vec& x) {
      while (next < check_steps.size() && step + 1 == check_steps[next]) {
        disp(static_cast<long>(rep), static_cast<long>(next)) = (x - x0).norm() / t_now;
        ++next;
      }
    });
  });

  const double expo = (1.0 + table.a_prime) / (2.0 + table.a_prime);
  const double logpow = 1.0 / (1.0 + table.a_prime / 2.0) + eta;
  double running = 0.0;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    std::vector<double> col(static_cast<std::size_t>(replications));
    for (long r = 0; r < replications; ++r) col[static_cast<std::size_t>(r)] = disp(r, static_cast<long>(k));
    auto ms = mean_stderr(col);
    DisplacementRow row;
    row.t = t_grid[k];
    row.mean_over_t = ms.mean;
    row.se = ms.se;
    double envelope = std::pow(row.t, -expo) * std::pow(std::log(std::max(row.t, 2.0)), logpow);
    row.path_ratio = disp(0, static_cast<long>(k)) / envelope;
    running = std::max(running, row.path_ratio);
    row.running_max = running;
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Martingale concentration (Lemma 2.5).

enum class ZKind { Constant, SinOfState, StateLinear };

struct ZSpec {
  ZKind kind = ZKind::Constant;
  double c = 1.0;                    // for Constant
  std::optional<SDEModel> model;     // for the state-driven specs

  std::string name() const {
    switch (kind) {
      case ZKind::Constant: return "constant";
      case ZKind::SinOfState: return "sin_of_state";
      case ZKind::StateLinear: return "state_linear";
    }
    return "?";
  }
};

struct PsiSpec {
  double power = 0.5;
  double log_power = 0.0;
  double operator()(double t) const {
    return std::pow(t, power) * std::pow(std::max(std::log(t), 1.0), log_power);
  }
};

enum class ConcentrationKind { Bounded, Polynomial };

struct ConcentrationReport {
  std::vector<double> ell_grid;
  std::vector<double> empirical_tail;
  std::vector<double> binomial_se;
  std::vector<double> bound;
  ConcentrationKind part = ConcentrationKind::Bounded;
  double t = 0.0;
  std::string z_name;
};

// Provable BDG-route constant: E|M_t|^p <= C_p E<M>_t^{p/2} with
// C_p = [ p(p-1)/2 * (p/(p-1))^{p-2} ]^{p/2}, p >= 2 (Ito + Doob + Hoelder).
inline double bdg_constant(double p) {
  require(p >= 2.0, Err::InvalidParameter, "bdg_constant: p >= 2");
  return std::pow(0.5 * p * (p - 1.0) * std::pow(p / (p - 1.0), p - 2.0), 0.5 * p);
}

struct ConcentrationOptions {
  double a = 2.0;  // moment order for the polynomial part (p = a + 2)
  std::optional<double> moment_sup;  // override for sup_s E|Z_s|^{a+2}
};

inline ConcentrationReport concentration_check(ConcentrationKind kind, const ZSpec& z, double t,
                                               const PsiSpec& psi, const std::vector<double>& ell_grid,
                                               long replications, const IntegratorConfig& cfg,
                                               const ConcentrationOptions& opts = {}) {
  require(replications >= 1000, Err::InvalidParameter, "concentration_check: replications >= 1e3");
  require(t >= cfg.dt, Err::InvalidParameter, "concentration_check: t >= dt");
  if (kind == ConcentrationKind::Bounded) {
    require(z.kind != ZKind::StateLinear, Err::UnboundedZ,
            "state_linear Z is unbounded; use the polynomial part");
  }
  if (z.kind != ZKind::Constant) {
    require(z.model.has_value(), Err::InvalidParameter, "state-driven Z spec needs a model");
    require(z.model->dim == 1 && z.model->noise_dim == 1, Err::DimensionMismatch,
            "state-driven Z specs are scalar");
  }

  const long n_steps = static_cast<long>(std::llround(t / cfg.dt));
  const double sqdt = std::sqrt(cfg.dt);
  std::vector<double> mart(static_cast<std::size_t>(replications));
  parallel_for(static_cast<std::size_t>(replications), [&](std::size_t rep) {
    NoiseStream ns(cfg.seed, make_stream(StreamPurpose::Concentration, rep));
    double m = 0.0;
    if (z.kind == ZKind::Constant) {
      for (long k = 0; k < n_steps; ++k) m += z.c * ns.normal(static_cast<std::uint64_t>(k), 0) * sqdt;
    } else {
      const SDEModel& model = *z.model;
      IntegratorConfig warm_cfg = cfg;
      warm_cfg.stream = make_stream(StreamPurpose::Warm, rep);
      double x = warm_start(model, warm_cfg, 10.0 / model.alpha_or_throw())[0];
      Vec xv(1), b(1);
      Mat S(1, 1);
      for (long k = 0; k < n_steps; ++k) {
        double zval = z.kind == ZKind::SinOfState ? std::sin(x) : x;
        double dw = ns.normal(static_cast<std::uint64_t>(k), 0) * sqdt;
        m += zval * dw;
        xv[0] = x;
        model.drift(xv, b);
        model.diffusion(xv, S);
        x += b[0] * cfg.dt + S(0, 0) * dw;
      }
    }
    mart[rep] = m;
  });

  ConcentrationReport rep;
  rep.part = kind;
  rep.t = t;
  rep.z_name = z.name();
  const double psit = psi(t);
  double z_sup = z.kind == ZKind::Constant ? std::abs(z.c) : 1.0;
  double p = opts.a + 2.0;
  double moment_sup = 0.0;
  if (kind == ConcentrationKind::Polynomial) {
    if (opts.moment_sup) {
      moment_sup = *opts.moment_sup;
    } else if (z.kind == ZKind::Constant) {
      moment_sup = std::pow(std::abs(z.c), p);
    } else if (z.kind == ZKind::SinOfState) {
      moment_sup = 1.0;
    } else {
      moment_sup = invariant_mean(*z.model, [p](const Vec& y) { return std::pow(y.norm(), p); }, cfg);
    }
  }
  for (double ell : ell_grid) {
    long exceed = 0;
    for (double m : mart) {
      if (std::abs(m) > ell * psit) ++exceed;
    }
    double freq = static_cast<double>(exceed) / static_cast<double>(replications);
    rep.ell_grid.push_back(ell);
    rep.empirical_tail.push_back(freq);
    rep.binomial_se.push_back(std::sqrt(std::max(freq * (1.0 - freq), 1.0 / replications) /
                                        static_cast<double>(replications)));
    if (kind == ConcentrationKind::Bounded) {
      rep.bound.push_back(2.0 * std::exp(-ell * ell * psit * psit / (2.0 * z_sup * z_sup * t)));
    } else {
      double denom = std::pow(ell * psit, p);
      rep.bound.push_back(denom > 0.0
                              ? bdg_constant(p) * moment_sup * std::pow(t, 0.5 * p) / denom
                              : std::numeric_limits<double>::infinity());
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Cesaro / Kronecker averaging checks (Appendix A.3).

enum class AveragingKind { Cesaro, Kronecker, StochasticKronecker };

// g(s) = c s^p on the integration domain.
struct PowerFunc {
  double c = 1.0;
  double p = 0.0;
  double operator()(double s) const { return c * std::pow(s, p); }
};

struct AveragingRow {
  double t = 0.0;
  double value = 0.0;   // the lemma's ratio (or RMS for the stochastic part)
  double se = 0.0;
  double target = 0.0;  // limit (deterministic) or Ito-isometry RMS (stochastic)
};

namespace detail {

// int_a^b c s^p ds in closed form.
inline double power_integral(double c, double p, double a, double b) {
  if (b <= a) return 0.0;
  require(a > 0.0 || p > -1.0, Err::SpecViolation, "power integral diverges at 0");
  if (p == -1.0) return c * std::log(b / std::max(a, 1e-300));
  return c * (std::pow(b, p + 1.0) - std::pow(a, p + 1.0)) / (p + 1.0);
}

}  // namespace detail

struct AveragingOptions {
  long replications = 2000;
  int checkpoints = 8;
  double u_start = 1.0;  // numerator domain start for singular u
  std::uint64_t seed = 0;
};

inline std::vector<AveragingRow> averaging_lemma_check(AveragingKind kind, const PowerFunc& g,
                                                       const PowerFunc& u, double T,
                                                       const AveragingOptions& opts = {}) {
  require(T > 1.0, Err::InvalidParameter, "averaging_lemma_check: T > 1");
  require(g.c > 0.0, Err::SpecViolation, "g must be positive");
  require(g.p >= -1.0, Err::SpecViolation, "int g diverges only for power >= -1");

  std::vector<double> ts;
  for (int k = opts.checkpoints - 1; k >= 0; --k) ts.push_back(T / std::pow(2.0, k));

  std::vector<AveragingRow> rows;
  if (kind == AveragingKind::Cesaro || kind == AveragingKind::Kronecker) {
    for (double t : ts) {
      AveragingRow row;
      row.t = t;
      double numer_start = kind == AveragingKind::Cesaro || u.p >= 0.0 ? 0.0 : opts.u_start;
      double denom = detail::power_integral(g.c, g.p, 0.0, t);
      double numer = detail::power_integral(g.c * u.c, g.p + u.p, numer_start, t);
      row.value = numer / denom;
      row.target = kind == AveragingKind::Cesaro ? (u.p == 0.0 ? u.c : 0.0) : 0.0;
      rows.push_back(row);
    }
    return rows;
  }

  // Stochastic Kronecker, s^{-rho} form: value(t) = t^{-(1-rho)} int_a^t s^{-rho} u(s) dW_s
  // with rho = -g.p. For deterministic u the increments over any partition are
  // exactly Gaussian with the Ito-isometry variance, so one panel per
  // checkpoint interval reproduces the law exactly.
  require(g.p <= 0.0 && g.p > -1.0, Err::SpecViolation,
          "stochastic kronecker expects g(s) = s^{-rho}, rho in [0,1)");
  const double var_pow = 2.0 * (g.p + u.p);
  const double var_c = g.c * g.c * u.c * u.c;
  const double a0 = var_pow > -1.0 ? 0.0 : opts.u_start;
  std::vector<std::vector<double>> vals(ts.size(),
                                        std::vector<double>(static_cast<std::size_t>(opts.replications)));
  parallel_for(static_cast<std::size_t>(opts.replications), [&](std::size_t rep) {
    NoiseStream ns(opts.seed, make_stream(StreamPurpose::Averaging, rep));
    double acc = 0.0;
    double prev = a0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      double var = detail::power_integral(var_c, var_pow, prev, ts[k]);
      acc += std::sqrt(std::max(var, 0.0)) * ns.normal(static_cast<std::uint64_t>(k), 0);
      prev = ts[k];
      vals[k][rep] = acc / std::pow(ts[k], 1.0 + g.p);
    }
  });
  for (std::size_t k = 0; k < ts.size(); ++k) {
    AveragingRow row;
    row.t = ts[k];
    double ss = 0.0;
    for (double v : vals[k]) ss += v * v;
    row.value = std::sqrt(ss / static_cast<double>(opts.replications));
    // Ito isometry RMS
    row.target = std::sqrt(detail::power_integral(var_c, var_pow, a0, ts[k])) /
                 std::pow(ts[k], 1.0 + g.p);
    row.se = row.value / std::sqrt(2.0 * static_cast<double>(opts.replications));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ergow2
