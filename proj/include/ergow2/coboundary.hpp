#pragma once

#include "ergow2/measures.hpp"
#include "ergow2/parallel.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ergow2 {

struct TestFunction {
  std::string name;
  std::function<double(const Vec&)> f;
  double lip = 1.0;
};

inline TestFunction test_function(const std::string& name, int coord = 0) {
  if (name == "id") return {"id", [](const Vec& x) { return x[0]; }, 1.0};
  if (name == "tanh") return {"tanh", [](const Vec& x) { return std::tanh(x[0]); }, 1.0};
  if (name == "abs_smooth") {
    return {"abs_smooth", [](const Vec& x) { return std::sqrt(x[0] * x[0] + 0.01); }, 1.0};
  }
  if (name == "coordinate") {
    return {"coordinate", [coord](const Vec& x) { return x[coord]; }, 1.0};
  }
  if (name == "constant") return {"constant", [](const Vec&) { return 1.0; }, 0.0};
  throw Error(Err::ConfigError, "unknown test function '" + name + "'");
}

struct PointEstimate {
  double value = 0.0;
  double se = 0.0;
};

struct CoboundaryOptions {
  long n_ref = 4096;        // reference-invariant sample size
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int time_nodes = 48;      // geometric trapezoid grid for the t-integral
  double hard_cap_t = 200.0;
  double ellipticity_eps = 0.05;  // regularization for non-elliptic models
  std::optional<double> t_max_override;
};

// Monte Carlo approximation of omega_f(x) = int_0^{T} (P_t f(x) - mu(f)) dt with
// synchronous coupling: the integrand is estimated by E[f(X^x_t) - f(Y_t)] with
// Y stationary and driven by the same Brownian path, so its variance inherits
// the e^{-alpha t} coupling decay.
class CoboundaryEstimate {
 public:
  TestFunction f;
  double mu_f_hat = 0.0;
  double t_max = 0.0;
  double tail_tol = 0.0;
  long reps = 0;
  double alpha = 0.0;
  double eps_used = 0.0;  // > 0 when the model was regularized for ellipticity
  DiscreteMeasure mu_ref;

  static CoboundaryEstimate fit(const SDEModel& model, TestFunction f, const Mat& x_points,
                                double tail_tol, long reps, const CoboundaryOptions& opts) {
    require(tail_tol > 0.0, Err::InvalidParameter, "tail_tol must be > 0");
    require(reps >= 2, Err::InvalidParameter, "reps must be >= 2");
    CoboundaryEstimate est;
    est.f = std::move(f);
    est.tail_tol = tail_tol;
    est.reps = reps;
    est.opts_ = opts;
    est.alpha = model.alpha_or_throw();
    if (model.sigma_elliptic) {
      est.model_ = std::make_shared<SDEModel>(model);
    } else {
      est.model_ = std::make_shared<SDEModel>(regularized_model(model, opts.ellipticity_eps));
      est.eps_used = opts.ellipticity_eps;
    }
    IntegratorConfig ref_cfg;
    ref_cfg.dt = opts.dt;
    ref_cfg.seed = opts.seed;
    est.mu_ref = reference_invariant(*est.model_, opts.n_ref, 10.0 / est.alpha, ref_cfg);
    est.mu_f_hat = invariant_mean(*est.model_, est.f.f, ref_cfg, opts.n_ref);

    // First-moment spread max_x int |x - y| mu(dy) over the fitted points; with
    // the Lipschitz constant it fixes the truncation horizon via the geometric
    // tail bound |P_t f(x) - mu(f)| <= Lip(f) M1 e^{-alpha t / 2}.
    double m1 = 0.0;
    for (long r = 0; r < std::max<long>(1, x_points.rows()); ++r) {
      Vec x = x_points.rows() > 0 ? Vec(x_points.row(r % x_points.rows()).transpose())
                                  : Vec(Vec::Zero(est.model_->dim));
      double s = 0.0;
      for (long j = 0; j < est.mu_ref.size(); ++j) s += est.mu_ref.weights[j] * (x - est.mu_ref.point(j)).norm();
      m1 = std::max(m1, s);
    }
    est.m1_ = std::max(m1, 1e-12);
    double lip = std::max(est.f.lip, 1e-12);
    est.t_max = opts.t_max_override
                    ? *opts.t_max_override
                    : (2.0 / est.alpha) * std::log(std::max(lip * est.m1_ / tail_tol, std::exp(1.0)));
    require(est.t_max <= opts.hard_cap_t, Err::TailToleranceUnreachable,
            "required truncation horizon " + std::to_string(est.t_max) + " exceeds hard cap");
    est.build_time_grid();
    for (long r = 0; r < x_points.rows(); ++r) est.evaluate(x_points.row(r).transpose());
    return est;
  }

  // Analytic plug-in (exact evaluator, zero stderr); used when a closed form of
  // omega_f is known.
  static CoboundaryEstimate from_function(const SDEModel& model, TestFunction f,
                                          std::function<double(const Vec&)> omega,
                                          double mu_f_hat,
                                          std::function<Vec(const Vec&)> grad = nullptr) {
    CoboundaryEstimate est;
    est.f = std::move(f);
    est.mu_f_hat = mu_f_hat;
    est.alpha = model.alpha_or(1.0);
    est.model_ = std::make_shared<SDEModel>(model);
    est.analytic_ = std::move(omega);
    est.analytic_grad_ = std::move(grad);
    est.reps = 0;
    est.t_max = 0.0;
    return est;
  }

  bool analytic() const { return static_cast<bool>(analytic_); }
  const SDEModel& model() const { return *model_; }

  PointEstimate evaluate(const Vec& x) const {
    if (analytic_) return {analytic_(x), 0.0};
    {
      std::lock_guard<std::mutex> lock(cache_->m);
      auto it = cache_->entries.find(key(x));
      if (it != cache_->entries.end()) return it->second;
    }
    PointEstimate pe = run_monte_carlo(x);
    std::lock_guard<std::mutex> lock(cache_->m);
    cache_->entries[key(x)] = pe;
    return pe;
  }

  Vec gradient(const Vec& x, double h) const {
    if (analytic_grad_) return analytic_grad_(x);
    Vec g(x.size());
    for (int k = 0; k < x.size(); ++k) {
      Vec xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      g[k] = (evaluate(xp).value - evaluate(xm).value) / (2.0 * h);
    }
    return g;
  }

 private:
  std::vector<double> key(const Vec& x) const {
    return std::vector<double>(x.data(), x.data() + x.size());
  }

  void build_time_grid() {
    node_steps_.clear();
    const double dt = opts_.dt;
    long last = std::max<long>(1, static_cast<long>(std::llround(t_max / dt)));
    double t1 = std::max(dt, t_max / 200.0);
    const int K = std::max(8, opts_.time_nodes);
    double q = std::pow(t1 / t_max, 1.0 / (K - 1));
    node_steps_.push_back(0);
    for (int k = K - 1; k >= 0; --k) {
      double t = t_max * std::pow(q, k);
      long s = std::max<long>(1, static_cast<long>(std::llround(t / dt)));
      if (s > last) s = last;
      if (s > node_steps_.back()) node_steps_.push_back(s);
    }
    if (node_steps_.back() != last) node_steps_.push_back(last);
  }

  PointEstimate run_monte_carlo(const Vec& x) const {
    const SDEModel& model = *model_;
    const int d = model.dim, q = model.noise_dim;
    const double dt = opts_.dt, sqdt = std::sqrt(dt);
    const long n_steps = node_steps_.back();
    std::uint64_t hx = hash_vec(x);
    std::vector<double> integrals(static_cast<std::size_t>(reps));

    parallel_for(static_cast<std::size_t>(reps), [&](std::size_t rep) {
      std::uint64_t mix = (hx * 0x9E3779B97F4A7C15ull) + rep;
      NoiseStream ns(opts_.seed, make_stream(StreamPurpose::Coboundary, mix));
      // stationary partner start
      Vec y0;
      if (model.analytic_invariant_known && model.gaussian_invariant) {
        NoiseStream warm(opts_.seed, make_stream(StreamPurpose::Warm, mix));
        y0 = model.gaussian_invariant->sample(warm, 0);
      } else {
        NoiseStream pick(opts_.seed, make_stream(StreamPurpose::Warm, mix));
        long idx = static_cast<long>(pick.uniform(0, 0) * static_cast<double>(mu_ref.size()));
        if (idx >= mu_ref.size()) idx = mu_ref.size() - 1;
        y0 = mu_ref.point(idx);
      }
      Vec xx = x, yy = y0, bx(d), by(d), dw(q);
      Mat Sx(d, q), Sy(d, q);
      if (model.diffusion_constant) {
        model.diffusion(xx, Sx);
        Sy = Sx;
      }
      std::vector<double> deltas;
      deltas.reserve(node_steps_.size());
      deltas.push_back(f.f(xx) - f.f(yy));
      std::size_t next_node = 1;
      for (long step = 0; step < n_steps; ++step) {
        model.drift(xx, bx);
        model.drift(yy, by);
        if (!model.diffusion_constant) {
          model.diffusion(xx, Sx);
          model.diffusion(yy, Sy);
        }
        ns.fill_normal(static_cast<std::uint64_t>(step), dw);
        dw *= sqdt;
        xx += bx * dt;
        xx.noalias() += Sx * dw;
        yy += by * dt;
        yy.noalias() += Sy * dw;
        if (next_node < node_steps_.size() && step + 1 == node_steps_[next_node]) {
          deltas.push_back(f.f(xx) - f.f(yy));
          ++next_node;
        }
      }
      double integral = 0.0;
      for (std::size_t k = 0; k + 1 < node_steps_.size(); ++k) {
        double span = static_cast<double>(node_steps_[k + 1] - node_steps_[k]) * dt;
        integral += 0.5 * (deltas[k] + deltas[k + 1]) * span;
      }
      integrals[rep] = integral;
    });
    auto ms = mean_stderr(integrals);
    return {ms.mean, ms.se};
  }

  struct Cache {
    std::mutex m;
    std::map<std::vector<double>, PointEstimate> entries;
  };

  std::shared_ptr<SDEModel> model_;
  CoboundaryOptions opts_;
  double m1_ = 1.0;
  std::vector<long> node_steps_;
  std::function<double(const Vec&)> analytic_;
  std::function<Vec(const Vec&)> analytic_grad_;
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

inline CoboundaryEstimate estimate_coboundary(const SDEModel& model, const TestFunction& f,
                                              const Mat& x_points, double tail_tol, long reps,
                                              const CoboundaryOptions& opts = {}) {
  return CoboundaryEstimate::fit(model, f, x_points, tail_tol, reps, opts);
}

// Max over the grid of |L omega(x) - (mu(f) - f(x))| with L evaluated by central
// finite differences (drift . gradient + 1/2 Tr(Sigma Sigma^T Hessian)).
inline double generator_residual(const SDEModel& model, const CoboundaryEstimate& estimate,
                                 const Mat& x_grid, double fd_step) {
  require(x_grid.rows() >= 1, Err::InvalidParameter, "generator_residual: empty grid");
  const int d = model.dim;
  double h = fd_step;
  if (h <= 0.0) {
    double se0 = 0.0;
    for (long r = 0; r < x_grid.rows(); ++r) se0 = std::max(se0, estimate.evaluate(x_grid.row(r).transpose()).se);
    h = std::max(1e-3, std::cbrt(se0));
  }
  double scale = 1.0;
  for (long r = 0; r < x_grid.rows(); ++r) {
    scale = std::max(scale, std::abs(estimate.mu_f_hat - estimate.f.f(x_grid.row(r).transpose())));
  }
  double max_res = 0.0;
  for (long r = 0; r < x_grid.rows(); ++r) {
    Vec x = x_grid.row(r).transpose();
    double se_max = 0.0;
    auto ev = [&](const Vec& p) {
      PointEstimate pe = estimate.evaluate(p);
      se_max = std::max(se_max, pe.se);
      return pe.value;
    };
    double center = ev(x);
    Vec grad(d);
    Mat hess(d, d);
    for (int i = 0; i < d; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fp = ev(xp), fm = ev(xm);
      grad[i] = (fp - fm) / (2.0 * h);
      hess(i, i) = (fp - 2.0 * center + fm) / (h * h);
      for (int j = i + 1; j < d; ++j) {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[i] += h; xpp[j] += h;
        xpm[i] += h; xpm[j] -= h;
        xmp[i] -= h; xmp[j] += h;
        xmm[i] -= h; xmm[j] -= h;
        hess(i, j) = hess(j, i) = (ev(xpp) - ev(xpm) - ev(xmp) + ev(xmm)) / (4.0 * h * h);
      }
    }
    Mat a = estimate.model().diffusion_at(x);
    Mat aat = a * a.transpose();
    double lhs = estimate.model().drift_at(x).dot(grad) + 0.5 * (aat * hess).trace();
    double noise = estimate.model().drift_at(x).norm() * se_max * std::sqrt(2.0) / (2.0 * h) +
                   0.5 * aat.norm() * 4.0 * se_max / (h * h) * d;
    require(noise <= scale, Err::NoiseDominates,
            "estimator noise " + std::to_string(noise) + " swamps the fd stencil at step " +
                std::to_string(h));
    max_res = std::max(max_res, std::abs(lhs - (estimate.mu_f_hat - estimate.f.f(x))));
  }
  return max_res;
}

struct DecompositionReport {
  double time_avg = 0.0;
  double boundary_term = 0.0;
  double martingale_term = 0.0;
  double residual = 0.0;  // time_avg - boundary_term - martingale_term
};

namespace detail {

// Natural cubic spline through (xs, ys); evaluates the derivative.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), r(n, 0.0);
    b[0] = 1.0;
    b[n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      double h0 = xs_[i] - xs_[i - 1], h1 = xs_[i + 1] - xs_[i];
      a[i] = h0 / 6.0;
      b[i] = (h0 + h1) / 3.0;
      c[i] = h1 / 6.0;
      r[i] = (ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0;
    }
    for (std::size_t i = 1; i < n; ++i) {
      double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      r[i] -= w * r[i - 1];
    }
    m_[n - 1] = r[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) m_[i] = (r[i] - c[i] * m_[i + 1]) / b[i];
  }

  double derivative(double x) const {
    const std::size_t n = xs_.size();
    if (n < 2) return 0.0;
    std::size_t i = 1;
    while (i + 1 < n && xs_[i] < x) ++i;
    double h = xs_[i] - xs_[i - 1];
    double t = (x - xs_[i - 1]) / h;
    return (ys_[i] - ys_[i - 1]) / h - (3.0 * (1.0 - t) * (1.0 - t) - 1.0) * h * m_[i - 1] / 6.0 +
           (3.0 * t * t - 1.0) * h * m_[i] / 6.0;
  }

 private:
  std::vector<double> xs_, ys_, m_;
};

}  // namespace detail

// Splits the time-average error over the trajectory into the boundary and
// martingale terms of the Ito decomposition; residual is to machine/estimator
// precision in continuous time and O(dt^{1/2}) in RMS for the discrete path.
inline DecompositionReport decomposition_residual(const SDEModel& model,
                                                  const CoboundaryEstimate& estimate,
                                                  const Trajectory& traj) {
  require(traj.has_increments(), Err::MissingIncrements,
          "trajectory lacks recorded Brownian increments (set record_increments)");
  const long n = traj.n() - 1;
  const double t = traj.horizon();
  const double dt_rec = traj.times[1] - traj.times[0];
  const double h = std::max(1e-4, 1e-3 * traj.states.cwiseAbs().maxCoeff());

  std::function<Vec(const Vec&)> grad;
  if (estimate.analytic()) {
    grad = [&](const Vec& x) { return estimate.gradient(x, h); };
  } else {
    require(model.dim == 1, Err::TooLarge,
            "Monte Carlo coboundary gradients along a path are supported in d=1 only");
    double lo = traj.states.minCoeff(), hi = traj.states.maxCoeff();
    double pad = 0.05 * (hi - lo) + 1e-3;
    // node spacing follows the noisy-fd policy fd_step = max(1e-3, se^{1/3})
    double se_probe = estimate.evaluate(Vec::Constant(1, 0.5 * (lo + hi))).se;
    double spacing = 2.0 * std::max(1e-3, std::cbrt(se_probe));
    int nodes = static_cast<int>(std::clamp((hi - lo + 2 * pad) / spacing, 5.0, 33.0));
    std::vector<double> xs(nodes), ys(nodes);
    for (int k = 0; k < nodes; ++k) {
      xs[static_cast<std::size_t>(k)] = lo - pad + (hi - lo + 2 * pad) * k / (nodes - 1);
      Vec p(1);
      p[0] = xs[static_cast<std::size_t>(k)];
      ys[static_cast<std::size_t>(k)] = estimate.evaluate(p).value;
    }
    auto spline = std::make_shared<detail::CubicSpline>(std::move(xs), std::move(ys));
    grad = [spline](const Vec& x) {
      Vec g(1);
      g[0] = spline->derivative(x[0]);
      return g;
    };
  }

  DecompositionReport rep;
  double acc = 0.0, mart = 0.0;
  for (long k = 0; k < n; ++k) {
    Vec xk = traj.state(k);
    acc += (estimate.f.f(xk) - estimate.mu_f_hat) * dt_rec;
    Vec dw = traj.increments.row(k).transpose();
    mart += grad(xk).dot(model.diffusion_at(xk) * dw);
  }
  rep.time_avg = acc / t;
  rep.boundary_term =
      (estimate.evaluate(traj.state(0)).value - estimate.evaluate(traj.state(traj.n() - 1)).value) / t;
  rep.martingale_term = mart / t;
  rep.residual = rep.time_avg - rep.boundary_term - rep.martingale_term;
  return rep;
}

struct TimeAverageRow {
  double t = 0.0;
  double mean_abs = 0.0;
  double se = 0.0;
  double measured_c = 0.0;  // mean_abs * sqrt(t), the Lemma constant at this t
};

// Monte Carlo E|nu_t(f) - mu(f)| on warm-started replications, one running
// integral per path with checkpoints at the requested times.
inline std::vector<TimeAverageRow> time_average_error(const SDEModel& model, const TestFunction& f,
                                                      const std::vector<double>& t_grid, long reps,
                                                      const IntegratorConfig& cfg) {
  require(!t_grid.empty(), Err::InvalidParameter, "time_average_error: empty t grid");
  double alpha = model.alpha_or_throw();
  // Lip(f) = 0 declares f constant, so its invariant mean is f itself, exactly.
  double mu_f = f.lip == 0.0 ? f.f(Vec::Zero(model.dim)) : invariant_mean(model, f.f, cfg);
  std::vector<long> check_steps;
  for (double t : t_grid) {
    require(t >= cfg.dt, Err::InvalidParameter, "time_average_error: t below dt");
    check_steps.push_back(static_cast<long>(std::llround(t / cfg.dt)));
  }
  const double horizon = t_grid.back();
  Mat abs_err(reps, static_cast<long>(t_grid.size()));

  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t rep) {
    IntegratorConfig c = cfg;
    c.stream = make_stream(StreamPurpose::Path, rep);
    IntegratorConfig warm_cfg = c;
    warm_cfg.stream = make_stream(StreamPurpose::Warm, rep);
    Vec x0 = warm_start(model, warm_cfg, 10.0 / alpha);
    double acc = f.f(x0) - mu_f;  // left-point at t=0
    std::size_t next = 0;
    integrate_visit(model, x0, horizon, c, [&](long step, double t_now, const Vec& x) {
      while (next < check_steps.size() && step + 1 == check_steps[next]) {
        abs_err(static_cast<long>(rep), static_cast<long>(next)) = std::abs(acc * cfg.dt / t_now);
        ++next;
      }
      acc += f.f(x) - mu_f;
    });
  });

  std::vector<TimeAverageRow> rows;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    std::vector<double> col(static_cast<std::size_t>(reps));
    for (long r = 0; r < reps; ++r) col[static_cast<std::size_t>(r)] = abs_err(r, static_cast<long>(k));
    auto ms = mean_stderr(col);
    rows.push_back({t_grid[k], ms.mean, ms.se, ms.mean * std::sqrt(t_grid[k])});
  }
  return rows;
}

}  // namespace ergow2
