#pragma once

#include "ergow2/discrete_measure.hpp"
#include "ergow2/models.hpp"
#include "ergow2/parallel.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ergow2 {

enum class Scheme { EulerMaruyama };

// Stream-id purpose salts live in bits 40..47 (streams are 48-bit); XOR with
// these keeps internally derived streams disjoint from caller-chosen ones.
inline constexpr std::uint64_t kWarmSalt = 0xA5ull << 40;
inline constexpr std::uint64_t kInvariantSalt = 0x3Cull << 40;

struct IntegratorConfig {
  double dt = 1e-3;
  Scheme scheme = Scheme::EulerMaruyama;
  std::uint64_t seed = 0;
  long record_stride = 1;  // store every k-th step
  std::uint64_t stream = 0;
  bool record_increments = false;
};

struct Trajectory {
  std::vector<double> times;  // uniform spacing record_stride * dt, starting at 0
  Mat states;                 // one row per recorded time
  Mat increments;             // summed Brownian increments per recorded interval (optional)
  std::string model_name;
  IntegratorConfig config;

  long n() const { return states.rows(); }
  int dim() const { return static_cast<int>(states.cols()); }
  Vec state(long i) const { return states.row(i).transpose(); }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  bool has_increments() const { return increments.rows() == states.rows() - 1; }
};

struct CouplingRecord {
  std::vector<double> times;
  std::vector<double> ratios;  // |X_t - Y_t| / |x0 - y0|
};

namespace detail {

inline void check_stability(const SDEModel& model, const IntegratorConfig& cfg) {
  require(cfg.dt > 0.0, Err::InvalidParameter, "dt must be > 0");
  require(cfg.record_stride >= 1, Err::InvalidParameter, "record_stride must be >= 1");
  if (model.analytic_alpha && *model.analytic_alpha > 0.0) {
    require(cfg.dt * *model.analytic_alpha < 0.5, Err::Unstable,
            "dt * alpha >= 0.5 violates the contractive stability condition");
  }
}

inline long recorded_intervals(double horizon, const IntegratorConfig& cfg) {
  double span = cfg.dt * static_cast<double>(cfg.record_stride);
  long n = static_cast<long>(std::llround(horizon / span));
  return std::max<long>(1, n);
}

}  // namespace detail

// Euler-Maruyama path. Deterministic given (model, x0, horizon, config): noise
// is a pure function of (seed, stream, step), so reruns are bit-identical.
inline Trajectory integrate(const SDEModel& model, const Vec& x0, double horizon,
                            const IntegratorConfig& cfg) {
  require(x0.size() == model.dim, Err::DimensionMismatch, "x0 dimension != model dim");
  detail::check_stability(model, cfg);
  require(horizon >= cfg.dt, Err::InvalidParameter, "horizon must be >= dt");

  const int d = model.dim;
  const int q = model.noise_dim;
  const long n_rec = detail::recorded_intervals(horizon, cfg);
  const long n_steps = n_rec * cfg.record_stride;
  const double dt = cfg.dt;
  const double sqdt = std::sqrt(dt);

  Trajectory traj;
  traj.model_name = model.name;
  traj.config = cfg;
  traj.times.resize(n_rec + 1);
  traj.states.resize(n_rec + 1, d);
  if (cfg.record_increments) traj.increments = Mat::Zero(n_rec, q);

  NoiseStream ns(cfg.seed, cfg.stream);
  Vec x = x0, b(d), dw(q);
  Mat S(d, q);
  if (model.diffusion_constant) model.diffusion(x, S);

  traj.times[0] = 0.0;
  traj.states.row(0) = x.transpose();
  long rec = 0;
  Vec dw_acc = Vec::Zero(q);
  for (long step = 0; step < n_steps; ++step) {
    model.drift(x, b);
    if (!model.diffusion_constant) model.diffusion(x, S);
    ns.fill_normal(static_cast<std::uint64_t>(step), dw);
    dw *= sqdt;
    x += b * dt;
    x.noalias() += S * dw;
    if (cfg.record_increments) dw_acc += dw;
    double sq = x.squaredNorm();
    if (!std::isfinite(sq)) {
      throw Error(Err::NonFiniteState,
                  "divergence at step " + std::to_string(step) + " (t=" +
                      std::to_string((step + 1) * dt) + "); last finite recorded index " +
                      std::to_string(rec));
    }
    if ((step + 1) % cfg.record_stride == 0) {
      ++rec;
      traj.times[rec] = static_cast<double>(step + 1) * dt;
      traj.states.row(rec) = x.transpose();
      if (cfg.record_increments) {
        traj.increments.row(rec - 1) = dw_acc.transpose();
        dw_acc.setZero();
      }
    }
  }
  return traj;
}

// Storage-free stepping: visitor(step, t_after_step, x_after_step) is called
// after every Euler step. Noise matches integrate() with the same config.
template <typename Visitor>
inline void integrate_visit(const SDEModel& model, const Vec& x0, double horizon,
                            const IntegratorConfig& cfg, Visitor&& visitor) {
  require(x0.size() == model.dim, Err::DimensionMismatch, "x0 dimension != model dim");
  detail::check_stability(model, cfg);
  const int d = model.dim, q = model.noise_dim;
  const long n_steps = std::max<long>(1, static_cast<long>(std::llround(horizon / cfg.dt)));
  const double dt = cfg.dt, sqdt = std::sqrt(dt);
  NoiseStream ns(cfg.seed, cfg.stream);
  Vec x = x0, b(d), dw(q);
  Mat S(d, q);
  if (model.diffusion_constant) model.diffusion(x, S);
  for (long step = 0; step < n_steps; ++step) {
    model.drift(x, b);
    if (!model.diffusion_constant) model.diffusion(x, S);
    ns.fill_normal(static_cast<std::uint64_t>(step), dw);
    dw *= sqdt;
    x += b * dt;
    x.noalias() += S * dw;
    if (!std::isfinite(x.squaredNorm())) {
      throw Error(Err::NonFiniteState, "divergence at step " + std::to_string(step));
    }
    visitor(step, static_cast<double>(step + 1) * dt, x);
  }
}

// Two solutions driven by identical Brownian increments (synchronous coupling);
// under H_C the mean-square ratio obeys the e^{-alpha t / 2} envelope.
inline CouplingRecord simulate_coupled(const SDEModel& model, const Vec& x0, const Vec& y0,
                                       double horizon, const IntegratorConfig& cfg) {
  require(x0.size() == model.dim && y0.size() == model.dim, Err::DimensionMismatch,
          "start dimension != model dim");
  require((x0 - y0).norm() > 0.0, Err::DegenerateStart, "x0 == y0");
  detail::check_stability(model, cfg);
  require(horizon >= cfg.dt, Err::InvalidParameter, "horizon must be >= dt");

  const int d = model.dim;
  const int q = model.noise_dim;
  const long n_rec = detail::recorded_intervals(horizon, cfg);
  const long n_steps = n_rec * cfg.record_stride;
  const double dt = cfg.dt;
  const double sqdt = std::sqrt(dt);
  const double dist0 = (x0 - y0).norm();

  CouplingRecord out;
  out.times.resize(n_rec + 1);
  out.ratios.resize(n_rec + 1);
  out.times[0] = 0.0;
  out.ratios[0] = 1.0;

  NoiseStream ns(cfg.seed, cfg.stream);
  Vec x = x0, y = y0, bx(d), by(d), dw(q);
  Mat Sx(d, q), Sy(d, q);
  if (model.diffusion_constant) {
    model.diffusion(x, Sx);
    Sy = Sx;
  }
  long rec = 0;
  for (long step = 0; step < n_steps; ++step) {
    model.drift(x, bx);
    model.drift(y, by);
    if (!model.diffusion_constant) {
      model.diffusion(x, Sx);
      model.diffusion(y, Sy);
    }
    ns.fill_normal(static_cast<std::uint64_t>(step), dw);
    dw *= sqdt;
    x += bx * dt;
    x.noalias() += Sx * dw;
    y += by * dt;
    y.noalias() += Sy * dw;
    double sq = x.squaredNorm() + y.squaredNorm();
    if (!std::isfinite(sq)) {
      throw Error(Err::NonFiniteState, "divergence at step " + std::to_string(step));
    }
    if ((step + 1) % cfg.record_stride == 0) {
      ++rec;
      out.times[rec] = static_cast<double>(step + 1) * dt;
      out.ratios[rec] = (x - y).norm() / dist0;
    }
  }
  return out;
}

// Draw X_0 approximately (or exactly) from the invariant distribution. Exact
// when the model carries a closed-form invariant; otherwise a long burn-in from
// the origin, with the contraction bound |x_init| e^{-alpha burn_in / 2} on the
// W2 start bias.
inline Vec warm_start(const SDEModel& model, const IntegratorConfig& cfg, double burn_in) {
  if (model.analytic_invariant_known && model.gaussian_invariant) {
    NoiseStream ns(cfg.seed, cfg.stream ^ kInvariantSalt);
    return model.gaussian_invariant->sample(ns, 0);
  }
  double alpha = model.alpha_or_throw();
  require(burn_in >= 10.0 / alpha, Err::InvalidParameter,
          "warm_start: burn_in must be >= 10/alpha for models without an analytic invariant");
  IntegratorConfig warm_cfg = cfg;
  warm_cfg.stream = cfg.stream ^ kWarmSalt;
  warm_cfg.record_stride = std::max<long>(1, static_cast<long>(std::llround(burn_in / cfg.dt)));
  warm_cfg.record_increments = false;
  Trajectory t = integrate(model, Vec::Zero(model.dim), burn_in, warm_cfg);
  return t.state(t.n() - 1);
}

// Independent long-run endpoints (or exact i.i.d. draws) approximating the
// invariant distribution; equal-weight atoms.
inline DiscreteMeasure reference_invariant(const SDEModel& model, long n_samples, double burn_in,
                                           const IntegratorConfig& cfg = {}) {
  require(n_samples >= 1, Err::InvalidParameter, "reference_invariant: n_samples >= 1");
  Mat pts(n_samples, model.dim);
  if (model.analytic_invariant_known && model.gaussian_invariant) {
    NoiseStream ns(cfg.seed, cfg.stream ^ kInvariantSalt);
    for (long i = 0; i < n_samples; ++i) {
      pts.row(i) = model.gaussian_invariant->sample(ns, static_cast<std::uint64_t>(i)).transpose();
    }
  } else {
    double alpha = model.alpha_or_throw();
    double burn = std::max(burn_in, 10.0 / alpha);
    parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t i) {
      IntegratorConfig c = cfg;
      c.stream = make_stream(StreamPurpose::Invariant,
                             ((cfg.stream & 0xFFFFFull) << 20) | (i & 0xFFFFFull));
      c.record_stride = std::max<long>(1, static_cast<long>(std::llround(burn / c.dt)));
      Trajectory t = integrate(model, Vec::Zero(model.dim), burn, c);
      pts.row(static_cast<long>(i)) = t.states.row(t.n() - 1);
    });
  }
  return DiscreteMeasure::equal_weights(std::move(pts));
}

// Adds an independent eps-Brownian channel: diffusion becomes [Sigma | eps I].
// Uniformly elliptic with constant >= eps^2; the confluence constant is
// unchanged because the added block is state-independent.
inline SDEModel regularized_model(const SDEModel& model, double eps) {
  require(eps > 0.0 && eps < 1.0, Err::InvalidParameter, "regularized_model: eps must be in (0,1)");
  SDEModel m;
  m.name = model.name + "_eps";
  m.dim = model.dim;
  m.noise_dim = model.noise_dim + model.dim;
  const int d = model.dim, q = model.noise_dim;
  auto base_diffusion = model.diffusion;
  m.drift = model.drift;
  m.diffusion = [base_diffusion, eps, d, q](const Vec& x, Mat& out) {
    Mat s(d, q);
    base_diffusion(x, s);
    out.leftCols(q) = s;
    out.rightCols(d) = eps * Mat::Identity(d, d);
  };
  m.diffusion_constant = model.diffusion_constant;
  m.sigma_bounded = model.sigma_bounded;
  m.sigma_elliptic = true;
  m.analytic_alpha = model.analytic_alpha;
  if (model.sigma_sup_frob) {
    m.sigma_sup_frob = std::sqrt(*model.sigma_sup_frob * *model.sigma_sup_frob + d * eps * eps);
  }
  if (model.linear) {
    Mat Sigma0(d, q + d);
    Sigma0.leftCols(q) = model.linear->Sigma0;
    Sigma0.rightCols(d) = eps * Mat::Identity(d, d);
    m.linear = LinearSDE{model.linear->A, Sigma0};
    m.analytic_invariant_known = true;
    m.gaussian_invariant = GaussianInvariant::make(
        Vec::Zero(d), solve_lyapunov(model.linear->A, Sigma0 * Sigma0.transpose()));
  }
  return m;
}

}  // namespace ergow2
