#pragma once

#include "ergow2/discrete_measure.hpp"
#include "ergow2/simulate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace ergow2 {

// Time-average occupation measure nu_t = (1/t) int_0^t delta_{X_s} ds built from
// a recorded trajectory with the left-point rule.
struct OccupationMeasure {
  DiscreteMeasure measure;
  double horizon = 0.0;
};

inline OccupationMeasure occupation_measure(const Trajectory& traj, bool merge_atoms = true) {
  require(traj.n() >= 2, Err::EmptyTrajectory, "occupation_measure: need >= 2 recorded points");
  const long n = traj.n() - 1;  // left-point rule drops the final state
  OccupationMeasure out;
  out.horizon = traj.horizon();
  out.measure.points = traj.states.topRows(n);
  out.measure.weights = Vec::Constant(n, 1.0 / static_cast<double>(n));
  out.measure.weights[0] += 1.0 - out.measure.weights.sum();
  if (merge_atoms) out.measure = merge_close_atoms(out.measure);
  return out;
}

// ---------------------------------------------------------------------------
// Mollifiers: positive Lipschitz product kernels supported on [-1,1]^d.

enum class MollifierBase { TriangleProduct, EpanechnikovProduct };

inline MollifierBase mollifier_base_from_name(const std::string& name) {
  if (name == "triangle_product") return MollifierBase::TriangleProduct;
  if (name == "epanechnikov_product") return MollifierBase::EpanechnikovProduct;
  throw Error(Err::ConfigError, "unknown mollifier base '" + name + "'");
}

struct MollifierKernel {
  MollifierBase base = MollifierBase::TriangleProduct;
  double eps = 1.0;
  int d = 1;

  static MollifierKernel make(MollifierBase base, double eps, int d) {
    require(eps > 0.0, Err::InvalidParameter, "mollifier eps must be > 0");
    require(d >= 1, Err::InvalidParameter, "mollifier d must be >= 1");
    return MollifierKernel{base, eps, d};
  }

  // per-dimension base density on [-1,1]
  double rho1(double v) const {
    double a = std::abs(v);
    if (a >= 1.0) return 0.0;
    switch (base) {
      case MollifierBase::TriangleProduct: return 1.0 - a;
      case MollifierBase::EpanechnikovProduct: return 0.75 * (1.0 - v * v);
    }
    return 0.0;
  }

  double cdf1(double v) const {
    if (v <= -1.0) return 0.0;
    if (v >= 1.0) return 1.0;
    switch (base) {
      case MollifierBase::TriangleProduct:
        return v <= 0.0 ? 0.5 * (1.0 + v) * (1.0 + v) : 1.0 - 0.5 * (1.0 - v) * (1.0 - v);
      case MollifierBase::EpanechnikovProduct: return 0.5 + 0.75 * (v - v * v * v / 3.0);
    }
    return 0.0;
  }

  // int_{-1}^{v} u rho1(u) du
  double first_moment_partial1(double v) const {
    if (v <= -1.0) return 0.0;
    if (v >= 1.0) return 0.0;
    switch (base) {
      case MollifierBase::TriangleProduct:
        if (v <= 0.0) return 0.5 * v * v + v * v * v / 3.0 - 1.0 / 6.0;
        return -1.0 / 6.0 + 0.5 * v * v - v * v * v / 3.0;
      case MollifierBase::EpanechnikovProduct:
        return 0.75 * (0.5 * v * v - 0.25 * v * v * v * v - 0.25);
    }
    return 0.0;
  }

  double rho(const Vec& u) const {
    double p = 1.0;
    for (int k = 0; k < d; ++k) {
      p *= rho1(u[k]);
      if (p == 0.0) return 0.0;
    }
    return p;
  }

  // rho_eps(u) = eps^{-d} rho(u/eps)
  double rho_eps(const Vec& u) const {
    return std::pow(eps, -d) * rho(u / eps);
  }

  // ||zeta||_2^2 = int |u|^2 rho(u) du; second moment of the unscaled kernel.
  double zeta_sq() const {
    double m2 = base == MollifierBase::TriangleProduct ? 1.0 / 6.0 : 0.2;
    return d * m2;
  }

  double lip_rho() const {
    switch (base) {
      case MollifierBase::TriangleProduct: return std::sqrt(static_cast<double>(d));
      case MollifierBase::EpanechnikovProduct: return 1.5 * std::pow(0.75, d - 1);
    }
    return 0.0;
  }

  double lip_rho_eps() const { return std::pow(eps, -(d + 1)) * lip_rho(); }

  double sup_rho() const {
    return base == MollifierBase::TriangleProduct ? 1.0 : std::pow(0.75, d);
  }

  // Discrete surrogate of rho_eps: cells_per_dim^d atoms with the exact cell
  // masses and conditional cell means (tensorized). Jensen keeps the surrogate's
  // second moment <= eps^2 ||zeta||_2^2, so W2(mu, mu * m) bounds transfer.
  DiscreteMeasure discretize(int cells_per_dim = 16) const {
    require(cells_per_dim >= 1, Err::InvalidParameter, "cells_per_dim >= 1");
    std::vector<double> mass1, mean1;
    for (int j = 0; j < cells_per_dim; ++j) {
      double a = -1.0 + 2.0 * j / cells_per_dim;
      double b = -1.0 + 2.0 * (j + 1) / cells_per_dim;
      double m = cdf1(b) - cdf1(a);
      if (m <= 0.0) continue;
      mass1.push_back(m);
      mean1.push_back((first_moment_partial1(b) - first_moment_partial1(a)) / m);
    }
    const long k1 = static_cast<long>(mass1.size());
    long total = 1;
    for (int k = 0; k < d; ++k) total *= k1;
    Mat pts(total, d);
    Vec w(total);
    std::vector<long> idx(d, 0);
    for (long row = 0; row < total; ++row) {
      double m = 1.0;
      for (int k = 0; k < d; ++k) {
        pts(row, k) = eps * mean1[static_cast<std::size_t>(idx[k])];
        m *= mass1[static_cast<std::size_t>(idx[k])];
      }
      w[row] = m;
      int k = 0;
      while (k < d && ++idx[k] == k1) idx[k++] = 0;
    }
    return DiscreteMeasure::from_rows(std::move(pts), std::move(w));
  }
};

// xi -> sum_i w_i rho_eps(xi - x_i); mass 1, Lipschitz with constant
// <= eps^{-(d+1)} Lip(rho).
struct MollifiedDensity {
  DiscreteMeasure atoms;
  MollifierKernel kernel;

  double operator()(const Vec& xi) const {
    double s = 0.0;
    const double e = kernel.eps;
    for (long i = 0; i < atoms.size(); ++i) {
      bool near = true;
      for (int k = 0; k < kernel.d; ++k) {
        if (std::abs(xi[k] - atoms.points(i, k)) >= e) {
          near = false;
          break;
        }
      }
      if (near) s += atoms.weights[i] * kernel.rho_eps(xi - atoms.point(i));
    }
    return s;
  }

  std::function<double(const Vec&)> fn() const {
    return [self = *this](const Vec& xi) { return self(xi); };
  }
};

inline MollifiedDensity mollified_density(const DiscreteMeasure& measure,
                                          const MollifierKernel& kernel) {
  require(measure.dim() == kernel.d, Err::DimensionMismatch, "measure dim != kernel dim");
  return MollifiedDensity{measure, kernel};
}

inline MollifiedDensity mollified_density(const OccupationMeasure& measure,
                                          const MollifierKernel& kernel) {
  return mollified_density(measure.measure, kernel);
}

// phi_eps(xi, x) = rho_eps(xi - x) - int rho_eps(xi - y) mu_ref(dy).
// Averaging over x ~ mu_ref gives exactly 0 on the same sample.
inline double phi_eps(const Vec& xi, const Vec& x, const DiscreteMeasure& mu_ref,
                      const MollifierKernel& kernel) {
  require(xi.size() == kernel.d && x.size() == kernel.d && mu_ref.dim() == kernel.d,
          Err::DimensionMismatch, "phi_eps: dimension mismatch");
  double centering = 0.0;
  for (long j = 0; j < mu_ref.size(); ++j) {
    centering += mu_ref.weights[j] * kernel.rho_eps(xi - mu_ref.point(j));
  }
  return kernel.rho_eps(xi - x) - centering;
}

// ---------------------------------------------------------------------------
// Moments.

struct MomentReport {
  std::map<double, MeanStderr> p_moments;
  std::optional<std::pair<double, MeanStderr>> exp_moment;  // (lambda, estimate)
  double a_certified = 0.0;
};

namespace detail {

inline double weighted_statistic(const DiscreteMeasure& mu,
                                 const std::function<double(const Vec&)>& g) {
  double s = 0.0;
  for (long i = 0; i < mu.size(); ++i) s += mu.weights[i] * g(mu.point(i));
  return s;
}

// Weighted bootstrap standard error over atom resamples.
inline MeanStderr bootstrap_statistic(const DiscreteMeasure& mu,
                                      const std::function<double(const Vec&)>& g,
                                      std::uint64_t seed, int B = 100) {
  MeanStderr out;
  out.mean = weighted_statistic(mu, g);
  const long n = mu.size();
  if (n < 2) return out;
  Vec cumw(n);
  double c = 0.0;
  for (long i = 0; i < n; ++i) {
    c += mu.weights[i];
    cumw[i] = c;
  }
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = g(mu.point(i));
  NoiseStream ns(seed, make_stream(StreamPurpose::Bootstrap, 0));
  std::vector<double> boots;
  boots.reserve(B);
  for (int b = 0; b < B; ++b) {
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
      double u = ns.uniform(static_cast<std::uint64_t>(b) * n + i, 0) * cumw[n - 1];
      long lo = static_cast<long>(
          std::lower_bound(cumw.data(), cumw.data() + n, u) - cumw.data());
      if (lo >= n) lo = n - 1;
      s += vals[static_cast<std::size_t>(lo)];
    }
    boots.push_back(s / static_cast<double>(n));
  }
  auto ms = mean_stderr(boots);
  out.se = std::sqrt(std::max(0.0, ms.se * ms.se * ms.n));  // bootstrap spread, not SE of its mean
  out.n = static_cast<int>(n);
  return out;
}

}  // namespace detail

// int |y|^p dmu, optionally int e^{lambda |y|^2} dmu, with bootstrap stderr.
// a_certified is the largest a in {0.5, 1, 2, 4} whose 2+a moment agrees within
// 20% between the first half of the sample and the full sample.
inline MomentReport empirical_moment(const DiscreteMeasure& measure, double p,
                                     std::optional<double> lambda = std::nullopt,
                                     std::uint64_t seed = 0) {
  require(p >= 0.0, Err::InvalidParameter, "empirical_moment: p >= 0");
  MomentReport rep;
  auto pmom = [](double pp) {
    return [pp](const Vec& y) { return pp == 0.0 ? 1.0 : std::pow(y.norm(), pp); };
  };
  if (p == 0.0) {
    // |y|^0 == 1, so this is the total mass, which the type pins to 1
    rep.p_moments[p] = {1.0, 0.0, static_cast<int>(measure.size())};
  } else {
    rep.p_moments[p] = detail::bootstrap_statistic(measure, pmom(p), seed);
  }
  if (lambda) {
    require(*lambda > 0.0, Err::InvalidParameter, "empirical_moment: lambda > 0");
    double lam = *lambda;
    rep.exp_moment = {lam, detail::bootstrap_statistic(
                               measure, [lam](const Vec& y) { return std::exp(lam * y.squaredNorm()); },
                               seed ^ 0x5bull)};
  }
  const long n = measure.size();
  if (n >= 4) {
    DiscreteMeasure half;
    half.points = measure.points.topRows(n / 2);
    half.weights = measure.weights.head(n / 2);
    half.weights /= half.weights.sum();
    for (double a : {0.5, 1.0, 2.0, 4.0}) {
      double full = detail::weighted_statistic(measure, pmom(2.0 + a));
      double part = detail::weighted_statistic(half, pmom(2.0 + a));
      if (part > 0.0 && full > 0.0) {
        double ratio = full / part;
        if (ratio >= 1.0 / 1.2 && ratio <= 1.2) rep.a_certified = std::max(rep.a_certified, a);
      }
    }
  }
  return rep;
}

// Default exponential-moment parameter for bounded-Sigma models, mirroring the
// appendix constraint lambda < alpha / (2 ||Sigma||_sup) with a safety factor.
inline double default_exp_lambda(const SDEModel& model, double alpha) {
  require(model.sigma_bounded && model.sigma_sup_frob, Err::UnboundedZ,
          "exp-moment lambda default needs a bounded diffusion");
  double s2 = *model.sigma_sup_frob * *model.sigma_sup_frob;
  return alpha / (4.0 * s2);
}

// ---------------------------------------------------------------------------
// Means under the invariant distribution. Gauss-Hermite for closed-form
// Gaussian invariants (exact up to quadrature), long-run sample otherwise.

namespace detail {

inline void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  Mat J = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b = std::sqrt(k / 2.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  nodes.resize(n);
  weights.resize(n);
  const double m0 = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()[i];
    double v0 = es.eigenvectors()(0, i);
    weights[i] = m0 * v0 * v0;
  }
}

}  // namespace detail

inline double invariant_mean(const SDEModel& model, const std::function<double(const Vec&)>& f,
                             const IntegratorConfig& cfg = {}, long n_fallback = 10000) {
  if (model.analytic_invariant_known && model.gaussian_invariant && model.dim <= 3) {
    const int d = model.dim;
    const int nq = d == 1 ? 64 : (d == 2 ? 32 : 16);
    std::vector<double> nodes, weights;
    detail::gauss_hermite(nq, nodes, weights);
    const auto& gi = *model.gaussian_invariant;
    const double norm = std::pow(M_PI, -0.5 * d);
    double s = 0.0;
    std::vector<int> idx(d, 0);
    Vec z(d);
    while (true) {
      double w = 1.0;
      for (int k = 0; k < d; ++k) {
        z[k] = std::sqrt(2.0) * nodes[static_cast<std::size_t>(idx[k])];
        w *= weights[static_cast<std::size_t>(idx[k])];
      }
      s += w * f(gi.mean + gi.chol * z);
      int k = 0;
      while (k < d && ++idx[k] == nq) idx[k++] = 0;
      if (k == d) break;
    }
    return norm * s;
  }
  DiscreteMeasure mu = reference_invariant(model, n_fallback, 0.0, cfg);
  return detail::weighted_statistic(mu, f);
}

}  // namespace ergow2
