#pragma once

#include "ergow2/common.hpp"
#include "ergow2/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

namespace ergow2 {

// Closed-form Gaussian invariant N(mean, cov) with exact sampling.
struct GaussianInvariant {
  Vec mean;
  Mat cov;
  Mat chol;  // lower Cholesky factor of cov

  Vec sample(const NoiseStream& ns, std::uint64_t index) const {
    Vec z(mean.size());
    ns.fill_normal(index, z);
    return mean + chol * z;
  }

  static GaussianInvariant make(Vec mean, Mat cov) {
    GaussianInvariant g;
    g.mean = std::move(mean);
    g.cov = std::move(cov);
    Eigen::LLT<Mat> llt(g.cov);
    require(llt.info() == Eigen::Success, Err::InvalidParameter, "invariant covariance not SPD");
    g.chol = llt.matrixL();
    return g;
  }
};

// dX = -A X dt + Sigma0 dW; kept for models where it applies so that
// regularization and invariants stay exact.
struct LinearSDE {
  Mat A;
  Mat Sigma0;
};

// Solves A V + V A^T = S for V (stationary covariance of dX = -A X dt + Sigma0 dW
// with S = Sigma0 Sigma0^T). Dense Kronecker solve; fine for the small d used here.
inline Mat solve_lyapunov(const Mat& A, const Mat& S) {
  const int d = static_cast<int>(A.rows());
  Mat K = Mat::Zero(d * d, d * d);
  Vec rhs(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      rhs[i * d + j] = S(i, j);
      for (int k = 0; k < d; ++k) {
        K(i * d + j, k * d + j) += A(i, k);
        K(i * d + j, i * d + k) += A(j, k);
      }
    }
  Vec v = K.fullPivLu().solve(rhs);
  Mat V(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) V(i, j) = v[i * d + j];
  return 0.5 * (V + V.transpose());
}

struct SDEModel {
  std::string name;
  int dim = 1;        // d
  int noise_dim = 1;  // q
  std::function<void(const Vec&, Vec&)> drift;      // B: R^d -> R^d
  std::function<void(const Vec&, Mat&)> diffusion;  // Sigma: R^d -> R^{d x q}
  bool diffusion_constant = false;

  bool sigma_bounded = false;
  bool sigma_elliptic = false;
  bool analytic_invariant_known = false;

  std::optional<GaussianInvariant> gaussian_invariant;
  std::optional<LinearSDE> linear;
  std::optional<double> analytic_alpha;    // exact confluence constant when known
  std::optional<double> sigma_sup_frob;    // sup_x ||Sigma(x)||_F for bounded models

  Vec drift_at(const Vec& x) const {
    Vec b(dim);
    drift(x, b);
    return b;
  }
  Mat diffusion_at(const Vec& x) const {
    Mat s(dim, noise_dim);
    diffusion(x, s);
    return s;
  }

  double alpha_or(double fallback) const { return analytic_alpha ? *analytic_alpha : fallback; }

  double alpha_or_throw() const {
    require(analytic_alpha.has_value() && *analytic_alpha > 0.0, Err::NotConfluent,
            "model '" + name + "' has no positive confluence certificate; run check_confluence "
            "and pass alpha_hat explicitly or attach it with with_alpha()");
    return *analytic_alpha;
  }

  // Functional update: models are immutable, so a measured alpha_hat is
  // attached by copying.
  SDEModel with_alpha(double alpha_hat) const {
    SDEModel m = *this;
    m.analytic_alpha = alpha_hat;
    return m;
  }
};

struct ModelSpec {
  std::string kind;
  std::map<std::string, double> num;  // theta, sigma, sigma0, amplitude, d
  std::optional<Mat> A;
  std::optional<Mat> Sigma0;

  double get(const std::string& key, double fallback) const {
    auto it = num.find(key);
    return it == num.end() ? fallback : it->second;
  }
  bool has(const std::string& key) const { return num.count(key) > 0; }
};

inline SDEModel make_ou(double theta, double sigma, int d = 1) {
  require(theta > 0.0, Err::InvalidParameter, "ou: theta must be > 0");
  require(sigma > 0.0, Err::InvalidParameter, "ou: sigma must be > 0");
  require(d >= 1, Err::InvalidParameter, "ou: d must be >= 1");
  SDEModel m;
  m.name = "ou";
  m.dim = d;
  m.noise_dim = d;
  m.drift = [theta](const Vec& x, Vec& out) { out = -theta * x; };
  m.diffusion = [sigma, d](const Vec&, Mat& out) { out = sigma * Mat::Identity(d, d); };
  m.diffusion_constant = true;
  m.sigma_bounded = true;
  m.sigma_elliptic = true;
  m.analytic_invariant_known = true;
  m.gaussian_invariant =
      GaussianInvariant::make(Vec::Zero(d), (sigma * sigma / (2.0 * theta)) * Mat::Identity(d, d));
  m.linear = LinearSDE{theta * Mat::Identity(d, d), sigma * Mat::Identity(d, d)};
  m.analytic_alpha = 2.0 * theta;
  m.sigma_sup_frob = sigma * std::sqrt(static_cast<double>(d));
  return m;
}

inline SDEModel make_cubic(double theta, double sigma, int d = 1) {
  require(theta > 0.0, Err::InvalidParameter, "cubic: theta must be > 0");
  require(sigma > 0.0, Err::InvalidParameter, "cubic: sigma must be > 0");
  SDEModel m;
  m.name = "cubic";
  m.dim = d;
  m.noise_dim = d;
  m.drift = [theta](const Vec& x, Vec& out) {
    out = -theta * x - x.array().cube().matrix();
  };
  m.diffusion = [sigma, d](const Vec&, Mat& out) { out = sigma * Mat::Identity(d, d); };
  m.diffusion_constant = true;
  m.sigma_bounded = true;
  m.sigma_elliptic = true;
  m.analytic_invariant_known = false;
  m.analytic_alpha = 2.0 * theta;  // cubic term only strengthens confluence
  m.sigma_sup_frob = sigma * std::sqrt(static_cast<double>(d));
  return m;
}

inline SDEModel make_anisotropic_ou(const Mat& A, const Mat& Sigma0) {
  const int d = static_cast<int>(A.rows());
  require(A.cols() == d, Err::InvalidParameter, "anisotropic_ou: A must be square");
  require(Sigma0.rows() == d, Err::InvalidParameter, "anisotropic_ou: Sigma0 row count != d");
  Mat sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  double lam_min = es.eigenvalues().minCoeff();
  require(lam_min > 0.0, Err::InvalidParameter, "anisotropic_ou: symmetric part of A must be positive definite");

  SDEModel m;
  m.name = "anisotropic_ou";
  m.dim = d;
  m.noise_dim = static_cast<int>(Sigma0.cols());
  Mat Acopy = A, Scopy = Sigma0;
  m.drift = [Acopy](const Vec& x, Vec& out) { out.noalias() = -(Acopy * x); };
  m.diffusion = [Scopy](const Vec&, Mat& out) { out = Scopy; };
  m.diffusion_constant = true;
  m.sigma_bounded = true;
  Mat SS = Sigma0 * Sigma0.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es2(SS);
  m.sigma_elliptic = es2.eigenvalues().minCoeff() > 0.0;
  m.analytic_invariant_known = true;
  m.gaussian_invariant = GaussianInvariant::make(Vec::Zero(d), solve_lyapunov(A, SS));
  m.linear = LinearSDE{A, Sigma0};
  m.analytic_alpha = 2.0 * lam_min;
  m.sigma_sup_frob = Sigma0.norm();
  return m;
}

// d=1 model with a genuinely state-dependent, bounded, elliptic diffusion:
// Sigma(x) = sigma0 (1 + amplitude sin x). theta > 2 (sigma0 amplitude)^2 keeps
// the confluence constant 2 theta - (sigma0 amplitude)^2 safely positive.
inline SDEModel make_bounded_sigma(double theta, double sigma0, double amplitude) {
  require(theta > 0.0, Err::InvalidParameter, "bounded_sigma: theta must be > 0");
  require(sigma0 > 0.0, Err::InvalidParameter, "bounded_sigma: sigma0 must be > 0");
  require(amplitude >= 0.0 && amplitude < 1.0, Err::InvalidParameter,
          "bounded_sigma: amplitude must be in [0,1)");
  double lip_sigma = sigma0 * amplitude;
  require(theta > 2.0 * lip_sigma * lip_sigma, Err::InvalidParameter,
          "bounded_sigma: need theta > 2*(sigma0*amplitude)^2 for confluence");
  SDEModel m;
  m.name = "bounded_sigma";
  m.dim = 1;
  m.noise_dim = 1;
  m.drift = [theta](const Vec& x, Vec& out) { out = -theta * x; };
  m.diffusion = [sigma0, amplitude](const Vec& x, Mat& out) {
    out(0, 0) = sigma0 * (1.0 + amplitude * std::sin(x[0]));
  };
  m.diffusion_constant = false;
  m.sigma_bounded = true;
  m.sigma_elliptic = true;  // amplitude < 1
  m.analytic_invariant_known = false;
  m.analytic_alpha = 2.0 * theta - lip_sigma * lip_sigma;
  m.sigma_sup_frob = sigma0 * (1.0 + amplitude);
  return m;
}

inline SDEModel build_model(const ModelSpec& spec) {
  if (spec.kind == "ou") {
    return make_ou(spec.get("theta", 1.0), spec.get("sigma", 1.0),
                   static_cast<int>(spec.get("d", 1.0)));
  }
  if (spec.kind == "cubic") {
    return make_cubic(spec.get("theta", 1.0), spec.get("sigma", 1.0),
                      static_cast<int>(spec.get("d", 1.0)));
  }
  if (spec.kind == "anisotropic_ou") {
    require(spec.A.has_value(), Err::InvalidParameter, "anisotropic_ou: missing matrix A");
    Mat Sigma0 = spec.Sigma0 ? *spec.Sigma0
                             : Mat(spec.get("sigma", 1.0) * Mat::Identity(spec.A->rows(), spec.A->rows()));
    return make_anisotropic_ou(*spec.A, Sigma0);
  }
  if (spec.kind == "bounded_sigma") {
    return make_bounded_sigma(spec.get("theta", 4.0), spec.get("sigma0", 1.0),
                              spec.get("amplitude", 0.5));
  }
  throw Error(Err::UnknownModel, "unknown model kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Assumption checks. All sampled, never symbolic: certificates hold on the
// stated box and every report carries that box.

struct PairSampler {
  Box box;
  double local_fraction = 0.1;  // pairs with |x-y| < 1e-3, probing the gradient regime
  std::uint64_t seed = 0;

  static PairSampler default_for(const SDEModel& model, std::uint64_t seed = 0) {
    PairSampler s;
    s.box = Box::cube(model.dim, -5.0, 5.0);
    s.seed = seed;
    return s;
  }

  std::pair<Vec, Vec> sample(std::uint64_t index) const {
    NoiseStream ns(seed, make_stream(StreamPurpose::Pairs, index));
    const int d = box.dim();
    Vec x(d), y(d);
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::uint64_t step = static_cast<std::uint64_t>(attempt) << 32;
      for (int k = 0; k < d; ++k) {
        double u = ns.uniform(step + 1, static_cast<std::uint32_t>(k));
        x[k] = box.lo[k] + u * (box.hi[k] - box.lo[k]);
      }
      bool local = ns.uniform(step + 2, 0) < local_fraction;
      if (local) {
        Vec dir(d);
        ns.fill_normal(step + 3, dir);
        double nrm = dir.norm();
        if (nrm == 0.0) continue;
        double r = 1e-3 * std::max(1e-6, ns.uniform(step + 4, 0));
        y = x + (r / nrm) * dir;
      } else {
        for (int k = 0; k < d; ++k) {
          double u = ns.uniform(step + 5, static_cast<std::uint32_t>(k));
          y[k] = box.lo[k] + u * (box.hi[k] - box.lo[k]);
        }
      }
      if ((x - y).norm() > 0.0) return {x, y};
    }
    throw Error(Err::DegeneratePair, "pair sampler produced only degenerate pairs");
  }
};

struct ConfluenceReport {
  double alpha_hat = 0.0;      // -max over pairs of the H_C ratio
  double lipschitz_hat = 0.0;  // max over the same pairs of the H_L ratio
  bool violated = false;       // alpha_hat <= 0
  Vec worst_x;
  Vec worst_y;
  long n_pairs = 0;
  Box box;
};

inline ConfluenceReport check_confluence(const SDEModel& model, const PairSampler& sampler,
                                         long n_pairs) {
  require(n_pairs >= 1, Err::InvalidParameter, "check_confluence: n_pairs >= 1 required");
  require(sampler.box.dim() == model.dim, Err::DimensionMismatch, "sampler box dimension != model dim");
  ConfluenceReport rep;
  rep.n_pairs = n_pairs;
  rep.box = sampler.box;
  double max_ratio = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < n_pairs; ++i) {
    auto [x, y] = sampler.sample(static_cast<std::uint64_t>(i));
    Vec dxy = x - y;
    double dist2 = dxy.squaredNorm();
    Vec db = model.drift_at(x) - model.drift_at(y);
    Mat ds = model.diffusion_at(x) - model.diffusion_at(y);
    double hc = (2.0 * db.dot(dxy) + ds.squaredNorm()) / dist2;
    double hl = (db.norm() + ds.norm()) / std::sqrt(dist2);
    if (hc > max_ratio) {
      max_ratio = hc;
      rep.worst_x = x;
      rep.worst_y = y;
    }
    rep.lipschitz_hat = std::max(rep.lipschitz_hat, hl);
  }
  rep.alpha_hat = -max_ratio;
  rep.violated = rep.alpha_hat <= 0.0;
  return rep;
}

inline double check_lipschitz(const SDEModel& model, const PairSampler& sampler, long n_pairs) {
  return check_confluence(model, sampler, n_pairs).lipschitz_hat;
}

struct HajekReport {
  double k_prime = 0.0;
  double alpha_prime = 0.0;
  Box box;
};

// Smallest K' with 2(B(x)|x) + ||Sigma(x)||_F^2 <= K' - alpha' |x|^2 on the grid,
// alpha' = alpha_hat / 2. The inequality is re-verified pointwise before return.
inline HajekReport hajek_constants(const SDEModel& model, const Mat& x_grid,
                                   std::optional<double> alpha_hat = std::nullopt) {
  require(x_grid.rows() >= 1, Err::InvalidParameter, "hajek_constants: empty grid");
  double alpha = alpha_hat ? *alpha_hat : model.alpha_or(0.0);
  require(alpha > 0.0, Err::NotConfluent, "hajek_constants: alpha_hat <= 0");
  HajekReport rep;
  rep.alpha_prime = 0.5 * alpha;
  double k = 0.0;
  for (long i = 0; i < x_grid.rows(); ++i) {
    Vec x = x_grid.row(i).transpose();
    double lhs = 2.0 * model.drift_at(x).dot(x) + model.diffusion_at(x).squaredNorm();
    k = std::max(k, lhs + rep.alpha_prime * x.squaredNorm());
  }
  rep.k_prime = k;
  for (long i = 0; i < x_grid.rows(); ++i) {
    Vec x = x_grid.row(i).transpose();
    double lhs = 2.0 * model.drift_at(x).dot(x) + model.diffusion_at(x).squaredNorm();
    require(lhs <= rep.k_prime - rep.alpha_prime * x.squaredNorm() + 1e-12, Err::Internal,
            "hajek re-verification failed");
  }
  return rep;
}

}  // namespace ergow2
