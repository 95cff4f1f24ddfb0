#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergow2 {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Err {
  UnknownModel,
  InvalidParameter,
  DegeneratePair,
  NotConfluent,
  Unstable,
  NonFiniteState,
  DegenerateStart,
  DimensionMismatch,
  EmptyTrajectory,
  TooLarge,
  NotConverged,
  MassDefect,
  NoiseDominates,
  MissingIncrements,
  TailToleranceUnreachable,
  NonPositiveValue,
  UnboundedZ,
  SpecViolation,
  ConfigError,
  Internal,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::UnknownModel: return "UnknownModel";
    case Err::InvalidParameter: return "InvalidParameter";
    case Err::DegeneratePair: return "DegeneratePair";
    case Err::NotConfluent: return "NotConfluent";
    case Err::Unstable: return "Unstable";
    case Err::NonFiniteState: return "NonFiniteState";
    case Err::DegenerateStart: return "DegenerateStart";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::EmptyTrajectory: return "EmptyTrajectory";
    case Err::TooLarge: return "TooLarge";
    case Err::NotConverged: return "NotConverged";
    case Err::MassDefect: return "MassDefect";
    case Err::NoiseDominates: return "NoiseDominates";
    case Err::MissingIncrements: return "MissingIncrements";
    case Err::TailToleranceUnreachable: return "TailToleranceUnreachable";
    case Err::NonPositiveValue: return "NonPositiveValue";
    case Err::UnboundedZ: return "UnboundedZ";
    case Err::SpecViolation: return "SpecViolation";
    case Err::ConfigError: return "ConfigError";
    case Err::Internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

inline void require(bool cond, Err code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

// Axis-aligned box, the domain every sampled certificate refers to.
struct Box {
  Vec lo;
  Vec hi;

  static Box cube(int d, double a, double b) {
    Box box;
    box.lo = Vec::Constant(d, a);
    box.hi = Vec::Constant(d, b);
    return box;
  }
  int dim() const { return static_cast<int>(lo.size()); }
};

struct MeanStderr {
  double mean = 0.0;
  double se = 0.0;
  int n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  out.n = static_cast<int>(xs.size());
  if (out.n == 0) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / out.n;
  if (out.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (out.n - 1) / out.n);
  }
  return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// 97.5% Student-t quantile, for 95% confidence intervals on small fits.
inline double student_t_975(int df) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                 2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                 2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                 2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) return table[0];
  if (df <= 30) return table[df - 1];
  return 1.96;
}

inline std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_vec(const Vec& x) {
  return hash_bytes(x.data(), sizeof(double) * static_cast<std::size_t>(x.size()));
}

// Uniform grid over a box; cells indexed lexicographically. Supports the small
// dimensions (d <= 3) this library targets, but the odometer is generic.
struct GridSpec {
  Vec lo;
  Vec hi;
  double spacing = 0.1;

  int dim() const { return static_cast<int>(lo.size()); }

  std::vector<long> cells_per_dim() const {
    std::vector<long> n(dim());
    for (int k = 0; k < dim(); ++k) {
      n[k] = std::max<long>(1, static_cast<long>(std::ceil((hi[k] - lo[k]) / spacing)));
    }
    return n;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int k = 0; k < dim(); ++k) v *= spacing;
    return v;
  }

  long cell_count() const {
    long total = 1;
    for (long nk : cells_per_dim()) {
      require(total <= (1L << 28) / std::max(1L, nk), Err::TooLarge, "grid too fine");
      total *= nk;
    }
    return total;
  }

  // Calls fn(center) for every cell center.
  template <typename Fn>
  void for_each_center(Fn&& fn) const {
    const int d = dim();
    const auto n = cells_per_dim();
    std::vector<long> idx(d, 0);
    Vec c(d);
    while (true) {
      for (int k = 0; k < d; ++k) c[k] = lo[k] + (idx[k] + 0.5) * spacing;
      fn(c);
      int k = 0;
      while (k < d && ++idx[k] == n[k]) idx[k++] = 0;
      if (k == d) break;
    }
  }
};

}  // namespace ergow2
