#pragma once

#include "ergow2/common.hpp"
#include "ergow2/rng.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace ergow2 {

// Finite measure with positive weights summing to 1. Points are rows.
struct DiscreteMeasure {
  Mat points;   // n x d
  Vec weights;  // n

  long size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
  Vec point(long i) const { return points.row(i).transpose(); }

  void validate(double tol = 1e-12) const {
    require(points.rows() == weights.size(), Err::Internal, "measure: points/weights mismatch");
    require(points.allFinite(), Err::Internal, "measure: non-finite atom location");
    require(weights.minCoeff() > 0.0, Err::Internal, "measure: non-positive weight");
    require(std::abs(weights.sum() - 1.0) <= tol, Err::Internal, "measure: mass != 1");
  }

  static DiscreteMeasure dirac(const Vec& x) {
    DiscreteMeasure m;
    m.points = x.transpose();
    m.weights = Vec::Ones(1);
    return m;
  }

  static DiscreteMeasure from_rows(Mat pts, Vec w) {
    DiscreteMeasure m;
    m.points = std::move(pts);
    m.weights = std::move(w);
    m.weights /= m.weights.sum();
    // large supports accumulate ~n*eps of rounding; pin the mass exactly
    m.weights[0] += 1.0 - m.weights.sum();
    return m;
  }

  static DiscreteMeasure equal_weights(Mat pts) {
    const long n = pts.rows();
    return from_rows(std::move(pts), Vec::Constant(n, 1.0 / static_cast<double>(n)));
  }

  double integrate(const std::function<double(const Vec&)>& f) const {
    double s = 0.0;
    for (long i = 0; i < size(); ++i) s += weights[i] * f(point(i));
    return s;
  }

  DiscreteMeasure translated(const Vec& shift) const {
    DiscreteMeasure m = *this;
    m.points.rowwise() += shift.transpose();
    return m;
  }
};

// Merges atoms whose locations coincide within tol (inf-norm), summing weights.
// Lexicographic sort keeps this O(n log n); ties straddling a sort boundary at
// exactly tol are left unmerged, which is harmless for the 1e-12 default.
inline DiscreteMeasure merge_close_atoms(const DiscreteMeasure& mu, double tol = 1e-12) {
  const long n = mu.size();
  const int d = mu.dim();
  if (n <= 1) return mu;
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    for (int k = 0; k < d; ++k) {
      if (mu.points(a, k) != mu.points(b, k)) return mu.points(a, k) < mu.points(b, k);
    }
    return false;
  });
  std::vector<long> keep;
  std::vector<double> w;
  keep.reserve(n);
  for (long idx = 0; idx < n; ++idx) {
    long i = order[idx];
    bool merged = false;
    if (!keep.empty()) {
      long j = keep.back();
      if ((mu.points.row(i) - mu.points.row(j)).lpNorm<Eigen::Infinity>() <= tol) {
        w.back() += mu.weights[i];
        merged = true;
      }
    }
    if (!merged) {
      keep.push_back(i);
      w.push_back(mu.weights[i]);
    }
  }
  DiscreteMeasure out;
  out.points.resize(static_cast<long>(keep.size()), d);
  out.weights.resize(static_cast<long>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.points.row(static_cast<long>(k)) = mu.points.row(keep[k]);
    out.weights[static_cast<long>(k)] = w[k];
  }
  return out;
}

// Systematic weight-preserving subsampling down to at most m equal-weight atoms.
inline DiscreteMeasure thin_measure(const DiscreteMeasure& mu, long m) {
  require(m >= 1, Err::InvalidParameter, "thin_measure: m >= 1");
  if (mu.size() <= m) return mu;
  DiscreteMeasure out;
  out.points.resize(m, mu.dim());
  out.weights = Vec::Constant(m, 1.0 / static_cast<double>(m));
  double cum = 0.0;
  long i = 0;
  double total = mu.weights.sum();
  for (long k = 0; k < m; ++k) {
    double target = (k + 0.5) / static_cast<double>(m) * total;
    while (i + 1 < mu.size() && cum + mu.weights[i] < target) {
      cum += mu.weights[i];
      ++i;
    }
    out.points.row(k) = mu.points.row(i);
  }
  return out;
}

}  // namespace ergow2
