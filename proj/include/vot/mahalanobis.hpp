#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/parallel.hpp"

namespace vot {

// Pairwise treated x control distances; infinity marks a forbidden pair
// (caliper violation or caller-imposed exclusion).
struct DistanceMatrix {
  std::vector<std::size_t> treated_index;  // indices into the source cohort
  std::vector<std::size_t> control_index;
  std::vector<double> d;  // row-major, treated x control
  bool regularized = false;

  std::size_t rows() const { return treated_index.size(); }
  std::size_t cols() const { return control_index.size(); }
  double& at(std::size_t t, std::size_t c) { return d[t * cols() + c]; }
  double at(std::size_t t, std::size_t c) const { return d[t * cols() + c]; }
};

namespace detail {

// In-place Cholesky of a symmetric positive-definite matrix (row-major k x k).
// Returns false if the matrix is not numerically positive definite; pivots
// are checked against a tolerance relative to the largest diagonal entry so
// that exactly collinear inputs are flagged rather than factored with noise.
inline bool cholesky(std::vector<double>& a, std::size_t k) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) max_diag = std::max(max_diag, a[i * k + i]);
  const double tol = 1e-12 * max_diag;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * k + p] * a[j * k + p];
      if (i == j) {
        if (s <= tol || !std::isfinite(s)) return false;
        a[i * k + i] = std::sqrt(s);
      } else {
        a[i * k + j] = s / a[j * k + j];
      }
    }
  }
  return true;
}

// Solves L L^T x = b given the Cholesky factor in a's lower triangle.
inline void cholesky_solve(const std::vector<double>& a, std::size_t k, std::vector<double>& b) {
  for (std::size_t i = 0; i < k; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= a[i * k + p] * b[p];
    b[i] = s / (a[i * k + i]);
  }
  for (std::size_t ii = k; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t p = ii + 1; p < k; ++p) s -= a[p * k + ii] * b[p];
    b[ii] = s / a[ii * k + ii];
  }
}

}  // namespace detail

// Mahalanobis distance on the pooled within-group covariance. A singular
// covariance gets 1e-8 * trace/k added to the diagonal and the matrix is
// flagged `regularized`.
inline DistanceMatrix mahalanobis_distances(const Cohort& c) {
  const std::size_t k = c.covariate_names.size();
  require(k >= 1, errc::invalid_input, "mahalanobis_distances: cohort has no covariates");

  DistanceMatrix dm;
  for (std::size_t i = 0; i < c.units.size(); ++i)
    (c.units[i].treated ? dm.treated_index : dm.control_index).push_back(i);
  const std::size_t nt = dm.rows();
  const std::size_t nc = dm.cols();
  require(nt >= 1 && nc >= 1, errc::invalid_input,
          "mahalanobis_distances: need at least one treated and one control");

  auto group_scatter = [&](const std::vector<std::size_t>& idx, std::vector<double>& mean) {
    mean.assign(k, 0.0);
    for (std::size_t i : idx)
      for (std::size_t p = 0; p < k; ++p) mean[p] += c.units[i].covariates[p];
    for (double& m : mean) m /= static_cast<double>(idx.size());
    std::vector<double> scatter(k * k, 0.0);
    for (std::size_t i : idx)
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q <= p; ++q)
          scatter[p * k + q] += (c.units[i].covariates[p] - mean[p]) *
                                (c.units[i].covariates[q] - mean[q]);
    return scatter;
  };

  std::vector<double> mt, mc;
  auto st = group_scatter(dm.treated_index, mt);
  auto sc = group_scatter(dm.control_index, mc);
  std::vector<double> cov(k * k, 0.0);
  const double df = static_cast<double>(nt + nc) - 2.0;
  double trace = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = 0; q <= p; ++q) {
      const double v = (st[p * k + q] + sc[p * k + q]) / (df > 0.0 ? df : 1.0);
      cov[p * k + q] = v;
      cov[q * k + p] = v;
    }
    trace += cov[p * k + p];
  }

  std::vector<double> chol = cov;
  if (!detail::cholesky(chol, k)) {
    dm.regularized = true;
    if (trace <= 0.0) {
      // No within-group variation at all (e.g. a single unit per arm):
      // fall back to the identity metric.
      chol.assign(k * k, 0.0);
      for (std::size_t p = 0; p < k; ++p) chol[p * k + p] = 1.0;
    } else {
      chol = cov;
      const double ridge = 1e-8 * trace / static_cast<double>(k);
      for (std::size_t p = 0; p < k; ++p) chol[p * k + p] += ridge;
      require(detail::cholesky(chol, k), errc::numeric,
              "mahalanobis_distances: covariance not positive semi-definite");
    }
  }

  dm.d.assign(nt * nc, 0.0);
  parallel_for(nt, [&](std::size_t t) {
    std::vector<double> diff(k);
    const auto& xt = c.units[dm.treated_index[t]].covariates;
    for (std::size_t j = 0; j < nc; ++j) {
      const auto& xc = c.units[dm.control_index[j]].covariates;
      for (std::size_t p = 0; p < k; ++p) diff[p] = xt[p] - xc[p];
      std::vector<double> y = diff;
      detail::cholesky_solve(chol, k, y);
      double q = 0.0;
      for (std::size_t p = 0; p < k; ++p) q += diff[p] * y[p];
      dm.d[t * nc + j] = std::sqrt(std::max(q, 0.0));
    }
  });
  return dm;
}

// Marks pairs farther than `caliper` apart as forbidden.
inline void apply_caliper(DistanceMatrix& dm, double caliper) {
  require(caliper > 0.0, errc::invalid_input, "caliper must be positive");
  for (double& v : dm.d)
    if (v > caliper) v = std::numeric_limits<double>::infinity();
}

}  // namespace vot
