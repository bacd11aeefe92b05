#pragma once

// Robust rank-based Mahalanobis distance between all unit pairs of one
// stratum.
//
// Construction, for L units and k covariates:
//   1. replace each covariate column by average ranks (ties share the
//      mean of the rank positions they occupy),
//   2. take the population covariance of the rank columns (divide by L),
//   3. rescale its diagonal to the variance of an untied rank column,
//      (L*L - 1) / 12, preserving correlations, so a heavily tied column
//      (e.g. a rare binary flag) cannot dominate through deflated variance,
//   4. distance(l, m) = (r_l - r_m)' S^+ (r_l - r_m) using the Moore,
//      Penrose pseudo-inverse of the rescaled matrix S.
//
// Ranks cap the influence of outliers; the pseudo-inverse keeps the
// quadratic form well defined when columns are constant or collinear
// within the stratum (a constant column simply drops out).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivmatch {

struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> d;   // row-major n*n, symmetric, zero diagonal
  bool degenerate = false;  // pseudo-inverse dropped at least one direction

  double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return d[i * n + j]; }
};

namespace detail {

// Average ranks, 1-based: values tied over rank positions p..q all get
// (p + q) / 2.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of positions i..j, 1-based
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace detail

// rows: L unit covariate vectors, all of size k >= 1.
inline DistanceMatrix robust_mahalanobis(const std::vector<std::vector<double>>& rows) {
  const std::size_t L = rows.size();
  if (L < 2) throw std::invalid_argument("robust_mahalanobis: need at least 2 units");
  const std::size_t k = rows[0].size();
  if (k == 0) throw std::invalid_argument("robust_mahalanobis: need at least 1 covariate");
  for (const auto& r : rows) {
    if (r.size() != k)
      throw std::invalid_argument("robust_mahalanobis: ragged covariate rows");
    for (double v : r)
      if (!std::isfinite(v))
        throw std::invalid_argument("robust_mahalanobis: non-finite covariate");
  }

  // Rank matrix R (L x k), column by column.
  Eigen::MatrixXd R(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(k));
  std::vector<double> col(L);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < L; ++i) col[i] = rows[i][j];
    std::vector<double> rk = detail::average_ranks(col);
    for (std::size_t i = 0; i < L; ++i)
      R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rk[i];
  }

  const double Ld = static_cast<double>(L);
  Eigen::RowVectorXd mean = R.colwise().mean();
  Eigen::MatrixXd C = R.rowwise() - mean;
  Eigen::MatrixXd S = (C.transpose() * C) / Ld;  // population covariance

  // Diagonal rescale to the untied-rank variance.
  const double target = (Ld * Ld - 1.0) / 12.0;
  Eigen::VectorXd scale(static_cast<Eigen::Index>(k));
  bool zero_col = false;
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    double v = S(j, j);
    if (v > 0.0) {
      scale(j) = std::sqrt(target / v);
    } else {
      scale(j) = 0.0;  // constant column: drop it from the form
      zero_col = true;
    }
  }
  Eigen::MatrixXd Ss = scale.asDiagonal() * S * scale.asDiagonal();

  // Pseudo-inverse through the eigendecomposition (Ss is symmetric PSD).
  // Eigenvalues below a relative floor are treated as exact zeros.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Ss);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("robust_mahalanobis: eigendecomposition failed");
  Eigen::VectorXd ev = eig.eigenvalues();
  double emax = 0.0;
  for (Eigen::Index j = 0; j < ev.size(); ++j) emax = std::max(emax, ev(j));
  const double floor = 1e-10 * emax;
  bool dropped = zero_col;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    if (ev(j) > floor && ev(j) > 0.0) {
      inv(j) = 1.0 / ev(j);
    } else {
      inv(j) = 0.0;
      dropped = true;
    }
  }
  Eigen::MatrixXd P =
      eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();

  // Scale the rank rows once; pairwise forms come from the Gram matrix.
  Eigen::MatrixXd Rs = C * scale.asDiagonal();
  Eigen::MatrixXd G = Rs * P * Rs.transpose();

  DistanceMatrix out;
  out.n = L;
  out.degenerate = dropped;
  out.d.assign(L * L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = i + 1; j < L; ++j) {
      double w = G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +
                 G(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) -
                 2.0 * G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (w < 0.0) w = 0.0;  // numerical noise on collinear data
      out.at(i, j) = w;
      out.at(j, i) = w;
    }
  }
  return out;
}

// Median of the off-diagonal distances (each unordered pair counted once).
inline double median_distance(const DistanceMatrix& m) {
  std::vector<double> v;
  v.reserve(m.n * (m.n - 1) / 2);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = i + 1; j < m.n; ++j) v.push_back(m(i, j));
  if (v.empty()) throw std::invalid_argument("median_distance: no pairs");
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

// Debug dump: full square matrix with ids as header and row labels.
inline void write_distance_csv(std::ostream& out, const DistanceMatrix& m,
                               const std::vector<std::string>& ids) {
  if (ids.size() != m.n)
    throw std::invalid_argument("write_distance_csv: id count mismatch");
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    out << ids[i];
    for (std::size_t j = 0; j < m.n; ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", m(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace ivmatch
