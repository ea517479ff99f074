#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqtree/pauli.hpp"

namespace vqtree {

/// Row-major square matrix of doubles; small and plain on purpose.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<double> data;
  double sigma = 0.0;
  bool unsplittable = false;

  double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

struct Bipartition {
  std::vector<std::size_t> group_a;
  std::vector<std::size_t> group_b;
};

struct UnsplittableCluster : std::runtime_error {
  UnsplittableCluster() : std::runtime_error("cluster members are mutually identical") {}
};

/// Pairwise l1 distances between the selected padded coefficient rows.
inline DenseMatrix distance_matrix(const PaddedTaskSet& p,
                                   const std::vector<std::size_t>& members) {
  if (members.size() < 2) throw std::invalid_argument("distance matrix needs >= 2 members");
  DenseMatrix d(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double v = l1_distance(p.coeff_rows.at(members[i]), p.coeff_rows.at(members[j]));
      d.at(i, j) = v;
      d.at(j, i) = v;
    }
  }
  return d;
}

/// Gaussian kernel S_ij = exp(-D_ij^2 / (2 sigma^2)) with sigma the median
/// off-diagonal distance. All-identical inputs yield the all-ones matrix
/// flagged unsplittable rather than an error.
inline SimilarityMatrix rbf_kernel(const DenseMatrix& d) {
  SimilarityMatrix s;
  s.n = d.n;
  s.data.assign(d.n * d.n, 1.0);

  std::vector<double> upper;
  upper.reserve(d.n * (d.n - 1) / 2);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = i + 1; j < d.n; ++j) upper.push_back(d.at(i, j));
  if (upper.empty()) {
    s.unsplittable = true;
    return s;
  }
  std::sort(upper.begin(), upper.end());
  const std::size_t m = upper.size();
  s.sigma = (m % 2 == 1) ? upper[m / 2] : 0.5 * (upper[m / 2 - 1] + upper[m / 2]);

  if (s.sigma < 1e-15) {
    s.sigma = 0.0;
    s.unsplittable = true;
    return s;  // all ones
  }
  const double denom = 2.0 * s.sigma * s.sigma;
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = 0; j < d.n; ++j) {
      const double dist = d.at(i, j);
      s.data[i * d.n + j] = (i == j) ? 1.0 : std::exp(-dist * dist / denom);
    }
  return s;
}

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // column k pairs with values[k]
};

/// Cyclic Jacobi rotations for small symmetric matrices. Sweeps until the
/// off-diagonal Frobenius norm drops below tol.
inline EigenDecomposition jacobi_eigensolve(const DenseMatrix& m, double tol = 1e-12,
                                            int max_sweeps = 100) {
  const std::size_t n = m.n;
  if (n == 0) throw std::invalid_argument("empty matrix");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m.at(i, j) - m.at(j, i)) > 1e-12 * std::max(1.0, std::abs(m.at(i, j))))
        throw std::invalid_argument("matrix is not symmetric");

  DenseMatrix a = m;
  DenseMatrix v(n);
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a.at(i, j) * a.at(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() >= tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < tol / (10.0 * static_cast<double>(n))) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a.at(x, x) < a.at(y, y); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a.at(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, k) = v.at(i, order[k]);
  }
  return out;
}

namespace detail {

// Deterministic 2-means on 2-D rows: centers start at the farthest pair.
inline std::vector<int> kmeans2(const std::vector<std::array<double, 2>>& rows) {
  const std::size_t n = rows.size();
  auto dist2 = [&](const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return dx * dx + dy * dy;
  };

  std::size_t pa = 0, pb = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (dist2(rows[i], rows[j]) > best) {
        best = dist2(rows[i], rows[j]);
        pa = i;
        pb = j;
      }

  std::array<double, 2> ca = rows[pa], cb = rows[pb];
  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int want = dist2(rows[i], cb) < dist2(rows[i], ca) ? 1 : 0;
      if (want != assign[i]) {
        assign[i] = want;
        changed = true;
      }
    }
    std::array<double, 2> sum_a{0, 0}, sum_b{0, 0};
    std::size_t na = 0, nb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[i] == 0) {
        sum_a[0] += rows[i][0];
        sum_a[1] += rows[i][1];
        ++na;
      } else {
        sum_b[0] += rows[i][0];
        sum_b[1] += rows[i][1];
        ++nb;
      }
    }
    if (na > 0) ca = {sum_a[0] / na, sum_a[1] / na};
    if (nb > 0) cb = {sum_b[0] / nb, sum_b[1] / nb};
    if (!changed) break;
  }
  return assign;
}

}  // namespace detail

/// Normalized-Laplacian spectral split into two nonempty groups.
/// Deterministic: farthest-pair k-means seeding, stable tie handling.
inline Bipartition spectral_bipartition(const SimilarityMatrix& s, std::uint64_t /*seed*/ = 0) {
  const std::size_t n = s.n;
  if (n < 2) throw std::invalid_argument("bipartition needs >= 2 members");
  if (s.unsplittable) throw UnsplittableCluster();
  {
    bool all_ones = true;
    for (std::size_t i = 0; i < n && all_ones; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (s.at(i, j) < 1.0 - 1e-12) {
          all_ones = false;
          break;
        }
    if (all_ones) throw UnsplittableCluster();
  }

  // L_sym = I - D^{-1/2} S D^{-1/2}
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += s.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  DenseMatrix lap(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      lap.at(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt_deg[i] * s.at(i, j) * inv_sqrt_deg[j];

  const EigenDecomposition eig = jacobi_eigensolve(lap);

  // Row-normalized embedding on the two smallest eigenvectors.
  std::vector<std::array<double, 2>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = eig.vectors.at(i, 0);
    double y = n > 1 ? eig.vectors.at(i, 1) : 0.0;
    const double norm = std::sqrt(x * x + y * y);
    if (norm > 1e-300) {
      x /= norm;
      y /= norm;
    }
    rows[i] = {x, y};
  }

  std::vector<int> assign = detail::kmeans2(rows);

  Bipartition part;
  for (std::size_t i = 0; i < n; ++i)
    (assign[i] == assign[0] ? part.group_a : part.group_b).push_back(i);

  if (part.group_b.empty()) {
    // k-means collapse: peel off the point farthest from the overall centroid.
    std::array<double, 2> centroid{0, 0};
    for (const auto& r : rows) {
      centroid[0] += r[0];
      centroid[1] += r[1];
    }
    centroid[0] /= n;
    centroid[1] /= n;
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = rows[i][0] - centroid[0], dy = rows[i][1] - centroid[1];
      const double d = dx * dx + dy * dy;
      if (d > best) {
        best = d;
        far = i;
      }
    }
    part.group_a.clear();
    part.group_b.clear();
    for (std::size_t i = 0; i < n; ++i) (i == far ? part.group_b : part.group_a).push_back(i);
    if (part.group_b.front() == 0) std::swap(part.group_a, part.group_b);
  }
  return part;
}

}  // namespace vqtree
