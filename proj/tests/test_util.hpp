#pragma once

#include <cmath>
#include <vector>

#include "tpca/tpca.hpp"

namespace tpca::support {

inline DenseTensor random_tensor(const Shape& shape, Rng& rng) {
  DenseTensor t(shape);
  for (double& x : t.data()) x = rng.normal();
  return t;
}

// Multi-index of flat position `pos` (first index fastest).
inline std::vector<std::size_t> multi_index(std::size_t pos, const Shape& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t k = 0; k < shape.size(); ++k) {
    idx[k] = pos % shape[k];
    pos /= shape[k];
  }
  return idx;
}

// Entry-by-entry mode-k unfolding straight from the definition.
inline Matrix naive_unfold(const DenseTensor& t, std::size_t k) {
  const std::size_t n = t.order();
  Matrix m(static_cast<Eigen::Index>(t.dim(k)), static_cast<Eigen::Index>(t.size() / t.dim(k)));
  for (std::size_t pos = 0; pos < t.size(); ++pos) {
    const auto idx = multi_index(pos, t.shape());
    std::size_t col = 0, stride = 1;
    for (std::size_t i = 1; i < n; ++i) {
      const std::size_t mode = (k + i) % n;
      col += idx[mode] * stride;
      stride *= t.dim(mode);
    }
    m(static_cast<Eigen::Index>(idx[k]), static_cast<Eigen::Index>(col)) = t.data()[pos];
  }
  return m;
}

// Least-squares slope of y on x.
inline double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Truth factors tilted so that every column is at sine distance `s` from the truth.
inline CPDecomposition perturb(const CPDecomposition& truth, double s, Rng& rng) {
  CPDecomposition out = truth;
  for (auto& a : out.factors) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const Vector c = a.col(j);
      Vector g = rng.normal_vector(static_cast<std::size_t>(c.size()));
      g -= c.dot(g) * c;
      g /= g.norm();
      a.col(j) = std::sqrt(1 - s * s) * c + s * g;
    }
  }
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace tpca::support
