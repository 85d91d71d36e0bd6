#pragma once

// Ground-truth CP representations and the two synthetic data models: the
// spiked covariance model (i.i.d. order-K samples whose covariance tensor is a
// pairwise-symmetric order-2K CP tensor) and the noisy order-N CP tensor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tpca/error.hpp"
#include "tpca/random.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

/// sum_j weights[j] * a_{j,0} ⊗ ... ⊗ a_{j,N-1}. With symmetric_pair set, the
/// `factors` hold modes 0..K-1 of an order-2K tensor whose mode K+k repeats
/// mode k.
struct CPDecomposition {
  Vector weights;
  std::vector<Matrix> factors;
  bool symmetric_pair = false;

  std::size_t rank() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t distinct_modes() const { return factors.size(); }
  std::size_t order() const { return symmetric_pair ? 2 * factors.size() : factors.size(); }

  const Matrix& factor(std::size_t mode) const { return factors.at(mode % factors.size()); }

  /// Mode sizes of the represented tensor.
  Shape shape() const {
    Shape s;
    for (std::size_t k = 0; k < order(); ++k) s.push_back(static_cast<std::size_t>(factor(k).rows()));
    return s;
  }

  /// Checks the ground-truth invariants: positive descending weights and unit
  /// factor columns.
  void validate(double tol = 1e-10) const {
    detail::require(!factors.empty(), "CP decomposition has no factors");
    detail::require(weights.size() > 0, "CP decomposition has rank 0");
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      detail::require(weights[j] > 0, "CP weights must be positive");
      if (j) detail::require(weights[j] <= weights[j - 1], "CP weights must be sorted descending");
    }
    for (const auto& a : factors) {
      detail::require(a.cols() == weights.size(), "factor column count does not match rank");
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        detail::require(std::abs(a.col(j).norm() - 1.0) <= tol, "factor columns must have unit norm");
      }
    }
  }
};

/// d_1..d_K of an order-2K tensor whose mode K+k pairs with mode k.
inline Shape paired_dims(const Shape& shape) {
  detail::require(shape.size() >= 2 && shape.size() % 2 == 0,
                  "tensor of order " + std::to_string(shape.size()) + " cannot be pairwise symmetric");
  const std::size_t k = shape.size() / 2;
  for (std::size_t i = 0; i < k; ++i) {
    detail::require(shape[i] == shape[k + i], "modes " + std::to_string(i) + " and " + std::to_string(k + i) +
                                                  " differ in size; shape " + shape_string(shape) +
                                                  " is not pairable");
  }
  return Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(k));
}

/// Reorders components by decreasing weight.
inline CPDecomposition sort_components(CPDecomposition cp) {
  std::vector<Eigen::Index> idx(cp.rank());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return cp.weights[a] > cp.weights[b]; });
  CPDecomposition out;
  out.symmetric_pair = cp.symmetric_pair;
  out.weights.resize(cp.weights.size());
  for (const auto& a : cp.factors) out.factors.emplace_back(a.rows(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out.weights[ii] = cp.weights[idx[i]];
    for (std::size_t k = 0; k < cp.factors.size(); ++k) out.factors[k].col(ii) = cp.factors[k].col(idx[i]);
  }
  return out;
}

/// vec of the rank-one tensor of component j over `modes` (lowest listed mode fastest).
inline Vector component_vector(const CPDecomposition& cp, std::size_t j, const ModeSet& modes) {
  Vector col = Vector::Ones(1);
  for (std::size_t k : modes) {
    const auto a = cp.factor(k).col(static_cast<Eigen::Index>(j));
    Vector next(col.size() * a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) next.segment(i * col.size(), col.size()) = col * a[i];
    col = std::move(next);
  }
  return col;
}

/// sum_j lambda_j ⊗_k a_jk as a dense tensor.
inline DenseTensor compose(const CPDecomposition& cp) {
  const Shape shape = cp.shape();
  ModeSet all(shape.size());
  std::iota(all.begin(), all.end(), 0);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(shape_size(shape)));
  for (std::size_t j = 0; j < cp.rank(); ++j) {
    acc += cp.weights[static_cast<Eigen::Index>(j)] * component_vector(cp, j, all);
  }
  return DenseTensor::from_vector(acc, shape);
}

/// d x r matrix with unit columns whose pairwise inner products all equal
/// theta: A = Q C^{1/2}, Q a Haar-random orthonormal frame and C the
/// compound-symmetric Gram with unit diagonal.
inline Matrix gen_basis(std::size_t d, std::size_t r, double theta, Rng& rng) {
  detail::require(r >= 1 && r <= d, "gen_basis: need 1 <= r <= d");
  detail::require(theta >= 0 && (r == 1 || theta < 1.0 / static_cast<double>(r - 1)),
                  "gen_basis: coherence target infeasible for this rank (need 0 <= theta < 1/(r-1))");
  const Matrix g = rng.normal_matrix(d, r);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
  const Matrix rr = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (rr(j, j) < 0) q.col(j) = -q.col(j);
  }
  const auto ri = static_cast<Eigen::Index>(r);
  Matrix c = Matrix::Constant(ri, ri, theta);
  c.diagonal().setOnes();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  const Matrix root = es.operatorSqrt();
  Matrix a = q * root;
  for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) /= a.col(j).norm();
  return a;
}

/// r weights interpolated geometrically from top down to top/ratio.
inline Vector geometric_weights(double top, double ratio, std::size_t r) {
  detail::require(top > 0 && ratio >= 1, "geometric_weights: need top > 0 and ratio >= 1");
  Vector w(static_cast<Eigen::Index>(r));
  for (std::size_t j = 0; j < r; ++j) {
    const double t = r == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(r - 1);
    w[static_cast<Eigen::Index>(j)] = top * std::pow(ratio, -t);
  }
  return w;
}

/// Random CP model with per-mode compound-symmetric coherence theta.
inline CPDecomposition make_cp(const Shape& dims, const Vector& weights, double theta, Rng& rng,
                               bool symmetric_pair = false) {
  CPDecomposition cp;
  cp.weights = weights;
  cp.symmetric_pair = symmetric_pair;
  for (std::size_t d : dims) cp.factors.push_back(gen_basis(d, static_cast<std::size_t>(weights.size()), theta, rng));
  cp.validate();
  return cp;
}

/// n i.i.d. order-K samples. Stored as the d x n matrix whose column i is
/// vec(X_i).
struct SampleBatch {
  Shape shape;
  Matrix data;
  std::uint64_t seed = 0;
  double sigma = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(data.cols()); }

  DenseTensor sample(std::size_t i) const { return DenseTensor::from_vector(data.col(static_cast<Eigen::Index>(i)), shape); }

  /// The samples as one order-(K+1) tensor whose last mode indexes i.
  DenseTensor stacked() const {
    Shape s = shape;
    s.push_back(n());
    return DenseTensor(s, std::vector<double>(data.data(), data.data() + data.size()));
  }
};

struct SpikedOptions {
  /// Replaces every factor draw f_ij by this value (test hook).
  std::optional<double> fixed_factor;
};

/// X_i = sum_j sqrt(lambda_j) f_ij ⊗_k a_jk + E_i with f_ij ~ N(0,1) and
/// E_i entries ~ N(0, sigma^2). Per sample the stream yields f_i1..f_ir and
/// then the noise entries in storage order.
inline SampleBatch gen_spiked_samples(const CPDecomposition& cp, std::size_t n, double sigma, std::uint64_t seed,
                                      const SpikedOptions& opts = {}) {
  detail::require(cp.symmetric_pair, "gen_spiked_samples: needs a pairwise-symmetric model");
  detail::require(n >= 1 && sigma >= 0, "gen_spiked_samples: need n >= 1 and sigma >= 0");
  ModeSet modes(cp.distinct_modes());
  std::iota(modes.begin(), modes.end(), 0);
  Matrix basis(0, 0);
  for (std::size_t j = 0; j < cp.rank(); ++j) {
    Vector a = component_vector(cp, j, modes);
    if (j == 0) basis.resize(a.size(), static_cast<Eigen::Index>(cp.rank()));
    basis.col(static_cast<Eigen::Index>(j)) = std::sqrt(cp.weights[static_cast<Eigen::Index>(j)]) * a;
  }
  SampleBatch batch;
  batch.shape = Shape(cp.factors.size());
  for (std::size_t k = 0; k < cp.factors.size(); ++k) batch.shape[k] = static_cast<std::size_t>(cp.factors[k].rows());
  batch.seed = seed;
  batch.sigma = sigma;
  batch.data.resize(basis.rows(), static_cast<Eigen::Index>(n));
  Rng rng(seed);
  Vector f(static_cast<Eigen::Index>(cp.rank()));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      const double draw = rng.normal();
      f[j] = opts.fixed_factor ? *opts.fixed_factor : draw;
    }
    auto col = batch.data.col(i);
    col = basis * f;
    for (Eigen::Index e = 0; e < col.size(); ++e) col[e] += sigma * rng.normal();
  }
  return batch;
}

/// (vec X_1, ..., vec X_n) / sqrt(n).
inline Matrix data_matrix(const SampleBatch& batch) {
  detail::require(batch.n() >= 1, "data_matrix: empty batch");
  return batch.data / std::sqrt(static_cast<double>(batch.n()));
}

/// n^{-1} sum_i X_i ⊗ X_i, an order-2K tensor.
inline DenseTensor covariance_tensor(const SampleBatch& batch) {
  const Matrix y = data_matrix(batch);
  Matrix cov = y * y.transpose();
  cov = 0.5 * (cov + cov.transpose());
  Shape s = batch.shape;
  s.insert(s.end(), batch.shape.begin(), batch.shape.end());
  return DenseTensor(s, std::vector<double>(cov.data(), cov.data() + cov.size()));
}

/// compose(cp) plus i.i.d. N(0, sigma^2) noise drawn in storage order.
inline DenseTensor gen_noisy_cp(const CPDecomposition& cp, double sigma, Rng& rng) {
  detail::require(sigma >= 0, "gen_noisy_cp: sigma must be nonnegative");
  DenseTensor t = compose(cp);
  if (sigma > 0) {
    for (double& x : t.data()) x += sigma * rng.normal();
  }
  return t;
}

}  // namespace tpca
