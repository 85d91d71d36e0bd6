#pragma once

// Eigen/SVD kernels with a deterministic sign convention: in every returned
// singular or eigen vector the entry of largest magnitude is positive (the
// lowest index wins ties).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "tpca/error.hpp"
#include "tpca/random.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

struct SpectralOptions {
  /// Relative residual target for the iterative path.
  double tol = 1e-12;
  /// Matrices whose smaller dimension is at most this use a dense solver.
  std::size_t dense_limit = 512;
  std::size_t max_iter = 5000;
};

struct SpectralResult {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns aligned with values
};

struct SvdResult {
  Matrix u;
  Vector s;  // descending, nonnegative
  Matrix v;
};

/// Flips v so its largest-magnitude entry is positive; returns the factor applied.
inline double normalize_sign(Eigen::Ref<Vector> v) {
  Eigen::Index best = 0;
  double mag = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > mag) {
      mag = std::abs(v[i]);
      best = i;
    }
  }
  if (v.size() && v[best] < 0) {
    v = -v;
    return -1.0;
  }
  return 1.0;
}

inline void normalize_signs(Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Vector c = m.col(j);
    normalize_sign(c);
    m.col(j) = c;
  }
}

namespace detail {

using BlockOperator = std::function<Matrix(const Matrix&)>;

inline Matrix orthonormalize(const Matrix& x) {
  Eigen::HouseholderQR<Matrix> qr(x);
  return qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
}

// Block subspace iteration with Rayleigh-Ritz extraction for the r
// eigenvalues of largest magnitude of a symmetric operator of size n.
inline SpectralResult subspace_eigs(const BlockOperator& apply, std::size_t n, std::size_t r,
                                    const SpectralOptions& opts) {
  const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(n, r + std::max<std::size_t>(8, r)));
  Rng rng(0x5eed5eedULL + n);
  Matrix q = orthonormalize(rng.normal_matrix(n, static_cast<std::size_t>(b)));
  Vector theta;
  Matrix ritz;
  double residual = 0;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    const Matrix aq = apply(q);
    const Matrix h = q.transpose() * aq;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.transpose()));
    // order Ritz pairs by decreasing magnitude
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(b));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto c) {
      return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[c]);
    });
    theta.resize(b);
    Matrix w(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
      theta[i] = es.eigenvalues()[idx[static_cast<std::size_t>(i)]];
      w.col(i) = es.eigenvectors().col(idx[static_cast<std::size_t>(i)]);
    }
    ritz = q * w;
    const Matrix aritz = aq * w;
    const double scale = std::max(std::abs(theta[0]), std::numeric_limits<double>::min());
    residual = 0;
    for (std::size_t j = 0; j < r; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      residual = std::max(residual, (aritz.col(jj) - theta[jj] * ritz.col(jj)).norm() / scale);
    }
    if (residual <= std::max(opts.tol, 1e-14)) break;
    q = orthonormalize(aritz);
    if (it + 1 == opts.max_iter) {
      std::ostringstream msg;
      msg << "subspace iteration did not converge in " << opts.max_iter << " steps (residual " << residual << ")";
      throw NumericalError(msg.str());
    }
  }
  SpectralResult out;
  out.values = theta.head(static_cast<Eigen::Index>(r));
  out.vectors = ritz.leftCols(static_cast<Eigen::Index>(r));
  return out;
}

}  // namespace detail

/// Top-r eigenpairs, by algebraic value, of (m + m^T)/2.
inline SpectralResult top_eigs_sym(const Matrix& m, std::size_t r, const SpectralOptions& opts = {}) {
  detail::require(m.rows() == m.cols(), "top_eigs_sym: matrix is not square");
  const auto n = static_cast<std::size_t>(m.rows());
  detail::require(r >= 1 && r <= n, "top_eigs_sym: r=" + std::to_string(r) + " out of range for size " +
                                        std::to_string(n));
  const Matrix sym = 0.5 * (m + m.transpose());
  SpectralResult out;
  if (n <= opts.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("top_eigs_sym: dense eigensolver failed");
    const auto ri = static_cast<Eigen::Index>(r);
    out.values = es.eigenvalues().tail(ri).reverse();
    out.vectors = es.eigenvectors().rightCols(ri).rowwise().reverse();
  } else {
    auto apply = [&sym](const Matrix& x) -> Matrix { return sym * x; };
    out = detail::subspace_eigs(apply, n, r, opts);
    // Largest magnitude is not largest algebraic when big negative
    // eigenvalues exist; shift the spectrum to be nonnegative and redo.
    const double lead = out.values.cwiseAbs().maxCoeff();
    if (out.values.minCoeff() < 0) {
      const double shift = sym.norm();  // Frobenius bound on the spectral radius
      auto shifted = [&sym, shift](const Matrix& x) -> Matrix { return sym * x + shift * x; };
      SpectralOptions o = opts;
      o.tol = opts.tol * lead / (lead + shift);
      out = detail::subspace_eigs(shifted, n, r, o);
      out.values.array() -= shift;
    }
    std::vector<Eigen::Index> idx(r);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto c) { return out.values[a] > out.values[c]; });
    SpectralResult sorted{Vector(out.values.size()), Matrix(out.vectors.rows(), out.vectors.cols())};
    for (std::size_t i = 0; i < r; ++i) {
      sorted.values[static_cast<Eigen::Index>(i)] = out.values[idx[i]];
      sorted.vectors.col(static_cast<Eigen::Index>(i)) = out.vectors.col(idx[i]);
    }
    out = std::move(sorted);
  }
  normalize_signs(out.vectors);
  return out;
}

/// Leading r singular triplets.
inline SvdResult top_svd(const Matrix& m, std::size_t r, const SpectralOptions& opts = {}) {
  const auto small = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  detail::require(r >= 1 && r <= small, "top_svd: r=" + std::to_string(r) + " exceeds min dimension " +
                                            std::to_string(small));
  const auto ri = static_cast<Eigen::Index>(r);
  SvdResult out;
  if (small <= opts.dense_limit) {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("top_svd: dense SVD failed");
    out.u = svd.matrixU().leftCols(ri);
    out.s = svd.singularValues().head(ri);
    out.v = svd.matrixV().leftCols(ri);
  } else if (m.rows() <= m.cols()) {
    auto apply = [&m](const Matrix& x) -> Matrix { return m * (m.transpose() * x); };
    SpectralResult e = detail::subspace_eigs(apply, static_cast<std::size_t>(m.rows()), r, opts);
    out.u = e.vectors;
    out.s = e.values.cwiseMax(0.0).cwiseSqrt();
    out.v = m.transpose() * out.u;
    for (Eigen::Index j = 0; j < ri; ++j) out.v.col(j) /= out.v.col(j).norm();
  } else {
    auto apply = [&m](const Matrix& x) -> Matrix { return m.transpose() * (m * x); };
    SpectralResult e = detail::subspace_eigs(apply, static_cast<std::size_t>(m.cols()), r, opts);
    out.v = e.vectors;
    out.s = e.values.cwiseMax(0.0).cwiseSqrt();
    out.u = m * out.v;
    for (Eigen::Index j = 0; j < ri; ++j) out.u.col(j) /= out.u.col(j).norm();
  }
  for (Eigen::Index j = 0; j < ri; ++j) {
    Vector c = out.u.col(j);
    const double f = normalize_sign(c);
    out.u.col(j) = c;
    out.v.col(j) *= f;
  }
  return out;
}

inline Vector top_left_singular(const Matrix& m, const SpectralOptions& opts = {}) {
  detail::require(m.size() > 0, "top_left_singular: empty matrix");
  if (m.cols() == 1) {
    const double n = m.col(0).norm();
    if (n == 0) throw NumericalError("top_left_singular: zero matrix");
    Vector v = m.col(0) / n;
    normalize_sign(v);
    return v;
  }
  return top_svd(m, 1, opts).u.col(0);
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()[0];
}

/// ||A^T A - I||_S.
inline double gram_delta(const Matrix& a) {
  const Matrix g = a.transpose() * a - Matrix::Identity(a.cols(), a.cols());
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// A (A^T A + ridge I)^{-1}: columns dual to those of A.
inline Matrix right_inverse(const Matrix& a, double ridge = 0.0) {
  detail::require(ridge >= 0.0, "right_inverse: ridge must be nonnegative");
  detail::require(a.rows() >= a.cols(), "right_inverse: needs rows >= cols");
  Matrix g = a.transpose() * a;
  if (ridge == 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()[0];
    const double hi = es.eigenvalues()[es.eigenvalues().size() - 1];
    if (!(lo > 0) || hi / lo > 1e12) {
      std::ostringstream msg;
      msg << "right_inverse: Gram matrix is ill-conditioned (smallest eigenvalue " << lo << ", largest " << hi
          << ")";
      throw NumericalError(msg.str());
    }
  } else {
    g.diagonal().array() += ridge;
  }
  return g.ldlt().solve(a.transpose()).transpose();
}

/// U = U_1 U_2^T from the thin SVD A = U_1 D U_2^T: the orthonormal matrix
/// nearest to A.
inline Matrix polar_factor(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace tpca
