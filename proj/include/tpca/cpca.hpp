#pragma once

// Composite PCA: a spectral estimate of the CP components read off one
// global unfolding, followed by a rank-one SVD of each refolded singular
// vector.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "tpca/cp_model.hpp"
#include "tpca/error.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

struct CPCAOutput {
  CPDecomposition estimate;
  Matrix u;  // columns u_j: leading vectors on the row side of the unfolding
  Matrix v;  // columns v_j: column side (general case only)
  ModeSet subset;
};

namespace detail {

inline void check_rank_gap(const Vector& values, std::size_t r, const char* who) {
  const double top = values[0];
  const double last = values[static_cast<Eigen::Index>(r - 1)];
  if (!(top > 0) || !(last > 1e-12 * top)) {
    throw InvalidArgument(std::string(who) + ": rank " + std::to_string(r) +
                          " exceeds the numerical rank of the unfolding");
  }
}

// Per-mode factor estimates from vectors living on the modes `modes` (given
// in increasing order) of a tensor with mode sizes `dims`.
inline void factors_from_vectors(const Matrix& vecs, const Shape& dims, const ModeSet& modes,
                                 std::vector<Matrix>& factors) {
  Shape sub;
  for (std::size_t k : modes) sub.push_back(dims[k]);
  for (std::size_t pos = 0; pos < modes.size(); ++pos) {
    Matrix& a = factors[modes[pos]];
    a.resize(static_cast<Eigen::Index>(dims[modes[pos]]), vecs.cols());
    for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
      if (modes.size() == 1) {
        Vector c = vecs.col(j);
        normalize_sign(c);
        a.col(j) = c;
      } else {
        const DenseTensor t = DenseTensor::from_vector(vecs.col(j), sub);
        a.col(j) = top_left_singular(unfold(t, pos));
      }
    }
  }
}

inline CPCAOutput cpca_from_eigvecs(const Vector& values, const Matrix& u, const Shape& dims) {
  CPCAOutput out;
  out.u = u;
  out.subset.resize(dims.size());
  std::iota(out.subset.begin(), out.subset.end(), 0);
  out.estimate.weights = values;
  out.estimate.symmetric_pair = true;
  out.estimate.factors.resize(dims.size());
  factors_from_vectors(u, dims, out.subset, out.estimate.factors);
  return out;
}

}  // namespace detail

/// CPCA on a pairwise-symmetric order-2K tensor: eigenvectors of the
/// [K]-unfolding, each refolded to d_1 x ... x d_K.
inline CPCAOutput cpca_symmetric(const DenseTensor& t, std::size_t r, const SpectralOptions& opts = {}) {
  const Shape dims = paired_dims(t.shape());
  const std::size_t d = shape_size(dims);
  detail::require(r >= 1 && r <= d, "cpca_symmetric: rank " + std::to_string(r) + " out of range for d=" +
                                        std::to_string(d));
  ModeSet first(dims.size());
  std::iota(first.begin(), first.end(), 0);
  const Matrix m = unfold_group(t, first);
  const SpectralResult eig = top_eigs_sym(m, r, opts);
  detail::check_rank_gap(eig.values, r, "cpca_symmetric");
  return detail::cpca_from_eigvecs(eig.values, eig.vectors, dims);
}

/// Same estimator from the d x n data matrix Y = (vec X_1, ..., vec X_n)/sqrt(n),
/// whose Gram Y Y^T is the [K]-unfolding of the covariance tensor.
inline CPCAOutput cpca_symmetric_data(const Matrix& y, const Shape& dims, std::size_t r,
                                      const SpectralOptions& opts = {}) {
  detail::require(!dims.empty() && static_cast<std::size_t>(y.rows()) == shape_size(dims),
                  "cpca_symmetric_data: data matrix rows do not match shape " + shape_string(dims));
  const auto small = static_cast<std::size_t>(std::min(y.rows(), y.cols()));
  detail::require(r >= 1 && r <= small, "cpca_symmetric_data: rank " + std::to_string(r) +
                                            " exceeds min(d, n) = " + std::to_string(small));
  const SvdResult svd = top_svd(y, r, opts);
  const Vector values = svd.s.cwiseAbs2();
  detail::check_rank_gap(values, r, "cpca_symmetric_data");
  return detail::cpca_from_eigvecs(values, svd.u, dims);
}

inline CPCAOutput cpca_symmetric(const SampleBatch& batch, std::size_t r, const SpectralOptions& opts = {}) {
  return cpca_symmetric_data(data_matrix(batch), batch.shape, r, opts);
}

/// Subset S maximizing min(d_S, d/d_S); ties go to the smallest |S|, then to
/// the lexicographically smallest list of modes.
inline ModeSet choose_unfolding(const Shape& shape) {
  const std::size_t n = shape.size();
  detail::require(n >= 2 && n < 63, "choose_unfolding: need order between 2 and 62");
  const std::size_t d = shape_size(shape);
  ModeSet best;
  std::size_t best_val = 0;
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    ModeSet s;
    std::size_t ds = 1;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask >> k & 1) {
        s.push_back(k);
        ds *= shape[k];
      }
    }
    const std::size_t val = std::min(ds, d / ds);
    const bool better = val > best_val ||
                        (val == best_val && (s.size() < best.size() || (s.size() == best.size() && s < best)));
    if (best.empty() || better) {
      best = std::move(s);
      best_val = val;
    }
  }
  return best;
}

/// CPCA on a general order-N tensor via the SVD of its S-unfolding.
inline CPCAOutput cpca_general(const DenseTensor& t, std::size_t r, std::optional<ModeSet> subset = std::nullopt,
                               const SpectralOptions& opts = {}) {
  detail::require(t.order() >= 3, "cpca_general: needs a tensor of order >= 3");
  ModeSet s = subset ? detail::checked_subset(*subset, t.order()) : choose_unfolding(t.shape());
  const ModeSet sc = complement(s, t.order());
  std::size_t ds = 1;
  for (std::size_t k : s) ds *= t.dim(k);
  const std::size_t cap = std::min(ds, t.size() / ds);
  detail::require(r >= 1 && r <= cap, "cpca_general: rank " + std::to_string(r) + " exceeds min(d_S, d/d_S) = " +
                                          std::to_string(cap));
  const SvdResult svd = top_svd(unfold_group(t, s), r, opts);
  detail::check_rank_gap(svd.s, r, "cpca_general");
  CPCAOutput out;
  out.u = svd.u;
  out.v = svd.v;
  out.subset = s;
  out.estimate.weights = svd.s;
  out.estimate.factors.resize(t.order());
  detail::factors_from_vectors(svd.u, t.shape(), s, out.estimate.factors);
  detail::factors_from_vectors(svd.v, t.shape(), sc, out.estimate.factors);
  return out;
}

}  // namespace tpca
