#pragma once

// Iterative Concurrent Orthogonalization. Each update of a_jk contracts the
// tensor against the dual directions b_jl (columns of the right inverse of
// the current factor matrix) of every other mode, which cancels the
// contributions of the other components to first order.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tpca/coherence.hpp"
#include "tpca/cp_model.hpp"
#include "tpca/error.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

struct ICOConfig {
  double tol = 1e-6;
  std::size_t max_iter = 50;
  double ridge = 0.0;
  bool trace = true;

  void validate() const {
    detail::require(tol >= 0, "ICO tolerance must be nonnegative");
    detail::require(max_iter >= 1, "ICO needs at least one iteration");
    detail::require(ridge >= 0, "ICO ridge must be nonnegative");
  }
};

enum class StopReason { tolerance, max_iter };

inline const char* to_string(StopReason s) { return s == StopReason::tolerance ? "tolerance" : "max-iter"; }

struct TraceRow {
  std::size_t sweep = 0;
  std::size_t mode = 0;
  double max_update = 0;                  // max_j sin-theta between successive estimates
  std::optional<double> max_true_error;   // max_{j,k} error against ground truth, after this update
  std::optional<double> objective;        // fit residual (ALS only)
};

struct FitTrace {
  std::vector<TraceRow> rows;
  std::size_t iterations = 0;
  StopReason stop = StopReason::max_iter;
};

struct FitResult {
  CPDecomposition estimate;
  FitTrace trace;
};

namespace detail {

inline void require_unit_init(const CPDecomposition& init, std::size_t modes, const Shape& dims, const char* who) {
  detail::require(init.rank() >= 1 || (!init.factors.empty() && init.factors[0].cols() >= 1),
                  std::string(who) + ": empty initialization");
  detail::require(init.distinct_modes() >= modes, std::string(who) + ": initialization has too few modes");
  for (std::size_t k = 0; k < modes; ++k) {
    const Matrix& a = init.factors[k];
    detail::require(static_cast<std::size_t>(a.rows()) == dims[k],
                    std::string(who) + ": initial factor " + std::to_string(k) + " has the wrong number of rows");
    detail::require(a.cols() == init.factors[0].cols(), std::string(who) + ": initial factors disagree on rank");
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      detail::require(std::abs(a.col(j).norm() - 1.0) <= 1e-8,
                      std::string(who) + ": initial factor columns must have unit norm");
    }
  }
}

inline Matrix right_inverse_at(const Matrix& a, double ridge, std::size_t sweep, std::size_t mode) {
  try {
    return right_inverse(a, ridge);
  } catch (const NumericalError& e) {
    std::ostringstream msg;
    msg << "ICO sweep " << sweep << ", mode " << mode << ": " << e.what();
    throw NumericalError(msg.str());
  }
}

// Max error of `factors` against the truth under a fixed column matching.
inline double matched_error(const std::vector<Matrix>& factors, const CPDecomposition& truth,
                            const std::vector<std::size_t>& perm) {
  double worst = 0;
  for (std::size_t k = 0; k < truth.distinct_modes(); ++k) {
    for (std::size_t j = 0; j < perm.size(); ++j) {
      const Vector a = truth.factors[k].col(static_cast<Eigen::Index>(j));
      const Vector b = factors[k].col(static_cast<Eigen::Index>(perm[j]));
      worst = std::max(worst, sin_theta(a, b));
    }
  }
  return worst;
}

inline CPDecomposition sorted_estimate(Vector weights, std::vector<Matrix> factors, bool paired) {
  CPDecomposition cp;
  cp.weights = std::move(weights);
  cp.factors = std::move(factors);
  cp.symmetric_pair = paired;
  return sort_components(std::move(cp));
}

// Source of the contractions used by the symmetric iteration.
struct CovarianceTensorSource {
  const DenseTensor& t;
  std::size_t k_modes;

  // T contracted against b_l on modes l and K+l for every l != k: a d_k x d_k matrix.
  Matrix mode_matrix(std::size_t k, const std::vector<Vector>& b) const {
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < k_modes; ++l) {
      if (l == k) continue;
      asg.push_back({l, b[l]});
      asg.push_back({k_modes + l, b[l]});
    }
    const DenseTensor m = contract_modes(t, asg);
    return Eigen::Map<const Matrix>(m.data().data(), static_cast<Eigen::Index>(m.dim(0)),
                                    static_cast<Eigen::Index>(m.dim(1)));
  }

  double value(const std::vector<Vector>& b) const {
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < k_modes; ++l) {
      asg.push_back({l, b[l]});
      asg.push_back({k_modes + l, b[l]});
    }
    return contract_modes(t, asg).scalar();
  }
};

// Same contractions computed from the scaled data matrix without forming the
// covariance tensor: with Z the samples contracted on modes l != k,
// T_jk = Z Z^T.
struct DataMatrixSource {
  DenseTensor stacked;  // (d_1, ..., d_K, n), already scaled by 1/sqrt(n)
  std::size_t k_modes;

  Matrix mode_matrix(std::size_t k, const std::vector<Vector>& b) const {
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < k_modes; ++l)
      if (l != k) asg.push_back({l, b[l]});
    const DenseTensor z = contract_modes(stacked, asg);
    const Eigen::Map<const Matrix> zm(z.data().data(), static_cast<Eigen::Index>(z.dim(0)),
                                      static_cast<Eigen::Index>(z.dim(1)));
    return zm * zm.transpose();
  }

  double value(const std::vector<Vector>& b) const {
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < k_modes; ++l) asg.push_back({l, b[l]});
    return contract_modes(stacked, asg).flat().squaredNorm();
  }
};

template <class Source>
FitResult ico_symmetric_core(const Source& src, const Shape& dims, const CPDecomposition& init, const ICOConfig& cfg,
                             const CPDecomposition* truth) {
  cfg.validate();
  const std::size_t kk = dims.size();
  require_unit_init(init, kk, dims, "ico_symmetric");
  const auto r = init.factors[0].cols();
  std::vector<Matrix> a(init.factors.begin(), init.factors.begin() + static_cast<std::ptrdiff_t>(kk));
  std::vector<Matrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) b[k] = right_inverse_at(a[k], cfg.ridge, 0, k);

  std::vector<std::size_t> perm;
  if (truth) {
    CPDecomposition start;
    start.weights = Vector::Ones(r);
    start.factors = a;
    perm = match_components(start, *truth).perm;
  }

  FitResult res;
  std::vector<Vector> bj(kk);
  for (std::size_t m = 1; m <= cfg.max_iter; ++m) {
    double sweep_update = 0;
    for (std::size_t k = 0; k < kk; ++k) {
      double mode_update = 0;
      for (Eigen::Index j = 0; j < r; ++j) {
        for (std::size_t l = 0; l < kk; ++l) bj[l] = b[l].col(j);
        const Matrix tjk = src.mode_matrix(k, bj);
        Vector next = top_eigs_sym(tjk, 1).vectors.col(0);
        if (next.dot(a[k].col(j)) < 0) next = -next;
        mode_update = std::max(mode_update, sin_theta(next, a[k].col(j)));
        a[k].col(j) = next;
      }
      b[k] = right_inverse_at(a[k], cfg.ridge, m, k);
      sweep_update = std::max(sweep_update, mode_update);
      if (cfg.trace) {
        TraceRow row{m, k, mode_update, std::nullopt, std::nullopt};
        if (truth) row.max_true_error = matched_error(a, *truth, perm);
        res.trace.rows.push_back(row);
      }
    }
    res.trace.iterations = m;
    if (sweep_update <= cfg.tol) {
      res.trace.stop = StopReason::tolerance;
      break;
    }
  }
  Vector w(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    for (std::size_t l = 0; l < kk; ++l) bj[l] = b[l].col(j);
    w[j] = src.value(bj);
  }
  res.estimate = sorted_estimate(std::move(w), std::move(a), true);
  return res;
}

}  // namespace detail

/// ICO on a pairwise-symmetric order-2K tensor. Mode k is updated for every
/// component against the dual vectors of the other modes; the right inverse
/// of mode k is refreshed once its component loop is done, so later modes
/// in the same sweep see it.
inline FitResult ico_symmetric(const DenseTensor& t, const CPDecomposition& init, const ICOConfig& cfg = {},
                               const CPDecomposition* truth = nullptr) {
  const Shape dims = paired_dims(t.shape());
  return detail::ico_symmetric_core(detail::CovarianceTensorSource{t, dims.size()}, dims, init, cfg, truth);
}

/// ICO for the spiked model computed directly from the samples.
inline FitResult ico_symmetric(const SampleBatch& batch, const CPDecomposition& init, const ICOConfig& cfg = {},
                               const CPDecomposition* truth = nullptr) {
  DenseTensor stacked = batch.stacked();
  stacked.flat() /= std::sqrt(static_cast<double>(batch.n()));
  return detail::ico_symmetric_core(detail::DataMatrixSource{std::move(stacked), batch.shape.size()}, batch.shape,
                                    init, cfg, truth);
}

/// ICO on a general order-N tensor: a_jk is the normalized contraction of T
/// against b_jl for all l != k.
inline FitResult ico_general(const DenseTensor& t, const CPDecomposition& init, const ICOConfig& cfg = {},
                             const CPDecomposition* truth = nullptr) {
  cfg.validate();
  const std::size_t n = t.order();
  detail::require(n >= 2, "ico_general: tensor order must be at least 2");
  detail::require_unit_init(init, n, t.shape(), "ico_general");
  const auto r = init.factors[0].cols();
  std::vector<Matrix> a(init.factors.begin(), init.factors.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<Matrix> b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = detail::right_inverse_at(a[k], cfg.ridge, 0, k);

  std::vector<std::size_t> perm;
  if (truth) {
    CPDecomposition start;
    start.weights = Vector::Ones(r);
    start.factors = a;
    perm = match_components(start, *truth).perm;
  }

  FitResult res;
  for (std::size_t m = 1; m <= cfg.max_iter; ++m) {
    double sweep_update = 0;
    for (std::size_t k = 0; k < n; ++k) {
      double mode_update = 0;
      for (Eigen::Index j = 0; j < r; ++j) {
        std::vector<ModeVector> asg;
        for (std::size_t l = 0; l < n; ++l)
          if (l != k) asg.push_back({l, b[l].col(j)});
        Vector next = contract_modes(t, asg).flat();
        const double norm = next.norm();
        if (!(norm >= 1e-300)) {
          std::ostringstream msg;
          msg << "ICO: degenerate contraction at sweep " << m << ", component " << j << ", mode " << k;
          throw NumericalError(msg.str());
        }
        next /= norm;
        if (next.dot(a[k].col(j)) < 0) next = -next;
        mode_update = std::max(mode_update, sin_theta(next, a[k].col(j)));
        a[k].col(j) = next;
      }
      b[k] = detail::right_inverse_at(a[k], cfg.ridge, m, k);
      sweep_update = std::max(sweep_update, mode_update);
      if (cfg.trace) {
        TraceRow row{m, k, mode_update, std::nullopt, std::nullopt};
        if (truth) row.max_true_error = detail::matched_error(a, *truth, perm);
        res.trace.rows.push_back(row);
      }
    }
    res.trace.iterations = m;
    if (sweep_update <= cfg.tol) {
      res.trace.stop = StopReason::tolerance;
      break;
    }
  }
  Vector w(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < n; ++l) asg.push_back({l, b[l].col(j)});
    const double v = contract_modes(t, asg).scalar();
    w[j] = std::abs(v);
    // keep compose(estimate) consistent with t
    if (v < 0) a[n - 1].col(j) = -a[n - 1].col(j);
  }
  res.estimate = detail::sorted_estimate(std::move(w), std::move(a), false);
  return res;
}

/// A single ICO sweep: ICO with M = 1 and tolerance 0.
inline CPDecomposition one_step_update(const DenseTensor& t, const CPDecomposition& init, ICOConfig cfg = {}) {
  cfg.max_iter = 1;
  cfg.tol = 0;
  if (init.symmetric_pair) return ico_symmetric(t, init, cfg).estimate;
  return ico_general(t, init, cfg).estimate;
}

inline CPDecomposition one_step_update(const SampleBatch& batch, const CPDecomposition& init, ICOConfig cfg = {}) {
  cfg.max_iter = 1;
  cfg.tol = 0;
  return ico_symmetric(batch, init, cfg).estimate;
}

}  // namespace tpca
