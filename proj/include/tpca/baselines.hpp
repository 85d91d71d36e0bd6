#pragma once

// Comparison methods: HOSVD initialization and alternating least squares
// started from clustered rank-one power iterations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tpca/coherence.hpp"
#include "tpca/cp_model.hpp"
#include "tpca/error.hpp"
#include "tpca/ico.hpp"
#include "tpca/random.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

struct ALSConfig {
  std::size_t restarts = 30;
  std::size_t power_iters = 20;
  double cluster_threshold = 0.9;
  std::size_t max_sweeps = 50;
  double tol = 1e-6;

  void validate(std::size_t r) const {
    detail::require(restarts >= r, "ALS needs at least as many restarts as the rank");
    detail::require(cluster_threshold > 0 && cluster_threshold < 1, "ALS cluster threshold must lie in (0,1)");
    detail::require(max_sweeps >= 1 && power_iters >= 1, "ALS sweep and power-iteration counts must be positive");
    detail::require(tol >= 0, "ALS tolerance must be nonnegative");
  }
};

namespace detail {

// <T, sum_j w_j ⊗_k a_jk> and the per-component inner products.
inline Vector component_inner(const DenseTensor& t, const std::vector<Matrix>& a) {
  const Eigen::Index r = a.front().cols();
  Vector out(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    std::vector<ModeVector> asg;
    for (std::size_t k = 0; k < a.size(); ++k) asg.push_back({k, a[k].col(j)});
    out[j] = contract_modes(t, asg).scalar();
  }
  return out;
}

// Least-squares weights for fixed factors, made nonnegative by flipping the
// last mode's column.
inline Vector fit_weights(const DenseTensor& t, std::vector<Matrix>& a) {
  ModeSet all(a.size());
  std::iota(all.begin(), all.end(), 0);
  const Matrix g = component_gram(a, all);
  const Vector rhs = component_inner(t, a);
  Vector w = g.ldlt().solve(rhs);
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w[j] < 0) {
      w[j] = -w[j];
      a.back().col(j) = -a.back().col(j);
    }
  }
  return w;
}

}  // namespace detail

/// ||T - sum_j w_j ⊗_k a_jk||_HS without forming the low-rank tensor.
inline double cp_residual(const DenseTensor& t, const CPDecomposition& cp) {
  std::vector<Matrix> a;
  for (std::size_t k = 0; k < t.order(); ++k) a.push_back(cp.factor(k));
  ModeSet all(a.size());
  std::iota(all.begin(), all.end(), 0);
  const Matrix g = component_gram(a, all);
  const Vector& w = cp.weights;
  const double sq = t.flat().squaredNorm() - 2 * w.dot(detail::component_inner(t, a)) + w.dot(g * w);
  return std::sqrt(std::max(0.0, sq));
}

/// a_jk = j-th left singular vector of the mode-k unfolding; weights by least squares.
inline CPDecomposition hosvd_init(const DenseTensor& t, std::size_t r) {
  detail::require(t.order() >= 2, "hosvd_init: tensor order must be at least 2");
  for (std::size_t k = 0; k < t.order(); ++k) {
    detail::require(r >= 1 && r <= t.dim(k), "hosvd_init: rank " + std::to_string(r) + " exceeds mode size d_" +
                                                 std::to_string(k) + " = " + std::to_string(t.dim(k)));
  }
  std::vector<Matrix> a;
  for (std::size_t k = 0; k < t.order(); ++k) a.push_back(top_svd(unfold(t, k), r).u);
  CPDecomposition cp;
  cp.weights = detail::fit_weights(t, a);
  cp.factors = std::move(a);
  return sort_components(std::move(cp));
}

struct ALSInit {
  CPDecomposition estimate;
  std::size_t clusters = 0;  // clusters found among the restarts
};

/// Rank-one power iterations from random starts, clustered by mean-over-modes
/// |cosine| >= threshold; the r largest clusters give the initial factors.
inline ALSInit als_random_init(const DenseTensor& t, std::size_t r, const ALSConfig& cfg, std::uint64_t seed) {
  cfg.validate(r);
  const std::size_t n = t.order();
  detail::require(n >= 2, "ALS: tensor order must be at least 2");
  struct Candidate {
    std::vector<Vector> a;
    double value;
  };
  std::vector<Candidate> cands;
  for (std::size_t s = 0; s < cfg.restarts; ++s) {
    Rng rng(derive_seed(seed, {s}));
    std::vector<Vector> a;
    for (std::size_t k = 0; k < n; ++k) a.push_back(rng.unit_vector(t.dim(k)));
    for (std::size_t it = 0; it < cfg.power_iters; ++it) {
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<ModeVector> asg;
        for (std::size_t l = 0; l < n; ++l)
          if (l != k) asg.push_back({l, a[l]});
        Vector next = contract_modes(t, asg).flat();
        const double norm = next.norm();
        if (norm > 0) a[k] = next / norm;
      }
    }
    std::vector<ModeVector> asg;
    for (std::size_t l = 0; l < n; ++l) asg.push_back({l, a[l]});
    const double v = contract_modes(t, asg).scalar();
    cands.push_back({std::move(a), v});
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& x, const Candidate& y) { return std::abs(x.value) > std::abs(y.value); });

  auto similarity = [n](const Candidate& x, const Candidate& y) {
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) s += std::abs(x.a[k].dot(y.a[k]));
    return s / static_cast<double>(n);
  };
  // greedy: each candidate joins the first cluster whose representative
  // (its strongest member) is similar enough
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    bool placed = false;
    for (auto& c : clusters) {
      if (similarity(cands[c.front()], cands[i]) >= cfg.cluster_threshold) {
        c.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({i});
  }
  if (clusters.size() < r) {
    std::ostringstream msg;
    msg << "ALS initialization found only " << clusters.size() << " clusters among " << cfg.restarts
        << " restarts for rank " << r << "; increase the number of restarts";
    throw NumericalError(msg.str());
  }
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const auto& x, const auto& y) { return x.size() > y.size(); });

  ALSInit out;
  out.clusters = clusters.size();
  out.estimate.factors.assign(n, Matrix());
  out.estimate.weights.resize(static_cast<Eigen::Index>(r));
  for (std::size_t k = 0; k < n; ++k) out.estimate.factors[k].resize(static_cast<Eigen::Index>(t.dim(k)), static_cast<Eigen::Index>(r));
  for (std::size_t j = 0; j < r; ++j) {
    const auto& c = clusters[j];
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < n; ++k) {
      const Vector& rep = cands[c.front()].a[k];
      Matrix stack(rep.size(), static_cast<Eigen::Index>(c.size()));
      for (std::size_t m = 0; m < c.size(); ++m) {
        const Vector& v = cands[c[m]].a[k];
        stack.col(static_cast<Eigen::Index>(m)) = v.dot(rep) < 0 ? Vector(-v) : v;
      }
      out.estimate.factors[k].col(jj) = top_left_singular(stack);
    }
    out.estimate.weights[jj] = std::abs(cands[c.front()].value);
  }
  return out;
}

/// Alternating least squares: each mode solves for A_k diag(w) with the
/// other modes fixed, then splits column norms into the weights.
inline FitResult als_refine(const DenseTensor& t, const CPDecomposition& init, const ALSConfig& cfg = {},
                            const CPDecomposition* truth = nullptr) {
  const std::size_t n = t.order();
  detail::require(init.distinct_modes() >= 1, "als_refine: empty initialization");
  std::vector<Matrix> a;
  for (std::size_t k = 0; k < n; ++k) {
    a.push_back(init.symmetric_pair ? init.factor(k) : init.factors.at(k));
    detail::require(static_cast<std::size_t>(a.back().rows()) == t.dim(k), "als_refine: factor " +
                                                                              std::to_string(k) +
                                                                              " does not match the tensor shape");
  }
  const Eigen::Index r = a.front().cols();
  std::vector<std::size_t> perm;
  if (truth) {
    CPDecomposition start;
    start.weights = Vector::Ones(r);
    start.factors = a;
    perm = match_components(start, *truth).perm;
  }
  Vector w = Vector::Ones(r);
  FitResult res;
  for (std::size_t m = 1; m <= cfg.max_sweeps; ++m) {
    double sweep_update = 0;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<std::reference_wrapper<const Matrix>> others;
      for (std::size_t i = 1; i < n; ++i) others.emplace_back(a[(k + i) % n]);
      ModeSet om;
      for (std::size_t i = 1; i < n; ++i) om.push_back((k + i) % n);
      const Matrix kr = khatri_rao(others);
      const Matrix g = component_gram(a, om);
      const Matrix mttkrp = unfold(t, k) * kr;
      Eigen::LDLT<Matrix> ldlt(g);
      Matrix next = ldlt.solve(mttkrp.transpose()).transpose();
      double mode_update = 0;
      for (Eigen::Index j = 0; j < r; ++j) {
        const double norm = next.col(j).norm();
        if (!(norm > 0)) {
          std::ostringstream msg;
          msg << "ALS: component " << j << " vanished in sweep " << m << ", mode " << k;
          throw NumericalError(msg.str());
        }
        Vector c = next.col(j) / norm;
        if (c.dot(a[k].col(j)) < 0) c = -c;
        mode_update = std::max(mode_update, sin_theta(c, a[k].col(j)));
        // the sign change moves into the weight's partner factor via w
        w[j] = norm * (next.col(j).dot(c) < 0 ? -1.0 : 1.0);
        a[k].col(j) = c;
      }
      sweep_update = std::max(sweep_update, mode_update);
      TraceRow row{m, k, mode_update, std::nullopt, std::nullopt};
      CPDecomposition cur;
      cur.weights = w;
      cur.factors = a;
      row.objective = cp_residual(t, cur);
      if (truth) row.max_true_error = detail::matched_error(a, *truth, perm);
      res.trace.rows.push_back(row);
    }
    res.trace.iterations = m;
    if (sweep_update <= cfg.tol) {
      res.trace.stop = StopReason::tolerance;
      break;
    }
  }
  for (Eigen::Index j = 0; j < r; ++j) {
    if (w[j] < 0) {
      w[j] = -w[j];
      a[n - 1].col(j) = -a[n - 1].col(j);
    }
  }
  CPDecomposition cp;
  cp.weights = w;
  cp.factors = std::move(a);
  res.estimate = sort_components(std::move(cp));
  return res;
}

/// Random-restart initialization followed by ALS refinement.
inline FitResult als_randomized(const DenseTensor& t, std::size_t r, const ALSConfig& cfg, std::uint64_t seed,
                                const CPDecomposition* truth = nullptr) {
  const ALSInit init = als_random_init(t, r, cfg, seed);
  return als_refine(t, init.estimate, cfg, truth);
}

}  // namespace tpca
