#pragma once

// Distances, coherence measures of factor sets, signal-to-noise and rate
// formulas, and the iteration-count calculators for ICO.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tpca/cp_model.hpp"
#include "tpca/error.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"

namespace tpca {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// sqrt(1 - (u^T v)^2) = ||u u^T - v v^T||_S for unit vectors.
inline double sin_theta(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  detail::require(u.size() == v.size(), "sin_theta: length mismatch");
  detail::require(std::abs(u.norm() - 1.0) <= 1e-8 && std::abs(v.norm() - 1.0) <= 1e-8,
                  "sin_theta: inputs must be unit vectors");
  // the residual of v off u, not sqrt(1 - c^2), keeps small angles accurate
  const double c = u.dot(v);
  return std::min(1.0, (v - c * u).norm());
}

/// (2 - 2|u^T v|)^{1/2} = min over signs of ||u -+ v||_2.
inline double sign_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  return std::min((u - v).norm(), (u + v).norm());
}

/// pi_{j,±}: distance from values[j] to 0 and to every other value.
inline Vector eigengaps(const Vector& values) {
  Vector gaps(values.size());
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    double g = std::abs(values[j]);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (i != j) g = std::min(g, std::abs(values[i] - values[j]));
    }
    gaps[j] = g;
  }
  return gaps;
}

struct CoherenceReport {
  Vector theta_k;  // per-mode max off-diagonal |Gram| entry
  Vector delta_k;  // per-mode ||A_k^T A_k - I||_S
  Matrix eta;      // r x K, eta(j,k) = l2 norm of off-diagonal row j of A_k^T A_k
  double theta = 0;  // over all modes jointly
  double delta = 0;
  ModeSet subset;
  double theta_s = 0;
  double delta_s = 0;
  double mu_s = std::numeric_limits<double>::quiet_NaN();  // needs |S| >= 2

  // upper bounds on delta_s
  double bound_min_delta = 0;        // min_{k in S} delta_k
  double bound_theta_s = 0;          // (r-1) theta_S
  double bound_theta_prod = 0;       // (r-1) prod_{k in S} theta_k
  double bound_mu_eta = kInf;        // mu_S r^{1-|S|/2} max_j prod eta_jk
  double bound_mu_delta = kInf;      // mu_S r^{1-|S|/2} prod delta_k

  double slack_min_delta() const { return bound_min_delta - delta_s; }
  double slack_theta_s() const { return bound_theta_s - delta_s; }
  double slack_theta_prod() const { return bound_theta_prod - bound_theta_s; }
  double slack_mu_eta() const { return bound_mu_eta - delta_s; }
  double slack_mu_delta() const { return bound_mu_delta - bound_mu_eta; }
};

namespace detail {

inline void require_unit_columns(const Matrix& a, const std::string& who) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    require(std::abs(a.col(j).norm() - 1.0) <= 1e-8, who + ": factor columns must have unit norm");
  }
}

inline double max_offdiag(const Matrix& g) {
  double m = 0;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (i != j) m = std::max(m, std::abs(g(i, j)));
  return m;
}

inline double sym_spectral(const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Gram of the vectorized rank-one components restricted to `modes`: the
/// Hadamard product of the per-mode Grams.
inline Matrix component_gram(const std::vector<Matrix>& factors, const ModeSet& modes) {
  detail::require(!factors.empty(), "component_gram: no factors");
  const Eigen::Index r = factors.front().cols();
  Matrix g = Matrix::Ones(r, r);
  for (std::size_t k : modes) g = g.cwiseProduct(factors.at(k).transpose() * factors.at(k));
  return g;
}

/// Leave-two-out mutual coherence of the modes in `s` (|s| >= 2). A 0/0
/// ratio, where column j is orthogonal to all others in mode k, counts as 1.
inline double mutual_coherence(const std::vector<Matrix>& factors, const ModeSet& s) {
  detail::require(s.size() >= 2, "mutual_coherence: subset needs at least two modes");
  const Eigen::Index r = factors.front().cols();
  const double sr = std::sqrt(static_cast<double>(r));
  std::vector<Matrix> grams;
  std::vector<Vector> etas;
  for (std::size_t k : s) {
    Matrix g = factors.at(k).transpose() * factors.at(k);
    Vector eta(r);
    for (Eigen::Index j = 0; j < r; ++j) {
      double acc = 0;
      for (Eigen::Index i = 0; i < r; ++i)
        if (i != j) acc += g(i, j) * g(i, j);
      eta[j] = std::sqrt(acc);
    }
    grams.push_back(std::move(g));
    etas.push_back(std::move(eta));
  }
  auto ratio = [&](std::size_t m, Eigen::Index i, Eigen::Index j) {
    const double e = etas[m][j];
    return e > 0 ? sr * std::abs(grams[m](i, j)) / e : 1.0;
  };
  double mu = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    double best_pair = kInf;
    for (std::size_t k1 = 0; k1 < s.size(); ++k1) {
      for (std::size_t k2 = k1 + 1; k2 < s.size(); ++k2) {
        double worst_i = 0;
        for (Eigen::Index i = 0; i < r; ++i) {
          if (i == j) continue;
          double p = 1;
          for (std::size_t m = 0; m < s.size(); ++m)
            if (m != k1 && m != k2) p *= ratio(m, i, j);
          worst_i = std::max(worst_i, p);
        }
        best_pair = std::min(best_pair, worst_i);
      }
    }
    mu = std::max(mu, best_pair);
  }
  return mu;
}

/// Coherence of a factor set {A_k} and the bounds on delta_S implied by the
/// per-mode quantities. `factors` are the distinct modes; the global theta and
/// delta treat all of them jointly.
inline CoherenceReport coherence_report(const std::vector<Matrix>& factors, const ModeSet& subset) {
  detail::require(!factors.empty(), "coherence_report: no factors");
  for (const auto& a : factors) detail::require_unit_columns(a, "coherence_report");
  const auto nmodes = factors.size();
  const Eigen::Index r = factors.front().cols();
  CoherenceReport rep;
  rep.theta_k.resize(static_cast<Eigen::Index>(nmodes));
  rep.delta_k.resize(static_cast<Eigen::Index>(nmodes));
  rep.eta.resize(r, static_cast<Eigen::Index>(nmodes));
  for (std::size_t k = 0; k < nmodes; ++k) {
    detail::require(factors[k].cols() == r, "coherence_report: factors disagree on rank");
    const Matrix g = factors[k].transpose() * factors[k];
    const auto kk = static_cast<Eigen::Index>(k);
    rep.theta_k[kk] = detail::max_offdiag(g);
    rep.delta_k[kk] = detail::sym_spectral(g - Matrix::Identity(r, r));
    for (Eigen::Index j = 0; j < r; ++j) {
      double acc = 0;
      for (Eigen::Index i = 0; i < r; ++i)
        if (i != j) acc += g(i, j) * g(i, j);
      rep.eta(j, kk) = std::sqrt(acc);
    }
  }
  ModeSet all(nmodes);
  std::iota(all.begin(), all.end(), 0);
  const Matrix g_all = component_gram(factors, all);
  rep.theta = detail::max_offdiag(g_all);
  rep.delta = detail::sym_spectral(g_all - Matrix::Identity(r, r));

  ModeSet s = subset.empty() ? all : subset;
  std::sort(s.begin(), s.end());
  detail::require(std::adjacent_find(s.begin(), s.end()) == s.end() && s.back() < nmodes,
                  "coherence_report: invalid subset");
  rep.subset = s;
  const Matrix g_s = component_gram(factors, s);
  rep.theta_s = detail::max_offdiag(g_s);
  rep.delta_s = detail::sym_spectral(g_s - Matrix::Identity(r, r));

  const double rm1 = static_cast<double>(r - 1);
  rep.bound_min_delta = kInf;
  rep.bound_theta_prod = rm1;
  for (std::size_t k : s) {
    rep.bound_min_delta = std::min(rep.bound_min_delta, rep.delta_k[static_cast<Eigen::Index>(k)]);
    rep.bound_theta_prod *= rep.theta_k[static_cast<Eigen::Index>(k)];
  }
  rep.bound_theta_s = rm1 * rep.theta_s;
  if (s.size() >= 2) {
    rep.mu_s = mutual_coherence(factors, s);
    const double scale = rep.mu_s * std::pow(static_cast<double>(r), 1.0 - 0.5 * static_cast<double>(s.size()));
    double max_eta = 0;
    for (Eigen::Index j = 0; j < r; ++j) {
      double p = 1;
      for (std::size_t k : s) p *= rep.eta(j, static_cast<Eigen::Index>(k));
      max_eta = std::max(max_eta, p);
    }
    double prod_delta = 1;
    for (std::size_t k : s) prod_delta *= rep.delta_k[static_cast<Eigen::Index>(k)];
    rep.bound_mu_eta = scale * max_eta;
    rep.bound_mu_delta = scale * prod_delta;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// component matching

struct MatchResult {
  /// perm[j] is the estimated component matched to true component j.
  std::vector<std::size_t> perm;
  /// errors(j, k) = sin_theta(estimate, truth) for true component j, mode k.
  Matrix errors;
  double max_error = 0;
  /// max_j |lambda_hat / lambda - 1| over matched pairs.
  double lambda_rel_error = 0;
};

namespace detail {

// Minimum-cost perfect assignment on a square cost matrix (Hungarian method,
// potentials formulation). Returns row -> column.
inline std::vector<std::size_t> hungarian(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline std::vector<std::size_t> exhaustive_assignment(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  std::vector<std::size_t> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = kInf;
  do {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) c += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
    if (c < best_cost - 1e-15) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace detail

/// Pairs estimated with true components by minimizing
/// sum_j (1 - mean_k |ahat^T a|), exhaustively for r <= 6 and with the
/// Hungarian method above. Compares the first truth.distinct_modes() modes.
inline MatchResult match_components(const CPDecomposition& est, const CPDecomposition& truth) {
  detail::require(est.rank() == truth.rank(), "match_components: rank mismatch (" + std::to_string(est.rank()) +
                                                  " vs " + std::to_string(truth.rank()) + ")");
  const std::size_t nm = truth.distinct_modes();
  detail::require(est.distinct_modes() >= nm, "match_components: estimate has fewer modes than truth");
  const auto r = static_cast<Eigen::Index>(truth.rank());
  std::vector<Matrix> cos(nm);
  Matrix cost = Matrix::Zero(r, r);
  for (std::size_t k = 0; k < nm; ++k) {
    detail::require(est.factors[k].rows() == truth.factors[k].rows(), "match_components: mode size mismatch");
    cos[k] = (truth.factors[k].transpose() * est.factors[k]).cwiseAbs();
    cost += (Matrix::Ones(r, r) - cos[k]) / static_cast<double>(nm);
  }
  const auto perm = r <= 6 ? detail::exhaustive_assignment(cost) : detail::hungarian(cost);
  MatchResult out;
  out.perm = perm;
  out.errors.resize(r, static_cast<Eigen::Index>(nm));
  for (Eigen::Index j = 0; j < r; ++j) {
    const auto e = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(j)]);
    for (std::size_t k = 0; k < nm; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Vector a = truth.factors[k].col(j);
      Vector b = est.factors[k].col(e);
      b /= b.norm();
      out.errors(j, kk) = sin_theta(a, b);
    }
    out.lambda_rel_error = std::max(out.lambda_rel_error, std::abs(est.weights[e] / truth.weights[j] - 1.0));
  }
  out.max_error = out.errors.maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// signal-to-noise ratio and rates

struct RateInputs {
  Vector lambdas;  // descending, positive
  double sigma = 0;
  double n = 1;    // sample size (spiked model)
  Shape dims;      // d_1..d_K (spiked) or d_1..d_N (noisy CP)
  double psi0 = 0.1;
  double c0 = 1.0;
  double delta_max = 0.0;
};

struct RateBundle {
  double snr = 0;
  double r_eff = 0;
  double r0 = 0;
  Matrix r_ideal;          // r x K
  Matrix r_ideal_phi;      // r x K at phi = phi0
  Matrix r_star;           // r x N
  Matrix r_star_phi;       // r x N at phi = phi0*
  double alpha = 0, alpha_star = 0;
  double rho = 0, rho1 = 0, rho_star = 0;
  double phi0 = 0, phi0_star = 0;
  Matrix eps;              // r x K
  Matrix eps_star;         // r x N
};

namespace detail {

inline Matrix rate_with_phi(const Matrix& base, double phi, bool include_self) {
  const double w = std::min(phi, 1.0);
  Matrix out = base;
  for (Eigen::Index j = 0; j < base.rows(); ++j) {
    const double total = base.row(j).sum();
    for (Eigen::Index k = 0; k < base.cols(); ++k) {
      out(j, k) = base(j, k) + w * (include_self ? total : total - base(j, k));
    }
  }
  return out;
}

}  // namespace detail

/// Closed-form signal-to-noise ratio, effective rank and the ideal rates of
/// the spiked covariance model (R) and the noisy CP model (R*). Quantities
/// that need alpha > 0 (resp. alpha* > 0) are +inf when it fails.
inline RateBundle snr_and_rates(const RateInputs& in) {
  const Vector& lam = in.lambdas;
  detail::require(lam.size() >= 1, "snr_and_rates: no weights");
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    detail::require(lam[j] > 0, "snr_and_rates: weights must be positive");
    if (j) detail::require(lam[j] <= lam[j - 1], "snr_and_rates: weights must be sorted descending");
  }
  detail::require(in.sigma >= 0 && in.n > 0 && !in.dims.empty(), "snr_and_rates: invalid sigma, n or dims");
  const double r = static_cast<double>(lam.size());
  const auto nm = static_cast<Eigen::Index>(in.dims.size());
  const double order = static_cast<double>(in.dims.size());
  const double d = static_cast<double>(shape_size(in.dims));
  const double s2 = in.sigma * in.sigma;
  const double l1 = lam[0], lr = lam[lam.size() - 1];

  RateBundle b;
  b.r_eff = lam.sum() / l1;
  b.snr = s2 == 0 ? kInf : lam.sum() / (s2 * d);
  const double inv_snr = s2 == 0 ? 0.0 : 1.0 / b.snr;
  b.r0 = std::sqrt((b.r_eff / in.n) * (1 + inv_snr) * (1 + (b.r_eff / d) * inv_snr));

  b.r_ideal.resize(lam.size(), nm);
  b.r_star.resize(lam.size(), nm);
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    for (Eigen::Index k = 0; k < nm; ++k) {
      const double dk = static_cast<double>(in.dims[static_cast<std::size_t>(k)]);
      b.r_ideal(j, k) = (s2 / lam[j] + in.sigma / std::sqrt(lam[j])) * std::sqrt(dk / in.n);
      b.r_star(j, k) = in.sigma * std::sqrt(dk) / lam[j];
    }
  }

  const double psi = in.psi0;
  b.alpha = std::sqrt(1 - in.delta_max) - (std::sqrt(r) + 1) * psi / std::sqrt(1 - 1 / (4 * r));
  b.alpha_star = std::sqrt(1 - in.delta_max) - (std::sqrt(r) + 1) * psi;

  const Matrix r_ideal_1 = detail::rate_with_phi(b.r_ideal, 1.0, false);
  if (b.alpha > 0) {
    const double c0a = in.c0 * std::pow(b.alpha, 2 - 2 * order);
    b.rho = c0a * (l1 / lr) * std::pow(psi, 2 * order - 3);
    b.rho1 = c0a * std::sqrt((l1 / lr) * r / in.n) * std::pow(psi, order - 2);
    b.phi0 = c0a * std::sqrt(2 * r / (1 - 1 / (4 * r))) * r_ideal_1(lam.size() - 1, nm - 1);
    b.r_ideal_phi = detail::rate_with_phi(b.r_ideal, b.phi0, false);
    b.eps = c0a * b.r_ideal_phi;
  } else {
    b.rho = b.rho1 = b.phi0 = kInf;
    b.r_ideal_phi = detail::rate_with_phi(b.r_ideal, 1.0, false);
    b.eps = Matrix::Constant(lam.size(), nm, kInf);
  }

  const Matrix r_star_1 = detail::rate_with_phi(b.r_star, 1.0, true);
  if (b.alpha_star > 0) {
    b.rho_star = 6 * std::pow(b.alpha_star, 1 - order) * std::sqrt(r - 1) * (l1 / lr) * std::pow(psi, order - 2);
    b.phi0_star = (order - 1) / b.alpha_star * std::sqrt(2 * r) * r_star_1(lam.size() - 1, nm - 1);
    b.r_star_phi = detail::rate_with_phi(b.r_star, b.phi0_star, true);
    b.eps_star = 6 * std::pow(b.alpha_star, order - 1) * b.r_star_phi;
  } else {
    b.rho_star = b.phi0_star = kInf;
    b.r_star_phi = r_star_1;
    b.eps_star = Matrix::Constant(lam.size(), nm, kInf);
  }
  return b;
}

// ---------------------------------------------------------------------------
// iteration counts

enum class IcoVariant { symmetric, general };

inline const char* to_string(IcoVariant v) { return v == IcoVariant::symmetric ? "symmetric" : "general"; }

/// Root of g^K - 3 g^{K-1} + 2 in (3 - 3/K, 3) (symmetric, K >= 2) or of
/// g^N - 2 g^{N-1} + 1 in (2 - 2/N, 2) (general, N >= 3), by bisection.
inline double gamma_root(std::size_t order, IcoVariant variant) {
  const bool sym = variant == IcoVariant::symmetric;
  detail::require(order >= (sym ? 2u : 3u), "gamma_root: order too small for this variant");
  const double n = static_cast<double>(order);
  const double c = sym ? 3.0 : 2.0;
  const double tail = sym ? 2.0 : 1.0;
  auto p = [&](double g) { return std::pow(g, n - 1) * (g - c) + tail; };
  double lo = c - c / n, hi = c;
  if (!(p(lo) < 0 && p(hi) > 0)) throw NumericalError("gamma_root: polynomial does not change sign on the bracket");
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    (p(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// ceil(order^{-1} (1 + log(log(psi0/eps) / log(1/rho)) / log gamma)), at least 1.
inline std::size_t iteration_bound(double psi0, double eps, double rho, std::size_t order, IcoVariant variant) {
  detail::require(rho > 0 && rho < 1, "iteration_bound: need 0 < rho < 1");
  detail::require(eps > 0 && eps < psi0, "iteration_bound: need 0 < eps < psi0");
  const double g = gamma_root(order, variant);
  const double m =
      (1.0 + std::log(std::log(psi0 / eps) / std::log(1.0 / rho)) / std::log(g)) / static_cast<double>(order);
  return static_cast<std::size_t>(std::max(1.0, std::ceil(m)));
}

}  // namespace tpca
