#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace tpca;

namespace {

CPDecomposition paired_model(const Shape& dims, const Vector& w, double theta, std::uint64_t seed) {
  Rng rng(seed);
  return make_cp(dims, w, theta, rng, true);
}

// Largest min(d_S, d/d_S) over proper subsets, by brute force.
std::size_t best_balance(const Shape& shape) {
  const std::size_t d = shape_size(shape);
  std::size_t best = 0;
  for (std::uint64_t mask = 1; mask + 1 < (1u << shape.size()); ++mask) {
    std::size_t ds = 1;
    for (std::size_t k = 0; k < shape.size(); ++k)
      if (mask >> k & 1) ds *= shape[k];
    best = std::max(best, std::min(ds, d / ds));
  }
  return best;
}

}  // namespace

TEST(CpcaSymmetric, NoiselessOrthogonalIsExact) {
  for (std::size_t kk : {2u, 3u}) {
    const Shape dims(kk, 4);
    const Vector w(Eigen::Vector3d(5, 3, 2));
    const CPDecomposition truth = paired_model(dims, w, 0.0, 10 + kk);
    const CPCAOutput out = cpca_symmetric(compose(truth), 3);
    const MatchResult m = match_components(out.estimate, truth);
    EXPECT_LT(m.max_error, 1e-10);
    EXPECT_LT(m.lambda_rel_error, 1e-10);
  }
}

TEST(CpcaSymmetric, NoiselessRankOneAnyShape) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape dims{2 + rng.index(4), 2 + rng.index(4), 2 + rng.index(3)};
    const CPDecomposition truth = make_cp(dims, Vector::Constant(1, rng.uniform(1, 10)), 0.0, rng, true);
    const CPCAOutput out = cpca_symmetric(compose(truth), 1);
    EXPECT_LT(match_components(out.estimate, truth).max_error, 1e-10);
    EXPECT_NEAR(out.estimate.weights[0], truth.weights[0], 1e-10 * truth.weights[0]);
  }
}

TEST(CpcaSymmetric, CoherentModelWithinPerturbationBound) {
  const double theta = std::pow(10.0, -0.5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const CPDecomposition truth = paired_model({20, 20}, geometric_weights(100, 1.25, 3), theta, seed);
    const CoherenceReport rep = coherence_report(truth.factors, {});
    EXPECT_LE(rep.delta, rep.delta_k.prod() + 1e-12);
    const CPCAOutput out = cpca_symmetric(compose(truth), 3);
    const MatchResult m = match_components(out.estimate, truth);
    const Vector gaps = eigengaps(truth.weights);
    const double lam1 = truth.weights[0];
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double bound = (1 + 2 * lam1 / gaps[j]) * rep.delta_k.prod();
      for (Eigen::Index k = 0; k < 2; ++k) EXPECT_LE(m.errors(j, k), bound);
    }
  }
}

TEST(CpcaSymmetric, NearlyOrthogonalModelWithinSharpBound) {
  // bound well below 1/sqrt(2), so it constrains the error itself
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CPDecomposition truth = paired_model({10, 10}, Vector(Eigen::Vector3d(3, 2, 1)), 0.05, 100 + seed);
    const double delta = coherence_report(truth.factors, {}).delta;
    const CPCAOutput out = cpca_symmetric(compose(truth), 3);
    const MatchResult m = match_components(out.estimate, truth);
    const Vector gaps = eigengaps(truth.weights);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double bound = (1 + 2 * truth.weights[0] / gaps[j]) * delta;
      ASSERT_LT(bound, std::sqrt(0.5));
      for (Eigen::Index k = 0; k < 2; ++k) EXPECT_LE(m.errors(j, k), bound);
      const auto e = static_cast<Eigen::Index>(m.perm[static_cast<std::size_t>(j)]);
      EXPECT_LE(std::abs(out.estimate.weights[e] - truth.weights[j]), delta * truth.weights[0] + 1e-12);
    }
  }
}

TEST(CpcaSymmetric, TensorAndDataPathsAgree) {
  const CPDecomposition truth = paired_model({5, 6}, Vector(Eigen::Vector3d(9, 5, 3)), 0.2, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SampleBatch b = gen_spiked_samples(truth, 60, 1.0, seed);
    const CPCAOutput a = cpca_symmetric(covariance_tensor(b), 3);
    const CPCAOutput c = cpca_symmetric(b, 3);
    EXPECT_LT((a.estimate.weights - c.estimate.weights).cwiseAbs().maxCoeff(), 1e-9 * a.estimate.weights[0]);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_LT((a.estimate.factors[k] - c.estimate.factors[k]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CpcaSymmetric, InvariantToSampleOrder) {
  const CPDecomposition truth = paired_model({4, 5}, Vector(Eigen::Vector2d(9, 4)), 0.2, 5);
  SampleBatch b = gen_spiked_samples(truth, 40, 1.0, 3);
  const CPCAOutput a = cpca_symmetric(b, 2);
  b.data = b.data.rowwise().reverse().eval();
  const CPCAOutput c = cpca_symmetric(b, 2);
  EXPECT_LT((a.estimate.weights - c.estimate.weights).norm(), 1e-10);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_LT((a.estimate.factors[k] - c.estimate.factors[k]).norm(), 1e-9);
}

TEST(CpcaSymmetric, ScaleEquivariance) {
  const CPDecomposition truth = paired_model({4, 5}, Vector(Eigen::Vector2d(9, 4)), 0.2, 6);
  const SampleBatch b = gen_spiked_samples(truth, 40, 1.0, 3);
  const Matrix y = data_matrix(b);
  const CPCAOutput a = cpca_symmetric_data(y, b.shape, 2);
  const CPCAOutput c = cpca_symmetric_data(3.0 * y, b.shape, 2);
  EXPECT_LT((c.estimate.weights - 9.0 * a.estimate.weights).norm(), 1e-9 * c.estimate.weights.norm());
  for (std::size_t k = 0; k < 2; ++k) EXPECT_LT((a.estimate.factors[k] - c.estimate.factors[k]).norm(), 1e-9);
}

TEST(CpcaSymmetric, RankBeyondNumericalRankThrows) {
  const CPDecomposition truth = paired_model({3, 3}, Vector::Constant(1, 2.0), 0.0, 7);
  EXPECT_THROW(cpca_symmetric(compose(truth), 2), InvalidArgument);
  EXPECT_THROW(cpca_symmetric(compose(truth), 10), InvalidArgument);
}

TEST(CpcaSymmetric, UnpairableShapeThrows) {
  Rng rng(8);
  const DenseTensor t = support::random_tensor({3, 4, 4, 3}, rng);
  EXPECT_THROW(cpca_symmetric(t, 1), InvalidArgument);
}

TEST(CpcaGeneral, NoiselessOrthogonalOrderThreeIsExact) {
  Rng rng(9);
  const CPDecomposition truth = make_cp({5, 6, 7}, Vector(Eigen::Vector3d(4, 3, 1)), 0.0, rng);
  const CPCAOutput out = cpca_general(compose(truth), 3);
  const MatchResult m = match_components(out.estimate, truth);
  EXPECT_LT(m.max_error, 1e-10);
  EXPECT_LT(m.lambda_rel_error, 1e-10);
}

TEST(CpcaGeneral, ChooseUnfoldingWorkedExample) {
  EXPECT_EQ(choose_unfolding({4, 6, 8}), (ModeSet{2}));
}

TEST(CpcaGeneral, ChooseUnfoldingMaximizesBalance) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    Shape shape(3 + rng.index(4));
    for (auto& d : shape) d = 2 + rng.index(7);
    const ModeSet s = choose_unfolding(shape);
    std::size_t ds = 1;
    for (std::size_t k : s) ds *= shape[k];
    EXPECT_EQ(std::min(ds, shape_size(shape) / ds), best_balance(shape));
  }
}

TEST(CpcaGeneral, CoherentOrderFourWithinPerturbationBound) {
  const double theta = std::pow(10.0, -0.5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    const CPDecomposition truth = make_cp({6, 6, 6, 6}, geometric_weights(100, 1.25, 3), theta, rng);
    const CPCAOutput out = cpca_general(compose(truth), 3);
    const ModeSet sc = complement(out.subset, 4);
    const double delta = std::max(coherence_report(truth.factors, out.subset).delta_s,
                                  coherence_report(truth.factors, sc).delta_s);
    const Vector gaps = eigengaps(truth.weights);
    const MatchResult m = match_components(out.estimate, truth);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double psi0 = (std::sqrt(2.0) + 4 * truth.weights[0] / gaps[j]) * delta;
      for (Eigen::Index k = 0; k < 4; ++k) {
        const double e = m.errors(j, k);
        EXPECT_LE(std::min(e * e, 0.5), psi0 * psi0 / 2 + 1e-12);
      }
    }
  }
}

TEST(CpcaGeneral, NearlyOrthogonalWithinSharpBound) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    const CPDecomposition truth = make_cp({5, 5, 5, 5}, Vector(Eigen::Vector3d(3, 2, 1)), 0.05, rng);
    const CPCAOutput out = cpca_general(compose(truth), 3);
    const double delta = std::max(coherence_report(truth.factors, out.subset).delta_s,
                                  coherence_report(truth.factors, complement(out.subset, 4)).delta_s);
    const Vector gaps = eigengaps(truth.weights);
    const MatchResult m = match_components(out.estimate, truth);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double psi0 = (std::sqrt(2.0) + 4 * truth.weights[0] / gaps[j]) * delta;
      ASSERT_LT(psi0, 1.0);
      for (Eigen::Index k = 0; k < 4; ++k) {
        EXPECT_LE(m.errors(j, k), psi0 / std::sqrt(2.0) + 1e-12);
      }
      const auto e = static_cast<Eigen::Index>(m.perm[static_cast<std::size_t>(j)]);
      EXPECT_LE(std::abs(out.estimate.weights[e] - truth.weights[j]), std::sqrt(2.0) * delta * truth.weights[0] + 1e-12);
    }
  }
}

TEST(CpcaGeneral, ExplicitSubsetIsHonoured) {
  Rng rng(11);
  const CPDecomposition truth = make_cp({3, 4, 5}, Vector(Eigen::Vector2d(2, 1)), 0.0, rng);
  const CPCAOutput out = cpca_general(compose(truth), 2, ModeSet{0, 2});
  EXPECT_EQ(out.subset, (ModeSet{0, 2}));
  EXPECT_EQ(out.u.rows(), 15);
  EXPECT_LT(match_components(out.estimate, truth).max_error, 1e-10);
}

TEST(CpcaGeneral, RejectsBadArguments) {
  Rng rng(12);
  const DenseTensor t = support::random_tensor({3, 4, 5}, rng);
  EXPECT_THROW(cpca_general(t, 6), InvalidArgument);  // min(d_S, d/d_S) = 5
  EXPECT_THROW(cpca_general(t, 1, ModeSet{0, 1, 2}), InvalidArgument);
  EXPECT_THROW(cpca_general(support::random_tensor({3, 4}, rng), 1), InvalidArgument);
}
