#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace tpca;

TEST(GenBasis, ZeroCoherenceIsOrthonormal) {
  Rng rng(1);
  const Matrix a = gen_basis(20, 5, 0.0, rng);
  EXPECT_LT((a.transpose() * a - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(GenBasis, CompoundSymmetricGram) {
  Rng rng(2);
  const double theta = std::pow(10.0, -0.5);
  const Matrix a = gen_basis(20, 3, theta, rng);
  const Matrix g = a.transpose() * a;
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(g(i, i), 1.0, 1e-14);
    for (Eigen::Index j = 0; j < 3; ++j)
      if (i != j) EXPECT_NEAR(g(i, j), 0.31623, 1e-5);
  }
  EXPECT_NEAR(g(0, 1), theta, 1e-10);
  EXPECT_NEAR(gram_delta(a), 2 * theta, 1e-12);
}

TEST(GenBasis, InfeasibleCoherenceThrows) {
  Rng rng(3);
  EXPECT_THROW(gen_basis(10, 3, 0.5, rng), InvalidArgument);
  EXPECT_THROW(gen_basis(10, 3, -0.1, rng), InvalidArgument);
  EXPECT_THROW(gen_basis(2, 3, 0.0, rng), InvalidArgument);
  EXPECT_NO_THROW(gen_basis(10, 1, 0.99, rng));
}

TEST(GeometricWeights, EndpointsAndRatios) {
  const Vector w = geometric_weights(100, 1.25, 3);
  EXPECT_DOUBLE_EQ(w[0], 100);
  EXPECT_NEAR(w[2], 80, 1e-12);
  EXPECT_NEAR(w[0] / w[1], w[1] / w[2], 1e-12);
  EXPECT_EQ(geometric_weights(7, 2, 1)[0], 7);
  EXPECT_THROW(geometric_weights(1, 0.5, 3), InvalidArgument);
}

TEST(Compose, MatchesSumOfOuterProducts) {
  Rng rng(4);
  const CPDecomposition cp = make_cp({3, 4, 5}, Vector(Eigen::Vector2d(2, 1)), 0.2, rng);
  DenseTensor sum({3, 4, 5});
  for (Eigen::Index j = 0; j < 2; ++j) {
    const DenseTensor t = outer({cp.factors[0].col(j), cp.factors[1].col(j), cp.factors[2].col(j)});
    sum.flat() += cp.weights[j] * t.flat();
  }
  EXPECT_LT((vec(compose(cp)) - vec(sum)).norm(), 1e-13);
}

TEST(Compose, PairedModelRepeatsFactors) {
  Rng rng(5);
  const CPDecomposition cp = make_cp({3, 4}, Vector::Ones(1), 0.0, rng, true);
  const Vector a = cp.factors[0].col(0), b = cp.factors[1].col(0);
  const DenseTensor t = compose(cp);
  EXPECT_EQ(t.shape(), (Shape{3, 4, 3, 4}));
  EXPECT_LT((vec(t) - vec(outer({a, b, a, b}))).norm(), 1e-14);
}

TEST(Compose, OrthogonalPythagoras) {
  Rng rng(6);
  const Vector w(Eigen::Vector3d(5, 3, 2));
  const CPDecomposition cp = make_cp({6, 6, 6}, w, 0.0, rng);
  EXPECT_NEAR(std::pow(hs_norm(compose(cp)), 2), w.squaredNorm(), 1e-10);
}

TEST(CPDecomposition, ValidateRejectsBadModels) {
  Rng rng(7);
  CPDecomposition cp = make_cp({4, 4}, Vector::Ones(2), 0.0, rng);
  CPDecomposition bad = cp;
  bad.factors[0] *= 2;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = cp;
  bad.factors[1] = Matrix::Identity(4, 3);
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = cp;
  bad.weights[0] = std::nan("");
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(SortComponents, DescendingWeightsCarryColumns) {
  Rng rng(8);
  CPDecomposition cp = make_cp({4, 5}, Vector::Ones(3), 0.0, rng);
  cp.weights = Vector(Eigen::Vector3d(1, 3, 2));
  const Vector mid = cp.factors[1].col(2);
  const CPDecomposition s = sort_components(cp);
  EXPECT_EQ(s.weights, Vector(Eigen::Vector3d(3, 2, 1)));
  EXPECT_EQ(Vector(s.factors[1].col(1)), mid);
}

TEST(PairedDims, SplitsEvenOrders) {
  EXPECT_EQ(paired_dims({3, 4, 3, 4}), (Shape{3, 4}));
  EXPECT_THROW(paired_dims({3, 4, 4, 3}), InvalidArgument);
  EXPECT_THROW(paired_dims({3, 4, 3}), InvalidArgument);
}

TEST(SpikedSamples, NoiselessSingleSampleWithFixedFactor) {
  Rng rng(9);
  const CPDecomposition cp = make_cp({4, 5}, Vector::Constant(1, 9.0), 0.0, rng, true);
  SpikedOptions opts;
  opts.fixed_factor = 1.0;
  const SampleBatch b = gen_spiked_samples(cp, 1, 0.0, 42, opts);
  const DenseTensor expected = outer({cp.factors[0].col(0), cp.factors[1].col(0)});
  EXPECT_LT((vec(b.sample(0)) - 3.0 * vec(expected)).norm(), 1e-14);
}

TEST(SpikedSamples, SecondMomentTraceWithinFiveStandardErrors) {
  Rng rng(10);
  const Vector w(Eigen::Vector3d(25, 16, 9));
  const CPDecomposition cp = make_cp({5, 4}, w, 0.2, rng, true);
  const double sigma = 0.7;
  const SampleBatch b = gen_spiked_samples(cp, 10000, sigma, 7);
  const Eigen::ArrayXd sq = b.data.colwise().squaredNorm().transpose().array();
  const double mean = sq.mean();
  const double se = std::sqrt((sq - mean).square().sum() / (sq.size() - 1) / static_cast<double>(sq.size()));
  EXPECT_LT(std::abs(mean - (w.sum() + sigma * sigma * 20)), 5 * se);
}

TEST(SpikedSamples, SameSeedSameBatch) {
  Rng rng(11);
  const CPDecomposition cp = make_cp({3, 3}, Vector(Eigen::Vector2d(4, 1)), 0.1, rng, true);
  const SampleBatch a = gen_spiked_samples(cp, 50, 1.0, 99);
  const SampleBatch b = gen_spiked_samples(cp, 50, 1.0, 99);
  const SampleBatch c = gen_spiked_samples(cp, 50, 1.0, 100);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
}

TEST(SpikedSamples, RejectsUnpairedModelsAndBadArguments) {
  Rng rng(12);
  const CPDecomposition cp = make_cp({3, 3}, Vector::Ones(1), 0.0, rng);
  EXPECT_THROW(gen_spiked_samples(cp, 10, 1.0, 1), InvalidArgument);
  const CPDecomposition paired = make_cp({3, 3}, Vector::Ones(1), 0.0, rng, true);
  EXPECT_THROW(gen_spiked_samples(paired, 0, 1.0, 1), InvalidArgument);
  EXPECT_THROW(gen_spiked_samples(paired, 5, -1.0, 1), InvalidArgument);
}

TEST(CovarianceTensor, SingleRankOneSample) {
  Rng rng(13);
  const CPDecomposition cp = make_cp({3, 4}, Vector::Constant(1, 4.0), 0.0, rng, true);
  SpikedOptions opts;
  opts.fixed_factor = 1.0;
  const SampleBatch b = gen_spiked_samples(cp, 1, 0.0, 1, opts);
  const DenseTensor t = covariance_tensor(b);
  const Matrix m = unfold_group(t, {0, 1});
  const SvdResult s = top_svd(m, 2);
  EXPECT_NEAR(s.s[0], 4.0, 1e-12);
  EXPECT_LT(s.s[1], 1e-12);
  // T = X ⊗ X
  const DenseTensor x = b.sample(0);
  EXPECT_LT((vec(t) - vec(outer({vec(x), vec(x)}))).norm(), 1e-13);
}

TEST(CovarianceTensor, UnfoldingEigenvaluesAreSquaredSingularValues) {
  Rng rng(14);
  const CPDecomposition cp = make_cp({3, 4}, Vector(Eigen::Vector2d(9, 4)), 0.1, rng, true);
  const SampleBatch b = gen_spiked_samples(cp, 30, 1.0, 5);
  const Matrix m = unfold_group(covariance_tensor(b), {0, 1});
  const Matrix y = data_matrix(b);
  EXPECT_LT((m - y * y.transpose()).norm(), 1e-12);
  const SpectralResult e = top_eigs_sym(m, 5);
  const SvdResult s = top_svd(y, 5);
  EXPECT_LT((e.values - s.s.cwiseAbs2()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(NoisyCP, ZeroNoiseIsExact) {
  Rng rng(15);
  const CPDecomposition cp = make_cp({3, 4, 5}, Vector(Eigen::Vector2d(3, 1)), 0.2, rng);
  const DenseTensor t = gen_noisy_cp(cp, 0.0, rng);
  EXPECT_LT((vec(t) - vec(compose(cp))).norm(), 1e-15);
}

TEST(NoisyCP, EntryVarianceWithinFiveStandardErrors) {
  Rng rng(16);
  const CPDecomposition cp = make_cp({20, 20, 20}, Vector::Constant(1, 10.0), 0.0, rng);
  const double sigma = 1.5;
  const DenseTensor t = gen_noisy_cp(cp, sigma, rng);
  const Eigen::ArrayXd e = (vec(t) - vec(compose(cp))).array();
  const Eigen::ArrayXd sq = e.square();
  const double mean = sq.mean();
  const double se = std::sqrt((sq - mean).square().sum() / (sq.size() - 1) / static_cast<double>(sq.size()));
  EXPECT_LT(std::abs(mean - sigma * sigma), 5 * se);
}
