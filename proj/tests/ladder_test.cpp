#include "lid/ladder.hpp"

#include <gtest/gtest.h>

#include <cmath>

using lid::BatchNormState;
using lid::ForwardTrace;
using lid::LadderConfig;
using lid::LadderParams;
using lid::Matrix;
using lid::Rng;
using lid::RunMode;

namespace {

LadderConfig make_config(std::vector<size_t> sizes, double sigma = 0.5) {
  LadderConfig cfg;
  cfg.layer_sizes = std::move(sizes);
  cfg.noise_sigma = sigma;
  cfg.lambda.assign(cfg.layer_sizes.size(), 1.0);
  return cfg;
}

Matrix random_matrix(Rng& rng, size_t rows, size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian(scale);
  return m;
}

void expect_matrices_eq(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_str() << " vs " << b.shape_str();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol);
}

TEST(CleanForward, ZeroWeightsGiveUniformOutput) {
  LadderConfig cfg = make_config({3, 4, 5});
  Rng rng(1);
  LadderParams p = lid::init_params(cfg, rng);
  for (auto& w : p.W)
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.0;
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 6, 3);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  for (size_t i = 0; i < tr.y.rows(); ++i)
    for (size_t j = 0; j < tr.y.cols(); ++j) EXPECT_NEAR(tr.y(i, j), 0.2, 1e-12);
}

TEST(CleanForward, IdenticalRowsCenterToZero) {
  LadderConfig cfg = make_config({3, 4, 2});
  Rng rng(2);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x(5, 3);
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j = 0; j < x.cols(); ++j) x(i, j) = 1.0 + static_cast<double>(j);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  for (const Matrix& z : tr.z)
    for (size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z.data()[i], 0.0, 1e-12);
}

TEST(CleanForward, IdentityWeightsStandardizeInput) {
  // Config [2,2] with W = I: z1 equals the column-standardized input up to
  // the batch-norm epsilon.
  LadderConfig cfg = make_config({2, 2});
  Rng rng(3);
  LadderParams p = lid::init_params(cfg, rng);
  p.W[0] = Matrix::from_rows({{1, 0}, {0, 1}});
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = Matrix::from_rows({{1, 4}, {3, 8}});
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  auto [mean, var] = lid::batch_moments(x);
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j = 0; j < x.cols(); ++j) {
      double standardized = (x(i, j) - mean(0, j)) / std::sqrt(var(0, j));
      EXPECT_NEAR(tr.z[1](i, j), standardized, 1e-5);
    }
}

TEST(CleanForward, DimensionMismatchFatal) {
  LadderConfig cfg = make_config({3, 2});
  Rng rng(4);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x(4, 5);
  EXPECT_THROW(lid::clean_forward(p, cfg, x, bn, RunMode::kTrain), std::invalid_argument);
}

TEST(CleanForward, CollapseGuardBatchStats) {
  // Batch-norm keeps every z_l centered and unit-variance in train mode (up
  // to the 1e-6 epsilon under the square root).
  LadderConfig cfg = make_config({5, 7, 4, 3});
  Rng rng(5);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 32, 5, 2.0);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  for (const Matrix& z : tr.z) {
    auto [mean, var] = lid::batch_moments(z);
    for (size_t j = 0; j < z.cols(); ++j) {
      EXPECT_NEAR(mean(0, j), 0.0, 1e-9);
      EXPECT_NEAR(var(0, j), 1.0, 1e-5);
    }
  }
}

TEST(NoisyForward, SigmaZeroMatchesClean) {
  LadderConfig cfg = make_config({4, 6, 3}, 0.0);
  Rng rng(6);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 8, 4);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  Rng noise_rng(7);
  lid::noisy_forward(tr, p, cfg, x, noise_rng);
  for (size_t l = 0; l < tr.z.size(); ++l) {
    expect_matrices_eq(tr.ztilde[l], tr.z[l], 0.0);
    expect_matrices_eq(tr.htilde[l], tr.h[l], 0.0);
  }
  expect_matrices_eq(tr.ytilde, tr.y, 0.0);
}

TEST(NoisyForward, FixedSeedReproducible) {
  LadderConfig cfg = make_config({4, 6, 3}, 0.5);
  Rng rng(8);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 8, 4);
  ForwardTrace a = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  ForwardTrace b = a;
  Rng r1(99), r2(99);
  lid::noisy_forward(a, p, cfg, x, r1);
  lid::noisy_forward(b, p, cfg, x, r2);
  for (size_t l = 0; l < a.ztilde.size(); ++l)
    expect_matrices_eq(a.ztilde[l], b.ztilde[l], 0.0);
  expect_matrices_eq(a.ytilde, b.ytilde, 0.0);
}

TEST(NoisyForward, InputNoiseEnergyMatchesSigmaSquared) {
  // Monte-Carlo estimate of E|ztilde_0 - z_0|^2 / w at the input layer.
  LadderConfig cfg = make_config({10, 4, 3}, 0.5);
  Rng rng(9);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 32, 10);
  ForwardTrace clean = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  Rng noise_rng(10);
  double acc = 0;
  size_t count = 0;
  for (int draw = 0; draw < 50; ++draw) {
    ForwardTrace tr = clean;
    lid::noisy_forward(tr, p, cfg, x, noise_rng);
    for (size_t i = 0; i < x.rows(); ++i)
      for (size_t j = 0; j < x.cols(); ++j) {
        double d = tr.ztilde[0](i, j) - clean.z[0](i, j);
        acc += d * d;
        ++count;
      }
  }
  double mean_sq = acc / static_cast<double>(count);
  EXPECT_NEAR(mean_sq, 0.25, 0.01);
}

TEST(Combinator, InitIsIdentityOnLateralPath) {
  Matrix coeffs = lid::init_combinator(3);
  Matrix ztilde = Matrix::from_rows({{0.5, -2, 7}});
  Matrix u = Matrix::from_rows({{1, 2, 3}});
  Matrix zhat = lid::combinator(ztilde, u, coeffs);
  expect_matrices_eq(zhat, ztilde, 0.0);
}

TEST(Combinator, AffineRuleWithoutLateral) {
  Matrix coeffs(lid::kCombRows, 2);
  for (size_t j = 0; j < 2; ++j) coeffs(3, j) = 1.0;  // a4 = 1, a5 = 0
  Matrix u = Matrix::from_rows({{-1.5, 2.25}});
  Matrix zhat = lid::combinator(Matrix(), u, coeffs);
  expect_matrices_eq(zhat, u, 0.0);
}

TEST(Combinator, HandEvaluatedSigmoidCase) {
  // a1..a10 = (1,0,0,0,0,0,0,0,0,1): mu = sigmoid(0) = 0.5, v = 1,
  // zhat = (2 - 0.5) * 1 + 0.5 = 2.
  Matrix coeffs(lid::kCombRows, 1);
  coeffs(0, 0) = 1.0;  // a1
  coeffs(9, 0) = 1.0;  // a10
  Matrix ztilde = Matrix::from_rows({{2}});
  Matrix u = Matrix::from_rows({{0.37}});
  Matrix zhat = lid::combinator(ztilde, u, coeffs);
  EXPECT_DOUBLE_EQ(zhat(0, 0), 2.0);
}

TEST(Decode, ZeroVerticalSignalWithInitCombinatorCopiesLateral) {
  LadderConfig cfg = make_config({3, 2}, 0.5);
  Rng rng(11);
  LadderParams p = lid::init_params(cfg, rng);
  for (auto& v : p.V)
    for (size_t i = 0; i < v.size(); ++i) v.data()[i] = 0.0;
  p.comb[1] = Matrix(lid::kCombRows, 2);  // zero top combinator
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 6, 3);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  Rng noise_rng(12);
  lid::noisy_forward(tr, p, cfg, x, noise_rng);
  lid::decode(tr, p, cfg);
  expect_matrices_eq(tr.zhat[0], tr.ztilde[0], 0.0);
}

TEST(Decode, ZeroDecoderParamsGiveZeroReconstructionOffLateral) {
  LadderConfig cfg = make_config({3, 4, 2}, 0.5);
  Rng rng(13);
  LadderParams p = lid::init_params(cfg, rng);
  for (auto& v : p.V)
    for (size_t i = 0; i < v.size(); ++i) v.data()[i] = 0.0;
  for (auto& c : p.comb)
    for (size_t i = 0; i < c.size(); ++i) c.data()[i] = 0.0;
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 6, 3);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  Rng noise_rng(14);
  lid::noisy_forward(tr, p, cfg, x, noise_rng);
  lid::decode(tr, p, cfg);
  for (size_t i = 0; i < tr.zhat[1].size(); ++i)
    EXPECT_DOUBLE_EQ(tr.zhat[1].data()[i], 0.0);
}

TEST(Decode, ReconstructionShapesMatchTargets) {
  LadderConfig cfg = make_config({5, 7, 4, 3}, 0.5);
  cfg.lateral_layers = {0, 2};
  Rng rng(15);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 9, 5);
  ForwardTrace tr = lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  Rng noise_rng(16);
  lid::noisy_forward(tr, p, cfg, x, noise_rng);
  lid::decode(tr, p, cfg);
  ASSERT_EQ(tr.zhat.size(), tr.z.size());
  for (size_t l = 0; l < tr.z.size(); ++l) {
    EXPECT_TRUE(tr.zhat[l].same_shape(tr.z[l]));
    EXPECT_TRUE(tr.zhat_bn[l].same_shape(tr.z[l]));
    EXPECT_TRUE(tr.u[l].same_shape(tr.z[l]));
  }
}

TEST(Predict, ZeroWeightsUniformAndRowsSumToOne) {
  LadderConfig cfg = make_config({4, 3, 6});
  Rng rng(17);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  Matrix x = random_matrix(rng, 5, 4);
  {
    LadderParams zero = p;
    for (auto& w : zero.W)
      for (size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.0;
    Matrix y = lid::predict(zero, cfg, x, bn);
    for (size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], 1.0 / 6.0, 1e-12);
  }
  Matrix y = lid::predict(p, cfg, x, bn);
  for (size_t i = 0; i < y.rows(); ++i) {
    double s = 0;
    for (size_t j = 0; j < y.cols(); ++j) s += y(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Predict, EvalModeIsDeterministicAndPure) {
  LadderConfig cfg = make_config({4, 5, 3});
  Rng rng(18);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg);
  // Push some batches through to give the running stats non-trivial values.
  for (int i = 0; i < 3; ++i) {
    Matrix xb = random_matrix(rng, 16, 4);
    lid::clean_forward(p, cfg, xb, bn, RunMode::kTrain);
  }
  BatchNormState before = bn;
  Matrix x = random_matrix(rng, 5, 4);
  Matrix y1 = lid::predict(p, cfg, x, bn);
  Matrix y2 = lid::predict(p, cfg, x, bn);
  expect_matrices_eq(y1, y2, 0.0);
  for (size_t l = 0; l < bn.running_mean.size(); ++l)
    expect_matrices_eq(bn.running_mean[l], before.running_mean[l], 0.0);
}

TEST(BatchNorm, RunningStatsConvergeOnStationaryData) {
  LadderConfig cfg = make_config({3, 2});
  Rng rng(19);
  LadderParams p = lid::init_params(cfg, rng);
  BatchNormState bn = lid::init_batchnorm(cfg, 0.9);
  Matrix x = random_matrix(rng, 256, 3, 2.0);
  for (int i = 0; i < 200; ++i) lid::clean_forward(p, cfg, x, bn, RunMode::kTrain);
  auto [mean, var] = lid::batch_moments(x);
  for (size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(bn.running_mean[0](0, j), mean(0, j), 1e-6);
    EXPECT_NEAR(bn.running_var[0](0, j), var(0, j), 1e-6);
    EXPECT_GE(bn.running_var[0](0, j), 0.0);
  }
}

TEST(LadderConfig, ValidationRejectsBadShapes) {
  LadderConfig cfg = make_config({3, 4, 2});
  cfg.lambda.pop_back();
  EXPECT_THROW(cfg.validate(), lid::ConfigError);
  cfg = make_config({3});
  EXPECT_THROW(cfg.validate(), lid::ConfigError);
  cfg = make_config({3, 4});
  cfg.lateral_layers = {5};
  EXPECT_THROW(cfg.validate(), lid::ConfigError);
}

}  // namespace
