#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "t3d/model/losses.hpp"
#include "t3d/model/reconstruction_model.hpp"

using namespace t3d;
using namespace t3d::model;

namespace {

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

voxel::Mask2D mask_of(int dim, std::vector<float> v, voxel::Occupancy kind) {
  return voxel::Mask2D(voxel::Image2D(dim, dim, std::move(v)), kind);
}

}  // namespace

TEST(BceLoss, AnalyticCases) {
  std::mt19937_64 rng(1);
  const auto s = test::random_binary_grid(8, rng);
  const voxel::VoxelGrid as_prob(8, {}, voxel::Occupancy::probability, std::vector<float>(s.values().begin(), s.values().end()));
  EXPECT_LE(bce_loss(s, as_prob), 1.1e-7);
  EXPECT_GE(bce_loss(s, as_prob), 0.0);

  const voxel::VoxelGrid ones(8, {}, voxel::Occupancy::binary, std::vector<float>(512, 1.0f));
  const voxel::VoxelGrid half(8, {}, voxel::Occupancy::probability, std::vector<float>(512, 0.5f));
  EXPECT_NEAR(bce_loss(ones, half), std::log(2.0), 1e-12);
  EXPECT_THROW(bce_loss(ones, voxel::VoxelGrid(16, {}, voxel::Occupancy::probability)), DimensionMismatch);
}

TEST(BceLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto s = test::random_binary_grid(8, rng);
    const auto p = test::random_probability_grid(8, rng);
    EXPECT_LT(rel(bce_loss(s, p), test::bce_mean_oracle(to_double(s.values()), to_double(p.values()))), 1e-6);
  }
  // predictions at the extremes exercise the clamp
  std::vector<float> extreme(512);
  for (std::size_t i = 0; i < extreme.size(); ++i) extreme[i] = i % 2 ? 0.0f : 1.0f;
  const auto s = test::random_binary_grid(8, rng);
  const voxel::VoxelGrid p(8, {}, voxel::Occupancy::probability, extreme);
  EXPECT_LT(rel(bce_loss(s, p), test::bce_mean_oracle(to_double(s.values()), to_double(p.values()))), 1e-6);
  EXPECT_TRUE(std::isfinite(bce_loss(s, p)));
}

TEST(KlLoss, AnalyticCases) {
  EXPECT_DOUBLE_EQ(kl_loss(make_posterior({0, 0, 0}, {0, 0, 0})), 0.0);
  EXPECT_DOUBLE_EQ(kl_loss(make_posterior({1.0}, {0.0})), 0.5);
  const GaussianPosterior batch[] = {make_posterior({1.0}, {0.0}), make_posterior({0.0}, {0.0})};
  EXPECT_DOUBLE_EQ(kl_loss(std::span<const GaussianPosterior>(batch)), 0.25);
}

TEST(KlLoss, MatchesScalarOracleAndIsNonNegative) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> mu(16), lv(16);
    for (auto& v : mu) v = n(rng);
    for (auto& v : lv) v = 3.0 * n(rng);
    const auto post = make_posterior(mu, lv);
    for (double v : post.log_var) ASSERT_TRUE(v >= -10.0 && v <= 10.0);
    EXPECT_LT(rel(kl_loss(post), test::kl_oracle(mu, lv)), 1e-6);
    EXPECT_GT(kl_loss(post), 0.0);
  }
}

TEST(MaskLoss, AnalyticCases) {
  std::vector<float> ones(64 * 64, 1.0f), half(64 * 64, 0.5f);
  EXPECT_NEAR(mask_loss(mask_of(64, ones, voxel::Occupancy::binary), mask_of(64, half, voxel::Occupancy::probability)),
              4096.0 * std::log(2.0), 1e-9);
  EXPECT_NEAR(4096.0 * std::log(2.0), 2839.13, 0.01);
  std::mt19937_64 rng(4);
  std::bernoulli_distribution on(0.4);
  std::vector<float> k(64 * 64);
  for (auto& v : k) v = on(rng) ? 1.0f : 0.0f;
  EXPECT_LE(mask_loss(mask_of(64, k, voxel::Occupancy::binary), mask_of(64, k, voxel::Occupancy::probability)),
            64 * 64 * 1.1e-7);
}

TEST(MaskLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution on(0.4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> k(64), p(64);
    for (auto& v : k) v = on(rng) ? 1.0f : 0.0f;
    for (auto& v : p) v = u(rng);
    const double oracle = test::bce_mean_oracle(to_double(k), to_double(p)) * 64.0;
    EXPECT_LT(rel(mask_loss(mask_of(8, k, voxel::Occupancy::binary), mask_of(8, p, voxel::Occupancy::probability)), oracle),
              1e-6);
  }
}

TEST(CombinedLoss, WorkedExampleWithReferenceWeights) {
  const LossComponents terms{0.6931, 0.5, 0.6931, 10.0};
  EXPECT_NEAR(combined_loss(terms, LossWeights{}), 69.361, 1e-3);
  EXPECT_DOUBLE_EQ(combined_loss(terms, LossWeights{0, 0, 0, 0}), 0.0);
  EXPECT_THROW(combined_loss(terms, LossWeights{-1, 0, 0, 0}), InvalidArgument);
}

TEST(CombinedLoss, MatchesWeightedSumOracle) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int t = 0; t < 100; ++t) {
    const LossComponents c{u(rng), u(rng), u(rng), u(rng)};
    const LossWeights w{u(rng), u(rng), u(rng), u(rng)};
    const long double oracle = static_cast<long double>(w.alpha1) * c.rec_shape +
                               static_cast<long double>(w.alpha2) * c.kl +
                               static_cast<long double>(w.alpha3) * c.rec_observation +
                               static_cast<long double>(w.alpha4) * c.mask;
    EXPECT_LT(rel(combined_loss(c, w), static_cast<double>(oracle)), 1e-12);
  }
}

TEST(CombinedLoss, VariantsDifferByMaskTerm) {
  const LossComponents terms{0.4, 3.0, 0.5, 1234.5};
  const auto mask = default_weights(Variant::topogram_mask);
  const auto topo = default_weights(Variant::topogram_only);
  EXPECT_EQ(topo.alpha4, 0.0);
  EXPECT_EQ(mask, (LossWeights{50.0, 0.1, 50.0, 1e-4}));
  EXPECT_NEAR(combined_loss(terms, mask) - combined_loss(terms, topo), mask.alpha4 * terms.mask, 1e-12);
  const auto none = default_weights(Variant::no_shape_encoder);
  EXPECT_EQ(none.alpha1, 0.0);
  EXPECT_EQ(none.alpha2, 0.0);
}

TEST(Reparameterize, Formula) {
  const auto post = make_posterior({1.0, -2.0, 0.5}, {0.0, 0.0, 0.0});
  const std::vector<double> zero(3, 0.0), e1{1.0, 0.0, 0.0};
  EXPECT_EQ(reparameterize(post, zero).z, post.mu);
  EXPECT_EQ(reparameterize(post, e1).z, (std::vector<double>{2.0, -2.0, 0.5}));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::vector<double> mu(8), lv(8), eps(8);
  for (int i = 0; i < 8; ++i) {
    mu[i] = n(rng);
    lv[i] = n(rng);
    eps[i] = n(rng);
  }
  const auto z = reparameterize(make_posterior(mu, lv), eps).z;
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(z[i], mu[i] + std::exp(lv[i] / 2.0) * eps[i], 1e-14);
}
