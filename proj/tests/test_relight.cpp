#include <random>

#include <gtest/gtest.h>

#include "dannet/relight/light_loss.hpp"
#include "dannet/relight/relight_net.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace dannet::relight {
namespace {

using dannet::testing::kernel_grad_error;
using dannet::testing::random_basic;
using D = BasicTensor<double>;

TEST(TvLoss, ZeroForIdentityAndConstantShift) {
  std::mt19937_64 rng(1);
  D i = random_basic<double>({2, 3, 8, 8}, rng);
  EXPECT_EQ(tv_loss(i, i).value, 0.0);
  D shifted = i;
  for (auto& v : shifted.values()) v += 0.3;
  EXPECT_NEAR(tv_loss(i, shifted).value, 0.0, 1e-28);
}

TEST(TvLoss, HandSummedTwoByTwo) {
  D i({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 0});
  D r({1, 1, 2, 2}, 0.0);
  EXPECT_DOUBLE_EQ(tv_loss(i, r).value, 0.5);
  EXPECT_DOUBLE_EQ(oracle::tv(i, r), 0.5);
}

TEST(TvLoss, MatchesOracleAndIsIntensityTranslationInvariant) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    D i = random_basic<double>({1, 3, 8, 7}, rng), r = random_basic<double>({1, 3, 8, 7}, rng);
    EXPECT_NEAR(tv_loss(i, r).value, oracle::tv(i, r), 1e-12);
    D i2 = i, r2 = r;
    for (auto& v : i2.values()) v += 0.7;
    for (auto& v : r2.values()) v += 0.7;
    EXPECT_NEAR(tv_loss(i2, r2).value, tv_loss(i, r).value, 1e-12);
  }
}

TEST(TvLoss, ShapeMismatchThrows) {
  EXPECT_THROW(tv_loss(D({1, 1, 2, 2}), D({1, 1, 2, 3})), ShapeError);
}

TEST(ExposureLoss, ConstantCases) {
  D r({1, 3, 64, 64}, 0.5);
  EXPECT_EQ(exposure_loss(r, 0.5).value, 0.0);
  D dark({1, 3, 64, 64}, 0.2);
  EXPECT_NEAR(exposure_loss(dark, 0.5).value, 0.3, 1e-12);
}

TEST(ExposureLoss, MatchesWindowOracle) {
  std::mt19937_64 rng(3);
  D r = random_basic<double>({1, 3, 64, 64}, rng);
  EXPECT_NEAR(exposure_loss(r, 0.4).value, oracle::exposure(r, 0.4, 32), 1e-12);
  for (int t = 0; t < 20; ++t) {
    D small = random_basic<double>({2, 3, 8, 8}, rng);
    EXPECT_NEAR(exposure_loss(small, 0.45, 4).value, oracle::exposure(small, 0.45, 4), 1e-12);
  }
}

TEST(ExposureLoss, ZeroExactlyWhenEveryCellHitsTarget) {
  // cell means equal E even though pixels vary
  D r({1, 1, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) r(0, 0, y, x) = (x + y) % 2 ? 0.25 : 0.75;
  EXPECT_EQ(exposure_loss(r, 0.5).value, 0.0);
  r(0, 0, 40, 3) += 0.01;
  EXPECT_GT(exposure_loss(r, 0.5).value, 0.0);
}

TEST(ExposureLoss, RejectsSizesNotDivisibleByPool) {
  EXPECT_THROW(exposure_loss(D({1, 3, 48, 64}), 0.5), ShapeError);
}

TEST(SsimLoss, IdentityIsZeroAndRangeIsUnit) {
  std::mt19937_64 rng(4);
  D i = random_basic<double>({1, 3, 8, 8}, rng);
  EXPECT_NEAR(ssim_loss(i, i).value, 0.0, 1e-15);
  for (int t = 0; t < 20; ++t) {
    D a = random_basic<double>({1, 2, 6, 6}, rng), b = random_basic<double>({1, 2, 6, 6}, rng);
    for (auto& v : b.values()) v = 1.0 - v;  // anti-correlated structure
    const double l = ssim_loss(a, b).value;
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
  }
}

TEST(SsimLoss, MatchesSlidingWindowOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    D a = random_basic<double>({1, 1, 8, 8}, rng), b = random_basic<double>({1, 1, 8, 8}, rng);
    EXPECT_NEAR(ssim_loss(a, b).value, oracle::ssim(a, b), 1e-12);
  }
  EXPECT_THROW(ssim_loss(D({1, 1, 2, 8}), D({1, 1, 2, 8})), ShapeError);
}

TEST(LightLoss, CombinesWithDefaultWeights) {
  EXPECT_NEAR(combine(0.1, 0.2, 0.05, {}).l_light, 1.25, 1e-12);
  D i({1, 3, 32, 32}, 0.35);
  auto res = light_loss(i, i, 0.35);
  EXPECT_EQ(res.terms.l_tv, 0.0);
  EXPECT_EQ(res.terms.l_exp, 0.0);
  EXPECT_EQ(res.terms.l_ssim, 0.0);
  EXPECT_EQ(res.terms.l_light, 0.0);
}

TEST(LightLoss, EqualsWeightedSumOfOracles) {
  std::mt19937_64 rng(6);
  D i = random_basic<double>({2, 3, 32, 32}, rng), r = random_basic<double>({2, 3, 32, 32}, rng);
  auto res = light_loss(i, r, 0.3, {10, 1, 1});
  const double expect =
      10 * oracle::tv(i, r) + oracle::exposure(r, 0.3, 32) + oracle::ssim(i, r);
  EXPECT_NEAR(res.terms.l_light, expect, 1e-10);
}

TEST(LightLoss, AnalyticGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  D i = random_basic<double>({1, 3, 8, 8}, rng);
  D r = random_basic<double>({1, 3, 8, 8}, rng);
  EXPECT_LT(kernel_grad_error([&](const D& x) { return tv_loss(i, x); }, r), 1e-4);
  EXPECT_LT(kernel_grad_error([&](const D& x) { return exposure_loss(x, 0.4, 4); }, r), 1e-4);
  D i1 = random_basic<double>({1, 1, 8, 8}, rng), r1 = random_basic<double>({1, 1, 8, 8}, rng);
  EXPECT_LT(kernel_grad_error([&](const D& x) { return ssim_loss(i1, x); }, r1), 1e-4);
}

TEST(LightLoss, MeanIntensityIsGlobalAverage) {
  Tensor t({2, 3, 1, 2}, std::vector<float>{0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_NEAR(mean_intensity(t), 0.75, 1e-12);
}

TEST(RelightNet, ZeroResidualIsIdentity) {
  std::mt19937_64 rng(8);
  RelightNet net(4, rng);
  Tensor img = dannet::testing::random_tensor({2, 3, 16, 16}, rng, 0, 1);
  nn::Var r = net.forward(nn::Var::constant(img));
  EXPECT_EQ(r.value(), img);
  const Tensor rt = r.value();
  EXPECT_EQ(tv_loss(img, rt).value, 0.0);
  EXPECT_EQ(ssim_loss(img, rt).value, 0.0);
}

TEST(RelightNet, PreservesShapeAndRejectsTinyInputs) {
  std::mt19937_64 rng(9);
  RelightNet net(4, rng, false);
  ImageBatch in{Tensor({2, 3, 64, 64}, 0.5f), Domain::target_night};
  ImageBatch out = relight_forward(net, in);
  EXPECT_EQ(out.data.shape(), in.data.shape());
  EXPECT_EQ(out.domain, Domain::target_night);
  EXPECT_THROW(net.forward(nn::Var::constant(Tensor({1, 3, 4, 4}))), ShapeError);
  EXPECT_THROW(net.forward(nn::Var::constant(Tensor({1, 3, 18, 16}))), ShapeError);
}

TEST(RelightNet, EveryParameterReceivesGradient) {
  std::mt19937_64 rng(10);
  RelightNet net(4, rng, false);
  Tensor img = dannet::testing::random_tensor({2, 3, 16, 16}, rng, 0, 1);
  nn::Var r = net.forward(nn::Var::constant(img));
  // d||R||^2 / dR = 2R
  Tensor g = r.value();
  double sq = 0;
  for (auto& v : g.values()) {
    sq += double(v) * v;
    v *= 2;
  }
  nn::loss_node(r, sq, g).backward();
  for (const auto& p : net.parameters()) {
    double mag = 0;
    for (float v : p.var.grad().values()) mag += std::abs(v);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(RelightNet, ParameterGradientsMatchFiniteDifferencesOnProbes) {
  std::mt19937_64 rng(11);
  RelightNet net(2, rng, false);
  net.set_training(false);
  Tensor img = dannet::testing::random_tensor({1, 3, 8, 8}, rng, 0, 1);
  auto loss = [&] {
    nn::Var r = net.forward(nn::Var::constant(img));
    Tensor g = r.value();
    double sq = 0;
    for (auto& v : g.values()) {
      sq += double(v) * v;
      v *= 2;
    }
    return nn::loss_node(r, sq, g);
  };
  net.zero_grad();
  loss().backward();
  auto params = net.parameters();
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  auto central = [&](Tensor& w, std::size_t i, float h) {
    const float orig = w[i];
    w[i] = orig + h;
    const double up = loss().value()[0];
    w[i] = orig - h;
    const double down = loss().value()[0];
    w[i] = orig;
    return (up - down) / (2.0 * h);
  };
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 5; ++attempt) {
    auto& p = params[pick_param(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, p.var.value().size() - 1);
    const std::size_t i = pick(rng);
    Tensor& w = p.var.mutable_value();
    const double coarse = central(w, i, 4e-3f), fine = central(w, i, 2e-3f);
    // a ReLU kink inside the stencil makes the two estimates disagree
    if (std::abs(coarse - fine) > 5e-3 * std::max(1.0, std::abs(fine))) continue;
    EXPECT_NEAR(p.var.grad()[i], fine, 2e-2 * std::max(1.0, std::abs(fine))) << p.name;
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

}  // namespace
}  // namespace dannet::relight
