#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "itrack/errors.hpp"
#include "itrack/factor_targets.hpp"
#include "oracles.hpp"

namespace itrack {
namespace {

// Index and one instrument whose horizon returns follow r_i = a + b r_m
// exactly: prices are built backwards from the horizon relation at horizon 1.
PricePanel linear_panel(std::size_t steps, double a, double b, unsigned seed) {
  PricePanel p(steps, {"I", "M"}, "M");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.01);
  double pi = 50.0, pm = 100.0;
  p.set(0, 0, pi);
  p.set(1, 0, pm);
  for (std::size_t t = 1; t < steps; ++t) {
    const double rm = n(rng);
    pm *= 1.0 + rm;
    pi *= 1.0 + a + b * rm;
    p.set(0, static_cast<Step>(t), pi);
    p.set(1, static_cast<Step>(t), pm);
  }
  return p;
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), EmptyInputError);
}

TEST(TheilSen, CollinearRecovery) {
  const std::vector<RegressionPoint> pts{{-1, -1}, {0.5, 2}, {2, 5}, {7, 15}};
  const auto fit = theil_sen(pts);
  EXPECT_EQ(fit.beta, 2.0);
  EXPECT_EQ(fit.alpha, 1.0);
}

TEST(TheilSen, FourPointExampleMatchesEnumeration) {
  // Pairwise slopes {1, 1, 1, 10, 14.5, 28}: median 5.5. Intercepts
  // y - 5.5x = {0, -4.5, -9, 13.5}: median -2.25.
  const std::vector<RegressionPoint> pts{{0, 0}, {1, 1}, {2, 2}, {3, 30}};
  const auto ref = oracle::theil_sen(pts);
  EXPECT_EQ(ref.beta, 5.5);
  EXPECT_EQ(ref.alpha, -2.25);
  const auto fit = theil_sen(pts);
  EXPECT_EQ(fit.beta, ref.beta);
  EXPECT_EQ(fit.alpha, ref.alpha);
}

TEST(TheilSen, SkipsPairsWithEqualX) {
  const std::vector<RegressionPoint> pts{{0, 0.3}, {1, 1.1}, {1, 2.9}, {2, 4.2}, {3, 5.0}};
  const auto fit = theil_sen(pts);
  const auto ref = oracle::theil_sen(pts);
  EXPECT_EQ(fit.beta, ref.beta);
  EXPECT_NEAR(fit.alpha, ref.alpha, 1e-12);
}

TEST(TheilSen, AllEqualXIsDegenerate) {
  const std::vector<RegressionPoint> pts{{1, 0}, {1, 1}, {1, 2}};
  EXPECT_THROW(theil_sen(pts), DegenerateError);
}

TEST(TheilSen, RandomSamplesMatchEnumeration) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<RegressionPoint> pts(5 + rep % 4);
    for (auto& p : pts) p = {n(rng), n(rng)};
    const auto fit = theil_sen(pts);
    const auto ref = oracle::theil_sen(pts);
    EXPECT_EQ(fit.beta, ref.beta);
    EXPECT_NEAR(fit.alpha, ref.alpha, 1e-12);
  }
}

TEST(TheilSen, OneOutlierLeavesSlopeUnmoved) {
  for (double junk : {-1e6, -3.0, 0.0, 42.0, 1e9}) {
    std::vector<RegressionPoint> pts;
    for (int k = 0; k < 5; ++k) pts.push_back({static_cast<double>(k), 0.5 + 1.5 * k});
    pts[2].y = junk;
    EXPECT_EQ(theil_sen(pts).beta, 1.5) << junk;
  }
}

TEST(TheilSen, Equivariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<RegressionPoint> pts(7);
    for (auto& p : pts) p = {n(rng), n(rng)};
    const auto base = theil_sen(pts);
    const double c = 1.0 + std::abs(n(rng));
    const double d = n(rng);
    auto scaled = pts;
    auto shifted = pts;
    for (auto& p : scaled) p.y *= c;
    for (auto& p : shifted) p.y += d;
    const auto fs = theil_sen(scaled);
    const auto fd = theil_sen(shifted);
    EXPECT_NEAR(fs.beta, c * base.beta, 1e-12);
    EXPECT_NEAR(fs.alpha, c * base.alpha, 1e-12);
    EXPECT_NEAR(fd.beta, base.beta, 1e-12);
    EXPECT_NEAR(fd.alpha, base.alpha + d, 1e-12);
  }
}

TEST(Ols, MatchesNormalEquations) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.05);
  std::vector<RegressionPoint> pts(24);
  for (auto& p : pts) {
    p.x = n(rng);
    p.y = 0.01 + 0.8 * p.x + n(rng);
  }
  const auto fit = ols(pts);
  const auto ref = oracle::normal_equations(pts);
  EXPECT_NEAR(fit.alpha, ref.alpha, 1e-10);
  EXPECT_NEAR(fit.beta, ref.beta, 1e-10);
  const std::vector<RegressionPoint> flat{{1, 1}, {1, 2}};
  EXPECT_THROW(ols(flat), DegenerateError);
}

TEST(MakeTarget, NoiselessRelationIsRecovered) {
  const auto p = linear_panel(60, 0.002, 1.3, 1);
  const ReturnPanel r(p);
  const auto e = make_target(r, 0, 20, 1, 2);
  EXPECT_NEAR(e.alpha, 0.002, 1e-12);
  EXPECT_NEAR(e.beta, 1.3, 1e-12);
  EXPECT_NEAR(e.residual, 0.0, 1e-12);
  EXPECT_EQ(e.kind, EstimateKind::target);
}

TEST(MakeTarget, NoisyPointsMatchEnumeration) {
  PricePanel p(40, {"I", "M"}, "M");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(90.0, 110.0);
  for (Step t = 0; t < 40; ++t) {
    p.set(0, t, u(rng));
    p.set(1, t, u(rng));
  }
  const ReturnPanel r(p);
  const Step t = 20, h = 5, c = 2;
  std::vector<RegressionPoint> pts;
  for (Step tau = t - c; tau <= t + c; ++tau) {
    pts.push_back({p.raw(1, tau + h) / p.raw(1, tau) - 1.0, p.raw(0, tau + h) / p.raw(0, tau) - 1.0});
  }
  const auto ref = oracle::theil_sen(pts);
  const auto e = make_target(r, 0, t, h, c);
  EXPECT_EQ(e.beta, ref.beta);
  EXPECT_NEAR(e.alpha, ref.alpha, 1e-12);
  EXPECT_NEAR(e.residual, pts[2].y - ref.alpha - ref.beta * pts[2].x, 1e-12);
}

TEST(MakeTarget, MissingIndexReturnIsUnavailable) {
  auto p = linear_panel(40, 0.0, 1.0, 3);
  PricePanel q(40, {"I", "M"}, "M");
  for (Step t = 0; t < 40; ++t) {
    q.set(0, t, p.raw(0, t));
    if (t != 27) q.set(1, t, p.raw(1, t));
  }
  // Horizon 5, half window 2 at t = 20: tau = 22 needs the index at step 27.
  EXPECT_THROW(make_target(ReturnPanel(q), 0, 20, 5, 2), MissingDataError);
  EXPECT_NO_THROW(make_target(ReturnPanel(q), 0, 10, 5, 2));
}

TEST(MakeTarget, RespectsVisibility) {
  const auto p = linear_panel(60, 0.0, 1.0, 4);
  const ReturnPanel r = ReturnPanel(p).restricted_to(20 + 2 + 5 - 1);
  EXPECT_THROW(make_target(r, 0, 20, 5, 2), LookAheadError);
  EXPECT_NO_THROW(make_target(ReturnPanel(p).restricted_to(27), 0, 20, 5, 2));
}

TEST(HistoricalEstimate, NoiselessRelationIsRecovered) {
  const auto p = linear_panel(300, -0.001, 0.7, 5);
  const auto e = historical_estimate(ReturnPanel(p), 0, 250, 200, 1);
  EXPECT_NEAR(e.alpha, -0.001, 1e-12);
  EXPECT_NEAR(e.beta, 0.7, 1e-12);
  EXPECT_EQ(e.residual, 0.0);
  EXPECT_EQ(e.kind, EstimateKind::historical);
}

TEST(HistoricalEstimate, UsesNonOverlappingReturnsBackFromTMinusOne) {
  PricePanel p(200, {"I", "M"}, "M");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(90.0, 110.0);
  for (Step t = 0; t < 200; ++t) {
    p.set(0, t, u(rng));
    p.set(1, t, u(rng));
  }
  const Step t = 150, window = 100, h = 21;
  std::vector<RegressionPoint> pts;
  for (Step end = t - 1; end - h >= t - 1 - window; end -= h) {
    pts.push_back({p.raw(1, end) / p.raw(1, end - h) - 1.0, p.raw(0, end) / p.raw(0, end - h) - 1.0});
  }
  ASSERT_EQ(pts.size(), 4u);
  const auto ref = oracle::normal_equations(pts);
  const auto e = historical_estimate(ReturnPanel(p), 0, t, window, h);
  EXPECT_NEAR(e.alpha, ref.alpha, 1e-10);
  EXPECT_NEAR(e.beta, ref.beta, 1e-10);

  std::vector<RegressionPoint> all;
  for (Step end = t - 1; end - h >= t - 1 - window; --end) {
    all.push_back({p.raw(1, end) / p.raw(1, end - h) - 1.0, p.raw(0, end) / p.raw(0, end - h) - 1.0});
  }
  const auto ref_all = oracle::normal_equations(all);
  const auto e_all = historical_estimate(ReturnPanel(p), 0, t, window, h, {.overlapping = true});
  EXPECT_NEAR(e_all.beta, ref_all.beta, 1e-10);
}

TEST(HistoricalEstimate, ShortWindowIsUnavailable) {
  const auto p = linear_panel(300, 0.0, 1.0, 6);
  EXPECT_THROW(historical_estimate(ReturnPanel(p), 0, 250, 41, 21), MissingDataError);
  EXPECT_NO_THROW(historical_estimate(ReturnPanel(p), 0, 250, 42, 21));
}

TEST(PredictionError, Examples) {
  const FactorEstimate perfect{0.01, 1.0, 0.0, EstimateKind::predicted};
  const std::vector<PeItem> zero{{0.03, 0.02, perfect}};
  EXPECT_EQ(prediction_error(zero), 0.0);

  const FactorEstimate off{0.01, 0.0, 0.0, EstimateKind::predicted};
  const std::vector<PeItem> one{{0.02, 0.5, off}};
  EXPECT_NEAR(prediction_error(one), 1e-4, 1e-18);

  const std::vector<PeItem> three{{0.05, 0.02, {0.01, 1.5, 0.002, EstimateKind::predicted}},
                                  {-0.01, 0.01, {0.0, 0.9, 0.5, EstimateKind::historical}},
                                  {0.00, -0.03, {0.002, 1.1, -0.001, EstimateKind::target}}};
  const double e1 = 0.05 - (1.5 * 0.02 + 0.01 + 0.002);
  const double e2 = -0.01 - (0.9 * 0.01 + 0.0);
  const double e3 = 0.00 - (1.1 * -0.03 + 0.002 - 0.001);
  EXPECT_NEAR(prediction_error(three), (e1 * e1 + e2 * e2 + e3 * e3) / 3.0, 1e-18);
  EXPECT_THROW(prediction_error(std::vector<PeItem>{}), EmptyInputError);
}

}  // namespace
}  // namespace itrack
