#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "uprop/psis.hpp"
#include "uprop/rng.hpp"

namespace {

using uprop::Index;
using uprop::Vector;

// Inverse-CDF generation oracle for GPD(k, sigma): quantiles at (i+0.5)/n.
Vector gpd_grid_sample(Index n, double k, double sigma) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) {
    const double u = (i + 0.5) / static_cast<double>(n);
    x[i] = k == 0.0 ? -sigma * std::log1p(-u)
                    : sigma / k * (std::pow(1.0 - u, -k) - 1.0);
  }
  return x;
}

TEST(GpdFit, RecoversHeavyTailShape) {
  const auto fit = uprop::gpd_fit_tail(gpd_grid_sample(100000, 0.5, 1.0));
  EXPECT_NEAR(fit.k_hat, 0.5, 0.02);
  EXPECT_NEAR(fit.sigma_hat, 1.0, 0.05);
}

TEST(GpdFit, RecoversExponentialLimit) {
  const auto fit = uprop::gpd_fit_tail(gpd_grid_sample(100000, 0.0, 1.0));
  EXPECT_NEAR(fit.k_hat, 0.0, 0.02);
}

TEST(GpdFit, RecoversIntermediateShapes) {
  for (double k : {0.25, 0.7, -0.2}) {
    const auto fit = uprop::gpd_fit_tail(gpd_grid_sample(100000, k, 2.0));
    EXPECT_NEAR(fit.k_hat, k, 0.02) << "k=" << k;
  }
}

TEST(GpdFit, ConstantTailIsDegenerate) {
  EXPECT_THROW(uprop::gpd_fit_tail(Vector::Constant(50, 1.25)),
               uprop::DegenerateTailError);
}

TEST(GpdFit, ShortTailIsInsufficient) {
  Vector x(4);
  x << 0.1, 0.2, 0.3, 0.4;
  EXPECT_THROW(uprop::gpd_fit_tail(x), uprop::InsufficientTailError);
}

TEST(KThreshold, PaperValues) {
  EXPECT_DOUBLE_EQ(uprop::k_threshold(4000), 0.7);
  EXPECT_DOUBLE_EQ(uprop::k_threshold(100), 0.5);
  EXPECT_DOUBLE_EQ(uprop::k_threshold(10), 0.5);  // floor
  EXPECT_NEAR(uprop::k_threshold(1000), 1.0 - 1.0 / 3.0, 1e-12);
  EXPECT_THROW(uprop::k_threshold(1), uprop::UsageError);
}

TEST(PsisSmooth, TailLengthFormula) {
  EXPECT_EQ(uprop::psis_tail_length(100), 20);  // floor(min(20, 30))
  EXPECT_EQ(uprop::psis_tail_length(4000), 189);
  uprop::CounterRng rng(3);
  Vector lr(100);
  for (Index i = 0; i < 100; ++i) lr[i] = rng.normal();
  const auto res = uprop::psis_smooth(lr);
  EXPECT_EQ(res.tail_len, 20);
  // Exactly the 20 largest ratios may change.
  std::vector<double> sorted(lr.data(), lr.data() + 100);
  std::sort(sorted.begin(), sorted.end());
  const double cutoff = sorted[100 - 21];
  Index changed = 0;
  for (Index i = 0; i < 100; ++i) {
    if (res.smoothed.log_ratios[i] != lr[i]) {
      ++changed;
      EXPECT_GT(lr[i], cutoff);
    }
  }
  EXPECT_LE(changed, 20);
  EXPECT_GE(changed, 15);
}

TEST(PsisSmooth, ProposalEqualsTargetIsReliableUniform) {
  const auto res = uprop::psis_smooth(Vector::Constant(500, -3.7));
  EXPECT_TRUE(res.reliable);
  EXPECT_EQ(res.k_hat, uprop::kNegInf);
  for (Index i = 0; i < 500; ++i) EXPECT_NEAR(res.smoothed.weights[i], 1.0 / 500, 1e-15);
}

TEST(PsisSmooth, WellMatchedGaussianPairIsReliable) {
  // Proposal N(0,1), target N(0.5,1): all ratio moments finite.
  uprop::CounterRng rng(41);
  const Index s = 4000;
  Vector lr(s);
  for (Index i = 0; i < s; ++i) {
    const double x = rng.normal();
    lr[i] = -0.5 * (x - 0.5) * (x - 0.5) + 0.5 * x * x;
  }
  const auto res = uprop::psis_smooth(lr);
  EXPECT_TRUE(res.reliable);
  EXPECT_LT(res.k_hat, 0.7);
  EXPECT_NEAR(res.smoothed.weights.sum(), 1.0, 1e-12);
}

TEST(PsisSmooth, HeavyTailScenarioIsUnreliable) {
  // Proposal N(0,1), target N(0,3^2): importance ratios have infinite variance.
  uprop::CounterRng rng(42);
  const Index s = 4000;
  Vector lr(s);
  for (Index i = 0; i < s; ++i) {
    const double x = rng.normal();
    lr[i] = -0.5 * x * x / 9.0 - std::log(3.0) + 0.5 * x * x;
  }
  const auto res = uprop::psis_smooth(lr);
  EXPECT_FALSE(res.reliable);
  EXPECT_GT(res.k_hat, 0.7);
}

TEST(PsisSmooth, OrderPreservingAndCapped) {
  uprop::CounterRng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Index s = 200 + 40 * rep;
    Vector lr(s);
    for (Index i = 0; i < s; ++i) lr[i] = 2.5 * rng.normal();
    const auto res = uprop::psis_smooth(lr);
    EXPECT_NEAR(res.smoothed.weights.sum(), 1.0, 1e-12);
    EXPECT_LE(res.smoothed.log_ratios.maxCoeff(), lr.maxCoeff() + 1e-12);
    // Rank order of weights matches rank order of the raw ratios (weak).
    std::vector<Index> order(static_cast<size_t>(s));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return lr[a] < lr[b]; });
    for (size_t i = 0; i + 1 < order.size(); ++i)
      EXPECT_LE(res.smoothed.weights[order[i]], res.smoothed.weights[order[i + 1]] + 1e-15);
  }
}

TEST(PsisSmooth, TinySampleFallsBackUnsmoothed) {
  uprop::CounterRng rng(8);
  Vector lr(10);
  for (Index i = 0; i < 10; ++i) lr[i] = rng.normal();
  const auto res = uprop::psis_smooth(lr);  // M = 2 < 5: no fit possible
  EXPECT_FALSE(res.reliable);
  EXPECT_EQ(res.k_hat, uprop::kPosInf);
  EXPECT_NEAR(res.smoothed.weights.sum(), 1.0, 1e-12);
}

}  // namespace
