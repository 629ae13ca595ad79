#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "uprop/imputation.hpp"
#include "uprop/models/regression.hpp"

namespace {

using uprop::Dataset;
using uprop::Index;
using uprop::Vector;

Dataset synthetic(Index n, Index p, std::uint64_t seed) {
  return uprop::generate_regression_data(n, p, 0.3, seed).data;
}

TEST(InjectMissingness, StudyProtocolCounts) {
  const Dataset d = synthetic(100, 10, 1);
  const Dataset masked = uprop::inject_missingness(d, 0.15, 7);
  const auto rows = masked.rows_with_missing();
  EXPECT_EQ(rows.size(), 15u);  // ceil(0.15 * 100)
  for (Index r : rows) {
    EXPECT_TRUE(masked.mask(r, 0));  // y always missing
    Index covariates = 0;
    for (Index j = 1; j <= 10; ++j) covariates += masked.mask(r, j) ? 1 : 0;
    EXPECT_EQ(covariates, 5);  // floor(p/2)
  }
  // Unaffected rows untouched.
  for (Index i = 0; i < 100; ++i) {
    if (std::find(rows.begin(), rows.end(), i) == rows.end())
      EXPECT_FALSE(masked.mask.row(i).any());
  }
}

TEST(InjectMissingness, CeilingEdgeCases) {
  const Dataset d = synthetic(50, 4, 2);
  const Dataset one = uprop::inject_missingness(d, 0.01, 3);  // ceil(0.5) = 1
  EXPECT_EQ(one.rows_with_missing().size(), 1u);
  EXPECT_THROW(uprop::inject_missingness(d, 0.999, 3), uprop::UsageError);
  EXPECT_THROW(uprop::inject_missingness(d, 0.0, 3), uprop::UsageError);
}

TEST(ChainedImpute, NoMissingGivesExactCopies) {
  const Dataset d = synthetic(30, 3, 4);
  const auto imputed = uprop::chained_impute(d, 4, 5, 9);
  ASSERT_EQ(imputed.size(), 4u);
  for (const auto& out : imputed) {
    EXPECT_TRUE(out.complete());
    EXPECT_EQ(out.values, d.values);
  }
}

TEST(ChainedImpute, ObservedCellsPreservedAndComplete) {
  const Dataset masked = uprop::inject_missingness(synthetic(60, 6, 5), 0.2, 11);
  const auto imputed = uprop::chained_impute(masked, 5, 10, 13);
  ASSERT_EQ(imputed.size(), 5u);
  for (const auto& out : imputed) {
    EXPECT_TRUE(out.complete());
    for (Index i = 0; i < masked.rows(); ++i)
      for (Index j = 0; j < masked.cols(); ++j) {
        if (!masked.mask(i, j)) EXPECT_EQ(out.values(i, j), masked.values(i, j));
        else EXPECT_TRUE(std::isfinite(out.values(i, j)));
      }
  }
  // Distinct streams produce distinct imputations.
  EXPECT_NE(imputed[0].values, imputed[1].values);
}

TEST(ChainedImpute, DeterministicGivenSeed) {
  const Dataset masked = uprop::inject_missingness(synthetic(40, 4, 6), 0.15, 21);
  const auto a = uprop::chained_impute(masked, 3, 8, 31);
  const auto b = uprop::chained_impute(masked, 3, 8, 31);
  for (size_t k = 0; k < 3; ++k) EXPECT_EQ(a[k].values, b[k].values);
}

TEST(ChainedImpute, PooledMeanMatchesCompleteDataOracle) {
  // MCAR masking of synthetic linear data: the pooled imputation mean of a
  // masked column should sit within 3 pooled standard errors (Rubin's rules)
  // of the complete-data column mean.
  const auto sim = uprop::generate_regression_data(500, 4, 0.3, 77);
  const Dataset complete = sim.data;
  const Dataset masked = uprop::inject_missingness(complete, 0.2, 78);
  const Index m = 30;
  const auto imputed = uprop::chained_impute(masked, m, 10, 79);

  const Index col = 0;  // y is always masked in affected rows
  const double truth = complete.values.col(col).mean();
  Vector means(m);
  Vector withins(m);
  const double n = static_cast<double>(complete.rows());
  for (Index k = 0; k < m; ++k) {
    const auto& v = imputed[static_cast<size_t>(k)].values.col(col);
    means[k] = v.mean();
    withins[k] = (v.array() - means[k]).square().sum() / (n - 1.0) / n;
  }
  const double qbar = means.mean();
  const double w = withins.mean();
  const double b = (means.array() - qbar).square().sum() / (m - 1.0);
  const double total_se = std::sqrt(w + (1.0 + 1.0 / m) * b);
  EXPECT_LT(std::abs(qbar - truth), 3.0 * total_se);
}

TEST(ChainedImpute, RejectsStarvedColumns) {
  Dataset d = synthetic(10, 2, 8);
  for (Index i = 0; i < 9; ++i) {
    d.mask(i, 1) = true;
    d.values(i, 1) = std::numeric_limits<double>::quiet_NaN();
  }
  EXPECT_THROW(uprop::chained_impute(d, 2, 3, 1), uprop::ImputationError);
}

TEST(RowDiffIndex, MaskDerivedContract) {
  Dataset observed = synthetic(20, 3, 9);
  observed.mask(3, 0) = true;
  observed.mask(7, 2) = true;
  const auto imputed = uprop::chained_impute(observed, 2, 5, 3);
  const auto jstar = uprop::row_diff_index(imputed[0], imputed[1], observed);
  EXPECT_EQ(jstar, (std::vector<Index>{3, 7}));
  // Identical completions still report the mask-derived set.
  const auto same = uprop::row_diff_index(imputed[0], imputed[0], observed);
  EXPECT_EQ(same, (std::vector<Index>{3, 7}));
}

TEST(RowDiffIndex, FullColumnMaskCase) {
  Dataset observed = synthetic(40, 5, 10);
  std::set<Index> expect_rows;
  for (Index i = 0; i < 15; ++i) {
    observed.mask(i * 2, 1) = true;
    expect_rows.insert(i * 2);
  }
  const auto jstar = observed.rows_with_missing();
  EXPECT_EQ(std::set<Index>(jstar.begin(), jstar.end()), expect_rows);
  Dataset a = observed, b = observed;
  a.mask.setConstant(40, 6, false);
  b.mask.setConstant(40, 6, false);
  EXPECT_EQ(uprop::row_diff_index(a, b, observed).size(), 15u);
  Dataset wrong = synthetic(41, 5, 11);
  EXPECT_THROW(uprop::row_diff_index(a, wrong, observed), uprop::UsageError);
}

TEST(PointwiseCancellation, FullRatioEqualsRestrictedRatio) {
  // The spec's likelihood-cancellation identity on random imputed pairs:
  // sum_n l_n^(i) - sum_n l_n^(*) == sum_{n in J*} (same) at any theta.
  const Dataset masked = uprop::inject_missingness(synthetic(80, 6, 12), 0.15, 41);
  const auto imputed = uprop::chained_impute(masked, 4, 10, 42);
  const auto prior =
      uprop::default_regression_prior(Vector::LinSpaced(5, -1.0, 1.0),
                                      uprop::PriorKind::kStandard);
  const auto jstar = masked.rows_with_missing();
  uprop::RegressionFamily family(imputed, prior, jstar);

  uprop::CounterRng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Vector theta(family.dim());
    for (Index j = 0; j < family.dim(); ++j) theta[j] = 0.6 * rng.normal();
    const Index i = rep % 4;
    const Index ref = (rep + 1) % 4;
    const double full = family.pointwise_loglik(i, theta).sum() -
                        family.pointwise_loglik(ref, theta).sum();
    double restricted = 0.0;
    const Vector lli = family.pointwise_loglik(i, theta);
    const Vector llr = family.pointwise_loglik(ref, theta);
    for (Index r : jstar) restricted += lli[r] - llr[r];
    EXPECT_NEAR(full, restricted, 1e-10 * std::max(1.0, std::abs(full)));
  }
}

}  // namespace
