#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "uprop/dataset.hpp"
#include "uprop/errors.hpp"
#include "uprop/rng.hpp"

namespace uprop {

/// MCAR missingness: ceil(pi * N) rows are chosen uniformly; in each, y is
/// masked together with floor(p/2) uniformly chosen covariates.
inline Dataset inject_missingness(const Dataset& complete, double pi, std::uint64_t seed) {
  if (!(pi > 0.0 && pi < 1.0)) throw UsageError("inject_missingness: pi must lie in (0,1)");
  if (!complete.complete()) throw UsageError("inject_missingness: input has missing cells");
  const Index n = complete.rows();
  const Index p = complete.cols() - 1;
  const Index n_masked = static_cast<Index>(std::ceil(pi * static_cast<double>(n)));
  if (n_masked >= n)
    throw UsageError("inject_missingness: at least one complete row required");

  CounterRng rng(seed);
  std::vector<Index> all(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  for (size_t i = 0; i + 1 < all.size(); ++i) {
    const size_t j = static_cast<size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n) - 1));
    std::swap(all[i], all[j]);
  }

  Dataset out = complete;
  const Index cov_per_row = p / 2;
  for (Index r = 0; r < n_masked; ++r) {
    const Index row = all[static_cast<size_t>(r)];
    out.mask(row, 0) = true;
    out.values(row, 0) = std::numeric_limits<double>::quiet_NaN();
    std::vector<Index> cols(static_cast<size_t>(p));
    for (Index j = 0; j < p; ++j) cols[static_cast<size_t>(j)] = j + 1;
    for (Index c = 0; c < cov_per_row; ++c) {
      const size_t pick = static_cast<size_t>(
          rng.uniform_int(static_cast<std::int64_t>(c), static_cast<std::int64_t>(p) - 1));
      std::swap(cols[static_cast<size_t>(c)], cols[pick]);
      out.mask(row, cols[static_cast<size_t>(c)]) = true;
      out.values(row, cols[static_cast<size_t>(c)]) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

namespace detail {

/// One Bayesian linear regression draw: sample (beta, sigma^2) from the
/// standard conjugate posterior under a flat prior, with a small ridge for
/// numerical safety, then predict the requested rows with fresh noise.
inline void impute_column(Matrix& values, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
                          Index col, CounterRng& rng) {
  const Index n = values.rows();
  const Index p1 = values.cols();
  std::vector<Index> missing_rows;
  for (Index i = 0; i < n; ++i) {
    if (mask(i, col)) missing_rows.push_back(i);
  }
  if (missing_rows.empty()) return;

  Matrix x(n, p1);  // intercept plus all other columns at their current values
  x.col(0).setOnes();
  Index out_j = 1;
  for (Index j = 0; j < p1; ++j) {
    if (j == col) continue;
    x.col(out_j++) = values.col(j);
  }
  Vector y = values.col(col);

  std::vector<Index> obs_rows;
  for (Index i = 0; i < n; ++i) {
    if (!mask(i, col)) obs_rows.push_back(i);
  }
  const Index n_obs = static_cast<Index>(obs_rows.size());
  Matrix x_obs(n_obs, p1);
  Vector y_obs(n_obs);
  for (Index i = 0; i < n_obs; ++i) {
    x_obs.row(i) = x.row(obs_rows[static_cast<size_t>(i)]);
    y_obs[i] = y[obs_rows[static_cast<size_t>(i)]];
  }

  Matrix xtx = x_obs.transpose() * x_obs;
  xtx.diagonal().array() += 1e-6;
  const Eigen::LLT<Matrix> llt(xtx);
  if (llt.info() != Eigen::Success)
    throw ImputationError("chained_impute: singular design matrix");
  const Vector beta_hat = llt.solve(x_obs.transpose() * y_obs);
  const Vector resid = y_obs - x_obs * beta_hat;
  const double dof = std::max<double>(1.0, n_obs - p1);
  const double scale = std::max(resid.squaredNorm(), 1e-12);

  const double sigma2 = scale / rng.chi_squared(dof);
  // beta | sigma2 ~ N(beta_hat, sigma2 (X'X)^-1)
  const Matrix chol_l = Matrix(llt.matrixL());
  Vector z(p1);
  for (Index j = 0; j < p1; ++j) z[j] = rng.normal();
  const Vector beta = beta_hat +
      std::sqrt(sigma2) * chol_l.transpose().triangularView<Eigen::Upper>().solve(z);

  for (Index row : missing_rows)
    values(row, col) = x.row(row).dot(beta) + std::sqrt(sigma2) * rng.normal();
}

}  // namespace detail

/// Simplified chained-equations imputer: masked cells start at a random
/// observed value from their column, then per-variable Bayesian linear
/// regression draws sweep the columns n_sweeps times. Produces m completed
/// datasets from independent streams.
inline std::vector<Dataset> chained_impute(const Dataset& observed, Index m,
                                           Index n_sweeps, std::uint64_t seed) {
  if (m < 1) throw UsageError("chained_impute: m must be >= 1");
  const Index n = observed.rows();
  const Index p1 = observed.cols();

  std::vector<std::vector<Index>> observed_rows(static_cast<size_t>(p1));
  bool any_complete_row = false;
  for (Index i = 0; i < n; ++i) any_complete_row = any_complete_row || !observed.mask.row(i).any();
  for (Index j = 0; j < p1; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (!observed.mask(i, j)) observed_rows[static_cast<size_t>(j)].push_back(i);
    }
    if (observed_rows[static_cast<size_t>(j)].size() < 2)
      throw ImputationError("chained_impute: column " + std::to_string(j) +
                            " has fewer than 2 observed values");
  }
  if (!any_complete_row) throw ImputationError("chained_impute: no complete row");

  std::vector<Index> cols_with_missing;
  for (Index j = 0; j < p1; ++j) {
    if (static_cast<Index>(observed_rows[static_cast<size_t>(j)].size()) < n)
      cols_with_missing.push_back(j);
  }

  std::vector<Dataset> out;
  out.reserve(static_cast<size_t>(m));
  CounterRng master(seed);
  for (Index chain = 0; chain < m; ++chain) {
    CounterRng rng = master.fork(0x1A9u + static_cast<std::uint64_t>(chain));
    Dataset d = observed;
    for (Index j : cols_with_missing) {
      const auto& obs = observed_rows[static_cast<size_t>(j)];
      for (Index i = 0; i < n; ++i) {
        if (d.mask(i, j)) {
          const Index pick = obs[static_cast<size_t>(
              rng.uniform_int(0, static_cast<std::int64_t>(obs.size()) - 1))];
          d.values(i, j) = observed.values(pick, j);
        }
      }
    }
    for (Index sweep = 0; sweep < n_sweeps; ++sweep) {
      for (Index j : cols_with_missing) detail::impute_column(d.values, observed.mask, j, rng);
    }
    d.mask.setConstant(n, p1, false);
    out.push_back(std::move(d));
  }
  return out;
}

/// J* of the shared mask: rows in which two completions of the same observed
/// dataset may differ. Mask-derived, so identical imputations still report it.
inline std::vector<Index> row_diff_index(const Dataset& a, const Dataset& b,
                                         const Dataset& observed) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != observed.rows() ||
      a.cols() != observed.cols())
    throw UsageError("row_diff_index: shape mismatch");
  return observed.rows_with_missing();
}

}  // namespace uprop
