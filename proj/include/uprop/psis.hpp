#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"

namespace uprop {

struct GpdFit {
  double k_hat;
  double sigma_hat;
};

/// Generalized Pareto fit to tail excesses (sorted ascending, length >= 5).
/// Profile-likelihood estimator on a data-driven grid with the usual
/// weakly-informative shrinkage of k toward 0.5 (10 pseudo-observations).
inline GpdFit gpd_fit_tail(const Eigen::Ref<const Vector>& excesses) {
  const Index n = excesses.size();
  if (n < 5) throw InsufficientTailError("gpd_fit_tail: need at least 5 tail values");
  for (Index i = 0; i < n; ++i) {
    if (!(excesses[i] >= 0.0)) throw UsageError("gpd_fit_tail: excesses must be nonnegative");
    if (i > 0 && excesses[i] < excesses[i - 1])
      throw UsageError("gpd_fit_tail: excesses must be sorted ascending");
  }
  if (excesses[0] == excesses[n - 1])
    throw DegenerateTailError("gpd_fit_tail: all tail values equal");

  // First-quartile order statistic (1-based floor(n/4 + 0.5)).
  const Index q_idx = static_cast<Index>(std::floor(n / 4.0 + 0.5)) - 1;
  const double xstar = excesses[std::max<Index>(q_idx, 0)];
  const double xmax = excesses[n - 1];
  if (!(xstar > 0.0) || !(xmax > 0.0))
    throw DegenerateTailError("gpd_fit_tail: tail has no positive spread");

  const int grid = 30 + static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  Vector theta(grid), lpost(grid);
  for (int j = 0; j < grid; ++j) {
    theta[j] = 1.0 / xmax + (1.0 - std::sqrt(grid / (j + 0.5))) / (3.0 * xstar);
    double k = 0.0;
    for (Index i = 0; i < n; ++i) k += std::log1p(-theta[j] * excesses[i]);
    k /= static_cast<double>(n);
    // Profile log-likelihood n*(log(-theta/k) - k - 1); invalid thetas drop out.
    const double ratio = -theta[j] / k;
    lpost[j] = (std::isfinite(k) && k != 0.0 && ratio > 0.0)
                   ? n * (std::log(ratio) - k - 1.0)
                   : kNegInf;
  }
  const double lmax = lpost.maxCoeff();
  if (lmax == kNegInf) throw DegenerateTailError("gpd_fit_tail: profile likelihood degenerate");
  double wsum = 0.0, theta_hat = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double wj = std::exp(lpost[j] - lmax);
    wsum += wj;
    theta_hat += wj * theta[j];
  }
  theta_hat /= wsum;

  double k_raw = 0.0;
  for (Index i = 0; i < n; ++i) k_raw += std::log1p(-theta_hat * excesses[i]);
  k_raw /= static_cast<double>(n);
  if (theta_hat == 0.0 || !std::isfinite(k_raw) || k_raw == 0.0)
    throw DegenerateTailError("gpd_fit_tail: estimator collapsed");
  const double sigma = -k_raw / theta_hat;
  if (!(sigma > 0.0)) throw DegenerateTailError("gpd_fit_tail: nonpositive scale");
  const double k_reg = (k_raw * n + 5.0) / (n + 10.0);
  return {k_reg, sigma};
}

/// GPD quantile at probability p for shape k and scale sigma.
inline double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma / k * std::expm1(-k * std::log1p(-p));
}

/// Reliability threshold min(1 - 1/log10(S), 0.7), floored at 0.5.
inline double k_threshold(Index s) {
  if (s < 2) throw UsageError("k_threshold: need S >= 2");
  const double raw = 1.0 - 1.0 / std::log10(static_cast<double>(s));
  return std::max(0.5, std::min(raw, 0.7));
}

/// Tail length M = floor(min(0.2 S, 3 sqrt(S))).
inline Index psis_tail_length(Index s) {
  return static_cast<Index>(
      std::floor(std::min(0.2 * s, 3.0 * std::sqrt(static_cast<double>(s)))));
}

struct PsisResult {
  LogWeights smoothed;
  double k_hat = 0.0;
  Index tail_len = 0;
  bool reliable = false;
};

/// Pareto-smoothed importance weights: the M largest ratios are replaced by
/// GPD quantiles at orders (z-0.5)/M on the raw-ratio scale, capped at the
/// pre-smoothing maximum. A degenerate tail leaves the weights unsmoothed and
/// flags the result unreliable, except for the exact proposal-equals-target
/// case (all ratios equal) which is reliable with uniform weights.
inline PsisResult psis_smooth(const Eigen::Ref<const Vector>& log_ratios) {
  const Index s = log_ratios.size();
  if (s == 0) throw UsageError("psis_smooth: empty input");

  Index n_finite = 0;
  double lo = kPosInf, hi = kNegInf;
  for (Index i = 0; i < s; ++i) {
    if (std::isnan(log_ratios[i])) throw UsageError("psis_smooth: NaN log ratio");
    if (log_ratios[i] != kNegInf) {
      lo = std::min(lo, log_ratios[i]);
      hi = std::max(hi, log_ratios[i]);
      ++n_finite;
    }
  }
  if (n_finite == 0) throw DegenerateWeightsError("psis_smooth: all ratios are -inf");
  // Constant up to floating-point noise means the proposal equals the target.
  const bool all_equal =
      hi - lo <= 1e-10 * std::max({1.0, std::abs(hi), std::abs(lo)});

  PsisResult res;
  res.tail_len = psis_tail_length(s);

  if (all_equal && n_finite == s) {
    // Proposal equals target exactly.
    res.smoothed = normalize_log_weights(log_ratios);
    res.k_hat = kNegInf;
    res.reliable = true;
    return res;
  }
  if (n_finite < res.tail_len + 1)
    throw UsageError("psis_smooth: need at least M+1 finite ratios");

  auto fallback = [&](double k) {
    res.smoothed = normalize_log_weights(log_ratios);
    res.k_hat = k;
    res.reliable = false;
    return res;
  };
  if (res.tail_len < 5) return fallback(kPosInf);

  std::vector<Index> order(static_cast<size_t>(s));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return log_ratios[a] < log_ratios[b]; });

  const Index m = res.tail_len;
  const double max_lr = log_ratios[order.back()];
  const double cutoff_lr = log_ratios[order[static_cast<size_t>(s - m - 1)]];
  const double cutoff = std::exp(cutoff_lr - max_lr);

  Vector excesses(m);
  for (Index z = 0; z < m; ++z) {
    const Index idx = order[static_cast<size_t>(s - m + z)];
    excesses[z] = std::exp(log_ratios[idx] - max_lr) - cutoff;
  }

  GpdFit fit;
  try {
    fit = gpd_fit_tail(excesses);
  } catch (const DegenerateTailError&) {
    return fallback(kPosInf);
  }

  Vector smoothed_lr = log_ratios;
  for (Index z = 0; z < m; ++z) {
    const Index idx = order[static_cast<size_t>(s - m + z)];
    const double p = (z + 0.5) / static_cast<double>(m);
    const double val = std::min(cutoff + gpd_quantile(p, fit.k_hat, fit.sigma_hat), 1.0);
    smoothed_lr[idx] = std::log(val) + max_lr;
  }

  res.smoothed = normalize_log_weights(smoothed_lr);
  res.k_hat = fit.k_hat;
  res.reliable = res.k_hat < k_threshold(s);
  return res;
}

}  // namespace uprop
