#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "uprop/errors.hpp"
#include "uprop/rng.hpp"

namespace uprop {

/// One posterior draw per row: S x d.
using DrawMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// log(sum(exp(xs))) with max-shift; never overflows for finite input.
inline double log_sum_exp(const Eigen::Ref<const Vector>& xs) {
  if (xs.size() == 0) throw UsageError("log_sum_exp: empty input");
  const double m = xs.maxCoeff();
  if (m == kNegInf) return kNegInf;
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (Index i = 0; i < xs.size(); ++i) {
    if (xs[i] != kNegInf) acc += std::exp(xs[i] - m);
  }
  return m + std::log(acc);
}

/// Log importance ratios together with their self-normalized weights.
struct LogWeights {
  Vector log_ratios;
  Vector weights;

  Index size() const { return weights.size(); }
};

/// Normalize log ratios into weights summing to one. Weights that would fall
/// below 1e-300 are clamped to zero to avoid subnormal drag.
inline LogWeights normalize_log_weights(const Eigen::Ref<const Vector>& log_ratios) {
  if (log_ratios.size() == 0) throw UsageError("normalize_log_weights: empty input");
  const double lse = log_sum_exp(log_ratios);
  if (lse == kNegInf)
    throw DegenerateWeightsError("normalize_log_weights: all ratios are -inf");
  LogWeights out;
  out.log_ratios = log_ratios;
  out.weights = (log_ratios.array() - lse).exp();
  for (Index i = 0; i < out.weights.size(); ++i) {
    if (out.weights[i] < 1e-300) out.weights[i] = 0.0;
  }
  const double total = out.weights.sum();
  if (!(total > 0.0))
    throw DegenerateWeightsError("normalize_log_weights: weights sum to zero");
  out.weights /= total;
  return out;
}

/// Self-normalized importance-sampling estimate of E[h].
inline double importance_expectation(const Eigen::Ref<const Vector>& h_values,
                                     const LogWeights& w) {
  if (h_values.size() != w.size())
    throw UsageError("importance_expectation: length mismatch");
  return h_values.dot(w.weights);
}

/// Multinomial importance resampling with replacement; i.i.d. rows given seed.
inline DrawMatrix resample(const DrawMatrix& draws, const LogWeights& w,
                           Index n_out, std::uint64_t seed) {
  if (draws.rows() != w.size()) throw UsageError("resample: draws/weights mismatch");
  if (n_out < 1) throw UsageError("resample: n_out must be >= 1");
  const double total = w.weights.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw DegenerateWeightsError("resample: degenerate weights");

  Vector cum(w.size());
  double acc = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    acc += w.weights[i];
    cum[i] = acc;
  }
  cum[w.size() - 1] = std::max(cum[w.size() - 1], 1.0);  // guard rounding

  CounterRng rng(seed);
  DrawMatrix out(n_out, draws.cols());
  for (Index k = 0; k < n_out; ++k) {
    const double u = rng.uniform() * total;
    const double* begin = cum.data();
    const double* pos = std::upper_bound(begin, begin + w.size(), u);
    Index idx = std::min<Index>(pos - begin, w.size() - 1);
    out.row(k) = draws.row(idx);
  }
  return out;
}

/// Importance-weighted mean, sum_s w_s theta^(s).
inline Vector weighted_mean(const DrawMatrix& draws, const LogWeights& w) {
  if (draws.rows() != w.size()) throw UsageError("weighted_mean: size mismatch");
  return draws.transpose() * w.weights;
}

/// Importance-weighted covariance about the weighted mean; symmetrized.
inline Matrix weighted_cov(const DrawMatrix& draws, const LogWeights& w) {
  if (draws.rows() != w.size()) throw UsageError("weighted_cov: size mismatch");
  const Vector mu = weighted_mean(draws, w);
  DrawMatrix centered = draws.rowwise() - mu.transpose();
  Matrix cov = centered.transpose() * w.weights.asDiagonal() * centered;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace uprop
