#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"
#include "uprop/iwmm.hpp"
#include "uprop/rng.hpp"

namespace uprop {

/// Uniform mixture of component posteriors, accessed through pooled draws.
struct MixtureProposal {
  std::vector<Index> component_indices;
  std::vector<DrawMatrix> component_draws;
  Vector log_ml;      // log marginal likelihood per component; NaN until set
  DrawMatrix pooled;  // S_out rows resampled uniformly from the union

  Index num_components() const { return static_cast<Index>(component_draws.size()); }
};

/// Pool >= 2 component draw sets by uniform resampling with replacement.
/// log_ml is left unset.
inline MixtureProposal build_mixture(const std::vector<DrawMatrix>& components,
                                     Index s_out, std::uint64_t seed) {
  if (components.size() < 2)
    throw UsageError("build_mixture: need at least 2 components");
  if (s_out < 1) throw UsageError("build_mixture: s_out must be >= 1");
  const Index d = components.front().cols();
  Index total = 0;
  for (const auto& c : components) {
    if (c.cols() != d) throw UsageError("build_mixture: dimension mismatch");
    total += c.rows();
  }

  MixtureProposal mix;
  mix.component_draws = components;
  for (Index j = 0; j < mix.num_components(); ++j) mix.component_indices.push_back(j);
  mix.log_ml = Vector::Constant(mix.num_components(),
                                std::numeric_limits<double>::quiet_NaN());
  mix.pooled.resize(s_out, d);
  CounterRng rng(seed);
  for (Index k = 0; k < s_out; ++k) {
    Index flat = rng.uniform_int(0, total - 1);
    for (const auto& c : components) {
      if (flat < c.rows()) {
        mix.pooled.row(k) = c.row(flat);
        break;
      }
      flat -= c.rows();
    }
  }
  return mix;
}

/// Iterative optimal-bridge estimate of the log normalizing constant of
/// `unnorm_logp`, given draws from the normalized density. The auxiliary
/// proposal is a Gaussian matched to the first two moments of the draws.
inline double bridge_log_ml(const LogDensityFn& unnorm_logp, const DrawMatrix& draws,
                            Index n_aux, std::uint64_t seed, double tol = 1e-8,
                            int max_iter = 1000) {
  const Index n1 = draws.rows();
  const Index d = draws.cols();
  if (n1 < 2) throw UsageError("bridge_log_ml: need at least 2 draws");
  if (n_aux < n1) throw UsageError("bridge_log_ml: n_aux must be >= number of draws");

  const Vector mu = draws.colwise().mean().transpose();
  const DrawMatrix centered = draws.rowwise() - mu.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n1 - 1);
  cov.diagonal().array() += 1e-10;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw DegenerateGeometryError("bridge_log_ml: singular moment matrix");
  const Matrix chol_l = llt.matrixL();
  const double log_det_half = chol_l.diagonal().array().log().sum();

  auto log_gauss = [&](const DrawMatrix& x) {
    DrawMatrix diff = x.rowwise() - mu.transpose();
    const Matrix solved =
        chol_l.triangularView<Eigen::Lower>().solve(diff.transpose());
    Vector out = -0.5 * solved.colwise().squaredNorm().transpose().array() -
                 0.5 * d * std::log(2.0 * M_PI) - log_det_half;
    return out;
  };

  CounterRng rng(seed);
  DrawMatrix aux(n_aux, d);
  for (Index i = 0; i < n_aux; ++i) {
    Vector z(d);
    for (Index j = 0; j < d; ++j) z[j] = rng.normal();
    aux.row(i) = (mu + chol_l * z).transpose();
  }

  const Vector l1 = unnorm_logp(draws) - log_gauss(draws);  // posterior draws
  const Vector l2 = unnorm_logp(aux) - log_gauss(aux);      // auxiliary draws
  const double ls1 = std::log(static_cast<double>(n1) / (n1 + n_aux));
  const double ls2 = std::log(static_cast<double>(n_aux) / (n1 + n_aux));

  // Fixed point on log r, r = Z-hat (Meng & Wong optimal bridge).
  double log_r = log_sum_exp(l2) - std::log(static_cast<double>(n_aux));
  for (int it = 0; it < max_iter; ++it) {
    Vector num_terms(n_aux), den_terms(n1);
    for (Index j = 0; j < n_aux; ++j) {
      const double den = std::max(ls1 + l2[j], ls2 + log_r) +
                         std::log1p(std::exp(-std::abs(ls1 + l2[j] - ls2 - log_r)));
      num_terms[j] = l2[j] - den;
    }
    for (Index i = 0; i < n1; ++i) {
      const double den = std::max(ls1 + l1[i], ls2 + log_r) +
                         std::log1p(std::exp(-std::abs(ls1 + l1[i] - ls2 - log_r)));
      den_terms[i] = -den;
    }
    const double log_num = log_sum_exp(num_terms) - std::log(static_cast<double>(n_aux));
    const double log_den = log_sum_exp(den_terms) - std::log(static_cast<double>(n1));
    const double next = log_num - log_den;
    const double change = std::abs(next - log_r) / std::max(1.0, std::abs(next));
    log_r = next;
    if (change < tol) return log_r;
  }
  throw ConvergenceError("bridge_log_ml: fixed point did not converge", log_r);
}

/// Per-component full-data log likelihood, one value per draw row. The index
/// passed is the component's target index in the family.
using ComponentLoglikFn = std::function<Vector(Index, const DrawMatrix&)>;

/// Mixture importance ratios with the component log-likelihood cache shared
/// across targets: the denominator log sum_j exp(l_j - log_ml_j) is
/// target-independent and computed once per pooled draw set.
class MixtureRatioCalculator {
 public:
  MixtureRatioCalculator(const MixtureProposal& mix, ComponentLoglikFn loglik)
      : mix_(mix), loglik_(std::move(loglik)) {
    for (Index j = 0; j < mix.num_components(); ++j) {
      if (!std::isfinite(mix.log_ml[j]))
        throw UsageError("mixture ratios: log_ml not set for every component");
    }
    component_ll_.resize(static_cast<size_t>(mix.num_components()));
    for (Index j = 0; j < mix.num_components(); ++j)
      component_ll_[static_cast<size_t>(j)] = loglik_(mix.component_indices[static_cast<size_t>(j)], mix.pooled);

    log_denominator_.resize(mix.pooled.rows());
    Vector terms(mix.num_components());
    for (Index s = 0; s < mix.pooled.rows(); ++s) {
      for (Index j = 0; j < mix.num_components(); ++j)
        terms[j] = component_ll_[static_cast<size_t>(j)][s] - mix.log_ml[j];
      log_denominator_[s] = log_sum_exp(terms);
    }
  }

  /// log r_i at every pooled draw, up to a target-independent constant.
  Vector log_ratios(Index target_index) const {
    for (Index j = 0; j < mix_.num_components(); ++j) {
      if (mix_.component_indices[static_cast<size_t>(j)] == target_index)
        return component_ll_[static_cast<size_t>(j)] - log_denominator_;
    }
    return loglik_(target_index, mix_.pooled) - log_denominator_;
  }

 private:
  const MixtureProposal& mix_;
  ComponentLoglikFn loglik_;
  std::vector<Vector> component_ll_;
  Vector log_denominator_;
};

/// One-shot form of the mixture ratio computation.
inline Vector mixture_log_ratios(Index target_index, const ComponentLoglikFn& loglik,
                                 const MixtureProposal& mix) {
  return MixtureRatioCalculator(mix, loglik).log_ratios(target_index);
}

}  // namespace uprop
