#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uprop/core.hpp"

namespace uprop {

/// Evaluation tallies, the cost currency for method comparisons.
/// n_logp counts full unnormalized log-posterior evaluations, n_grad counts
/// gradient evaluations, n_pointwise_loglik counts per-observation likelihood
/// terms evaluated for importance ratios.
struct EvalCounters {
  std::int64_t n_logp = 0;
  std::int64_t n_grad = 0;
  std::int64_t n_pointwise_loglik = 0;

  EvalCounters& operator+=(const EvalCounters& o) {
    n_logp += o.n_logp;
    n_grad += o.n_grad;
    n_pointwise_loglik += o.n_pointwise_loglik;
    return *this;
  }
  friend EvalCounters operator+(EvalCounters a, const EvalCounters& b) { return a += b; }
  friend EvalCounters operator-(EvalCounters a, const EvalCounters& b) {
    a.n_logp -= b.n_logp;
    a.n_grad -= b.n_grad;
    a.n_pointwise_loglik -= b.n_pointwise_loglik;
    return a;
  }
  friend bool operator==(const EvalCounters& a, const EvalCounters& b) {
    return a.n_logp == b.n_logp && a.n_grad == b.n_grad &&
           a.n_pointwise_loglik == b.n_pointwise_loglik;
  }
};

/// An indexed family of unnormalized posterior densities p(theta | tau_i),
/// all sharing one prior. Parameters live on the unconstrained scale; any
/// transform Jacobians are folded into log_prior so that
///   logp(i, theta) = sum(pointwise_loglik(i, theta)) + log_prior(theta).
/// Evaluators tally into counters() as they run.
class TargetFamily {
 public:
  virtual ~TargetFamily() = default;

  virtual Index num_targets() const = 0;
  /// Unconstrained parameter dimension.
  virtual Index dim() const = 0;
  /// Number of pointwise likelihood terms.
  virtual Index num_obs() const = 0;

  virtual double logp(Index i, const Vector& theta) const = 0;
  virtual Vector grad_logp(Index i, const Vector& theta) const = 0;
  virtual Vector pointwise_loglik(Index i, const Vector& theta) const = 0;
  virtual double log_prior(const Vector& theta) const = 0;

  /// Map one unconstrained draw to the reported (constrained) parameters.
  virtual Vector constrain(const Vector& theta) const { return theta; }
  virtual Index report_dim() const { return dim(); }
  virtual std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (Index j = 0; j < report_dim(); ++j) names.push_back("theta[" + std::to_string(j) + "]");
    return names;
  }

  /// Rows on which targets may differ; null when no such structure exists.
  virtual const std::vector<Index>* shared_row_diff() const { return nullptr; }

  /// Full log posterior per draw row. Overrides may vectorize.
  virtual Vector logp_batch(Index i, const DrawMatrix& draws) const {
    Vector out(draws.rows());
    for (Index s = 0; s < draws.rows(); ++s) out[s] = logp(i, draws.row(s).transpose());
    return out;
  }

  /// Sum of pointwise log likelihood over `rows` (all rows when null), per
  /// draw row.
  virtual Vector loglik_sum_batch(Index i, const DrawMatrix& draws,
                                  const std::vector<Index>* rows) const {
    Vector out(draws.rows());
    for (Index s = 0; s < draws.rows(); ++s) {
      const Vector ll = pointwise_loglik(i, draws.row(s).transpose());
      if (rows == nullptr) {
        out[s] = ll.sum();
      } else {
        double acc = 0.0;
        for (Index r : *rows) acc += ll[r];
        out[s] = acc;
      }
    }
    // The default path evaluates every term; correct the tally when only a
    // subset was requested.
    if (rows != nullptr)
      counters_.n_pointwise_loglik -=
          draws.rows() * (num_obs() - static_cast<Index>(rows->size()));
    return out;
  }

  DrawMatrix constrain_rows(const DrawMatrix& draws) const {
    DrawMatrix out(draws.rows(), report_dim());
    for (Index s = 0; s < draws.rows(); ++s)
      out.row(s) = constrain(draws.row(s).transpose()).transpose();
    return out;
  }

  EvalCounters& counters() const { return counters_; }

 protected:
  void count_logp(std::int64_t n = 1) const { counters_.n_logp += n; }
  void count_grad(std::int64_t n = 1) const { counters_.n_grad += n; }
  void count_pointwise(std::int64_t n) const { counters_.n_pointwise_loglik += n; }

 private:
  mutable EvalCounters counters_;
};

}  // namespace uprop
