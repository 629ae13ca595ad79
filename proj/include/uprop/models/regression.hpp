#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uprop/dataset.hpp"
#include "uprop/errors.hpp"
#include "uprop/family.hpp"
#include "uprop/rng.hpp"

namespace uprop {

enum class PriorKind { kStandard, kHorseshoe };

/// Prior constants shared by every target in a regression family. The
/// weakly-informative defaults follow the convention Student-t(3, median(y),
/// 2.5 mad(y)) on the intercept and half-Student-t(3, 0, 2.5 mad(y)) on the
/// residual scale; slopes are flat under kStandard.
struct RegressionPrior {
  PriorKind kind = PriorKind::kStandard;
  double intercept_loc = 0.0;
  double intercept_scale = 2.5;
  double sigma_scale = 2.5;
  // Regularized horseshoe hyperparameters.
  double slab_scale = 2.0;
  double slab_df = 4.0;
  double p0_fraction = 0.5;  // expected nonzero fraction, p0 = p * fraction
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mad_of(const std::vector<double>& v) {
  const double med = median_of(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - med));
  return 1.4826 * median_of(dev);
}

inline RegressionPrior default_regression_prior(const Vector& y_reference,
                                                PriorKind kind) {
  std::vector<double> y(y_reference.data(), y_reference.data() + y_reference.size());
  RegressionPrior prior;
  prior.kind = kind;
  prior.intercept_loc = median_of(y);
  const double mad = std::max(mad_of(y), 1e-8);
  prior.intercept_scale = 2.5 * mad;
  prior.sigma_scale = 2.5 * mad;
  return prior;
}

namespace detail {

inline double log_student_t(double x, double nu, double loc, double scale) {
  const double z = (x - loc) / scale;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI) - std::log(scale) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

inline double dlog_student_t(double x, double nu, double loc, double scale) {
  const double z = (x - loc) / scale;
  return -(nu + 1.0) * z / (scale * (nu + z * z));
}

}  // namespace detail

/// Gaussian linear regression y = b0 + X b + eps over m completed datasets.
///
/// Unconstrained parameterization:
///   standard:  [b0, b_1..b_p, log sigma]
///   horseshoe: [b0, z_1..z_p, log lambda_1..p, log tau, log c_raw, log sigma]
/// with b_j = z_j * tau * lambda_tilde_j under the regularized horseshoe.
/// Reported parameters are [b0, b_1..b_p, sigma] in both cases.
class RegressionFamily : public TargetFamily {
 public:
  RegressionFamily(std::vector<Dataset> completed, RegressionPrior prior,
                   std::vector<Index> row_diff = {})
      : prior_(prior), row_diff_(std::move(row_diff)) {
    if (completed.empty()) throw UsageError("RegressionFamily: no datasets");
    n_ = completed.front().rows();
    p_ = completed.front().cols() - 1;
    for (const auto& d : completed) {
      if (!d.complete()) throw UsageError("RegressionFamily: dataset has missing entries");
      if (d.rows() != n_ || d.cols() != p_ + 1)
        throw UsageError("RegressionFamily: shape mismatch across datasets");
      ys_.push_back(d.values.col(0));
      Matrix x(n_, p_ + 1);
      x.col(0).setOnes();
      x.rightCols(p_) = d.values.rightCols(p_);
      xs_.push_back(std::move(x));
    }
  }

  Index num_targets() const override { return static_cast<Index>(ys_.size()); }
  Index dim() const override {
    return prior_.kind == PriorKind::kStandard ? p_ + 2 : 2 * p_ + 4;
  }
  Index num_obs() const override { return n_; }
  Index report_dim() const override { return p_ + 2; }

  std::vector<std::string> param_names() const override {
    std::vector<std::string> names{"b0"};
    for (Index j = 1; j <= p_; ++j) names.push_back("b" + std::to_string(j));
    names.push_back("sigma");
    return names;
  }

  const std::vector<Index>* shared_row_diff() const override {
    return row_diff_.empty() ? nullptr : &row_diff_;
  }

  double logp(Index i, const Vector& theta) const override {
    count_logp();
    return loglik_sum_impl(i, theta, nullptr) + log_prior_impl(theta);
  }

  Vector pointwise_loglik(Index i, const Vector& theta) const override {
    count_pointwise(n_);
    const Vector beta = coefficients(theta);
    const double log_sigma = theta[dim() - 1];
    const double inv_var = std::exp(-2.0 * log_sigma);
    const Vector r = ys_[static_cast<size_t>(i)] - xs_[static_cast<size_t>(i)] * beta;
    return (-0.5 * std::log(2.0 * M_PI) - log_sigma -
            0.5 * inv_var * r.array().square())
        .matrix();
  }

  double log_prior(const Vector& theta) const override { return log_prior_impl(theta); }

  Vector grad_logp(Index i, const Vector& theta) const override {
    count_grad();
    return prior_.kind == PriorKind::kStandard ? grad_standard(i, theta)
                                               : grad_horseshoe(i, theta);
  }

  Vector constrain(const Vector& theta) const override {
    Vector out(p_ + 2);
    out.head(p_ + 1) = coefficients(theta);
    out[p_ + 1] = std::exp(theta[dim() - 1]);
    return out;
  }

  Vector logp_batch(Index i, const DrawMatrix& draws) const override {
    count_logp(draws.rows());
    Vector out(draws.rows());
    for (Index s = 0; s < draws.rows(); ++s) {
      const Vector theta = draws.row(s).transpose();
      out[s] = loglik_sum_impl(i, theta, nullptr) + log_prior_impl(theta);
    }
    return out;
  }

  Vector loglik_sum_batch(Index i, const DrawMatrix& draws,
                          const std::vector<Index>* rows) const override {
    const Index terms = rows ? static_cast<Index>(rows->size()) : n_;
    count_pointwise(draws.rows() * terms);
    Vector out(draws.rows());
    for (Index s = 0; s < draws.rows(); ++s)
      out[s] = loglik_sum_impl(i, draws.row(s).transpose(), rows);
    return out;
  }

  const RegressionPrior& prior() const { return prior_; }

 private:
  Vector coefficients(const Vector& theta) const {
    if (prior_.kind == PriorKind::kStandard) return theta.head(p_ + 1);
    Vector beta(p_ + 1);
    beta[0] = theta[0];
    const double tau = std::exp(theta[2 * p_ + 1]);
    const double c2 = prior_.slab_scale * prior_.slab_scale * std::exp(theta[2 * p_ + 2]);
    for (Index j = 1; j <= p_; ++j) {
      const double lam = std::exp(theta[p_ + j]);
      const double lam_tilde =
          lam * std::sqrt(c2 / (c2 + tau * tau * lam * lam));
      beta[j] = theta[j] * tau * lam_tilde;
    }
    return beta;
  }

  double loglik_sum_impl(Index i, const Vector& theta,
                         const std::vector<Index>* rows) const {
    const Vector beta = coefficients(theta);
    const double log_sigma = theta[dim() - 1];
    const double inv_var = std::exp(-2.0 * log_sigma);
    const auto& x = xs_[static_cast<size_t>(i)];
    const auto& y = ys_[static_cast<size_t>(i)];
    const double base = -0.5 * std::log(2.0 * M_PI) - log_sigma;
    double acc = 0.0;
    if (rows == nullptr) {
      const Vector r = y - x * beta;
      acc = n_ * base - 0.5 * inv_var * r.squaredNorm();
    } else {
      for (Index rr : *rows) {
        const double r = y[rr] - x.row(rr).dot(beta);
        acc += base - 0.5 * inv_var * r * r;
      }
    }
    return acc;
  }

  double log_prior_impl(const Vector& theta) const {
    const double b0 = theta[0];
    const double log_sigma = theta[dim() - 1];
    const double sigma = std::exp(log_sigma);
    double lp = detail::log_student_t(b0, 3.0, prior_.intercept_loc, prior_.intercept_scale);
    // half-t on sigma plus the log-scale Jacobian
    lp += std::log(2.0) + detail::log_student_t(sigma, 3.0, 0.0, prior_.sigma_scale) +
          log_sigma;
    if (prior_.kind == PriorKind::kStandard) return lp;

    const double ltau = theta[2 * p_ + 1];
    const double tau = std::exp(ltau);
    const double lc = theta[2 * p_ + 2];
    const double c_raw = std::exp(lc);
    const double a = 0.5 * prior_.slab_df;
    const double tau0 = global_scale(sigma);

    for (Index j = 1; j <= p_; ++j) {
      const double z = theta[j];
      const double llam = theta[p_ + j];
      const double lam = std::exp(llam);
      lp += -0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
      lp += std::log(2.0 / M_PI) - std::log1p(lam * lam) + llam;  // half-Cauchy(1)
    }
    const double w = tau / tau0;
    lp += std::log(2.0 / M_PI) - std::log(tau0) - std::log1p(w * w) + ltau;
    lp += a * std::log(a) - std::lgamma(a) - (a + 1.0) * lc - a / c_raw + lc;
    return lp;
  }

  double global_scale(double sigma) const {
    const double p0 = prior_.p0_fraction * static_cast<double>(p_);
    const double ratio = p0 / std::max(1e-12, static_cast<double>(p_) - p0);
    return ratio * sigma / std::sqrt(static_cast<double>(n_));
  }

  Vector grad_standard(Index i, const Vector& theta) const {
    const auto& x = xs_[static_cast<size_t>(i)];
    const auto& y = ys_[static_cast<size_t>(i)];
    const Vector beta = theta.head(p_ + 1);
    const double log_sigma = theta[p_ + 1];
    const double sigma = std::exp(log_sigma);
    const double inv_var = 1.0 / (sigma * sigma);
    const Vector r = y - x * beta;

    Vector g(dim());
    g.head(p_ + 1) = inv_var * (x.transpose() * r);
    g[0] += detail::dlog_student_t(beta[0], 3.0, prior_.intercept_loc, prior_.intercept_scale);
    const double s2 = prior_.sigma_scale * prior_.sigma_scale;
    g[p_ + 1] = -static_cast<double>(n_) + inv_var * r.squaredNorm() + 1.0 -
                4.0 * sigma * sigma / (3.0 * s2 + sigma * sigma);
    return g;
  }

  Vector grad_horseshoe(Index i, const Vector& theta) const {
    const auto& x = xs_[static_cast<size_t>(i)];
    const auto& y = ys_[static_cast<size_t>(i)];
    const Vector beta = coefficients(theta);
    const double log_sigma = theta[2 * p_ + 3];
    const double sigma = std::exp(log_sigma);
    const double inv_var = 1.0 / (sigma * sigma);
    const Vector r = y - x * beta;
    const Vector g_beta = inv_var * (x.transpose() * r);

    const double ltau = theta[2 * p_ + 1];
    const double tau = std::exp(ltau);
    const double c2 = prior_.slab_scale * prior_.slab_scale * std::exp(theta[2 * p_ + 2]);
    const double c_raw = std::exp(theta[2 * p_ + 2]);
    const double a = 0.5 * prior_.slab_df;

    Vector g(dim());
    g[0] = g_beta[0] +
           detail::dlog_student_t(beta[0], 3.0, prior_.intercept_loc, prior_.intercept_scale);

    double g_ltau = 0.0, g_lc = 0.0;
    for (Index j = 1; j <= p_; ++j) {
      const double z = theta[j];
      const double lam = std::exp(theta[p_ + j]);
      const double d_j = c2 + tau * tau * lam * lam;
      const double lam_tilde = lam * std::sqrt(c2 / d_j);
      const double shrink = std::pow(c2 / d_j, 1.5);

      g[j] = g_beta[j] * tau * lam_tilde - z;
      g[p_ + j] = g_beta[j] * z * tau * lam * shrink + 1.0 -
                  2.0 * lam * lam / (1.0 + lam * lam);
      g_ltau += g_beta[j] * z * tau * lam * shrink;
      g_lc += g_beta[j] * 0.5 * z * tau * tau * tau * lam * lam * lam *
              std::sqrt(c2) / std::pow(d_j, 1.5);
    }

    const double tau0 = global_scale(sigma);
    const double w2 = (tau / tau0) * (tau / tau0);
    g[2 * p_ + 1] = g_ltau + 1.0 - 2.0 * w2 / (1.0 + w2);
    g[2 * p_ + 2] = g_lc - a + a / c_raw;
    const double s2 = prior_.sigma_scale * prior_.sigma_scale;
    g[2 * p_ + 3] = -static_cast<double>(n_) + inv_var * r.squaredNorm() + 1.0 -
                    4.0 * sigma * sigma / (3.0 * s2 + sigma * sigma) - 1.0 +
                    2.0 * w2 / (1.0 + w2);
    return g;
  }

  RegressionPrior prior_;
  std::vector<Index> row_diff_;
  Index n_ = 0, p_ = 0;
  std::vector<Matrix> xs_;
  std::vector<Vector> ys_;
};

/// Synthetic regression data: correlated covariates (compound-symmetric
/// correlation), scales from Gamma(10, 10), coefficients from N(0, 1) and
/// unit Gaussian noise.
struct SimulatedRegression {
  Dataset data;
  Vector beta;  // [b0, b_1..b_p]
};

inline SimulatedRegression generate_regression_data(Index n, Index p, double corr,
                                                    std::uint64_t seed) {
  if (n < 1 || p < 0) throw UsageError("generate_regression_data: bad shape");
  CounterRng rng(seed);
  Vector beta(p + 1);
  for (Index j = 0; j <= p; ++j) beta[j] = rng.normal();

  Matrix x(n, p);
  if (p > 0) {
    Vector scale(p);
    for (Index j = 0; j < p; ++j) scale[j] = rng.gamma(10.0, 10.0);
    Matrix corr_mat = Matrix::Constant(p, p, corr);
    corr_mat.diagonal().setOnes();
    Eigen::LLT<Matrix> llt(corr_mat);
    if (llt.info() != Eigen::Success)
      throw DegenerateGeometryError("generate_regression_data: invalid correlation");
    const Matrix chol_l = llt.matrixL();
    for (Index i = 0; i < n; ++i) {
      Vector z(p);
      for (Index j = 0; j < p; ++j) z[j] = rng.normal();
      x.row(i) = (scale.asDiagonal() * (chol_l * z)).transpose();
    }
  }

  Matrix values(n, p + 1);
  for (Index i = 0; i < n; ++i) {
    double mu = beta[0];
    if (p > 0) mu += x.row(i).dot(beta.tail(p).transpose());
    values(i, 0) = mu + rng.normal();
    values.row(i).tail(p) = x.row(i);
  }
  SimulatedRegression out;
  out.data = Dataset::from_values(std::move(values));
  out.beta = beta;
  return out;
}

}  // namespace uprop
