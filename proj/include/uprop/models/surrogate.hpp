#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uprop/errors.hpp"
#include "uprop/family.hpp"
#include "uprop/rng.hpp"

namespace uprop {

/// The true simulator: 2 / (1 + exp(-10 theta)) - 1.
inline double simulator(double theta) {
  return 2.0 / (1.0 + std::exp(-10.0 * theta)) - 1.0;
}

/// Logistic surrogate tau1 / (1 + exp(-tau2 (theta - tau3))) + tau4. The
/// simulator itself is recovered at tau = [2, 10, 0, -1].
inline double logistic_surrogate(double theta, const Eigen::Vector4d& tau) {
  if (tau[1] == 0.0) throw UsageError("logistic_surrogate: tau2 must be nonzero");
  return tau[0] / (1.0 + std::exp(-tau[1] * (theta - tau[2]))) + tau[3];
}

/// Legendre polynomials psi_0..psi_d at theta via the three-term recurrence.
inline Vector legendre_basis(double theta, int degree) {
  if (degree < 0) throw UsageError("legendre_basis: degree must be >= 0");
  if (std::abs(theta) > 1.0) throw UsageError("legendre_basis: theta outside [-1, 1]");
  Vector psi(degree + 1);
  psi[0] = 1.0;
  if (degree >= 1) psi[1] = theta;
  for (int k = 1; k < degree; ++k)
    psi[k + 1] = ((2.0 * k + 1.0) * theta * psi[k] - k * psi[k - 1]) / (k + 1.0);
  return psi;
}

/// Derivatives psi_0'..psi_d' using P'_{n+1} = P'_{n-1} + (2n+1) P_n.
inline Vector legendre_basis_deriv(double theta, int degree) {
  const Vector psi = legendre_basis(theta, degree);
  Vector dpsi(degree + 1);
  dpsi[0] = 0.0;
  if (degree >= 1) dpsi[1] = 1.0;
  for (int k = 1; k < degree; ++k)
    dpsi[k + 1] = dpsi[k - 1] + (2.0 * k + 1.0) * psi[k];
  return dpsi;
}

struct SurrogateSpec {
  enum class Kind { kLogistic, kPce };
  Kind kind = Kind::kLogistic;
  int degree = 5;       // PCE only
  double noise = 0.01;  // observation noise sigma in the training step

  Index num_params() const {
    return kind == Kind::kLogistic ? 4 : static_cast<Index>(degree) + 1;
  }
};

/// Surrogate response and its derivative with respect to theta.
inline double surrogate_value(const SurrogateSpec& spec, double theta,
                              const Vector& tau) {
  if (spec.kind == SurrogateSpec::Kind::kLogistic)
    return logistic_surrogate(theta, Eigen::Vector4d(tau[0], tau[1], tau[2], tau[3]));
  return legendre_basis(theta, spec.degree).dot(tau);
}

inline double surrogate_dtheta(const SurrogateSpec& spec, double theta,
                               const Vector& tau) {
  if (spec.kind == SurrogateSpec::Kind::kLogistic) {
    const double s = 1.0 / (1.0 + std::exp(-tau[1] * (theta - tau[2])));
    return tau[0] * tau[1] * s * (1.0 - s);
  }
  return legendre_basis_deriv(theta, spec.degree).dot(tau);
}

struct TrainingData {
  Vector inputs;   // theta_T
  Vector outputs;  // y_T
};

/// N_T equally spaced inputs on [-1, 1]; outputs are noisy simulator values.
inline TrainingData make_training_data(Index n_t, double noise, std::uint64_t seed) {
  TrainingData d;
  d.inputs.resize(n_t);
  d.outputs.resize(n_t);
  CounterRng rng(seed);
  for (Index i = 0; i < n_t; ++i) {
    d.inputs[i] = n_t == 1 ? 0.0 : -1.0 + 2.0 * i / static_cast<double>(n_t - 1);
    d.outputs[i] = simulator(d.inputs[i]) + noise * rng.normal();
  }
  return d;
}

/// Posterior over surrogate parameters tau given training runs, with fixed
/// observation noise and independent normal priors.
class SurrogateTrainingFamily : public TargetFamily {
 public:
  SurrogateTrainingFamily(TrainingData data, SurrogateSpec spec, Vector prior_mean,
                          Vector prior_sd)
      : data_(std::move(data)),
        spec_(spec),
        prior_mean_(std::move(prior_mean)),
        prior_sd_(std::move(prior_sd)) {
    if (prior_mean_.size() != spec_.num_params() || prior_sd_.size() != spec_.num_params())
      throw UsageError("SurrogateTrainingFamily: prior size mismatch");
  }

  /// Study defaults: logistic priors centered at the true values, PCE
  /// coefficients N(0, 5).
  static SurrogateTrainingFamily with_default_priors(TrainingData data,
                                                     SurrogateSpec spec) {
    if (spec.kind == SurrogateSpec::Kind::kLogistic) {
      Vector mean(4), sd(4);
      mean << 2.0, 10.0, 0.0, -1.0;
      sd << 1.0, 10.0, 1.0, 1.0;
      return SurrogateTrainingFamily(std::move(data), spec, mean, sd);
    }
    const Index k = spec.num_params();
    return SurrogateTrainingFamily(std::move(data), spec, Vector::Zero(k),
                                   Vector::Constant(k, 5.0));
  }

  Index num_targets() const override { return 1; }
  Index dim() const override { return spec_.num_params(); }
  Index num_obs() const override { return data_.inputs.size(); }

  std::vector<std::string> param_names() const override {
    std::vector<std::string> names;
    for (Index j = 0; j < dim(); ++j) names.push_back("tau" + std::to_string(j + 1));
    return names;
  }

  double logp(Index, const Vector& tau) const override {
    count_logp();
    return loglik_sum(tau) + log_prior(tau);
  }

  Vector pointwise_loglik(Index, const Vector& tau) const override {
    count_pointwise(num_obs());
    Vector out(num_obs());
    const double inv_var = 1.0 / (spec_.noise * spec_.noise);
    for (Index i = 0; i < num_obs(); ++i) {
      const double r = data_.outputs[i] - surrogate_value(spec_, data_.inputs[i], tau);
      out[i] = -0.5 * std::log(2.0 * M_PI) - std::log(spec_.noise) - 0.5 * inv_var * r * r;
    }
    return out;
  }

  double log_prior(const Vector& tau) const override {
    double lp = 0.0;
    for (Index j = 0; j < dim(); ++j) {
      const double z = (tau[j] - prior_mean_[j]) / prior_sd_[j];
      lp += -0.5 * std::log(2.0 * M_PI) - std::log(prior_sd_[j]) - 0.5 * z * z;
    }
    return lp;
  }

  Vector grad_logp(Index, const Vector& tau) const override {
    count_grad();
    const double inv_var = 1.0 / (spec_.noise * spec_.noise);
    Vector g = Vector::Zero(dim());
    for (Index i = 0; i < num_obs(); ++i) {
      const double theta = data_.inputs[i];
      const double r = data_.outputs[i] - surrogate_value(spec_, theta, tau);
      g += inv_var * r * surrogate_dtau(theta, tau);
    }
    g.array() -= (tau - prior_mean_).array() / prior_sd_.array().square();
    return g;
  }

 private:
  Vector surrogate_dtau(double theta, const Vector& tau) const {
    if (spec_.kind == SurrogateSpec::Kind::kPce)
      return legendre_basis(theta, spec_.degree);
    Vector g(4);
    const double s = 1.0 / (1.0 + std::exp(-tau[1] * (theta - tau[2])));
    g[0] = s;
    g[1] = tau[0] * s * (1.0 - s) * (theta - tau[2]);
    g[2] = -tau[0] * s * (1.0 - s) * tau[1];
    g[3] = 1.0;
    return g;
  }

  double loglik_sum(const Vector& tau) const {
    double acc = 0.0;
    const double inv_var = 1.0 / (spec_.noise * spec_.noise);
    for (Index i = 0; i < num_obs(); ++i) {
      const double r = data_.outputs[i] - surrogate_value(spec_, data_.inputs[i], tau);
      acc += -0.5 * std::log(2.0 * M_PI) - std::log(spec_.noise) - 0.5 * inv_var * r * r;
    }
    return acc;
  }

  TrainingData data_;
  SurrogateSpec spec_;
  Vector prior_mean_, prior_sd_;
};

/// Second-step posteriors p(theta_I, sigma | tau_i, D_I), one target per
/// surrogate parameter draw. theta_I carries a truncated-normal prior on
/// [-1, 1] and sigma a uniform prior on (0, 0.05); both are handled on the
/// unconstrained scale through scaled-logit transforms with their Jacobians.
class SurrogateInferenceFamily : public TargetFamily {
 public:
  SurrogateInferenceFamily(DrawMatrix taus, Vector observations, SurrogateSpec spec)
      : taus_(std::move(taus)), y_(std::move(observations)), spec_(spec) {
    if (taus_.cols() != spec_.num_params())
      throw UsageError("SurrogateInferenceFamily: tau dimension mismatch");
    if (y_.size() < 1) throw UsageError("SurrogateInferenceFamily: empty observations");
  }

  static constexpr double kThetaPriorSd = 0.5;
  static constexpr double kSigmaUpper = 0.05;

  Index num_targets() const override { return taus_.rows(); }
  Index dim() const override { return 2; }
  Index num_obs() const override { return y_.size(); }

  std::vector<std::string> param_names() const override { return {"theta_I", "sigma"}; }

  double logp(Index i, const Vector& x) const override {
    count_logp();
    return loglik_sum(i, x) + log_prior(x);
  }

  Vector pointwise_loglik(Index i, const Vector& x) const override {
    count_pointwise(num_obs());
    const double theta = constrain_theta(x[0]);
    const double sigma = constrain_sigma(x[1]);
    const double f = surrogate_value(spec_, theta, taus_.row(i).transpose());
    return (-0.5 * std::log(2.0 * M_PI) - std::log(sigma) -
            0.5 * (y_.array() - f).square() / (sigma * sigma))
        .matrix();
  }

  double log_prior(const Vector& x) const override {
    const double theta = constrain_theta(x[0]);
    const double s0 = sigmoid(x[0]);
    const double s1 = sigmoid(x[1]);
    // truncated normal up to its (constant) normalization
    double lp = -0.5 * theta * theta / (kThetaPriorSd * kThetaPriorSd);
    lp += std::log(2.0) + std::log(s0) + std::log1p(-s0);          // d theta / d x0
    lp += std::log(kSigmaUpper) + std::log(s1) + std::log1p(-s1);  // uniform + Jacobian
    return lp;
  }

  Vector grad_logp(Index i, const Vector& x) const override {
    count_grad();
    const double s0 = sigmoid(x[0]);
    const double s1 = sigmoid(x[1]);
    const double theta = -1.0 + 2.0 * s0;
    const double sigma = kSigmaUpper * s1;
    const double dtheta_dx = 2.0 * s0 * (1.0 - s0);
    const double dsigma_dx = kSigmaUpper * s1 * (1.0 - s1);

    const Vector tau = taus_.row(i).transpose();
    const double f = surrogate_value(spec_, theta, tau);
    const double df = surrogate_dtheta(spec_, theta, tau);
    const Vector r = y_.array() - f;
    const double inv_var = 1.0 / (sigma * sigma);

    double g_theta = inv_var * r.sum() * df;
    g_theta += -theta / (kThetaPriorSd * kThetaPriorSd);
    double g_sigma = inv_var * r.squaredNorm() / sigma - num_obs() / sigma;

    Vector g(2);
    g[0] = g_theta * dtheta_dx + (1.0 - 2.0 * s0);
    g[1] = g_sigma * dsigma_dx + (1.0 - 2.0 * s1);
    return g;
  }

  Vector constrain(const Vector& x) const override {
    Vector out(2);
    out[0] = constrain_theta(x[0]);
    out[1] = constrain_sigma(x[1]);
    return out;
  }

  Vector loglik_sum_batch(Index i, const DrawMatrix& draws,
                          const std::vector<Index>* rows) const override {
    const Index terms = rows ? static_cast<Index>(rows->size()) : num_obs();
    count_pointwise(draws.rows() * terms);
    Vector out(draws.rows());
    const Vector tau = taus_.row(i).transpose();
    for (Index s = 0; s < draws.rows(); ++s) {
      const double theta = constrain_theta(draws(s, 0));
      const double sigma = constrain_sigma(draws(s, 1));
      const double f = surrogate_value(spec_, theta, tau);
      const double base = -0.5 * std::log(2.0 * M_PI) - std::log(sigma);
      double acc = 0.0;
      if (rows == nullptr) {
        acc = num_obs() * base -
              0.5 * (y_.array() - f).square().sum() / (sigma * sigma);
      } else {
        for (Index rr : *rows) {
          const double r = y_[rr] - f;
          acc += base - 0.5 * r * r / (sigma * sigma);
        }
      }
      out[s] = acc;
    }
    return out;
  }

  Vector logp_batch(Index i, const DrawMatrix& draws) const override {
    count_logp(draws.rows());
    Vector out(draws.rows());
    for (Index s = 0; s < draws.rows(); ++s) {
      const Vector x = draws.row(s).transpose();
      out[s] = loglik_sum(i, x) + log_prior(x);
    }
    return out;
  }

  /// Prior draw on the unconstrained scale (used by selection strategies).
  Vector sample_prior_unconstrained(CounterRng& rng) const {
    double theta;
    do {
      theta = kThetaPriorSd * rng.normal();
    } while (std::abs(theta) >= 1.0);
    const double sigma = kSigmaUpper * rng.uniform();
    Vector x(2);
    x[0] = unconstrain_interval((theta + 1.0) / 2.0);
    x[1] = unconstrain_interval(sigma / kSigmaUpper);
    return x;
  }

  const DrawMatrix& taus() const { return taus_; }
  const SurrogateSpec& spec() const { return spec_; }
  const Vector& observations() const { return y_; }

 private:
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
  static double unconstrain_interval(double u) { return std::log(u / (1.0 - u)); }
  static double constrain_theta(double x) { return -1.0 + 2.0 * sigmoid(x); }
  static double constrain_sigma(double x) { return kSigmaUpper * sigmoid(x); }

  double loglik_sum(Index i, const Vector& x) const {
    const double theta = constrain_theta(x[0]);
    const double sigma = constrain_sigma(x[1]);
    const double f = surrogate_value(spec_, theta, taus_.row(i).transpose());
    return num_obs() * (-0.5 * std::log(2.0 * M_PI) - std::log(sigma)) -
           0.5 * (y_.array() - f).square().sum() / (sigma * sigma);
  }

  DrawMatrix taus_;
  Vector y_;
  SurrogateSpec spec_;
};

/// N_I noisy simulator observations at the true input theta_star.
inline Vector make_inference_data(Index n_i, double theta_star, double noise,
                                  std::uint64_t seed) {
  Vector y(n_i);
  CounterRng rng(seed);
  for (Index i = 0; i < n_i; ++i) y[i] = simulator(theta_star) + noise * rng.normal();
  return y;
}

}  // namespace uprop
