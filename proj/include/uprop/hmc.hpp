#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"
#include "uprop/family.hpp"
#include "uprop/rng.hpp"

namespace uprop {

struct HmcConfig {
  int n_chains = 4;
  int n_warmup = 1000;
  int n_sampling = 1000;
  double target_accept = 0.8;
  int max_leapfrog = 32;  // steps per iteration jittered on [1, max_leapfrog]
  double init_step = 0.1;
  // Each chain starts from the best of this many uniform(-2,2) candidates,
  // which keeps chains out of negligible-mass local basins. Always evaluated
  // in full so the cost per run stays config-determined.
  int n_init_tries = 32;
  std::uint64_t seed = 1;

  Index draws_per_run() const {
    return static_cast<Index>(n_chains) * static_cast<Index>(n_sampling);
  }
};

struct HmcDiagnostics {
  Index divergences = 0;  // sampling phase
  double mean_accept = 0.0;
  double step_size = 0.0;
  Vector split_rhat;
  Vector ess;
};

struct HmcResult {
  DrawMatrix unconstrained;  // n_chains * n_sampling rows, chain-major
  DrawMatrix constrained;
  EvalCounters counters;
  HmcDiagnostics diagnostics;
};

using GradFn = std::function<Vector(const Vector&)>;

/// Leapfrog integration of Hamiltonian dynamics for -logp; `grad` returns the
/// gradient of logp. Calls `grad` exactly `steps` times.
inline void leapfrog(Vector& q, Vector& p, Vector& g, const GradFn& grad,
                     double eps, int steps, const Vector& inv_mass) {
  p += 0.5 * eps * g;
  for (int l = 0; l < steps; ++l) {
    q += eps * inv_mass.cwiseProduct(p);
    g = grad(q);
    p += (l + 1 < steps ? eps : 0.5 * eps) * g;
  }
}

namespace detail {

/// Nesterov dual averaging of log step size (Hoffman & Gelman defaults).
class DualAverage {
 public:
  void reset(double eps) {
    mu_ = std::log(10.0 * eps);
    log_eps_ = std::log(eps);
    log_eps_bar_ = std::log(eps);
    h_bar_ = 0.0;
    t_ = 0;
  }
  void update(double accept_stat, double target) {
    ++t_;
    const double frac = 1.0 / (t_ + 10.0);
    h_bar_ = (1.0 - frac) * h_bar_ + frac * (target - accept_stat);
    log_eps_ = mu_ - std::sqrt(static_cast<double>(t_)) / 0.05 * h_bar_;
    const double w = std::pow(static_cast<double>(t_), -0.75);
    log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
  }
  double eps() const { return std::exp(log_eps_); }
  double eps_bar() const { return std::exp(log_eps_bar_); }

 private:
  double mu_ = 0.0, log_eps_ = 0.0, log_eps_bar_ = 0.0, h_bar_ = 0.0;
  long t_ = 0;
};

struct Welford {
  Index n = 0;
  Vector mean, m2;
  void reset(Index d) {
    n = 0;
    mean = Vector::Zero(d);
    m2 = Vector::Zero(d);
  }
  void add(const Vector& x) {
    ++n;
    const Vector delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(x - mean);
  }
  Vector variance() const { return m2 / std::max<double>(1.0, n - 1.0); }
};

inline Vector split_rhat(const std::vector<DrawMatrix>& chains) {
  const Index d = chains.front().cols();
  const Index half = chains.front().rows() / 2;
  Vector out(d);
  for (Index j = 0; j < d; ++j) {
    std::vector<double> means, vars;
    for (const auto& c : chains) {
      for (int part = 0; part < 2; ++part) {
        const auto seg = c.col(j).segment(part * half, half);
        const double mu = seg.mean();
        means.push_back(mu);
        vars.push_back((seg.array() - mu).square().sum() / std::max<double>(1.0, half - 1.0));
      }
    }
    const double n_seq = static_cast<double>(means.size());
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= n_seq;
    double b = 0.0;
    for (double m : means) b += (m - grand) * (m - grand);
    b *= half / (n_seq - 1.0);
    double w = 0.0;
    for (double v : vars) w += v;
    w /= n_seq;
    const double var_plus = (half - 1.0) / half * w + b / half;
    out[j] = (w > 0.0) ? std::sqrt(var_plus / w) : 1.0;
  }
  return out;
}

/// Effective sample size via Geyer's initial monotone sequence, per dimension.
inline Vector effective_sample_size(const std::vector<DrawMatrix>& chains) {
  const Index d = chains.front().cols();
  const Index n = chains.front().rows();
  const double n_chains = static_cast<double>(chains.size());
  Vector out(d);
  for (Index j = 0; j < d; ++j) {
    std::vector<Vector> centered;
    double w = 0.0, b = 0.0, grand = 0.0;
    std::vector<double> mu(chains.size());
    for (size_t c = 0; c < chains.size(); ++c) {
      mu[c] = chains[c].col(j).mean();
      grand += mu[c];
    }
    grand /= n_chains;
    for (size_t c = 0; c < chains.size(); ++c) {
      centered.push_back(chains[c].col(j).array() - mu[c]);
      w += centered.back().squaredNorm() / std::max<double>(1.0, n - 1.0);
      b += (mu[c] - grand) * (mu[c] - grand);
    }
    w /= n_chains;
    b = chains.size() > 1 ? b * n / (n_chains - 1.0) : 0.0;
    const double var_plus = (n - 1.0) / n * w + b / n;
    if (!(var_plus > 0.0)) {
      out[j] = static_cast<double>(n) * n_chains;
      continue;
    }
    auto acov = [&](Index t) {
      double acc = 0.0;
      for (const auto& cc : centered)
        acc += cc.head(n - t).dot(cc.tail(n - t)) / static_cast<double>(n);
      return acc / n_chains;
    };
    double rho_sum = 0.0;
    double prev_pair = kPosInf;
    for (Index t = 1; t + 1 < n; t += 2) {
      const double rho_a = 1.0 - (w - acov(t)) / var_plus;
      const double rho_b = 1.0 - (w - acov(t + 1)) / var_plus;
      double pair = rho_a + rho_b;
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair);
      prev_pair = pair;
      rho_sum += pair;
    }
    const double tau = 1.0 + 2.0 * rho_sum;
    out[j] = n * n_chains / std::max(tau, 1e-12);
  }
  return out;
}

}  // namespace detail

/// Hamiltonian Monte Carlo with jittered trajectory lengths, dual-averaged
/// step size and diagonal mass adaptation. Trajectory lengths come from a
/// stream keyed only by (chain, iteration), so every run under the same
/// config performs exactly the same number of gradient evaluations.
inline HmcResult hmc_sample(const TargetFamily& family, Index target,
                            const HmcConfig& cfg) {
  if (cfg.n_sampling < 1) throw UsageError("hmc_sample: n_sampling must be >= 1");
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0))
    throw UsageError("hmc_sample: target_accept must lie in (0,1)");

  const Index d = family.dim();
  const EvalCounters before = family.counters();

  auto grad = [&](const Vector& q) { return family.grad_logp(target, q); };
  auto logp = [&](const Vector& q) { return family.logp(target, q); };

  std::vector<DrawMatrix> chains;
  Index divergences = 0;
  double accept_acc = 0.0;
  long accept_n = 0;
  double last_eps = cfg.init_step;

  // Mass adaptation windows (Stan-style expanding schedule).
  const int init_buffer = std::min(75, cfg.n_warmup / 3);
  const int term_buffer = std::min(50, cfg.n_warmup / 3);
  const bool adapt_mass = cfg.n_warmup - init_buffer - term_buffer >= 25;

  for (int chain = 0; chain < cfg.n_chains; ++chain) {
    CounterRng rng = CounterRng(cfg.seed).fork(0xC4A1Dull + static_cast<std::uint64_t>(chain));
    CounterRng jitter = CounterRng(0x7261A3C70ull).fork(static_cast<std::uint64_t>(chain));

    Vector q(d);
    double lp = -std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < std::max(1, cfg.n_init_tries); ++attempt) {
      Vector cand(d);
      for (Index j = 0; j < d; ++j) cand[j] = rng.uniform() * 4.0 - 2.0;
      const double cand_lp = logp(cand);
      if (attempt == 0 || cand_lp > lp) {
        q = cand;
        lp = cand_lp;
      }
    }
    Vector g = grad(q);
    if (!std::isfinite(lp) || !g.allFinite())
      throw SamplerError("hmc_sample: non-finite log density or gradient at initialization");

    Vector inv_mass = Vector::Ones(d);
    detail::DualAverage da;
    da.reset(cfg.init_step);
    detail::Welford wf;
    wf.reset(d);

    int window_size = 25;
    int window_end = adapt_mass ? init_buffer + window_size : -1;
    Index warmup_divergent = 0;

    DrawMatrix sample(cfg.n_sampling, d);
    const int total_iters = cfg.n_warmup + cfg.n_sampling;
    for (int t = 0; t < total_iters; ++t) {
      const bool warming = t < cfg.n_warmup;
      const double eps = warming ? da.eps() : last_eps;
      const int steps = static_cast<int>(jitter.uniform_int(1, cfg.max_leapfrog));

      Vector p(d);
      for (Index j = 0; j < d; ++j) p[j] = rng.normal() / std::sqrt(inv_mass[j]);
      const double h0 = -lp + 0.5 * p.dot(inv_mass.cwiseProduct(p));

      Vector q_new = q;
      Vector g_new = g;
      leapfrog(q_new, p, g_new, grad, eps, steps, inv_mass);
      const double lp_new = logp(q_new);
      const double h1 = -lp_new + 0.5 * p.dot(inv_mass.cwiseProduct(p));

      const double delta_h = h0 - h1;
      const bool divergent = !std::isfinite(delta_h) || delta_h < -1000.0;
      const double alpha = divergent ? 0.0 : std::min(1.0, std::exp(delta_h));
      if (divergent) {
        if (warming) ++warmup_divergent;
        else ++divergences;
      }
      if (!divergent && rng.uniform() < alpha) {
        q = q_new;
        lp = lp_new;
        g = g_new;
      }

      if (warming) {
        da.update(alpha, cfg.target_accept);
        if (adapt_mass && t >= init_buffer && t < cfg.n_warmup - term_buffer) {
          wf.add(q);
          if (t + 1 == window_end) {
            if (wf.n >= 10) {
              const Vector var = wf.variance();
              const double shrink = wf.n / (wf.n + 5.0);
              inv_mass = shrink * var.array() + (1.0 - shrink) * 1e-3;
              da.reset(da.eps());
            }
            wf.reset(d);
            window_size *= 2;
            window_end = std::min(t + 1 + window_size, cfg.n_warmup - term_buffer);
            if (cfg.n_warmup - term_buffer - window_end < window_size)
              window_end = cfg.n_warmup - term_buffer;
          }
        }
        if (t + 1 == cfg.n_warmup) last_eps = da.eps_bar();
      } else {
        sample.row(t - cfg.n_warmup) = q.transpose();
        accept_acc += alpha;
        ++accept_n;
      }
    }
    if (cfg.n_warmup > 0 && warmup_divergent == cfg.n_warmup)
      throw SamplerError("hmc_sample: every warmup iteration diverged");
    chains.push_back(std::move(sample));
  }

  HmcResult res;
  res.unconstrained.resize(cfg.draws_per_run(), d);
  for (int c = 0; c < cfg.n_chains; ++c)
    res.unconstrained.middleRows(static_cast<Index>(c) * cfg.n_sampling, cfg.n_sampling) =
        chains[static_cast<size_t>(c)];
  res.constrained = family.constrain_rows(res.unconstrained);
  res.counters = family.counters() - before;
  res.diagnostics.divergences = divergences;
  res.diagnostics.mean_accept = accept_n > 0 ? accept_acc / accept_n : 0.0;
  res.diagnostics.step_size = last_eps;
  if (cfg.n_sampling >= 4) {
    res.diagnostics.split_rhat = detail::split_rhat(chains);
    res.diagnostics.ess = detail::effective_sample_size(chains);
  }
  return res;
}

}  // namespace uprop
