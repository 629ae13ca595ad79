#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uprop/bridge.hpp"
#include "uprop/core.hpp"
#include "uprop/errors.hpp"
#include "uprop/family.hpp"
#include "uprop/hmc.hpp"
#include "uprop/iwmm.hpp"
#include "uprop/psis.hpp"
#include "uprop/selection.hpp"

namespace uprop {

enum class Route { kNone, kMcmcProposal, kPsis, kIwmm };

inline const char* route_name(Route r) {
  switch (r) {
    case Route::kMcmcProposal: return "mcmc_proposal";
    case Route::kPsis: return "psis";
    case Route::kIwmm: return "iwmm";
    default: return "unresolved";
  }
}

struct TargetRecord {
  Route route = Route::kNone;
  double k_hat = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> k_hat_mm;
  Index proposal_iteration = 0;
};

struct PropagationReport {
  std::vector<TargetRecord> targets;
  std::vector<DrawMatrix> target_draws;  // constrained, draws_per_target rows each
  EvalCounters totals;
  EvalCounters phase_hmc, phase_psis, phase_iwmm, phase_bridge, phase_selection;
  Index n_mcmc_runs = 0;
  Index outer_iterations = 0;
  Index iwmm_attempts = 0;
  Index m = 0;
  Index draws_per_target = 0;
  std::vector<std::string> param_names;
  bool completed = true;
  std::string failure;
  std::string method;
  std::string strategy;

  Index count_route(Route r) const {
    Index n = 0;
    for (const auto& t : targets) n += t.route == r ? 1 : 0;
    return n;
  }
};

struct OrchestrationFailure : OrchestrationError {
  OrchestrationFailure(const std::string& what, PropagationReport partial)
      : OrchestrationError(what), partial_report(std::move(partial)) {}
  PropagationReport partial_report;
};

struct OrchestratorLimits {
  Index max_outer = 0;  // 0 means m (worst case degenerates to brute force)
  int iwmm_max_iters = 30;
  bool use_iwmm = true;
};

namespace detail {

constexpr std::uint64_t kStreamHmc = 0xA1;
constexpr std::uint64_t kStreamResample = 0xA2;
constexpr std::uint64_t kStreamPool = 0xA3;
constexpr std::uint64_t kStreamBridge = 0xA4;

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, Index i) {
  CounterRng rng = CounterRng(base).fork(stream + 0x9E37u * static_cast<std::uint64_t>(i));
  return rng.next_u64();
}

inline HmcConfig run_config(const HmcConfig& cfg, Index target) {
  HmcConfig out = cfg;
  out.seed = derive_seed(cfg.seed, kStreamHmc, target);
  return out;
}

class PhaseTally {
 public:
  PhaseTally(const TargetFamily& fam, EvalCounters& sink)
      : fam_(fam), sink_(sink), before_(fam.counters()) {}
  ~PhaseTally() { sink_ += fam_.counters() - before_; }

 private:
  const TargetFamily& fam_;
  EvalCounters& sink_;
  EvalCounters before_;
};

}  // namespace detail

/// Brute-force baseline: one HMC run per target. Seeds per target match the
/// ones the iterative algorithms use for their proposal runs, so a target
/// resolved by MCMC produces identical draws under either driver.
inline PropagationReport run_bruteforce(const TargetFamily& family, const HmcConfig& cfg) {
  PropagationReport report;
  report.m = family.num_targets();
  report.draws_per_target = cfg.draws_per_run();
  report.param_names = family.param_names();
  report.method = "mcmc_bruteforce";
  report.strategy = "none";
  report.targets.resize(static_cast<size_t>(report.m));
  report.target_draws.resize(static_cast<size_t>(report.m));
  const EvalCounters before = family.counters();
  for (Index i = 0; i < report.m; ++i) {
    detail::PhaseTally tally(family, report.phase_hmc);
    const HmcResult res = hmc_sample(family, i, detail::run_config(cfg, i));
    report.target_draws[static_cast<size_t>(i)] = res.constrained;
    auto& rec = report.targets[static_cast<size_t>(i)];
    rec.route = Route::kMcmcProposal;
    rec.proposal_iteration = i + 1;
    ++report.n_mcmc_runs;
  }
  report.outer_iterations = report.m;
  report.totals = family.counters() - before;
  return report;
}

/// Algorithm with a single proposal per outer iteration: select a
/// representative, run MCMC for it, then try PSIS (and optionally IWMM) on
/// every remaining target; resolved targets leave the index set, so the set
/// shrinks every iteration.
inline PropagationReport run_single_proposal(const TargetFamily& family, Selector& selector,
                                             const HmcConfig& cfg,
                                             const OrchestratorLimits& limits = {}) {
  PropagationReport report;
  report.m = family.num_targets();
  if (report.m < 1) throw UsageError("run_single_proposal: empty family");
  report.draws_per_target = cfg.draws_per_run();
  report.param_names = family.param_names();
  report.method = limits.use_iwmm ? "psis_iwmm" : "psis_single";
  report.strategy = selector.name();
  report.targets.resize(static_cast<size_t>(report.m));
  report.target_draws.resize(static_cast<size_t>(report.m));

  const Index s = cfg.draws_per_run();
  const Index max_outer = limits.max_outer > 0 ? limits.max_outer : report.m;
  const std::vector<Index>* ratio_rows = family.shared_row_diff();
  const EvalCounters before = family.counters();

  std::vector<Index> remaining(static_cast<size_t>(report.m));
  std::iota(remaining.begin(), remaining.end(), Index{0});
  std::map<Index, double> khat_prev;

  while (!remaining.empty()) {
    if (report.outer_iterations >= max_outer) {
      report.completed = false;
      report.failure = "outer iteration cap reached with " +
                       std::to_string(remaining.size()) + " targets unresolved";
      break;
    }
    ++report.outer_iterations;

    Index proposal_idx;
    {
      detail::PhaseTally tally(family, report.phase_selection);
      const auto picked = selector.select(remaining, 1, khat_prev);
      if (picked.size() != 1) throw OrchestrationError("selector returned wrong count");
      proposal_idx = picked.front();
    }

    HmcResult proposal;
    try {
      detail::PhaseTally tally(family, report.phase_hmc);
      proposal = hmc_sample(family, proposal_idx, detail::run_config(cfg, proposal_idx));
    } catch (const SamplerError& e) {
      report.totals = family.counters() - before;
      throw OrchestrationFailure(
          "HMC failed for proposal target " + std::to_string(proposal_idx) + ": " + e.what(),
          report);
    }
    ++report.n_mcmc_runs;
    report.target_draws[static_cast<size_t>(proposal_idx)] = proposal.constrained;
    auto& prec = report.targets[static_cast<size_t>(proposal_idx)];
    prec.route = Route::kMcmcProposal;
    prec.proposal_iteration = report.outer_iterations;
    remaining.erase(std::find(remaining.begin(), remaining.end(), proposal_idx));
    khat_prev.erase(proposal_idx);

    const DrawMatrix& draws = proposal.unconstrained;
    Vector proposal_loglik;
    {
      detail::PhaseTally tally(family, report.phase_psis);
      proposal_loglik = family.loglik_sum_batch(proposal_idx, draws, ratio_rows);
    }

    // Proposal full log density at its own draws, computed lazily and shared
    // by every IWMM attempt in this sweep.
    Vector proposal_logp_cache;
    auto proposal_logp = [&](const DrawMatrix& x) -> Vector {
      if (proposal_logp_cache.size() == 0)
        proposal_logp_cache = family.logp_batch(proposal_idx, x);
      return proposal_logp_cache;
    };

    std::vector<Index> resolved;
    for (Index i : remaining) {
      PsisResult psis;
      {
        detail::PhaseTally tally(family, report.phase_psis);
        const Vector target_loglik = family.loglik_sum_batch(i, draws, ratio_rows);
        psis = psis_smooth(target_loglik - proposal_loglik);
      }
      auto& rec = report.targets[static_cast<size_t>(i)];
      rec.k_hat = psis.k_hat;
      khat_prev[i] = psis.k_hat;

      if (psis.reliable) {
        const DrawMatrix picked = resample(
            draws, psis.smoothed, s, detail::derive_seed(cfg.seed, detail::kStreamResample, i));
        report.target_draws[static_cast<size_t>(i)] = family.constrain_rows(picked);
        rec.route = Route::kPsis;
        rec.proposal_iteration = report.outer_iterations;
        resolved.push_back(i);
        continue;
      }
      if (!limits.use_iwmm) continue;

      ++report.iwmm_attempts;
      IwmmResult iwmm;
      {
        detail::PhaseTally tally(family, report.phase_iwmm);
        auto target_logp = [&](const DrawMatrix& x) { return family.logp_batch(i, x); };
        iwmm = iwmm_adapt(target_logp, proposal_logp, draws, limits.iwmm_max_iters);
      }
      rec.k_hat_mm = iwmm.k_hat_mm;
      khat_prev[i] = std::min(khat_prev[i], iwmm.k_hat_mm);
      if (iwmm.success) {
        const DrawMatrix picked =
            resample(iwmm.transformed, iwmm.weights, s,
                     detail::derive_seed(cfg.seed, detail::kStreamResample, i));
        report.target_draws[static_cast<size_t>(i)] = family.constrain_rows(picked);
        rec.route = Route::kIwmm;
        rec.proposal_iteration = report.outer_iterations;
        resolved.push_back(i);
      }
    }
    for (Index i : resolved) {
      remaining.erase(std::find(remaining.begin(), remaining.end(), i));
      khat_prev.erase(i);
    }
  }

  report.totals = family.counters() - before;
  return report;
}

/// Mixture-proposal variant: each outer iteration fits n_mix representative
/// posteriors, estimates their normalizing constants by bridge sampling and
/// runs PSIS against the pooled mixture. No IWMM. Once the index set is down
/// to n_mix or fewer, the stragglers are fitted directly with MCMC.
inline PropagationReport run_mixture_proposal(const TargetFamily& family, Selector& selector,
                                              Index n_mix, const HmcConfig& cfg,
                                              const OrchestratorLimits& limits = {}) {
  PropagationReport report;
  report.m = family.num_targets();
  if (n_mix < 2) throw UsageError("run_mixture_proposal: n_mix must be >= 2");
  if (report.m <= n_mix) throw UsageError("run_mixture_proposal: need m > n_mix");
  report.draws_per_target = cfg.draws_per_run();
  report.param_names = family.param_names();
  report.method = "psis_mixture";
  report.strategy = selector.name();
  report.targets.resize(static_cast<size_t>(report.m));
  report.target_draws.resize(static_cast<size_t>(report.m));

  const Index s = cfg.draws_per_run();
  const Index max_outer = limits.max_outer > 0 ? limits.max_outer : report.m;
  const std::vector<Index>* ratio_rows = family.shared_row_diff();
  const EvalCounters before = family.counters();

  std::vector<Index> remaining(static_cast<size_t>(report.m));
  std::iota(remaining.begin(), remaining.end(), Index{0});
  std::map<Index, double> khat_prev;

  auto run_mcmc_target = [&](Index i) {
    HmcResult res;
    try {
      detail::PhaseTally tally(family, report.phase_hmc);
      res = hmc_sample(family, i, detail::run_config(cfg, i));
    } catch (const SamplerError& e) {
      report.totals = family.counters() - before;
      throw OrchestrationFailure(
          "HMC failed for target " + std::to_string(i) + ": " + e.what(), report);
    }
    ++report.n_mcmc_runs;
    auto& rec = report.targets[static_cast<size_t>(i)];
    rec.route = Route::kMcmcProposal;
    rec.proposal_iteration = report.outer_iterations;
    report.target_draws[static_cast<size_t>(i)] = res.constrained;
    remaining.erase(std::find(remaining.begin(), remaining.end(), i));
    khat_prev.erase(i);
    return res;
  };

  while (static_cast<Index>(remaining.size()) > n_mix) {
    if (report.outer_iterations >= max_outer) {
      report.completed = false;
      report.failure = "outer iteration cap reached with " +
                       std::to_string(remaining.size()) + " targets unresolved";
      break;
    }
    ++report.outer_iterations;

    std::vector<Index> picks;
    {
      detail::PhaseTally tally(family, report.phase_selection);
      picks = selector.select(remaining, n_mix, khat_prev);
      if (static_cast<Index>(picks.size()) != n_mix)
        throw OrchestrationError("selector returned wrong count");
    }

    std::vector<DrawMatrix> component_draws;
    for (Index j : picks) component_draws.push_back(run_mcmc_target(j).unconstrained);

    MixtureProposal mix = build_mixture(
        component_draws, s,
        detail::derive_seed(cfg.seed, detail::kStreamPool, report.outer_iterations));
    mix.component_indices = picks;
    for (Index c = 0; c < n_mix; ++c) {
      const Index j = picks[static_cast<size_t>(c)];
      detail::PhaseTally tally(family, report.phase_bridge);
      auto logp_j = [&](const DrawMatrix& x) { return family.logp_batch(j, x); };
      try {
        mix.log_ml[c] = bridge_log_ml(logp_j, component_draws[static_cast<size_t>(c)], s,
                                      detail::derive_seed(cfg.seed, detail::kStreamBridge, j));
      } catch (const ConvergenceError& e) {
        report.totals = family.counters() - before;
        throw OrchestrationFailure(
            "bridge sampling failed for component " + std::to_string(j) + ": " + e.what(),
            report);
      }
    }

    std::vector<Index> resolved;
    {
      detail::PhaseTally tally(family, report.phase_psis);
      auto loglik = [&](Index i, const DrawMatrix& x) {
        return family.loglik_sum_batch(i, x, ratio_rows);
      };
      MixtureRatioCalculator calc(mix, loglik);
      for (Index i : remaining) {
        const PsisResult psis = psis_smooth(calc.log_ratios(i));
        auto& rec = report.targets[static_cast<size_t>(i)];
        rec.k_hat = psis.k_hat;
        khat_prev[i] = psis.k_hat;
        if (!psis.reliable) continue;
        const DrawMatrix picked =
            resample(mix.pooled, psis.smoothed, s,
                     detail::derive_seed(cfg.seed, detail::kStreamResample, i));
        report.target_draws[static_cast<size_t>(i)] = family.constrain_rows(picked);
        rec.route = Route::kPsis;
        rec.proposal_iteration = report.outer_iterations;
        resolved.push_back(i);
      }
    }
    for (Index i : resolved) {
      remaining.erase(std::find(remaining.begin(), remaining.end(), i));
      khat_prev.erase(i);
    }
  }

  if (report.completed) {
    ++report.outer_iterations;
    while (!remaining.empty()) run_mcmc_target(remaining.front());
  }
  report.totals = family.counters() - before;
  return report;
}

/// Concatenate the per-target posterior draws into one m*S sample.
inline DrawMatrix pool_posterior(const PropagationReport& report) {
  for (const auto& t : report.targets) {
    if (t.route == Route::kNone) throw UsageError("pool_posterior: unresolved targets");
  }
  DrawMatrix pooled(report.m * report.draws_per_target,
                    static_cast<Index>(report.param_names.size()));
  for (Index i = 0; i < report.m; ++i)
    pooled.middleRows(i * report.draws_per_target, report.draws_per_target) =
        report.target_draws[static_cast<size_t>(i)];
  return pooled;
}

/// Evaluation-cost ratios against a brute-force baseline under the same
/// config and seeds.
struct CostReport {
  double logp_ratio = 0.0;
  double grad_ratio = 0.0;
  double mcmc_run_fraction = 0.0;
};

inline CostReport cost_report(const PropagationReport& report, const EvalCounters& baseline) {
  if (baseline.n_logp <= 0 || baseline.n_grad <= 0)
    throw UsageError("cost_report: zero baseline counters");
  CostReport out;
  out.logp_ratio =
      static_cast<double>(report.totals.n_logp + report.totals.n_pointwise_loglik) /
      static_cast<double>(baseline.n_logp);
  out.grad_ratio = static_cast<double>(report.totals.n_grad) /
                   static_cast<double>(baseline.n_grad);
  out.mcmc_run_fraction =
      static_cast<double>(report.n_mcmc_runs) / static_cast<double>(report.m);
  return out;
}

}  // namespace uprop
