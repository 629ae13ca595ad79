// Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
// Criteria 1-3 rerun the full studies against brute-force baselines under
// identical seeds; criterion 4 checks the gradient accounting identity on
// every configuration exercised here; criterion 5 is the study-free property
// battery; criterion 6 exercises the horseshoe scenario for completion.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "uprop/report_io.hpp"
#include "uprop/studies.hpp"

namespace {

using uprop::DrawMatrix;
using uprop::ExperimentConfig;
using uprop::Index;
using uprop::Matrix;
using uprop::PropagationReport;
using uprop::Route;
using uprop::Vector;

void criterion_line(int k, const std::string& detail) {
  const bool ok = !::testing::Test::HasFailure();
  std::printf("[CRITERION %d] %s — %s\n", k, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Gradient evaluations per HMC run are a pure function of the config: one
/// per leapfrog step plus one per chain at initialization.
std::int64_t grads_per_run(const uprop::HmcConfig& cfg) {
  std::int64_t total = 0;
  for (int chain = 0; chain < cfg.n_chains; ++chain) {
    uprop::CounterRng jitter = uprop::CounterRng(0x7261A3C70ull).fork(chain);
    total += 1;
    for (int t = 0; t < cfg.n_warmup + cfg.n_sampling; ++t)
      total += jitter.uniform_int(1, cfg.max_leapfrog);
  }
  return total;
}

struct StudyRun {
  PropagationReport method;
  PropagationReport brute;
  uprop::HmcConfig hmc;
};

StudyRun run_study_pair(ExperimentConfig cfg) {
  StudyRun out;
  const uprop::StudyInstance inst = uprop::build_study(cfg);
  out.hmc = cfg.hmc;
  out.hmc.seed = cfg.seed;
  out.method = uprop::run_method(inst, cfg);
  ExperimentConfig brute_cfg = cfg;
  brute_cfg.method = "mcmc_bruteforce";
  const uprop::StudyInstance brute_inst = uprop::build_study(brute_cfg);
  out.brute = uprop::run_method(brute_inst, brute_cfg);
  return out;
}

void check_grad_identity(const PropagationReport& report, const uprop::HmcConfig& hmc) {
  EXPECT_EQ(report.totals.n_grad, report.n_mcmc_runs * grads_per_run(hmc));
}

struct SummaryDiffs {
  double dmean = 0.0, dsd = 0.0, dq05 = 0.0, dq95 = 0.0;  // param averages
};

SummaryDiffs average_target_diffs(const PropagationReport& a, const PropagationReport& b) {
  SummaryDiffs acc;
  for (Index i = 0; i < a.m; ++i) {
    const auto sa = uprop::summarize_draws(a.target_draws[static_cast<size_t>(i)]);
    const auto sb = uprop::summarize_draws(b.target_draws[static_cast<size_t>(i)]);
    acc.dmean += (sa.mean - sb.mean).cwiseAbs().mean();
    acc.dsd += (sa.sd - sb.sd).cwiseAbs().mean();
    acc.dq05 += (sa.q05 - sb.q05).cwiseAbs().mean();
    acc.dq95 += (sa.q95 - sb.q95).cwiseAbs().mean();
  }
  acc.dmean /= a.m;
  acc.dsd /= a.m;
  acc.dq05 /= a.m;
  acc.dq95 /= a.m;
  return acc;
}

TEST(Acceptance, Criterion1LogisticSurrogateStudy) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.study = "surrogate_logistic";
  cfg.method = "psis_iwmm";
  cfg.m = 100;
  cfg.seed = 20260801;
  const StudyRun run = run_study_pair(cfg);

  EXPECT_TRUE(run.method.completed);
  EXPECT_LE(run.method.n_mcmc_runs, 10);
  const Vector pooled_method = uprop::pool_posterior(run.method).colwise().mean();
  const Vector pooled_brute = uprop::pool_posterior(run.brute).colwise().mean();
  const double dmean_theta = std::abs(pooled_method[0] - pooled_brute[0]);
  EXPECT_LT(dmean_theta, 0.01);
  check_grad_identity(run.method, run.hmc);

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(seconds, 300.0);
  criterion_line(1, "logistic study: n_mcmc_runs=" + std::to_string(run.method.n_mcmc_runs) +
                        ", pooled |dmean(theta_I)|=" + std::to_string(dmean_theta) +
                        ", runtime=" + std::to_string(seconds) + "s");
}

TEST(Acceptance, Criterion2PceSurrogateStudy) {
  std::vector<double> n_runs, grad_ratios, pooled_dmean;
  for (int s = 0; s < 20; ++s) {
    ExperimentConfig cfg;
    cfg.study = "surrogate_pce";
    cfg.method = "psis_iwmm";
    cfg.m = 100;
    cfg.seed = 500 + static_cast<std::uint64_t>(s);
    const StudyRun run = run_study_pair(cfg);
    EXPECT_TRUE(run.method.completed) << "seed " << cfg.seed;
    n_runs.push_back(static_cast<double>(run.method.n_mcmc_runs));
    grad_ratios.push_back(uprop::cost_report(run.method, run.brute.totals).grad_ratio);
    const Vector pm = uprop::pool_posterior(run.method).colwise().mean();
    const Vector pb = uprop::pool_posterior(run.brute).colwise().mean();
    pooled_dmean.push_back((pm - pb).cwiseAbs().mean());
    check_grad_identity(run.method, run.hmc);
    check_grad_identity(run.brute, run.hmc);
  }
  const double med_runs = median_of(n_runs);
  const double med_grad = median_of(grad_ratios);
  const double mean_dmean =
      std::accumulate(pooled_dmean.begin(), pooled_dmean.end(), 0.0) / pooled_dmean.size();
  EXPECT_LE(med_runs, 20.0);
  EXPECT_LE(med_grad, 0.3);
  EXPECT_LT(mean_dmean, 0.1);
  criterion_line(2, "pce study over 20 seeds: median n_mcmc_runs=" + std::to_string(med_runs) +
                        ", median grad_ratio=" + std::to_string(med_grad) +
                        ", mean pooled |dmean|=" + std::to_string(mean_dmean));
}

TEST(Acceptance, Criterion3ImputationStudy) {
  ExperimentConfig cfg;
  cfg.study = "imputation";
  cfg.method = "psis_iwmm";
  cfg.strategy = "medoids";
  cfg.m = 100;
  cfg.n = 100;
  cfg.p = 10;
  cfg.pi = 0.15;
  cfg.seed = 20260803;
  const StudyRun run = run_study_pair(cfg);

  EXPECT_TRUE(run.method.completed);
  EXPECT_GE(run.method.n_mcmc_runs, 1);
  EXPECT_LE(run.method.n_mcmc_runs, 55);
  const auto cost = uprop::cost_report(run.method, run.brute.totals);
  EXPECT_LT(cost.grad_ratio, 0.5);
  check_grad_identity(run.method, run.hmc);

  const SummaryDiffs d = average_target_diffs(run.method, run.brute);
  EXPECT_LT(d.dmean, 0.0125);
  EXPECT_LT(d.dsd, 0.0125);
  EXPECT_LT(d.dq05, 0.025);
  EXPECT_LT(d.dq95, 0.025);

  // Posterior fidelity per dimension on importance-sampling routes.
  const double ess_floor = static_cast<double>(run.method.draws_per_target) / 20.0;
  for (Index i = 0; i < run.method.m; ++i) {
    if (run.method.targets[static_cast<size_t>(i)].route == Route::kMcmcProposal) continue;
    const auto sm = uprop::summarize_draws(run.method.target_draws[static_cast<size_t>(i)]);
    const auto sb = uprop::summarize_draws(run.brute.target_draws[static_cast<size_t>(i)]);
    for (Index j = 0; j < sm.mean.size(); ++j) {
      const double mcse =
          std::sqrt(sm.sd[j] * sm.sd[j] + sb.sd[j] * sb.sd[j]) / std::sqrt(ess_floor);
      EXPECT_LT(std::abs(sm.mean[j] - sb.mean[j]), std::max(0.02, 3.0 * mcse))
          << "target " << i << " param " << j;
    }
  }

  criterion_line(3, "imputation study: n_mcmc_runs=" + std::to_string(run.method.n_mcmc_runs) +
                        ", grad_ratio=" + std::to_string(cost.grad_ratio) +
                        ", avg |dmean|=" + std::to_string(d.dmean) +
                        ", avg |dsd|=" + std::to_string(d.dsd) +
                        ", avg |dq05|=" + std::to_string(d.dq05) +
                        ", avg |dq95|=" + std::to_string(d.dq95));
}

TEST(Acceptance, Criterion4GradientAccountingBound) {
  // The identity grad_ratio == n_mcmc_runs / m (hence <= with equality) in
  // every configuration: single proposal, mixture, psis-only, both study
  // families, checked in exact integer arithmetic.
  const std::vector<std::string> methods{"psis_single", "psis_mixture", "psis_iwmm"};
  for (const auto& study : {std::string("surrogate_logistic"), std::string("imputation")}) {
    for (const auto& method : methods) {
      ExperimentConfig cfg;
      cfg.study = study;
      cfg.method = method;
      cfg.m = 20;
      cfg.n = 60;
      cfg.p = 4;
      cfg.n_mix = 3;
      cfg.seed = 321;
      cfg.hmc.n_chains = 2;
      cfg.hmc.n_warmup = 300;
      cfg.hmc.n_sampling = 400;
      const StudyRun run = run_study_pair(cfg);
      const std::int64_t per_run = grads_per_run(run.hmc);
      EXPECT_EQ(run.method.totals.n_grad, run.method.n_mcmc_runs * per_run)
          << study << "/" << method;
      EXPECT_EQ(run.brute.totals.n_grad, run.brute.m * per_run) << study << "/" << method;
      // grad_ratio <= n_mcmc_runs / m exactly (integers cross-multiplied).
      EXPECT_LE(run.method.totals.n_grad * run.method.m,
                run.method.n_mcmc_runs * run.brute.totals.n_grad)
          << study << "/" << method;
      EXPECT_EQ(run.method.totals.n_grad * run.method.m,
                run.method.n_mcmc_runs * run.brute.totals.n_grad)
          << study << "/" << method;
    }
  }
  criterion_line(4, "grad_ratio == n_mcmc_runs/m exactly across 6 study/method configurations");
}

TEST(Acceptance, Criterion5PropertySuite) {
  uprop::CounterRng rng(424242);

  // (a) T1/T2/T3 moment-matching exactness to 1e-10.
  {
    DrawMatrix draws(600, 3);
    Vector lr(600);
    for (Index i = 0; i < 600; ++i) {
      lr[i] = 0.4 * rng.normal();
      for (Index j = 0; j < 3; ++j) draws(i, j) = rng.normal();
      lr[i] += 0.3 * draws(i, 0);
    }
    const auto w = uprop::normalize_log_weights(lr);
    const Vector mu_t = uprop::weighted_mean(draws, w);
    const Matrix cov_t = uprop::weighted_cov(draws, w);

    const auto [out1, map1] = uprop::apply_t1(draws, w);
    EXPECT_LT((out1.colwise().mean().transpose() - mu_t).lpNorm<Eigen::Infinity>(), 1e-10);

    const auto [out2, map2] = uprop::apply_t2(draws, w);
    const Vector mean2 = out2.colwise().mean().transpose();
    EXPECT_LT((mean2 - mu_t).lpNorm<Eigen::Infinity>(), 1e-10);
    for (Index j = 0; j < 3; ++j) {
      const double var_out = (out2.col(j).array() - mean2[j]).square().mean();
      EXPECT_NEAR(var_out, cov_t(j, j), 1e-10);
    }

    const auto [out3, map3] = uprop::apply_t3(draws, w);
    const Vector mean3 = out3.colwise().mean().transpose();
    const DrawMatrix c3 = out3.rowwise() - mean3.transpose();
    const Matrix cov_out = c3.transpose() * c3 / 600.0;
    EXPECT_LT((mean3 - mu_t).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((cov_out - cov_t).lpNorm<Eigen::Infinity>(), 1e-10);
  }

  // (b) Implicit-density Jacobian identity on a Gaussian proposal to 1e-10.
  {
    const Index d = 2;
    DrawMatrix draws(300, d);
    Vector lr(300);
    for (Index i = 0; i < 300; ++i) {
      for (Index j = 0; j < d; ++j) draws(i, j) = rng.normal();
      lr[i] = 0.5 * draws(i, 1) + 0.2 * rng.normal();
    }
    const auto w = uprop::normalize_log_weights(lr);
    const auto [out, map] = uprop::apply_t3(draws, w);
    const Matrix sigma1 = map.linear * map.linear.transpose();
    const Eigen::LLT<Matrix> llt(sigma1);
    const Matrix l1 = llt.matrixL();
    const double logdet1 = l1.diagonal().array().log().sum();
    for (Index s = 0; s < 300; ++s) {
      const double lp0 = -0.5 * draws.row(s).squaredNorm();
      const Vector diff = out.row(s).transpose() - map.shift;
      const Vector solved = l1.triangularView<Eigen::Lower>().solve(diff);
      const double lp1 = -0.5 * solved.squaredNorm() - logdet1;
      EXPECT_NEAR(lp1, lp0 - map.log_abs_det, 1e-10);
    }
  }

  // (c) PSIS order preservation and unit weight sum to 1e-12.
  {
    Vector lr(1200);
    for (Index i = 0; i < 1200; ++i) lr[i] = 2.0 * rng.normal();
    const auto res = uprop::psis_smooth(lr);
    EXPECT_NEAR(res.smoothed.weights.sum(), 1.0, 1e-12);
    std::vector<Index> order(1200);
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return lr[a] < lr[b]; });
    for (size_t i = 0; i + 1 < order.size(); ++i)
      EXPECT_LE(res.smoothed.weights[order[i]], res.smoothed.weights[order[i + 1]] + 1e-15);
  }

  // (d) GPD fit recovers k in {0, 0.25, 0.5} within 0.02 at n = 1e5.
  for (double k : {0.0, 0.25, 0.5}) {
    const Index n = 100000;
    Vector x(n);
    for (Index i = 0; i < n; ++i) {
      const double u = (i + 0.5) / static_cast<double>(n);
      x[i] = k == 0.0 ? -std::log1p(-u) : (std::pow(1.0 - u, -k) - 1.0) / k;
    }
    EXPECT_NEAR(uprop::gpd_fit_tail(x).k_hat, k, 0.02);
  }

  // (e) Bridge sampling recovers the 1-d Gaussian constant within 0.01.
  {
    DrawMatrix draws(4000, 1);
    for (Index i = 0; i < 4000; ++i) draws(i, 0) = rng.normal();
    auto logq = [](const DrawMatrix& x) -> Vector {
      return (-0.5 * x.col(0).array().square()).matrix();
    };
    EXPECT_NEAR(uprop::bridge_log_ml(logq, draws, 4000, 99), 0.918939, 0.01);
  }

  // (f) Pointwise-cancellation equality on random imputed pairs to 1e-10.
  {
    const auto sim = uprop::generate_regression_data(70, 6, 0.3, 99);
    const auto masked = uprop::inject_missingness(sim.data, 0.2, 98);
    const auto imputed = uprop::chained_impute(masked, 3, 8, 97);
    const auto jstar = masked.rows_with_missing();
    const auto prior = uprop::default_regression_prior(Vector::LinSpaced(7, -1, 1),
                                                       uprop::PriorKind::kStandard);
    uprop::RegressionFamily family(imputed, prior, jstar);
    for (int rep = 0; rep < 10; ++rep) {
      Vector theta(family.dim());
      for (Index j = 0; j < family.dim(); ++j) theta[j] = 0.5 * rng.normal();
      const Vector la = family.pointwise_loglik(0, theta);
      const Vector lb = family.pointwise_loglik(rep % 2 + 1, theta);
      double restricted = 0.0;
      for (Index r : jstar) restricted += la[r] - lb[r];
      const double full = la.sum() - lb.sum();
      EXPECT_NEAR(full, restricted, 1e-10 * std::max(1.0, std::abs(full)));
    }
  }

  // (g) Mixture ratios with one component reduce to the plain log ratio up to
  // a constant at every draw.
  {
    DrawMatrix pooled(250, 1);
    for (Index i = 0; i < 250; ++i) pooled(i, 0) = rng.normal();
    uprop::MixtureProposal mix;
    mix.component_indices = {1};
    mix.component_draws = {pooled};
    mix.pooled = pooled;
    mix.log_ml = Vector::Constant(1, -1.7);
    auto loglik = [](Index j, const DrawMatrix& x) -> Vector {
      const double mu = j == 0 ? 0.8 : -0.4;
      return (-0.5 * (x.col(0).array() - mu).square()).matrix();
    };
    const Vector got = uprop::mixture_log_ratios(0, loglik, mix);
    const Vector plain = loglik(0, pooled) - loglik(1, pooled);
    const Vector diff = got - plain;
    EXPECT_NEAR(diff.maxCoeff() - diff.minCoeff(), 0.0, 1e-12);
  }

  // (h) Analytic gradients match central finite differences on every model.
  {
    auto check_family = [&](const uprop::TargetFamily& family, Index target, double scale) {
      for (int rep = 0; rep < 20; ++rep) {
        Vector theta(family.dim());
        for (Index j = 0; j < family.dim(); ++j) theta[j] = scale * rng.normal();
        const Vector g = family.grad_logp(target, theta);
        for (Index j = 0; j < family.dim(); ++j) {
          const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
          Vector tp = theta, tm = theta;
          tp[j] += h;
          tm[j] -= h;
          const double fd =
              (family.logp(target, tp) - family.logp(target, tm)) / (2.0 * h);
          EXPECT_NEAR(g[j], fd, 1e-5 * std::max(1.0, std::abs(g[j])));
        }
      }
    };
    const auto train = uprop::make_training_data(10, 0.01, 7);
    uprop::SurrogateSpec logistic_spec;
    uprop::SurrogateSpec pce_spec;
    pce_spec.kind = uprop::SurrogateSpec::Kind::kPce;
    check_family(uprop::SurrogateTrainingFamily::with_default_priors(train, logistic_spec),
                 0, 0.5);
    check_family(uprop::SurrogateTrainingFamily::with_default_priors(train, pce_spec), 0, 0.5);
    Matrix taus(2, 4);
    taus << 2.0, 10.0, 0.0, -1.0, 1.9, 9.5, 0.1, -0.95;
    const Vector y_i = uprop::make_inference_data(5, -0.05, 0.01, 6);
    check_family(uprop::SurrogateInferenceFamily(taus, y_i, logistic_spec), 1, 1.0);
    Matrix ptaus(1, 6);
    ptaus << 0.0, 1.4, 0.0, -0.8, 0.0, 0.4;
    check_family(uprop::SurrogateInferenceFamily(ptaus, y_i, pce_spec), 0, 1.0);
    const auto data = uprop::generate_regression_data(40, 3, 0.3, 5).data;
    check_family(uprop::RegressionFamily(
                     {data}, uprop::default_regression_prior(data.values.col(0),
                                                             uprop::PriorKind::kStandard)),
                 0, 0.7);
    check_family(uprop::RegressionFamily(
                     {data}, uprop::default_regression_prior(data.values.col(0),
                                                             uprop::PriorKind::kHorseshoe)),
                 0, 0.7);
  }

  // (i) Proposal equals target: every target resolves with k-hat below the
  // threshold and IWMM is never invoked.
  {
    uprop::HmcConfig cfg;
    cfg.n_chains = 2;
    cfg.n_warmup = 300;
    cfg.n_sampling = 500;
    cfg.seed = 5150;

    Matrix taus(12, 4);
    for (Index i = 0; i < 12; ++i) taus.row(i) << 2.0, 10.0, 0.0, -1.0;
    const Vector y_i = uprop::make_inference_data(5, -0.05, 0.01, 11);
    uprop::SurrogateSpec spec;
    uprop::SurrogateInferenceFamily surrogate(taus, y_i, spec);
    uprop::RandomSelector sel(3);
    const auto srep = uprop::run_single_proposal(surrogate, sel, cfg);
    EXPECT_TRUE(srep.completed);
    EXPECT_EQ(srep.iwmm_attempts, 0);
    EXPECT_EQ(srep.n_mcmc_runs, 1);
    const double thr = uprop::k_threshold(srep.draws_per_target);
    for (const auto& t : srep.targets) {
      if (t.route == Route::kPsis) EXPECT_LT(t.k_hat, thr);
    }

    const auto data = uprop::generate_regression_data(50, 4, 0.3, 12).data;
    std::vector<uprop::Dataset> copies(8, data);
    uprop::RegressionFamily regression(
        copies, uprop::default_regression_prior(data.values.col(0),
                                                uprop::PriorKind::kStandard));
    uprop::RandomSelector sel2(4);
    const auto rrep = uprop::run_single_proposal(regression, sel2, cfg);
    EXPECT_TRUE(rrep.completed);
    EXPECT_EQ(rrep.iwmm_attempts, 0);
    EXPECT_EQ(rrep.n_mcmc_runs, 1);
  }

  criterion_line(5, "property suite (a)-(i)");
}

TEST(Acceptance, Criterion6HorseshoeScenarioCompletes) {
  ExperimentConfig cfg;
  cfg.study = "imputation";
  cfg.method = "psis_iwmm";
  cfg.strategy = "medoids";
  cfg.prior_kind = "horseshoe";
  cfg.m = 100;
  cfg.n = 100;
  cfg.p = 10;
  cfg.pi = 0.15;
  cfg.seed = 20260806;
  const uprop::StudyInstance inst = uprop::build_study(cfg);
  const PropagationReport report = uprop::run_method(inst, cfg);

  EXPECT_TRUE(report.completed);
  for (const auto& t : report.targets) EXPECT_NE(t.route, Route::kNone);
  const uprop::EvalCounters phases = report.phase_hmc + report.phase_psis +
                                     report.phase_iwmm + report.phase_bridge +
                                     report.phase_selection;
  EXPECT_EQ(report.totals, phases);
  uprop::HmcConfig hmc = cfg.hmc;
  EXPECT_EQ(report.totals.n_grad, report.n_mcmc_runs * grads_per_run(hmc));

  criterion_line(6, "horseshoe scenario: routes mcmc=" +
                        std::to_string(report.count_route(Route::kMcmcProposal)) +
                        " psis=" + std::to_string(report.count_route(Route::kPsis)) +
                        " iwmm=" + std::to_string(report.count_route(Route::kIwmm)) +
                        ", n_mcmc_runs=" + std::to_string(report.n_mcmc_runs));
}

}  // namespace
