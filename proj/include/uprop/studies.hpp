#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprop/dataset.hpp"
#include "uprop/errors.hpp"
#include "uprop/imputation.hpp"
#include "uprop/models/regression.hpp"
#include "uprop/models/surrogate.hpp"
#include "uprop/orchestrator.hpp"
#include "uprop/report_io.hpp"
#include "uprop/selection.hpp"

namespace uprop {

struct ExperimentConfig {
  std::string study = "surrogate_logistic";  // imputation | surrogate_logistic |
                                             // surrogate_pce | custom_csv
  std::string method = "psis_iwmm";  // mcmc_bruteforce | psis_single |
                                     // psis_mixture | psis_iwmm
  std::string strategy;              // random | max_khat | medoids | loglik_quantile
  Index m = 100;
  std::uint64_t seed = 1;
  std::string prior_kind = "standard";  // standard | horseshoe
  double pi = 0.15;
  Index n = 100;
  Index p = 10;
  Index n_mix = 5;
  Index n_sweeps = 10;

  // Surrogate study constants.
  Index n_t = 10;
  Index n_i = 5;
  double theta_star = -0.05;
  double noise = 0.01;
  int pce_degree = 5;
  Index loglik_j = 100;

  HmcConfig hmc;           // second-step runs: 4 x (1000 + 1000)
  HmcConfig training_hmc;  // first-step surrogate training: 2 x (1000 + 50)

  std::string out_dir = "out";
  std::string csv_path;       // custom_csv: complete input data
  std::string manifest_path;  // custom_csv: externally imputed datasets

  ExperimentConfig() {
    training_hmc.n_chains = 2;
    training_hmc.n_warmup = 1000;
    training_hmc.n_sampling = 50;
  }

  void validate() const {
    const bool study_ok = study == "imputation" || study == "surrogate_logistic" ||
                          study == "surrogate_pce" || study == "custom_csv";
    if (!study_ok) throw ConfigError("unknown study: " + study);
    const bool method_ok = method == "mcmc_bruteforce" || method == "psis_single" ||
                           method == "psis_mixture" || method == "psis_iwmm";
    if (!method_ok) throw ConfigError("unknown method: " + method);
    if (!strategy.empty() && strategy != "random" && strategy != "max_khat" &&
        strategy != "medoids" && strategy != "loglik_quantile")
      throw ConfigError("unknown strategy: " + strategy);
    if (prior_kind != "standard" && prior_kind != "horseshoe")
      throw ConfigError("unknown prior: " + prior_kind);
    if (m < 1) throw ConfigError("m must be >= 1");
    if (method == "psis_mixture") {
      if (n_mix < 2) throw ConfigError("psis_mixture requires n_mix >= 2");
      if (m <= n_mix) throw ConfigError("psis_mixture requires m > n_mix");
    }
    if (study == "custom_csv" && csv_path.empty() && manifest_path.empty())
      throw ConfigError("custom_csv requires --data or --manifest");
  }
};

inline void to_json(Json& j, const HmcConfig& c) {
  j = Json{{"n_chains", c.n_chains},       {"n_warmup", c.n_warmup},
           {"n_sampling", c.n_sampling},   {"target_accept", c.target_accept},
           {"max_leapfrog", c.max_leapfrog}, {"init_step", c.init_step}};
}

inline void from_json(const Json& j, HmcConfig& c) {
  c.n_chains = j.value("n_chains", c.n_chains);
  c.n_warmup = j.value("n_warmup", c.n_warmup);
  c.n_sampling = j.value("n_sampling", c.n_sampling);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.max_leapfrog = j.value("max_leapfrog", c.max_leapfrog);
  c.init_step = j.value("init_step", c.init_step);
}

inline void to_json(Json& j, const ExperimentConfig& c) {
  j = Json{{"study", c.study},        {"method", c.method},
           {"strategy", c.strategy},  {"m", c.m},
           {"seed", c.seed},          {"prior_kind", c.prior_kind},
           {"pi", c.pi},              {"N", c.n},
           {"p", c.p},                {"n_mix", c.n_mix},
           {"n_sweeps", c.n_sweeps},  {"N_T", c.n_t},
           {"N_I", c.n_i},            {"theta_star", c.theta_star},
           {"noise", c.noise},        {"pce_degree", c.pce_degree},
           {"loglik_J", c.loglik_j},  {"hmc", c.hmc},
           {"training_hmc", c.training_hmc}, {"out_dir", c.out_dir},
           {"data", c.csv_path},      {"manifest", c.manifest_path}};
}

inline void from_json(const Json& j, ExperimentConfig& c) {
  c.study = j.value("study", c.study);
  c.method = j.value("method", c.method);
  c.strategy = j.value("strategy", c.strategy);
  c.m = j.value("m", c.m);
  c.seed = j.value("seed", c.seed);
  c.prior_kind = j.value("prior_kind", c.prior_kind);
  c.pi = j.value("pi", c.pi);
  c.n = j.value("N", c.n);
  c.p = j.value("p", c.p);
  c.n_mix = j.value("n_mix", c.n_mix);
  c.n_sweeps = j.value("n_sweeps", c.n_sweeps);
  c.n_t = j.value("N_T", c.n_t);
  c.n_i = j.value("N_I", c.n_i);
  c.theta_star = j.value("theta_star", c.theta_star);
  c.noise = j.value("noise", c.noise);
  c.pce_degree = j.value("pce_degree", c.pce_degree);
  c.loglik_j = j.value("loglik_J", c.loglik_j);
  if (j.contains("hmc")) c.hmc = j.at("hmc").get<HmcConfig>();
  if (j.contains("training_hmc")) c.training_hmc = j.at("training_hmc").get<HmcConfig>();
  c.out_dir = j.value("out_dir", c.out_dir);
  c.csv_path = j.value("data", c.csv_path);
  c.manifest_path = j.value("manifest", c.manifest_path);
}

/// Assembled inputs for one propagation run. Keeps the data the family and
/// selector reference alive.
struct StudyInstance {
  std::unique_ptr<TargetFamily> family;
  std::unique_ptr<Selector> selector;
  Dataset observed;                // imputation studies
  std::vector<Dataset> completed;  // imputation studies
  DrawMatrix taus;                 // surrogate studies
  HmcConfig hmc;
};

namespace detail {

constexpr std::uint64_t kStreamData = 0xD1;
constexpr std::uint64_t kStreamMask = 0xD2;
constexpr std::uint64_t kStreamImpute = 0xD3;
constexpr std::uint64_t kStreamTraining = 0xD4;
constexpr std::uint64_t kStreamInference = 0xD5;
constexpr std::uint64_t kStreamSelect = 0xD6;

inline Vector observed_y(const Dataset& d) {
  std::vector<double> vals;
  for (Index i = 0; i < d.rows(); ++i) {
    if (!d.mask(i, 0)) vals.push_back(d.values(i, 0));
  }
  if (vals.empty()) throw UsageError("no observed y values");
  Vector out(static_cast<Index>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) out[static_cast<Index>(i)] = vals[i];
  return out;
}

inline std::unique_ptr<Selector> make_selector(const ExperimentConfig& cfg,
                                               const StudyInstance& instance,
                                               const std::string& strategy) {
  const std::uint64_t sel_seed = derive_seed(cfg.seed, kStreamSelect, 0);
  if (strategy == "random") return std::make_unique<RandomSelector>(sel_seed);
  if (strategy == "medoids") {
    Matrix dist;
    if (!instance.completed.empty()) {
      dist = fr_dissimilarity_matrix(instance.completed, instance.observed.rows_with_missing());
    } else {
      // Surrogate draws: plain Euclidean distances in tau space.
      const Index m = instance.taus.rows();
      dist.setZero(m, m);
      for (Index i = 0; i < m; ++i)
        for (Index j = i + 1; j < m; ++j)
          dist(i, j) = dist(j, i) = (instance.taus.row(i) - instance.taus.row(j)).norm();
    }
    return std::make_unique<MedoidsSelector>(std::move(dist));
  }
  if (strategy == "loglik_quantile") {
    const auto* fam = dynamic_cast<const SurrogateInferenceFamily*>(instance.family.get());
    if (fam == nullptr)
      throw ConfigError("loglik_quantile strategy requires a surrogate study");
    return std::make_unique<LoglikQuantileSelector>(*fam, cfg.loglik_j, sel_seed);
  }
  if (strategy == "max_khat")
    return std::make_unique<MaxKhatSelector>(make_selector(
        cfg, instance, instance.completed.empty() ? "random" : "medoids"));
  throw ConfigError("unknown strategy: " + strategy);
}

}  // namespace detail

/// Seed derivation shared between drivers and tests.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, Index i) {
  return detail::derive_seed(base, stream, i);
}

inline StudyInstance build_imputation_study(const ExperimentConfig& cfg) {
  StudyInstance inst;
  inst.hmc = cfg.hmc;
  if (cfg.study == "custom_csv" && !cfg.manifest_path.empty()) {
    const Json manifest = read_report(cfg.manifest_path);
    inst.observed = read_dataset_csv(manifest.at("observed").get<std::string>());
    for (const auto& p : manifest.at("datasets"))
      inst.completed.push_back(read_dataset_csv(p.get<std::string>()));
    if (inst.completed.empty()) throw ConfigError("manifest lists no datasets");
  } else {
    Dataset complete;
    if (cfg.study == "custom_csv") {
      complete = read_dataset_csv(cfg.csv_path);
      if (!complete.complete())
        throw ConfigError("custom data has missing cells; provide a manifest instead");
    } else {
      complete = generate_regression_data(cfg.n, cfg.p, 0.3,
                                          detail::derive_seed(cfg.seed, detail::kStreamData, 0))
                     .data;
    }
    inst.observed =
        inject_missingness(complete, cfg.pi, detail::derive_seed(cfg.seed, detail::kStreamMask, 0));
    inst.completed = chained_impute(inst.observed, cfg.m, cfg.n_sweeps,
                                    detail::derive_seed(cfg.seed, detail::kStreamImpute, 0));
  }
  const PriorKind kind =
      cfg.prior_kind == "horseshoe" ? PriorKind::kHorseshoe : PriorKind::kStandard;
  const RegressionPrior prior = default_regression_prior(detail::observed_y(inst.observed), kind);
  inst.family = std::make_unique<RegressionFamily>(inst.completed, prior,
                                                   inst.observed.rows_with_missing());
  return inst;
}

inline StudyInstance build_surrogate_study(const ExperimentConfig& cfg) {
  StudyInstance inst;
  inst.hmc = cfg.hmc;
  SurrogateSpec spec;
  spec.kind = cfg.study == "surrogate_pce" ? SurrogateSpec::Kind::kPce
                                           : SurrogateSpec::Kind::kLogistic;
  spec.degree = cfg.pce_degree;
  spec.noise = cfg.noise;

  const TrainingData train = make_training_data(
      cfg.n_t, cfg.noise, detail::derive_seed(cfg.seed, detail::kStreamTraining, 0));
  SurrogateTrainingFamily training = SurrogateTrainingFamily::with_default_priors(train, spec);

  HmcConfig tcfg = cfg.training_hmc;
  tcfg.n_sampling = static_cast<int>((cfg.m + tcfg.n_chains - 1) / tcfg.n_chains);
  tcfg.seed = detail::derive_seed(cfg.seed, detail::kStreamTraining, 1);
  const HmcResult tau_fit = hmc_sample(training, 0, tcfg);
  inst.taus = tau_fit.constrained.topRows(cfg.m);

  const Vector y_i = make_inference_data(
      cfg.n_i, cfg.theta_star, cfg.noise, detail::derive_seed(cfg.seed, detail::kStreamInference, 0));
  inst.family = std::make_unique<SurrogateInferenceFamily>(inst.taus, y_i, spec);
  return inst;
}

inline StudyInstance build_study(const ExperimentConfig& cfg) {
  cfg.validate();
  StudyInstance inst = (cfg.study == "imputation" || cfg.study == "custom_csv")
                           ? build_imputation_study(cfg)
                           : build_surrogate_study(cfg);
  std::string strategy = cfg.strategy;
  if (strategy.empty())
    strategy = inst.completed.empty() ? "loglik_quantile" : "medoids";
  inst.selector = detail::make_selector(cfg, inst, strategy);
  return inst;
}

inline PropagationReport run_method(const StudyInstance& inst, const ExperimentConfig& cfg) {
  HmcConfig hmc = cfg.hmc;
  hmc.seed = cfg.seed;
  OrchestratorLimits limits;
  if (cfg.method == "mcmc_bruteforce") return run_bruteforce(*inst.family, hmc);
  if (cfg.method == "psis_single") {
    limits.use_iwmm = false;
    return run_single_proposal(*inst.family, *inst.selector, hmc, limits);
  }
  if (cfg.method == "psis_mixture")
    return run_mixture_proposal(*inst.family, *inst.selector, cfg.n_mix, hmc, limits);
  return run_single_proposal(*inst.family, *inst.selector, hmc, limits);
}

/// Run one configured experiment and write report.json, pooled_draws.csv and
/// summary.csv into the output directory.
inline Json run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const StudyInstance inst = build_study(cfg);
  const PropagationReport report = run_method(inst, cfg);

  Json doc = report_to_json(report, cfg.study, cfg.seed);
  Json cfg_json;
  to_json(cfg_json, cfg);
  doc["config"] = std::move(cfg_json);

  const std::filesystem::path dir(cfg.out_dir);
  write_report(doc, (dir / "report.json").string());
  if (report.completed) {
    write_pooled_draws_csv(report, (dir / "pooled_draws.csv").string());
    write_summary_csv(report, (dir / "summary.csv").string());
  }
  return doc;
}

}  // namespace uprop
