#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "uprop/report_io.hpp"
#include "uprop/studies.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

uprop::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uprop::ConfigError("cannot open config file " + path);
  uprop::Json doc;
  in >> doc;
  uprop::ExperimentConfig cfg;
  from_json(doc, cfg);
  return cfg;
}

int run_command(const uprop::ExperimentConfig& base, int replications) {
  for (int rep = 0; rep < replications; ++rep) {
    uprop::ExperimentConfig cfg = base;
    if (replications > 1) {
      cfg.seed = base.seed + static_cast<std::uint64_t>(rep);
      cfg.out_dir = (std::filesystem::path(base.out_dir) /
                     ("rep_" + std::to_string(rep)))
                        .string();
    }
    const uprop::Json doc = uprop::run_experiment(cfg);
    std::cout << "study=" << cfg.study << " method=" << cfg.method
              << " seed=" << cfg.seed
              << " n_mcmc_runs=" << doc.at("n_mcmc_runs")
              << " completed=" << doc.at("completed") << " -> " << cfg.out_dir
              << "\n";
    if (!doc.at("completed").get<bool>()) return kRuntimeError;
  }
  return kOk;
}

int compare_command(const std::string& report_a, const std::string& report_b,
                    const std::string& out_path) {
  const uprop::Json a = uprop::read_report(report_a);
  const uprop::Json b = uprop::read_report(report_b);
  const auto rows = uprop::compare_reports(a, b);
  uprop::write_comparison_csv(rows, out_path);
  for (const auto& r : rows) {
    if (r.scope == "pooled")
      std::cout << "pooled |dmean|=" << r.dmean << " |dsd|=" << r.dsd
                << " |dq05|=" << r.dq05 << " |dq95|=" << r.dq95 << "\n";
  }
  // Cost ratios when exactly one side is the brute-force baseline.
  const bool a_brute = a.at("method") == "mcmc_bruteforce";
  const bool b_brute = b.at("method") == "mcmc_bruteforce";
  if (a_brute != b_brute) {
    const uprop::Json& brute = a_brute ? a : b;
    const uprop::Json& method = a_brute ? b : a;
    const auto base = uprop::detail::counters_from_json(brute.at("totals"));
    const auto tot = uprop::detail::counters_from_json(method.at("totals"));
    if (base.n_logp > 0 && base.n_grad > 0) {
      std::cout << "logp_ratio="
                << static_cast<double>(tot.n_logp + tot.n_pointwise_loglik) / base.n_logp
                << " grad_ratio=" << static_cast<double>(tot.n_grad) / base.n_grad
                << " mcmc_runs=" << method.at("n_mcmc_runs") << "/"
                << method.at("m") << "\n";
    }
  }
  std::cout << "wrote " << out_path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty propagation for Bayesian two-step procedures"};
  app.require_subcommand(1);

  uprop::ExperimentConfig cfg;
  std::string config_path;
  int replications = 1;

  CLI::App* run = app.add_subcommand("run", "run one experiment configuration");
  run->add_option("--config", config_path, "JSON config file; flags override it");
  auto* o_study = run->add_option("--study", cfg.study,
                  "imputation | surrogate_logistic | surrogate_pce | custom_csv");
  auto* o_method = run->add_option("--method", cfg.method,
                  "mcmc_bruteforce | psis_single | psis_mixture | psis_iwmm");
  auto* o_strategy = run->add_option("--strategy", cfg.strategy,
                  "random | max_khat | medoids | loglik_quantile");
  auto* o_m = run->add_option("--m", cfg.m, "number of first-step realizations");
  auto* o_seed = run->add_option("--seed", cfg.seed, "master seed");
  auto* o_prior = run->add_option("--prior", cfg.prior_kind, "standard | horseshoe");
  auto* o_pi = run->add_option("--pi", cfg.pi, "fraction of rows with missing values");
  auto* o_n = run->add_option("--N", cfg.n, "observations");
  auto* o_p = run->add_option("--p", cfg.p, "covariates");
  auto* o_nmix = run->add_option("--n-mix", cfg.n_mix, "mixture components");
  auto* o_chains = run->add_option("--chains", cfg.hmc.n_chains, "HMC chains");
  auto* o_warmup = run->add_option("--warmup", cfg.hmc.n_warmup, "HMC warmup iterations");
  auto* o_sampling =
      run->add_option("--sampling", cfg.hmc.n_sampling, "HMC sampling iterations");
  auto* o_out = run->add_option("--out", cfg.out_dir, "output directory");
  auto* o_data = run->add_option("--data", cfg.csv_path, "complete input CSV (custom_csv)");
  auto* o_manifest = run->add_option("--manifest", cfg.manifest_path,
                  "manifest of externally imputed datasets (custom_csv)");
  run->add_option("--replications", replications, "repeat with seed+k into rep_k/");

  CLI::App* compare = app.add_subcommand("compare", "compare two report.json files");
  std::string report_a, report_b, compare_out = "comparison.csv";
  compare->add_option("report_a", report_a)->required();
  compare->add_option("report_b", report_b)->required();
  compare->add_option("--out", compare_out, "comparison CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) {
      uprop::ExperimentConfig merged = cfg;
      if (!config_path.empty()) {
        merged = load_config(config_path);
        // Explicit flags override file values.
        if (o_study->count()) merged.study = cfg.study;
        if (o_method->count()) merged.method = cfg.method;
        if (o_strategy->count()) merged.strategy = cfg.strategy;
        if (o_m->count()) merged.m = cfg.m;
        if (o_seed->count()) merged.seed = cfg.seed;
        if (o_prior->count()) merged.prior_kind = cfg.prior_kind;
        if (o_pi->count()) merged.pi = cfg.pi;
        if (o_n->count()) merged.n = cfg.n;
        if (o_p->count()) merged.p = cfg.p;
        if (o_nmix->count()) merged.n_mix = cfg.n_mix;
        if (o_chains->count()) merged.hmc.n_chains = cfg.hmc.n_chains;
        if (o_warmup->count()) merged.hmc.n_warmup = cfg.hmc.n_warmup;
        if (o_sampling->count()) merged.hmc.n_sampling = cfg.hmc.n_sampling;
        if (o_out->count()) merged.out_dir = cfg.out_dir;
        if (o_data->count()) merged.csv_path = cfg.csv_path;
        if (o_manifest->count()) merged.manifest_path = cfg.manifest_path;
      }
      merged.validate();
      return run_command(merged, replications);
    }
    return compare_command(report_a, report_b, compare_out);
  } catch (const uprop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const uprop::UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
