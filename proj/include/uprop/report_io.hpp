#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"
#include "uprop/orchestrator.hpp"

namespace uprop {

using Json = nlohmann::json;

struct SummaryStats {
  Vector mean, sd, q05, q95;
};

/// Type-7 (linear interpolation) quantile of a column.
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline SummaryStats summarize_draws(const DrawMatrix& draws) {
  SummaryStats s;
  const Index d = draws.cols();
  s.mean.resize(d);
  s.sd.resize(d);
  s.q05.resize(d);
  s.q95.resize(d);
  for (Index j = 0; j < d; ++j) {
    s.mean[j] = draws.col(j).mean();
    s.sd[j] = std::sqrt((draws.col(j).array() - s.mean[j]).square().sum() /
                        std::max<double>(1.0, draws.rows() - 1.0));
    std::vector<double> col(draws.col(j).data(), draws.col(j).data() + draws.rows());
    s.q05[j] = quantile(col, 0.05);
    s.q95[j] = quantile(std::move(col), 0.95);
  }
  return s;
}

namespace detail {

inline Json encode_real(double x) {
  if (std::isnan(x)) return Json("nan");
  if (std::isinf(x)) return Json(x > 0 ? "inf" : "-inf");
  return Json(x);
}

inline double decode_real(const Json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kPosInf;
    if (s == "-inf") return kNegInf;
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline Json counters_json(const EvalCounters& c) {
  return Json{{"n_logp", c.n_logp},
              {"n_grad", c.n_grad},
              {"n_pointwise_loglik", c.n_pointwise_loglik}};
}

inline EvalCounters counters_from_json(const Json& j) {
  EvalCounters c;
  c.n_logp = j.at("n_logp").get<std::int64_t>();
  c.n_grad = j.at("n_grad").get<std::int64_t>();
  c.n_pointwise_loglik = j.at("n_pointwise_loglik").get<std::int64_t>();
  return c;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

/// Full report document: configuration echo, per-target routes and summaries,
/// pooled summary and evaluation counters.
inline Json report_to_json(const PropagationReport& report, const std::string& study,
                           std::uint64_t seed) {
  Json doc;
  doc["study"] = study;
  doc["method"] = report.method;
  doc["strategy"] = report.strategy;
  doc["m"] = report.m;
  doc["draws_per_target"] = report.draws_per_target;
  doc["seed"] = seed;
  doc["param_names"] = report.param_names;
  doc["n_mcmc_runs"] = report.n_mcmc_runs;
  doc["outer_iterations"] = report.outer_iterations;
  doc["iwmm_attempts"] = report.iwmm_attempts;
  doc["completed"] = report.completed;
  doc["failure"] = report.failure;
  doc["totals"] = detail::counters_json(report.totals);
  doc["phases"] = Json{{"hmc", detail::counters_json(report.phase_hmc)},
                       {"psis", detail::counters_json(report.phase_psis)},
                       {"iwmm", detail::counters_json(report.phase_iwmm)},
                       {"bridge", detail::counters_json(report.phase_bridge)},
                       {"selection", detail::counters_json(report.phase_selection)}};

  Json targets = Json::array();
  for (Index i = 0; i < report.m; ++i) {
    const auto& t = report.targets[static_cast<size_t>(i)];
    Json tj;
    tj["index"] = i;
    tj["route"] = route_name(t.route);
    tj["k_hat"] = detail::encode_real(t.k_hat);
    tj["k_hat_mm"] = t.k_hat_mm ? detail::encode_real(*t.k_hat_mm) : Json();
    tj["proposal_iteration"] = t.proposal_iteration;
    if (t.route != Route::kNone) {
      const SummaryStats s = summarize_draws(report.target_draws[static_cast<size_t>(i)]);
      tj["mean"] = detail::vector_json(s.mean);
      tj["sd"] = detail::vector_json(s.sd);
      tj["q05"] = detail::vector_json(s.q05);
      tj["q95"] = detail::vector_json(s.q95);
    }
    targets.push_back(std::move(tj));
  }
  doc["targets"] = std::move(targets);

  if (report.completed) {
    const SummaryStats pooled = summarize_draws(pool_posterior(report));
    doc["pooled"] = Json{{"mean", detail::vector_json(pooled.mean)},
                         {"sd", detail::vector_json(pooled.sd)},
                         {"q05", detail::vector_json(pooled.q05)},
                         {"q95", detail::vector_json(pooled.q95)}};
  }
  return doc;
}

inline void write_report(const Json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

inline Json read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Json doc;
  in >> doc;
  return doc;
}

/// Pooled draws as CSV with a per-target provenance column. Column order:
/// target_index, then the reported parameters.
inline void write_pooled_draws_csv(const PropagationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "target_index";
  for (const auto& n : report.param_names) out << "," << n;
  out << "\n";
  for (Index i = 0; i < report.m; ++i) {
    const auto& draws = report.target_draws[static_cast<size_t>(i)];
    for (Index r = 0; r < draws.rows(); ++r) {
      out << i;
      for (Index j = 0; j < draws.cols(); ++j) out << "," << draws(r, j);
      out << "\n";
    }
  }
}

/// Posterior summaries as CSV. Column order: scope, param, mean, sd, q05, q95
/// with one row per (target, parameter) plus pooled rows.
inline void write_summary_csv(const PropagationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "scope,param,mean,sd,q05,q95\n";
  auto emit = [&](const std::string& scope, const SummaryStats& s) {
    for (size_t j = 0; j < report.param_names.size(); ++j) {
      const Index jj = static_cast<Index>(j);
      out << scope << "," << report.param_names[j] << "," << s.mean[jj] << "," << s.sd[jj]
          << "," << s.q05[jj] << "," << s.q95[jj] << "\n";
    }
  };
  for (Index i = 0; i < report.m; ++i) {
    if (report.targets[static_cast<size_t>(i)].route == Route::kNone) continue;
    emit(std::to_string(i), summarize_draws(report.target_draws[static_cast<size_t>(i)]));
  }
  if (report.completed) emit("pooled", summarize_draws(pool_posterior(report)));
  return;
}

struct ComparisonRow {
  std::string scope;  // target index or "pooled"
  double dmean = 0.0, dsd = 0.0, dq05 = 0.0, dq95 = 0.0;
};

/// Absolute summary differences between two report documents, averaged over
/// parameters, per target plus pooled.
inline std::vector<ComparisonRow> compare_reports(const Json& a, const Json& b) {
  if (a.at("study") != b.at("study") || a.at("m") != b.at("m") ||
      a.at("param_names") != b.at("param_names"))
    throw UsageError("compare_reports: reports come from different studies");

  auto diff_of = [](const Json& ja, const Json& jb, const char* key) {
    const Vector va = detail::vector_from_json(ja.at(key));
    const Vector vb = detail::vector_from_json(jb.at(key));
    return (va - vb).cwiseAbs().mean();
  };
  std::vector<ComparisonRow> rows;
  const auto& ta = a.at("targets");
  const auto& tb = b.at("targets");
  for (size_t i = 0; i < ta.size(); ++i) {
    if (!ta[i].contains("mean") || !tb[i].contains("mean")) continue;
    ComparisonRow r;
    r.scope = std::to_string(i);
    r.dmean = diff_of(ta[i], tb[i], "mean");
    r.dsd = diff_of(ta[i], tb[i], "sd");
    r.dq05 = diff_of(ta[i], tb[i], "q05");
    r.dq95 = diff_of(ta[i], tb[i], "q95");
    rows.push_back(std::move(r));
  }
  if (a.contains("pooled") && b.contains("pooled")) {
    ComparisonRow r;
    r.scope = "pooled";
    r.dmean = diff_of(a.at("pooled"), b.at("pooled"), "mean");
    r.dsd = diff_of(a.at("pooled"), b.at("pooled"), "sd");
    r.dq05 = diff_of(a.at("pooled"), b.at("pooled"), "q05");
    r.dq95 = diff_of(a.at("pooled"), b.at("pooled"), "q95");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "scope,abs_dmean,abs_dsd,abs_dq05,abs_dq95\n";
  for (const auto& r : rows)
    out << r.scope << "," << r.dmean << "," << r.dsd << "," << r.dq05 << "," << r.dq95 << "\n";
}

}  // namespace uprop
