#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlex/dataset.hpp"
#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/explain.hpp"
#include "rlex/gbdt.hpp"
#include "rlex/metrics.hpp"
#include "rlex/parallel.hpp"
#include "rlex/policy.hpp"

namespace rlex {

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"aim", "aum", "pgi", "pgu", "ris"};
  return names;
}

inline bool metric_known(const std::string& m) {
  const auto& names = metric_names();
  return std::find(names.begin(), names.end(), m) != names.end();
}

struct BenchConfig {
  std::string env_name;
  std::string policy_path;
  std::string dataset_path;
  std::string output_dir;
  int sample_count = 500;
  std::vector<Method> explainers;
  std::vector<std::string> metrics;
  ExplainerConfig explainer;
  double fidelity_sigma_scale = 0.1;
  int n_pert = 32;
  double stability_sigma_scale = 0.05;
  int n_nbr = 32;
  int student_rounds = 100;
  int student_depth = 4;
  double student_eta = 0.1;
  int student_min_leaf = 5;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct BenchCell {
  std::string explainer;
  std::string metric;
  bool ok = false;
  std::string skip_reason;
  bool has_mode = false;
  std::string mode_chosen;
  std::vector<double> per_k;   // empty for ris
  double value = 0.0;          // curve AUC, or mean RIS over defined samples
  int undefined_count = 0;     // ris only: samples with no action-preserving neighbor
};

struct BenchTimingRow {
  std::string explainer;
  double mean_seconds = 0.0;
  double p95_seconds = 0.0;
};

struct ExplainerTiming {
  double mean_seconds = 0.0;
  double p95_seconds = 0.0;
};

struct BenchReport {
  std::string env;
  int state_dim = 0;
  int action_count = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t dataset_rows = 0;
  int sample_count = 0;
  std::vector<std::string> explainers;
  std::vector<std::string> metrics;
  std::vector<BenchCell> cells;
  int workers = 1;                     // execution detail, reported with timing
  std::vector<BenchTimingRow> timing;
  std::vector<std::string> notes;
};

namespace detail {

inline double p95_nearest_rank(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  return v[std::min(n - 1, std::max<std::size_t>(rank, 1) - 1)];
}

// FNV-1a over the semantic config fields (worker count and output paths
// excluded: they cannot affect numeric results).
inline std::string bench_config_hash(const BenchConfig& cfg) {
  std::string s = cfg.env_name + "|" + cfg.policy_path + "|" + cfg.dataset_path + "|" +
                  std::to_string(cfg.sample_count) + "|";
  for (Method m : cfg.explainers) s += method_name(m) + ",";
  s += "|";
  for (const auto& m : cfg.metrics) s += m + ",";
  s += "|" + std::to_string(cfg.fidelity_sigma_scale) + "|" + std::to_string(cfg.n_pert) + "|" +
       std::to_string(cfg.stability_sigma_scale) + "|" + std::to_string(cfg.n_nbr) + "|" +
       std::to_string(cfg.student_rounds) + "|" + std::to_string(cfg.student_depth) + "|" +
       std::to_string(cfg.student_eta) + "|" + std::to_string(cfg.student_min_leaf) + "|" +
       std::to_string(cfg.explainer.ig_steps) + "|" +
       std::to_string(static_cast<int>(cfg.explainer.ig_baseline)) + "|" +
       std::to_string(cfg.explainer.gshap_samples) + "|" + std::to_string(cfg.explainer.lime_samples) +
       "|" + std::to_string(cfg.explainer.lime_kernel_width) + "|" +
       std::to_string(cfg.explainer.lime_ridge) + "|" +
       std::to_string(static_cast<int>(cfg.explainer.perturb)) + "|" +
       std::to_string(cfg.explainer.perturb_sigma_scale) + "|" +
       std::to_string(cfg.explainer.perturb_draws) + "|" + std::to_string(cfg.seed);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

constexpr std::uint64_t kStreamBenchSample = 0x62656e63ULL;
constexpr std::uint64_t kStreamBenchExplain = 0x62657870ULL;
constexpr std::uint64_t kStreamBenchFidelity = 0x62666964ULL;
constexpr std::uint64_t kStreamBenchStability = 0x62737461ULL;

}  // namespace detail

// Times one explanation call per sample; at least 20 samples required for the
// p95 to mean anything.
inline ExplainerTiming time_explainer(const std::function<void(const State&, int)>& run,
                                      const std::vector<SAPair>& samples) {
  if (samples.size() < 20)
    throw input_error("timing needs at least 20 samples, got " + std::to_string(samples.size()));
  std::vector<double> seconds;
  seconds.reserve(samples.size());
  for (const auto& p : samples) {
    const auto t0 = std::chrono::steady_clock::now();
    run(p.state, p.action);
    const auto t1 = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  double mean = 0.0;
  for (double v : seconds) mean += v;
  mean /= static_cast<double>(seconds.size());
  return {mean, detail::p95_nearest_rank(seconds)};
}

// Full grid run over in-memory objects.  Cells run sequentially; samples
// inside a cell fan out over cfg.workers with per-sample derived seeds, so
// any worker count yields identical numbers.
inline BenchReport run_benchmark(const BenchConfig& cfg, Environment& env, const MlpPolicy& policy,
                                 const Dataset& dataset) {
  if (cfg.explainers.empty()) throw input_error("benchmark needs at least one explainer");
  if (cfg.metrics.empty()) throw input_error("benchmark needs at least one metric");
  for (const auto& m : cfg.metrics)
    if (!metric_known(m)) {
      std::string known;
      for (const auto& n : metric_names()) known += (known.empty() ? "" : ", ") + n;
      throw input_error("unknown metric '" + m + "' (known: " + known + ")");
    }
  if (dataset.pairs.empty()) throw input_error("benchmark dataset is empty");
  if (cfg.sample_count < 1 || static_cast<std::size_t>(cfg.sample_count) > dataset.pairs.size())
    throw input_error("sample_count must lie in [1, dataset size]");
  const auto& spec = env.spec();
  if (dataset.spec.state_dim != spec.state_dim || dataset.spec.action_count != spec.action_count)
    throw input_error("dataset shape does not match env spec");
  if (policy.input_dim != spec.state_dim || policy.action_count != spec.action_count)
    throw input_error("policy shape does not match env spec");

  BenchReport report;
  report.env = spec.name;
  report.state_dim = spec.state_dim;
  report.action_count = spec.action_count;
  report.seed = cfg.seed;
  report.config_hash = detail::bench_config_hash(cfg);
  report.dataset_rows = dataset.pairs.size();
  report.sample_count = cfg.sample_count;
  report.workers = cfg.workers;
  for (Method m : cfg.explainers) report.explainers.push_back(method_name(m));
  report.metrics = cfg.metrics;

  const Dataset expl_set =
      subsample(dataset, cfg.sample_count, derive_seed(cfg.seed, detail::kStreamBenchSample));
  const std::size_t n = expl_set.pairs.size();
  const int d = spec.state_dim;

  std::vector<State> states(n);
  std::vector<int> actions(n);
  for (std::size_t i = 0; i < n; ++i) {
    states[i] = expl_set.pairs[i].state;
    actions[i] = expl_set.pairs[i].action;
  }

  GbdtModel student;
  const bool wants_student = std::find(cfg.explainers.begin(), cfg.explainers.end(),
                                       Method::tabular_shap) != cfg.explainers.end();
  if (wants_student) {
    student = fit_gbdt(dataset, cfg.student_rounds, cfg.student_depth, cfg.student_eta,
                       cfg.student_min_leaf);
    for (const auto& w : student.warnings) report.notes.push_back("student: " + w);
  }

  Scorer scorer = [&policy](const State& s) { return forward(policy, s); };

  FidelityConfig fid_base;
  fid_base.reference_state = spec.reference_state;
  fid_base.feature_std = dataset.feature_std;
  fid_base.sigma_scale = cfg.fidelity_sigma_scale;
  fid_base.n_pert = cfg.n_pert;

  StabilityConfig stab_base;
  stab_base.feature_std = dataset.feature_std;
  stab_base.sigma_scale = cfg.stability_sigma_scale;
  stab_base.n_nbr = cfg.n_nbr;

  std::vector<int> k_range(d);
  for (int k = 1; k <= d; ++k) k_range[k - 1] = k;

  for (std::size_t mi = 0; mi < cfg.explainers.size(); ++mi) {
    const Method method = cfg.explainers[mi];
    const std::string mname = method_name(method);
    const std::uint64_t explain_stream = detail::kStreamBenchExplain + mi;

    auto context_for = [&](std::size_t sample_idx) {
      ExplainContext ctx;
      ctx.policy = &policy;
      ctx.student = wants_student ? &student : nullptr;
      ctx.dataset = &dataset;
      ctx.config = cfg.explainer;
      ctx.config.seed = derive_seed(cfg.seed, explain_stream, sample_idx);
      return ctx;
    };

    std::vector<std::vector<double>> attributions(n);
    std::vector<double> seconds(n, 0.0);
    std::string failure;
    try {
      parallel_for(n, cfg.workers, [&](std::size_t i) {
        const ExplainContext ctx = context_for(i);
        TimedAttribution ta = explain(method, ctx, states[i], actions[i]);
        attributions[i] = std::move(ta.attribution.values);
        seconds[i] = ta.seconds;
      });
    } catch (const std::exception& e) {
      failure = e.what();
    }

    if (failure.empty()) {
      double mean = 0.0;
      for (double v : seconds) mean += v;
      mean /= static_cast<double>(n);
      report.timing.push_back({mname, mean, detail::p95_nearest_rank(seconds)});
    }

    for (const auto& metric : cfg.metrics) {
      BenchCell cell;
      cell.explainer = mname;
      cell.metric = metric;
      if (!failure.empty()) {
        cell.skip_reason = "explainer failed: " + failure;
        report.cells.push_back(std::move(cell));
        continue;
      }
      try {
        if (metric == "aim" || metric == "aum") {
          const bool is_aim = metric == "aim";
          auto fn = [&](int k, TopKMode mode) {
            FidelityConfig fc = fid_base;
            fc.seed = derive_seed(cfg.seed, detail::kStreamBenchFidelity);
            return is_aim ? aim(scorer, states, attributions, k, mode, fc)
                          : aum(scorer, states, attributions, k, mode, fc);
          };
          const MetricCurve curve = curve_and_auc(metric, fn, k_range, /*higher=*/!is_aim);
          cell.ok = true;
          cell.has_mode = true;
          cell.mode_chosen = top_k_mode_name(curve.mode_chosen);
          cell.per_k = curve.per_k;
          cell.value = curve.auc;
        } else if (metric == "pgi" || metric == "pgu") {
          const bool is_pgi = metric == "pgi";
          auto fn = [&](int k, TopKMode mode) {
            std::vector<double> vals(n, 0.0);
            parallel_for(n, cfg.workers, [&](std::size_t i) {
              FidelityConfig fc = fid_base;
              fc.seed = derive_seed(cfg.seed, detail::kStreamBenchFidelity, i);
              vals[i] = is_pgi ? pgi(scorer, states[i], attributions[i], k, mode, fc)
                               : pgu(scorer, states[i], attributions[i], k, mode, fc);
            });
            double total = 0.0;
            for (double v : vals) total += v;
            return total / static_cast<double>(n);
          };
          const MetricCurve curve = curve_and_auc(metric, fn, k_range, /*higher=*/is_pgi);
          cell.ok = true;
          cell.has_mode = true;
          cell.mode_chosen = top_k_mode_name(curve.mode_chosen);
          cell.per_k = curve.per_k;
          cell.value = curve.auc;
        } else {  // ris
          std::vector<double> vals(n, 0.0);
          std::vector<char> defined(n, 0);
          parallel_for(n, cfg.workers, [&](std::size_t i) {
            const ExplainContext ctx = context_for(i);  // explainer seed held fixed per sample
            ExplainValuesFn efn = [&](const State& z, int a) {
              return explain(method, ctx, z, a).attribution.values;
            };
            StabilityConfig sc = stab_base;
            sc.seed = derive_seed(cfg.seed, detail::kStreamBenchStability, i);
            const auto r = ris(efn, scorer, states[i], sc);
            if (r.has_value()) {
              vals[i] = *r;
              defined[i] = 1;
            }
          });
          double total = 0.0;
          int kept = 0;
          for (std::size_t i = 0; i < n; ++i) {
            if (defined[i]) {
              total += vals[i];
              ++kept;
            }
          }
          cell.undefined_count = static_cast<int>(n) - kept;
          if (kept == 0) {
            cell.skip_reason = "ris undefined for every sample (no action-preserving neighbors)";
          } else {
            cell.ok = true;
            cell.value = total / kept;
          }
        }
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.skip_reason = e.what();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// Loads env/policy/dataset from the config paths and runs the grid.
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  auto env = make_env(cfg.env_name);
  const MlpPolicy policy = load_weights(cfg.policy_path);
  const Dataset dataset = read_csv(cfg.dataset_path, env->spec());
  return run_benchmark(cfg, *env, policy, dataset);
}

// ---------------------------------------------------------------------------
// Serialization.  JSON is the canonical record; csv and markdown are
// projections.  All numeric content is deterministic under a fixed config and
// seed except the "timing" section (and the worker count reported with it).

inline nlohmann::json report_to_json(const BenchReport& r) {
  nlohmann::json j;
  j["provenance"] = {
      {"env", r.env},           {"state_dim", r.state_dim},
      {"action_count", r.action_count}, {"seed", r.seed},
      {"config_hash", r.config_hash},   {"dataset_rows", r.dataset_rows},
      {"sample_count", r.sample_count}, {"explainers", r.explainers},
      {"metrics", r.metrics},
  };
  j["results"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cell = {
        {"explainer", c.explainer},
        {"metric", c.metric},
        {"status", c.ok ? "ok" : "skipped"},
    };
    if (c.ok) {
      if (c.has_mode) cell["mode_chosen"] = c.mode_chosen;
      if (!c.per_k.empty()) cell["per_k"] = c.per_k;
      cell["value"] = c.value;
      if (c.metric == "ris") cell["undefined_count"] = c.undefined_count;
    } else {
      cell["skip_reason"] = c.skip_reason;
      if (c.metric == "ris" && c.undefined_count > 0) cell["undefined_count"] = c.undefined_count;
    }
    j["results"].push_back(std::move(cell));
  }
  j["timing"] = nlohmann::json::array();
  for (const auto& t : r.timing)
    j["timing"].push_back({{"explainer", t.explainer},
                           {"mean_seconds", t.mean_seconds},
                           {"p95_seconds", t.p95_seconds}});
  j["timing_workers"] = r.workers;
  j["notes"] = r.notes;
  return j;
}

inline BenchReport report_from_json(const nlohmann::json& j) {
  BenchReport r;
  const auto& p = j.at("provenance");
  r.env = p.at("env").get<std::string>();
  r.state_dim = p.at("state_dim").get<int>();
  r.action_count = p.at("action_count").get<int>();
  r.seed = p.at("seed").get<std::uint64_t>();
  r.config_hash = p.at("config_hash").get<std::string>();
  r.dataset_rows = p.at("dataset_rows").get<std::size_t>();
  r.sample_count = p.at("sample_count").get<int>();
  r.explainers = p.at("explainers").get<std::vector<std::string>>();
  r.metrics = p.at("metrics").get<std::vector<std::string>>();
  for (const auto& cj : j.at("results")) {
    BenchCell c;
    c.explainer = cj.at("explainer").get<std::string>();
    c.metric = cj.at("metric").get<std::string>();
    c.ok = cj.at("status").get<std::string>() == "ok";
    if (c.ok) {
      if (cj.contains("mode_chosen")) {
        c.has_mode = true;
        c.mode_chosen = cj.at("mode_chosen").get<std::string>();
      }
      if (cj.contains("per_k")) c.per_k = cj.at("per_k").get<std::vector<double>>();
      c.value = cj.at("value").get<double>();
    } else {
      c.skip_reason = cj.value("skip_reason", std::string());
    }
    if (cj.contains("undefined_count")) c.undefined_count = cj.at("undefined_count").get<int>();
    r.cells.push_back(std::move(c));
  }
  if (j.contains("timing"))
    for (const auto& tj : j.at("timing"))
      r.timing.push_back({tj.at("explainer").get<std::string>(),
                          tj.at("mean_seconds").get<double>(),
                          tj.at("p95_seconds").get<double>()});
  r.workers = j.value("timing_workers", 1);
  if (j.contains("notes")) r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

inline void render_report_json(const BenchReport& r, std::ostream& f) {
  f << report_to_json(r).dump(2) << '\n';
}

inline void render_report_csv(const BenchReport& r, std::ostream& f) {
  f << "explainer,metric,mode,k,value,note\n";
  for (const auto& c : r.cells) {
    if (!c.ok) {
      f << c.explainer << ',' << c.metric << ",,auc,," << c.skip_reason << '\n';
      continue;
    }
    const std::string mode = c.has_mode ? c.mode_chosen : "";
    for (std::size_t i = 0; i < c.per_k.size(); ++i)
      f << c.explainer << ',' << c.metric << ',' << mode << ',' << (i + 1) << ','
        << detail::format_double(c.per_k[i]) << ",\n";
    f << c.explainer << ',' << c.metric << ',' << mode << ",auc," << detail::format_double(c.value)
      << ',';
    if (c.metric == "ris" && c.undefined_count > 0)
      f << "undefined for " << c.undefined_count << " samples";
    f << '\n';
  }
}

inline void render_report_markdown(const BenchReport& r, std::ostream& f) {
  auto arrow = [](const std::string& m) {
    if (m == "aim" || m == "pgu" || m == "ris") return std::string(" ↓");  // lower is better
    return std::string(" ↑");
  };
  auto upper = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  };
  auto cell_for = [&](const std::string& explainer, const std::string& metric) -> const BenchCell* {
    for (const auto& c : r.cells)
      if (c.explainer == explainer && c.metric == metric) return &c;
    return nullptr;
  };

  f << "# Benchmark report\n\n";
  f << "- env: " << r.env << " (d=" << r.state_dim << ", actions=" << r.action_count << ")\n";
  f << "- samples: " << r.sample_count << " of " << r.dataset_rows << " dataset rows\n";
  f << "- seed: " << r.seed << ", config hash: " << r.config_hash << "\n\n";

  f << "| explainer |";
  for (const auto& m : r.metrics) f << ' ' << upper(m) << arrow(m) << " |";
  f << '\n';
  f << "|---|";
  for (std::size_t i = 0; i < r.metrics.size(); ++i) f << "---|";
  f << '\n';
  char buf[64];
  for (const auto& e : r.explainers) {
    f << "| " << e << " |";
    for (const auto& m : r.metrics) {
      const BenchCell* c = cell_for(e, m);
      if (!c) {
        f << " |";
      } else if (!c->ok) {
        f << " skipped |";
      } else {
        std::snprintf(buf, sizeof(buf), "%.4f", c->value);
        f << ' ' << buf << " |";
      }
    }
    f << '\n';
  }

  if (!r.timing.empty()) {
    f << "\n## Per-sample latency (workers=" << r.workers << ")\n\n";
    f << "| explainer | mean (s) | p95 (s) |\n|---|---|---|\n";
    for (const auto& t : r.timing) {
      std::snprintf(buf, sizeof(buf), "%.6f", t.mean_seconds);
      f << "| " << t.explainer << " | " << buf;
      std::snprintf(buf, sizeof(buf), "%.6f", t.p95_seconds);
      f << " | " << buf << " |\n";
    }
  }
  bool any_skip = false;
  for (const auto& c : r.cells) any_skip = any_skip || !c.ok;
  if (any_skip) {
    f << "\n## Skipped cells\n\n";
    for (const auto& c : r.cells)
      if (!c.ok) f << "- " << c.explainer << "/" << c.metric << ": " << c.skip_reason << '\n';
  }
  if (!r.notes.empty()) {
    f << "\n## Notes\n\n";
    for (const auto& note : r.notes) f << "- " << note << '\n';
  }
}

enum class ReportFormat { json, csv, markdown };

inline void render_report(const BenchReport& r, ReportFormat fmt, std::ostream& out) {
  switch (fmt) {
    case ReportFormat::json: render_report_json(r, out); break;
    case ReportFormat::csv: render_report_csv(r, out); break;
    case ReportFormat::markdown: render_report_markdown(r, out); break;
  }
}

inline void emit_report(const BenchReport& r, ReportFormat fmt, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path.string() + "' for writing");
  render_report(r, fmt, f);
  f.flush();
  if (!f) throw io_error("short write to '" + path.string() + "'");
}

}  // namespace rlex
