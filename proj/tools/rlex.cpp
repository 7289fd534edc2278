// rlex: train small RL policies, explain their decisions per state, and score
// the explanations.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime error.
// Logs go to stderr; data goes to stdout unless --out redirects it.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rlex/bench.hpp"
#include "rlex/dataset.hpp"
#include "rlex/dqn.hpp"
#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/explain.hpp"
#include "rlex/gbdt.hpp"
#include "rlex/metrics.hpp"
#include "rlex/parallel.hpp"
#include "rlex/policy.hpp"
#include "rlex/random.hpp"
#include "rlex/treeshap.hpp"

namespace {

using namespace rlex;

constexpr std::uint64_t kStreamCliSample = 0x636c6973ULL;
constexpr std::uint64_t kStreamCliExplain = 0x636c6965ULL;
constexpr std::uint64_t kStreamCliFidelity = 0x636c6966ULL;
constexpr std::uint64_t kStreamCliStability = 0x636c6974ULL;

// Writes to --out when given, else to stdout.
class OutputTarget {
 public:
  explicit OutputTarget(const std::string& path) : path_(path) {
    if (!path_.empty()) {
      file_.open(path_, std::ios::binary | std::ios::trunc);
      if (!file_) throw io_error("cannot open '" + path_ + "' for writing");
    }
  }
  std::ostream& stream() { return path_.empty() ? std::cout : file_; }
  void finish() {
    stream().flush();
    if (!path_.empty() && !file_) throw io_error("short write to '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream file_;
};

std::vector<std::string> method_name_list() {
  std::vector<std::string> names;
  for (const auto& [m, name] : method_table()) names.push_back(name);
  return names;
}

struct ExplainerFlags {
  int ig_steps = 64;
  std::string ig_baseline = "zero";
  int gshap_samples = 64;
  int lime_samples = 1000;
  double lime_kernel_width = 0.0;  // <= 0: 0.75 * sqrt(d)
  double lime_ridge = 1e-3;
  std::string perturb = "mean_replace";
  double perturb_sigma_scale = 0.5;
  int perturb_draws = 8;
};

struct StudentFlags {
  int rounds = 100;
  int depth = 4;
  double eta = 0.1;
  int min_leaf = 5;
};

void add_explainer_flags(CLI::App* cmd, ExplainerFlags& f) {
  cmd->add_option("--ig-steps", f.ig_steps, "Integration steps for integrated_gradients")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--ig-baseline", f.ig_baseline, "Baseline for integrated_gradients")
      ->check(CLI::IsMember({"zero", "dataset_mean"}))
      ->capture_default_str();
  cmd->add_option("--gshap-samples", f.gshap_samples, "Baseline/interpolation draws for gradient_shap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lime-samples", f.lime_samples, "Local samples for tabular_lime")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lime-kernel-width", f.lime_kernel_width,
                  "Kernel width for tabular_lime (<=0 selects 0.75*sqrt(d))")
      ->capture_default_str();
  cmd->add_option("--lime-ridge", f.lime_ridge, "Ridge penalty for tabular_lime")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--perturb", f.perturb, "Perturbation for perturbation_saliency and sarfa")
      ->check(CLI::IsMember({"mean_replace", "gaussian"}))
      ->capture_default_str();
  cmd->add_option("--perturb-sigma-scale", f.perturb_sigma_scale,
                  "Noise scale (fraction of feature std) for gaussian perturbation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--perturb-draws", f.perturb_draws, "Gaussian draws averaged per feature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_student_flags(CLI::App* cmd, StudentFlags& f) {
  cmd->add_option("--student-rounds", f.rounds, "Boosting rounds for the tabular_shap student")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--student-depth", f.depth, "Max tree depth for the tabular_shap student")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--student-eta", f.eta, "Learning rate for the tabular_shap student")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--student-min-leaf", f.min_leaf, "Min rows per leaf for the tabular_shap student")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

ExplainerConfig to_config(const ExplainerFlags& f) {
  ExplainerConfig c;
  c.ig_steps = f.ig_steps;
  c.ig_baseline = f.ig_baseline == "zero" ? IgBaseline::zero : IgBaseline::dataset_mean;
  c.gshap_samples = f.gshap_samples;
  c.lime_samples = f.lime_samples;
  c.lime_kernel_width = f.lime_kernel_width;
  c.lime_ridge = f.lime_ridge;
  c.perturb = f.perturb == "mean_replace" ? PerturbKind::mean_replace : PerturbKind::gaussian;
  c.perturb_sigma_scale = f.perturb_sigma_scale;
  c.perturb_draws = f.perturb_draws;
  return c;
}

std::string attribution_header(int d) {
  std::string h = "sample_idx,action";
  for (int i = 0; i < d; ++i) h += ",phi_" + std::to_string(i);
  h += ",millis";
  return h;
}

struct AttributionRow {
  std::size_t sample_idx = 0;
  int action = 0;
  std::vector<double> phi;
  double millis = 0.0;
};

std::vector<AttributionRow> read_attributions(const std::string& path, const EnvSpec& spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path + "' for reading");
  const int d = spec.state_dim;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(f, line)) throw format_error("'" + path + "' is empty");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != attribution_header(d))
    throw format_error("line 1: header mismatch, expected '" + attribution_header(d) + "'");
  std::vector<AttributionRow> rows;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = rlex::detail::split_csv_line(line);
    if (cells.size() != static_cast<std::size_t>(d) + 3)
      throw format_error("line " + std::to_string(lineno) + ": expected " + std::to_string(d + 3) +
                         " columns, got " + std::to_string(cells.size()));
    AttributionRow r;
    const double idx = rlex::detail::parse_double_cell(cells[0], lineno, 0);
    if (idx < 0 || idx != static_cast<double>(static_cast<std::size_t>(idx)))
      throw format_error("line " + std::to_string(lineno) + ": sample_idx must be a non-negative integer");
    r.sample_idx = static_cast<std::size_t>(idx);
    const double act = rlex::detail::parse_double_cell(cells[1], lineno, 1);
    if (act != static_cast<double>(static_cast<int>(act)) || act < 0 ||
        act >= spec.action_count)
      throw format_error("line " + std::to_string(lineno) + ": action out of range [0, " +
                         std::to_string(spec.action_count) + ")");
    r.action = static_cast<int>(act);
    r.phi.resize(d);
    for (int i = 0; i < d; ++i) {
      r.phi[i] = rlex::detail::parse_double_cell(cells[2 + i], lineno, 2 + i);
      if (!std::isfinite(r.phi[i]))
        throw format_error("line " + std::to_string(lineno) + ": non-finite attribution value");
    }
    r.millis = rlex::detail::parse_double_cell(cells[2 + d], lineno, 2 + d);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw format_error("'" + path + "' holds no attribution rows");
  return rows;
}

// ---------------------------------------------------------------------------
// Flat key=value benchmark config.

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = s.find(',', start);
    const std::string item = trim(comma == std::string::npos ? s.substr(start)
                                                             : s.substr(start, comma - start));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) return items;
    start = comma + 1;
  }
}

BenchConfig parse_bench_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path + "' for reading");

  std::map<std::string, std::pair<std::string, std::size_t>> kv;  // key -> (value, line)
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw format_error("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw format_error("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw format_error("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = {value, lineno};
  }

  BenchConfig cfg;
  ExplainerFlags ef;
  auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, std::size_t>> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto parse_num = [&](const std::string& key, const std::pair<std::string, std::size_t>& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v.first, &used);
      if (used != v.first.size()) throw std::invalid_argument("trailing characters");
      return d;
    } catch (const std::exception&) {
      throw format_error("config line " + std::to_string(v.second) + ": cannot parse '" + v.first +
                         "' as a number for key '" + key + "'");
    }
  };
  auto take_num = [&](const std::string& key, double fallback) {
    auto v = take(key);
    return v ? parse_num(key, *v) : fallback;
  };

  auto need = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw format_error("config is missing required key '" + key + "'");
    return *v;
  };
  cfg.env_name = need("env").first;
  {
    const auto& names = env_names();
    if (std::find(names.begin(), names.end(), cfg.env_name) == names.end()) {
      std::string known;
      for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
      throw format_error("config key 'env': unknown environment '" + cfg.env_name +
                         "' (known: " + known + ")");
    }
  }
  cfg.policy_path = need("policy").first;
  cfg.dataset_path = need("dataset").first;
  cfg.output_dir = need("output_dir").first;
  cfg.seed = static_cast<std::uint64_t>(parse_num("seed", need("seed")));

  cfg.sample_count = static_cast<int>(take_num("samples", cfg.sample_count));
  cfg.workers = static_cast<int>(take_num("workers", cfg.workers));

  if (auto v = take("explainers")) {
    cfg.explainers.clear();
    for (const auto& name : split_list(v->first)) {
      try {
        cfg.explainers.push_back(parse_method(name));
      } catch (const input_error& e) {
        throw format_error("config line " + std::to_string(v->second) + ": " + e.what());
      }
    }
    if (cfg.explainers.empty())
      throw format_error("config line " + std::to_string(v->second) + ": empty explainer list");
  } else {
    for (const auto& [m, name] : method_table()) cfg.explainers.push_back(m);
  }
  if (auto v = take("metrics")) {
    cfg.metrics = split_list(v->first);
    if (cfg.metrics.empty())
      throw format_error("config line " + std::to_string(v->second) + ": empty metric list");
    for (const auto& m : cfg.metrics)
      if (!metric_known(m)) {
        std::string known;
        for (const auto& n : metric_names()) known += (known.empty() ? "" : ", ") + n;
        throw format_error("config line " + std::to_string(v->second) + ": unknown metric '" + m +
                           "' (known: " + known + ")");
      }
  } else {
    cfg.metrics = metric_names();
  }

  cfg.fidelity_sigma_scale = take_num("fidelity_sigma_scale", cfg.fidelity_sigma_scale);
  cfg.n_pert = static_cast<int>(take_num("n_pert", cfg.n_pert));
  cfg.stability_sigma_scale = take_num("stability_sigma_scale", cfg.stability_sigma_scale);
  cfg.n_nbr = static_cast<int>(take_num("n_nbr", cfg.n_nbr));
  cfg.student_rounds = static_cast<int>(take_num("student_rounds", cfg.student_rounds));
  cfg.student_depth = static_cast<int>(take_num("student_depth", cfg.student_depth));
  cfg.student_eta = take_num("student_eta", cfg.student_eta);
  cfg.student_min_leaf = static_cast<int>(take_num("student_min_leaf", cfg.student_min_leaf));

  ef.ig_steps = static_cast<int>(take_num("ig_steps", ef.ig_steps));
  if (auto v = take("ig_baseline")) {
    if (v->first != "zero" && v->first != "dataset_mean")
      throw format_error("config line " + std::to_string(v->second) +
                         ": ig_baseline must be 'zero' or 'dataset_mean'");
    ef.ig_baseline = v->first;
  }
  ef.gshap_samples = static_cast<int>(take_num("gshap_samples", ef.gshap_samples));
  ef.lime_samples = static_cast<int>(take_num("lime_samples", ef.lime_samples));
  ef.lime_kernel_width = take_num("lime_kernel_width", ef.lime_kernel_width);
  ef.lime_ridge = take_num("lime_ridge", ef.lime_ridge);
  if (auto v = take("perturb")) {
    if (v->first != "mean_replace" && v->first != "gaussian")
      throw format_error("config line " + std::to_string(v->second) +
                         ": perturb must be 'mean_replace' or 'gaussian'");
    ef.perturb = v->first;
  }
  ef.perturb_sigma_scale = take_num("perturb_sigma_scale", ef.perturb_sigma_scale);
  ef.perturb_draws = static_cast<int>(take_num("perturb_draws", ef.perturb_draws));
  cfg.explainer = to_config(ef);

  if (!kv.empty()) {
    const auto& [key, v] = *kv.begin();
    throw format_error("config line " + std::to_string(v.second) + ": unknown key '" + key + "'");
  }
  if (cfg.sample_count < 1) throw format_error("config key 'samples' must be >= 1");
  if (cfg.workers < 1) throw format_error("config key 'workers' must be >= 1");
  return cfg;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

struct TrainArgs {
  std::string env, out = "policy.bin";
  std::uint64_t seed = 0;
  DqnConfig dqn;
};

int run_train(const TrainArgs& a) {
  auto env = make_env(a.env);
  DqnConfig cfg = a.dqn;
  cfg.seed = a.seed;
  cfg.progress_interval = 10000;
  cfg.progress = [](std::size_t step, std::size_t episodes, double mean) {
    std::cerr << "step " << step << ": " << episodes << " episodes, trailing mean return "
              << mean << '\n';
  };
  std::cerr << "training dqn on " << a.env << " (seed " << a.seed << ")\n";
  TrainResult result = train_dqn(*env, cfg);
  save_weights(result.policy, a.out);
  std::cerr << "wrote weights to " << a.out << '\n';
  nlohmann::json j = {{"env", a.env},
                      {"solved", result.solved},
                      {"steps", result.steps},
                      {"episodes", result.episodes},
                      {"trailing_mean_return", result.trailing_mean_return},
                      {"seed", a.seed},
                      {"out", a.out}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct GenerateArgs {
  std::string env, policy, out;
  int episodes = 100;
  int max_steps = 200;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  auto env = make_env(a.env);
  const MlpPolicy policy = load_weights(a.policy);
  if (policy.input_dim != env->spec().state_dim || policy.action_count != env->spec().action_count)
    throw input_error("policy shape (" + std::to_string(policy.input_dim) + " -> " +
                      std::to_string(policy.action_count) + ") does not match env '" + a.env + "'");
  Dataset ds = collect(*env, [&](const State& s) { return act_greedy(policy, s); }, a.episodes,
                       a.max_steps, a.seed);
  OutputTarget out(a.out);
  render_csv(ds, out.stream());
  out.finish();
  std::cerr << "collected " << ds.pairs.size() << " (state, action) pairs over " << a.episodes
            << " episodes\n";
  return 0;
}

struct ExplainArgs {
  std::string method, env, policy, dataset, out;
  int samples = 500;
  std::uint64_t seed = 0;
  int workers = 1;
  ExplainerFlags flags;
  StudentFlags student;
};

int run_explain(const ExplainArgs& a) {
  auto env = make_env(a.env);
  const EnvSpec& spec = env->spec();
  const Method method = parse_method(a.method);
  const MlpPolicy policy = load_weights(a.policy);
  if (policy.input_dim != spec.state_dim || policy.action_count != spec.action_count)
    throw input_error("policy shape does not match env '" + a.env + "'");
  const Dataset dataset = read_csv(a.dataset, spec);

  const auto indices = subsample_indices(dataset.pairs.size(), a.samples,
                                         derive_seed(a.seed, kStreamCliSample));
  GbdtModel student;
  if (method == Method::tabular_shap) {
    std::cerr << "fitting student model (" << a.student.rounds << " rounds, depth "
              << a.student.depth << ")\n";
    student = fit_gbdt(dataset, a.student.rounds, a.student.depth, a.student.eta,
                       a.student.min_leaf);
    for (const auto& w : student.warnings) std::cerr << "warning: " << w << '\n';
  }

  const std::size_t n = indices.size();
  std::vector<TimedAttribution> results(n);
  parallel_for(n, a.workers, [&](std::size_t i) {
    ExplainContext ctx;
    ctx.policy = &policy;
    ctx.student = method == Method::tabular_shap ? &student : nullptr;
    ctx.dataset = &dataset;
    ctx.config = to_config(a.flags);
    ctx.config.seed = derive_seed(a.seed, kStreamCliExplain, i);
    const SAPair& p = dataset.pairs[indices[i]];
    results[i] = explain(method, ctx, p.state, p.action);
  });

  OutputTarget out(a.out);
  std::ostream& f = out.stream();
  f << attribution_header(spec.state_dim) << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    const Attribution& at = results[i].attribution;
    f << indices[i] << ',' << at.explained_action;
    for (double v : at.values) f << ',' << rlex::detail::format_double(v);
    f << ',' << rlex::detail::format_double(results[i].seconds * 1000.0) << '\n';
  }
  out.finish();
  std::cerr << "explained " << n << " samples with " << a.method << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string metric, env, policy, dataset, attributions, out;
  std::string method;  // required for ris
  std::uint64_t seed = 0;
  int workers = 1;
  double sigma_scale = 0.1;
  int n_pert = 32;
  double stability_sigma_scale = 0.05;
  int n_nbr = 32;
  int p = 2;
  ExplainerFlags flags;
  StudentFlags student;
};

int run_evaluate(const EvaluateArgs& a) {
  auto env = make_env(a.env);
  const EnvSpec& spec = env->spec();
  const MlpPolicy policy = load_weights(a.policy);
  if (policy.input_dim != spec.state_dim || policy.action_count != spec.action_count)
    throw input_error("policy shape does not match env '" + a.env + "'");
  const Dataset dataset = read_csv(a.dataset, spec);
  const auto rows = read_attributions(a.attributions, spec);

  const std::size_t n = rows.size();
  std::vector<State> states(n);
  std::vector<std::vector<double>> attrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].sample_idx >= dataset.pairs.size())
      throw format_error("attribution row " + std::to_string(i + 2) + ": sample_idx " +
                         std::to_string(rows[i].sample_idx) + " exceeds dataset size " +
                         std::to_string(dataset.pairs.size()));
    states[i] = dataset.pairs[rows[i].sample_idx].state;
    attrs[i] = rows[i].phi;
  }

  Scorer scorer = [&policy](const State& s) { return forward(policy, s); };
  FidelityConfig fid;
  fid.reference_state = spec.reference_state;
  fid.feature_std = dataset.feature_std;
  fid.sigma_scale = a.sigma_scale;
  fid.n_pert = a.n_pert;

  const int d = spec.state_dim;
  std::vector<int> k_range(d);
  for (int k = 1; k <= d; ++k) k_range[k - 1] = k;

  nlohmann::json j;
  j["metric"] = a.metric;
  j["n_samples"] = n;
  j["seed"] = a.seed;

  if (a.metric == "aim" || a.metric == "aum") {
    const bool is_aim = a.metric == "aim";
    auto fn = [&](int k, TopKMode mode) {
      FidelityConfig fc = fid;
      fc.seed = derive_seed(a.seed, kStreamCliFidelity);
      return is_aim ? aim(scorer, states, attrs, k, mode, fc)
                    : aum(scorer, states, attrs, k, mode, fc);
    };
    const MetricCurve c = curve_and_auc(a.metric, fn, k_range, !is_aim);
    j["mode_chosen"] = top_k_mode_name(c.mode_chosen);
    j["per_k"] = c.per_k;
    j["auc"] = c.auc;
  } else if (a.metric == "pgi" || a.metric == "pgu") {
    const bool is_pgi = a.metric == "pgi";
    auto fn = [&](int k, TopKMode mode) {
      std::vector<double> vals(n, 0.0);
      parallel_for(n, a.workers, [&](std::size_t i) {
        FidelityConfig fc = fid;
        fc.seed = derive_seed(a.seed, kStreamCliFidelity, i);
        vals[i] = is_pgi ? pgi(scorer, states[i], attrs[i], k, mode, fc)
                         : pgu(scorer, states[i], attrs[i], k, mode, fc);
      });
      double total = 0.0;
      for (double v : vals) total += v;
      return total / static_cast<double>(n);
    };
    const MetricCurve c = curve_and_auc(a.metric, fn, k_range, is_pgi);
    j["mode_chosen"] = top_k_mode_name(c.mode_chosen);
    j["per_k"] = c.per_k;
    j["auc"] = c.auc;
  } else {  // ris: recomputes explanations around each sample, so needs --method
    if (a.method.empty())
      throw config_error("evaluate --metric ris requires --method to recompute explanations");
    const Method method = parse_method(a.method);
    GbdtModel student;
    if (method == Method::tabular_shap)
      student = fit_gbdt(dataset, a.student.rounds, a.student.depth, a.student.eta,
                         a.student.min_leaf);

    StabilityConfig stab;
    stab.feature_std = dataset.feature_std;
    stab.sigma_scale = a.stability_sigma_scale;
    stab.n_nbr = a.n_nbr;
    stab.p = a.p;

    std::vector<double> vals(n, 0.0);
    std::vector<char> defined(n, 0);
    parallel_for(n, a.workers, [&](std::size_t i) {
      ExplainContext ctx;
      ctx.policy = &policy;
      ctx.student = method == Method::tabular_shap ? &student : nullptr;
      ctx.dataset = &dataset;
      ctx.config = to_config(a.flags);
      ctx.config.seed = derive_seed(a.seed, kStreamCliExplain, i);
      ExplainValuesFn efn = [&](const State& z, int action) {
        return explain(method, ctx, z, action).attribution.values;
      };
      StabilityConfig sc = stab;
      sc.seed = derive_seed(a.seed, kStreamCliStability, i);
      const auto r = ris(efn, scorer, states[i], sc);
      if (r.has_value()) {
        vals[i] = *r;
        defined[i] = 1;
      }
    });
    double total = 0.0;
    int kept = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (defined[i]) {
        total += vals[i];
        ++kept;
      }
    j["mode_chosen"] = nullptr;           // ris has no top-K ranking mode
    j["per_k"] = nlohmann::json::array();
    j["auc"] = kept > 0 ? nlohmann::json(total / kept) : nlohmann::json(nullptr);
    j["undefined_count"] = static_cast<int>(n) - kept;
  }

  OutputTarget out(a.out);
  out.stream() << j.dump(2) << '\n';
  out.finish();
  return 0;
}

int run_bench_cmd(const std::string& config_path) {
  const BenchConfig cfg = parse_bench_config(config_path);
  std::filesystem::create_directories(cfg.output_dir);
  std::cerr << "running benchmark: " << cfg.explainers.size() << " explainers x "
            << cfg.metrics.size() << " metrics, " << cfg.sample_count << " samples\n";
  const BenchReport report = run_benchmark(cfg);
  const std::filesystem::path dir(cfg.output_dir);
  emit_report(report, ReportFormat::json, dir / "report.json");
  emit_report(report, ReportFormat::csv, dir / "report.csv");
  emit_report(report, ReportFormat::markdown, dir / "report.md");
  std::cerr << "wrote " << (dir / "report.json").string() << ", report.csv, report.md\n";
  return 0;
}

int run_report(const std::string& input, const std::string& format, const std::string& out_path) {
  std::ifstream f(input, std::ios::binary);
  if (!f) throw io_error("cannot open '" + input + "' for reading");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("'" + input + "' is not valid report JSON: " + e.what());
  }
  BenchReport report;
  try {
    report = report_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("'" + input + "' is missing report fields: " + e.what());
  }
  const ReportFormat fmt = format == "json"  ? ReportFormat::json
                           : format == "csv" ? ReportFormat::csv
                                             : ReportFormat::markdown;
  OutputTarget out(out_path);
  render_report(report, fmt, out.stream());
  out.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 1 << 16);
  std::setvbuf(stderr, nullptr, _IOLBF, 1 << 16);

  CLI::App app{"Train small RL policies, explain their per-state decisions, and score the explanations"};
  app.require_subcommand(1);

  const auto envs = env_names();
  const auto methods = method_name_list();

  TrainArgs train;
  CLI::App* cmd_train = app.add_subcommand("train-policy", "Train a DQN policy and save its weights");
  cmd_train->add_option("--env", train.env, "Environment name")->required()->check(CLI::IsMember(envs));
  cmd_train->add_option("--seed", train.seed, "RNG seed (required for reproducibility)")->required();
  cmd_train->add_option("--out", train.out, "Weight file path")->capture_default_str();
  cmd_train->add_option("--replay-capacity", train.dqn.replay_capacity)->capture_default_str();
  cmd_train->add_option("--batch-size", train.dqn.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  cmd_train->add_option("--discount", train.dqn.discount)->capture_default_str();
  cmd_train->add_option("--lr", train.dqn.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  cmd_train->add_option("--epsilon-start", train.dqn.epsilon_start)->capture_default_str();
  cmd_train->add_option("--epsilon-end", train.dqn.epsilon_end)->capture_default_str();
  cmd_train->add_option("--epsilon-decay-steps", train.dqn.epsilon_decay_steps)->capture_default_str();
  cmd_train->add_option("--target-sync", train.dqn.target_sync_interval)->capture_default_str();
  cmd_train->add_option("--max-steps", train.dqn.max_steps)->capture_default_str();
  cmd_train->add_option("--max-episode-steps", train.dqn.max_episode_steps)->capture_default_str();
  cmd_train->add_option("--warmup", train.dqn.warmup_transitions)->capture_default_str();
  cmd_train->add_option("--solve-threshold", train.dqn.solve_threshold)->capture_default_str();

  GenerateArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("generate-dataset", "Roll out a policy and record (state, action) pairs as CSV");
  cmd_gen->add_option("--env", gen.env, "Environment name")->required()->check(CLI::IsMember(envs));
  cmd_gen->add_option("--policy", gen.policy, "Weight file from train-policy")->required();
  cmd_gen->add_option("--episodes", gen.episodes, "Episodes to roll out")->required()->check(CLI::PositiveNumber);
  cmd_gen->add_option("--max-steps", gen.max_steps, "Step cap per episode")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed, "RNG seed (required for reproducibility)")->required();
  cmd_gen->add_option("--out", gen.out, "Output CSV path (default: stdout)");

  ExplainArgs expl;
  CLI::App* cmd_expl = app.add_subcommand("explain", "Attribute policy decisions to state features");
  cmd_expl->add_option("--method", expl.method, "Explanation method")->required()->check(CLI::IsMember(methods));
  cmd_expl->add_option("--env", expl.env, "Environment name")->required()->check(CLI::IsMember(envs));
  cmd_expl->add_option("--policy", expl.policy, "Weight file from train-policy")->required();
  cmd_expl->add_option("--dataset", expl.dataset, "CSV from generate-dataset")->required();
  cmd_expl->add_option("--samples", expl.samples, "Rows to explain (subsampled without replacement)")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_expl->add_option("--seed", expl.seed, "RNG seed (required for reproducibility)")->required();
  cmd_expl->add_option("--out", expl.out, "Output CSV path (default: stdout)");
  cmd_expl->add_option("--workers", expl.workers, "Worker threads (any value gives identical numbers)")->check(CLI::PositiveNumber)->capture_default_str();
  add_explainer_flags(cmd_expl, expl.flags);
  add_student_flags(cmd_expl, expl.student);

  EvaluateArgs ev;
  CLI::App* cmd_ev = app.add_subcommand("evaluate", "Score an attribution file with a fidelity or stability metric");
  cmd_ev->add_option("--metric", ev.metric, "Metric name")->required()->check(CLI::IsMember(metric_names()));
  cmd_ev->add_option("--env", ev.env, "Environment name")->required()->check(CLI::IsMember(envs));
  cmd_ev->add_option("--policy", ev.policy, "Weight file from train-policy")->required();
  cmd_ev->add_option("--dataset", ev.dataset, "CSV from generate-dataset")->required();
  cmd_ev->add_option("--attributions", ev.attributions, "CSV from explain")->required();
  cmd_ev->add_option("--seed", ev.seed, "RNG seed (required for reproducibility)")->required();
  cmd_ev->add_option("--out", ev.out, "Output JSON path (default: stdout)");
  cmd_ev->add_option("--workers", ev.workers, "Worker threads (any value gives identical numbers)")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_ev->add_option("--sigma-scale", ev.sigma_scale, "Perturbation scale for pgi/pgu")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_ev->add_option("--n-pert", ev.n_pert, "Perturbations per sample for pgi/pgu")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_ev->add_option("--stability-sigma-scale", ev.stability_sigma_scale, "Neighborhood scale for ris")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_ev->add_option("--n-nbr", ev.n_nbr, "Neighbors per sample for ris")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_ev->add_option("--p", ev.p, "Norm order for ris")->check(CLI::IsMember({1, 2}))->capture_default_str();
  cmd_ev->add_option("--method", ev.method, "Explanation method (required for --metric ris)")->check(CLI::IsMember(methods));
  add_explainer_flags(cmd_ev, ev.flags);
  add_student_flags(cmd_ev, ev.student);

  std::string bench_config;
  CLI::App* cmd_bench = app.add_subcommand("benchmark", "Run an explainer x metric grid from a key=value config file");
  cmd_bench->add_option("--config", bench_config, "Flat key=value config file")->required();

  std::string rep_input, rep_format, rep_out;
  CLI::App* cmd_rep = app.add_subcommand("report", "Re-render an existing report.json");
  cmd_rep->add_option("--input", rep_input, "Path to report.json")->required();
  cmd_rep->add_option("--format", rep_format, "Output format")->required()->check(CLI::IsMember({"json", "csv", "markdown"}));
  cmd_rep->add_option("--out", rep_out, "Output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_gen->parsed()) return run_generate(gen);
    if (cmd_expl->parsed()) return run_explain(expl);
    if (cmd_ev->parsed()) return run_evaluate(ev);
    if (cmd_bench->parsed()) return run_bench_cmd(bench_config);
    if (cmd_rep->parsed()) return run_report(rep_input, rep_format, rep_out);
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
