#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlex/dataset.hpp"
#include "rlex/errors.hpp"
#include "rlex/gbdt.hpp"
#include "rlex/policy.hpp"
#include "rlex/random.hpp"
#include "rlex/treeshap.hpp"

namespace rlex {

enum class Method {
  tabular_shap,
  tabular_lime,
  perturbation_saliency,
  sarfa,
  integrated_gradients,
  gradient_shap,
};

inline const std::vector<std::pair<Method, std::string>>& method_table() {
  static const std::vector<std::pair<Method, std::string>> table = {
      {Method::tabular_shap, "tabular_shap"},
      {Method::tabular_lime, "tabular_lime"},
      {Method::perturbation_saliency, "perturbation_saliency"},
      {Method::sarfa, "sarfa"},
      {Method::integrated_gradients, "integrated_gradients"},
      {Method::gradient_shap, "gradient_shap"},
  };
  return table;
}

inline std::string method_name(Method m) {
  for (const auto& [method, name] : method_table())
    if (method == m) return name;
  throw input_error("unknown method enum value");
}

inline Method parse_method(const std::string& name) {
  for (const auto& [method, n] : method_table())
    if (n == name) return method;
  std::string known;
  for (const auto& [method, n] : method_table()) known += (known.empty() ? "" : ", ") + n;
  throw input_error("unknown method '" + name + "' (known: " + known + ")");
}

enum class PerturbKind { mean_replace, gaussian };
enum class IgBaseline { zero, dataset_mean };

struct ExplainerConfig {
  int ig_steps = 64;
  IgBaseline ig_baseline = IgBaseline::zero;
  std::vector<double> ig_baseline_values;  // resolved baseline; empty means all-zero
  int gshap_samples = 64;
  int lime_samples = 1000;
  double lime_kernel_width = 0.0;  // <= 0 selects 0.75 * sqrt(d)
  double lime_ridge = 1e-3;
  PerturbKind perturb = PerturbKind::mean_replace;
  double perturb_sigma_scale = 0.5;
  int perturb_draws = 8;  // gaussian mode averages salience over this many draws
  std::uint64_t seed = 0;
};

struct Attribution {
  Method method = Method::tabular_shap;
  std::vector<double> values;  // one per feature, same scale semantics per method
  int explained_action = 0;
};

// Numerically safe softmax; probabilities sum to 1.
inline std::vector<double> softmax_policy(const std::vector<double>& q) {
  if (q.empty()) throw input_error("softmax of empty vector");
  if (!all_finite(q)) throw input_error("softmax input contains non-finite values");
  double mx = q[0];
  for (double v : q) mx = std::max(mx, v);
  std::vector<double> p(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    p[i] = std::exp(q[i] - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

namespace detail {

constexpr std::uint64_t kStreamGshap = 0x67736870ULL;
constexpr std::uint64_t kStreamPerturb = 0x70657274ULL;
constexpr std::uint64_t kStreamLime = 0x6c696d65ULL;

inline void need_stats(const Dataset& ds, const char* who) {
  if (!ds.has_stats() || ds.feature_mean.empty())
    throw input_error(std::string(who) + " requires a dataset with feature statistics");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Student-model contributions: exact per-feature decomposition of the
// distilled ensemble's margin for the explained action.

inline Attribution explain_tabular_shap(const GbdtModel& student, const State& s, int action) {
  ShapVector sv = tree_shap(student, s, action);
  return {Method::tabular_shap, std::move(sv.phi), action};
}

// ---------------------------------------------------------------------------
// Path-integrated input gradients (midpoint rule, m steps):
//   phi_i = (x_i - b_i) * mean_k dQ[a]/dx_i at b + (k - 0.5)/m * (x - b)

inline Attribution explain_integrated_gradients(const MlpPolicy& policy, const State& s, int action,
                                                const ExplainerConfig& cfg) {
  if (cfg.ig_steps < 1) throw input_error("ig_steps must be >= 1");
  const int d = static_cast<int>(s.size());
  State baseline = cfg.ig_baseline_values;
  if (baseline.empty()) baseline.assign(d, 0.0);
  if (static_cast<int>(baseline.size()) != d)
    throw input_error("baseline dimension does not match state");

  std::vector<double> grad_sum(d, 0.0);
  State point(d);
  for (int k = 0; k < cfg.ig_steps; ++k) {
    const double t = (k + 0.5) / static_cast<double>(cfg.ig_steps);
    for (int i = 0; i < d; ++i) point[i] = baseline[i] + t * (s[i] - baseline[i]);
    const auto g = input_gradient(policy, point, action);
    for (int i = 0; i < d; ++i) grad_sum[i] += g[i];
  }
  Attribution out{Method::integrated_gradients, std::vector<double>(d, 0.0), action};
  for (int i = 0; i < d; ++i)
    out.values[i] = (s[i] - baseline[i]) * grad_sum[i] / static_cast<double>(cfg.ig_steps);
  return out;
}

// ---------------------------------------------------------------------------
// Expected-gradients estimator: baselines drawn from the dataset, interpolation
// points uniform between baseline and x.

inline Attribution explain_gradient_shap(const MlpPolicy& policy, const State& s, int action,
                                         const Dataset& dataset, const ExplainerConfig& cfg) {
  if (cfg.gshap_samples < 1) throw input_error("gshap_samples must be >= 1");
  if (dataset.pairs.empty()) throw input_error("gradient_shap requires a non-empty baseline pool");
  const int d = static_cast<int>(s.size());
  auto eng = make_engine(derive_seed(cfg.seed, detail::kStreamGshap));

  Attribution out{Method::gradient_shap, std::vector<double>(d, 0.0), action};
  State point(d);
  for (int n = 0; n < cfg.gshap_samples; ++n) {
    const State& b = dataset.pairs[uniform_index(eng, dataset.pairs.size())].state;
    const double alpha = uniform_unit(eng);
    for (int i = 0; i < d; ++i) point[i] = b[i] + alpha * (s[i] - b[i]);
    const auto g = input_gradient(policy, point, action);
    for (int i = 0; i < d; ++i) out.values[i] += g[i] * (s[i] - b[i]);
  }
  for (auto& v : out.values) v /= static_cast<double>(cfg.gshap_samples);
  return out;
}

// ---------------------------------------------------------------------------
// Single-feature perturbation scores.  Both methods perturb one feature at a
// time: mean_replace swaps in the dataset mean; gaussian jitters with
// sigma = perturb_sigma_scale * feature_std and averages the score over
// perturb_draws draws.  Zero-variance features never move, so they score 0.

namespace detail {

template <class ScoreFn>
inline std::vector<double> perturb_scores(const State& s, const Dataset& ds,
                                          const ExplainerConfig& cfg, ScoreFn&& score_of) {
  const int d = static_cast<int>(s.size());
  std::vector<double> out(d, 0.0);
  auto eng = make_engine(derive_seed(cfg.seed, kStreamPerturb));
  State z = s;
  for (int i = 0; i < d; ++i) {
    if (cfg.perturb == PerturbKind::mean_replace) {
      z[i] = ds.feature_mean[i];
      out[i] = score_of(z, i);
    } else {
      if (cfg.perturb_draws < 1) throw input_error("perturb_draws must be >= 1");
      double acc = 0.0;
      for (int t = 0; t < cfg.perturb_draws; ++t) {
        z[i] = s[i] + normal_sample(eng, 0.0, cfg.perturb_sigma_scale * ds.feature_std[i]);
        acc += score_of(z, i);
      }
      out[i] = acc / cfg.perturb_draws;
    }
    z[i] = s[i];
  }
  return out;
}

}  // namespace detail

// Action-agnostic squared shift of the softmax policy: 0.5 * ||pi(s) - pi(s')||^2.
inline Attribution explain_perturbation_saliency(const MlpPolicy& policy, const State& s,
                                                 int action, const Dataset& dataset,
                                                 const ExplainerConfig& cfg) {
  detail::need_stats(dataset, "perturbation_saliency");
  const auto pi = softmax_policy(forward(policy, s));
  auto score = [&](const State& z, int) {
    const auto pz = softmax_policy(forward(policy, z));
    double acc = 0.0;
    for (std::size_t a = 0; a < pi.size(); ++a) acc += (pi[a] - pz[a]) * (pi[a] - pz[a]);
    return 0.5 * acc;
  };
  return {Method::perturbation_saliency, detail::perturb_scores(s, dataset, cfg, score), action};
}

// Specificity/relevance harmonic blend.  Specificity is the drop in the
// explained action's probability; relevance is 1/(1+K) with K the KL
// divergence between the renormalized remaining-action distributions.
inline Attribution explain_sarfa(const MlpPolicy& policy, const State& s, int action,
                                 const Dataset& dataset, const ExplainerConfig& cfg) {
  detail::need_stats(dataset, "sarfa");
  const auto pi = softmax_policy(forward(policy, s));
  if (action < 0 || action >= static_cast<int>(pi.size()))
    throw input_error("action out of range");
  constexpr double kFloor = 1e-12;
  const int actions = static_cast<int>(pi.size());

  auto score = [&](const State& z, int) {
    const auto pz = softmax_policy(forward(policy, z));
    const double delta_p = pi[action] - pz[action];
    if (!(delta_p > 0.0)) return 0.0;
    double kl = 0.0;
    const double rem = std::max(1.0 - pi[action], kFloor);
    const double rem_z = std::max(1.0 - pz[action], kFloor);
    for (int b = 0; b < actions; ++b) {
      if (b == action) continue;
      const double qb = pi[b] / rem;
      if (qb <= 0.0) continue;
      const double qzb = pz[b] / rem_z;
      kl += qb * (std::log(std::max(qb, kFloor)) - std::log(std::max(qzb, kFloor)));
    }
    kl = std::max(kl, 0.0);
    const double relevance = 1.0 / (1.0 + kl);
    return 2.0 * delta_p * relevance / (delta_p + relevance);
  };
  return {Method::sarfa, detail::perturb_scores(s, dataset, cfg, score), action};
}

// ---------------------------------------------------------------------------
// Local ridge surrogate of Q[action] around s.  Samples are jittered with the
// per-feature std, weighted by a gaussian kernel on standardized distance,
// and fit on standardized displacements with an unpenalized intercept; the
// coefficients are mapped back to raw feature scale.

inline Attribution explain_tabular_lime(const MlpPolicy& policy, const State& s, int action,
                                        const Dataset& dataset, const ExplainerConfig& cfg) {
  detail::need_stats(dataset, "tabular_lime");
  if (cfg.lime_samples < 2) throw input_error("lime_samples must be >= 2");
  if (!(cfg.lime_ridge > 0.0)) throw input_error("lime_ridge must be positive");
  const int d = static_cast<int>(s.size());
  const double kernel_width =
      cfg.lime_kernel_width > 0.0 ? cfg.lime_kernel_width : 0.75 * std::sqrt(static_cast<double>(d));

  auto eng = make_engine(derive_seed(cfg.seed, detail::kStreamLime));
  const int cols = d + 1;  // intercept first
  std::vector<double> a(static_cast<std::size_t>(cols) * cols, 0.0);
  std::vector<double> rhs(cols, 0.0);
  std::vector<double> u(cols, 0.0);
  State z(d);

  for (int n = 0; n < cfg.lime_samples; ++n) {
    double dist2 = 0.0;
    u[0] = 1.0;
    for (int i = 0; i < d; ++i) {
      const double sd = dataset.feature_std[i];
      if (sd > 0.0) {
        z[i] = s[i] + normal_sample(eng, 0.0, sd);
        u[i + 1] = (z[i] - s[i]) / sd;
        dist2 += u[i + 1] * u[i + 1];
      } else {
        z[i] = s[i];
        u[i + 1] = 0.0;
      }
    }
    const double w = std::exp(-dist2 / (kernel_width * kernel_width));
    const double y = forward(policy, z)[action];
    for (int r = 0; r < cols; ++r) {
      const double wu = w * u[r];
      rhs[r] += wu * y;
      for (int c = r; c < cols; ++c) a[static_cast<std::size_t>(r) * cols + c] += wu * u[c];
    }
  }
  for (int r = 0; r < cols; ++r)
    for (int c = 0; c < r; ++c)
      a[static_cast<std::size_t>(r) * cols + c] = a[static_cast<std::size_t>(c) * cols + r];
  for (int r = 1; r < cols; ++r) a[static_cast<std::size_t>(r) * cols + r] += cfg.lime_ridge;

  // gaussian elimination with partial pivoting
  std::vector<double> beta = rhs;
  for (int col = 0; col < cols; ++col) {
    int pivot = col;
    for (int r = col + 1; r < cols; ++r)
      if (std::abs(a[static_cast<std::size_t>(r) * cols + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * cols + col]))
        pivot = r;
    if (a[static_cast<std::size_t>(pivot) * cols + col] == 0.0)
      throw model_error("singular system in local surrogate fit");
    if (pivot != col) {
      for (int c = 0; c < cols; ++c)
        std::swap(a[static_cast<std::size_t>(pivot) * cols + c],
                  a[static_cast<std::size_t>(col) * cols + c]);
      std::swap(beta[pivot], beta[col]);
    }
    const double diag = a[static_cast<std::size_t>(col) * cols + col];
    for (int r = col + 1; r < cols; ++r) {
      const double factor = a[static_cast<std::size_t>(r) * cols + col] / diag;
      if (factor == 0.0) continue;
      for (int c = col; c < cols; ++c)
        a[static_cast<std::size_t>(r) * cols + c] -= factor * a[static_cast<std::size_t>(col) * cols + c];
      beta[r] -= factor * beta[col];
    }
  }
  for (int col = cols - 1; col >= 0; --col) {
    double acc = beta[col];
    for (int c = col + 1; c < cols; ++c) acc -= a[static_cast<std::size_t>(col) * cols + c] * beta[c];
    beta[col] = acc / a[static_cast<std::size_t>(col) * cols + col];
  }

  Attribution out{Method::tabular_lime, std::vector<double>(d, 0.0), action};
  for (int i = 0; i < d; ++i)
    out.values[i] = dataset.feature_std[i] > 0.0 ? beta[i + 1] / dataset.feature_std[i] : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

struct ExplainContext {
  const MlpPolicy* policy = nullptr;
  const GbdtModel* student = nullptr;
  const Dataset* dataset = nullptr;
  ExplainerConfig config;
};

struct TimedAttribution {
  Attribution attribution;
  double seconds = 0.0;
};

// Single entry point: validates the context carries what the method needs,
// runs it, and records wall-clock duration.
inline TimedAttribution explain(Method method, const ExplainContext& ctx, const State& s,
                                int action) {
  auto need_policy = [&]() -> const MlpPolicy& {
    if (!ctx.policy) throw config_error(method_name(method) + " requires a policy in the context");
    return *ctx.policy;
  };
  auto need_dataset = [&]() -> const Dataset& {
    if (!ctx.dataset) throw config_error(method_name(method) + " requires a dataset in the context");
    return *ctx.dataset;
  };

  const auto t0 = std::chrono::steady_clock::now();
  Attribution a;
  switch (method) {
    case Method::tabular_shap: {
      if (!ctx.student)
        throw config_error("tabular_shap requires a fitted student model in the context");
      a = explain_tabular_shap(*ctx.student, s, action);
      break;
    }
    case Method::tabular_lime:
      a = explain_tabular_lime(need_policy(), s, action, need_dataset(), ctx.config);
      break;
    case Method::perturbation_saliency:
      a = explain_perturbation_saliency(need_policy(), s, action, need_dataset(), ctx.config);
      break;
    case Method::sarfa:
      a = explain_sarfa(need_policy(), s, action, need_dataset(), ctx.config);
      break;
    case Method::integrated_gradients: {
      ExplainerConfig cfg = ctx.config;
      if (cfg.ig_baseline == IgBaseline::dataset_mean && cfg.ig_baseline_values.empty()) {
        const Dataset& ds = need_dataset();
        detail::need_stats(ds, "integrated_gradients with dataset_mean baseline");
        cfg.ig_baseline_values = ds.feature_mean;
      }
      a = explain_integrated_gradients(need_policy(), s, action, cfg);
      break;
    }
    case Method::gradient_shap:
      a = explain_gradient_shap(need_policy(), s, action, need_dataset(), ctx.config);
      break;
  }
  const auto t1 = std::chrono::steady_clock::now();
  return {std::move(a), std::chrono::duration<double>(t1 - t0).count()};
}

}  // namespace rlex
