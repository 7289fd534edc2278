#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/explain.hpp"
#include "rlex/random.hpp"

namespace rlex {

enum class TopKMode { by_absolute_value, by_raw_value };

inline std::string top_k_mode_name(TopKMode m) {
  return m == TopKMode::by_absolute_value ? "by_absolute_value" : "by_raw_value";
}

inline TopKMode parse_top_k_mode(const std::string& name) {
  if (name == "by_absolute_value") return TopKMode::by_absolute_value;
  if (name == "by_raw_value") return TopKMode::by_raw_value;
  throw input_error("unknown top-k mode '" + name + "'");
}

// Indices of the k largest keys (|v| or raw v), ranked best-first; equal keys
// break toward the lower index.
inline std::vector<int> top_k(const std::vector<double>& values, int k, TopKMode mode) {
  const int d = static_cast<int>(values.size());
  if (k < 0 || k > d) throw input_error("k must lie in [0, feature count]");
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](int i) { return mode == TopKMode::by_absolute_value ? std::abs(values[i]) : values[i]; };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return key(a) > key(b); });
  idx.resize(k);
  return idx;
}

// Complement ordering: the k smallest keys, ranked smallest-first.
inline std::vector<int> bottom_k(const std::vector<double>& values, int k, TopKMode mode) {
  const int d = static_cast<int>(values.size());
  if (k < 0 || k > d) throw input_error("k must lie in [0, feature count]");
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](int i) { return mode == TopKMode::by_absolute_value ? std::abs(values[i]) : values[i]; };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return key(a) < key(b); });
  idx.resize(k);
  return idx;
}

inline State mask(const State& s, const std::vector<int>& indices, const State& reference) {
  if (reference.size() != s.size()) throw input_error("reference state dimension mismatch");
  State out = s;
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(s.size())) throw input_error("mask index out of range");
    out[i] = reference[i];
  }
  return out;
}

// Model under evaluation: maps a state to one score per action.
using Scorer = std::function<std::vector<double>(const State&)>;

// Explanation generator used by the stability metric.
using ExplainValuesFn = std::function<std::vector<double>(const State&, int action)>;

struct FidelityConfig {
  State reference_state;            // masking baseline
  std::vector<double> feature_std;  // per-feature population std of the data
  double sigma_scale = 0.1;         // perturbation sigma = sigma_scale * feature_std
  int n_pert = 32;
  std::uint64_t seed = 0;
};

struct StabilityConfig {
  std::vector<double> feature_std;
  double sigma_scale = 0.05;
  int n_nbr = 32;
  double eps_min = 1e-4;   // denominator floor
  double eps_den = 1e-6;   // element-wise normalizer floor
  int p = 2;               // norm order (1 or 2)
  std::uint64_t seed = 0;
};

namespace detail {

constexpr std::uint64_t kStreamFidelity = 0x66696465ULL;
constexpr std::uint64_t kStreamStability = 0x73746162ULL;

inline void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw input_error(std::string("size mismatch in ") + what);
}

// Agreement fraction between argmax on original and masked states.
inline double masked_agreement(const Scorer& model, const std::vector<State>& samples,
                               const std::vector<std::vector<double>>& attributions, int k,
                               TopKMode mode, const FidelityConfig& cfg, bool mask_top) {
  if (samples.empty()) throw input_error("need at least one sample");
  check_same_size(samples.size(), attributions.size(), "samples vs attributions");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_same_size(samples[i].size(), attributions[i].size(), "state vs attribution");
    const auto idx = mask_top ? top_k(attributions[i], k, mode) : bottom_k(attributions[i], k, mode);
    const State masked = mask(samples[i], idx, cfg.reference_state);
    if (argmax_lowest(model(samples[i])) == argmax_lowest(model(masked))) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(samples.size());
}

// Mean |p(x) - p(x')| of the original argmax action's softmax probability
// under gaussian noise on the selected features.  Noise is drawn in ascending
// feature order so equal index sets see equal draws regardless of ranking.
inline double probability_shift(const Scorer& model, const State& x,
                                const std::vector<double>& attribution, int k, TopKMode mode,
                                const FidelityConfig& cfg, bool perturb_top) {
  check_same_size(x.size(), attribution.size(), "state vs attribution");
  check_same_size(x.size(), cfg.feature_std.size(), "state vs feature_std");
  auto idx = perturb_top ? top_k(attribution, k, mode) : bottom_k(attribution, k, mode);
  std::sort(idx.begin(), idx.end());
  const auto q0 = model(x);
  const int a_star = argmax_lowest(q0);
  const double p0 = softmax_policy(q0)[a_star];
  auto eng = make_engine(derive_seed(cfg.seed, kStreamFidelity));
  double acc = 0.0;
  State z = x;
  for (int t = 0; t < cfg.n_pert; ++t) {
    for (int i : idx) z[i] = x[i] + normal_sample(eng, 0.0, cfg.sigma_scale * cfg.feature_std[i]);
    acc += std::abs(p0 - softmax_policy(model(z))[a_star]);
    for (int i : idx) z[i] = x[i];
  }
  return acc / static_cast<double>(cfg.n_pert);
}

inline double pnorm(const std::vector<double>& v, int p) {
  if (p == 1) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
  }
  if (p == 2) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  }
  throw input_error("norm order must be 1 or 2");
}

}  // namespace detail

// Fidelity by deletion: mask the K features the explanation ranks highest and
// measure how often the model's action survives.  Lower is better.
inline double aim(const Scorer& model, const std::vector<State>& samples,
                  const std::vector<std::vector<double>>& attributions, int k, TopKMode mode,
                  const FidelityConfig& cfg) {
  return detail::masked_agreement(model, samples, attributions, k, mode, cfg, /*mask_top=*/true);
}

// Fidelity by retention: mask the K features ranked lowest.  Higher is better.
inline double aum(const Scorer& model, const std::vector<State>& samples,
                  const std::vector<std::vector<double>>& attributions, int k, TopKMode mode,
                  const FidelityConfig& cfg) {
  return detail::masked_agreement(model, samples, attributions, k, mode, cfg, /*mask_top=*/false);
}

// Prediction-gap on important features (top-K perturbed).  Higher is better.
inline double pgi(const Scorer& model, const State& x, const std::vector<double>& attribution,
                  int k, TopKMode mode, const FidelityConfig& cfg) {
  return detail::probability_shift(model, x, attribution, k, mode, cfg, /*perturb_top=*/true);
}

// Prediction-gap on unimportant features (bottom-K perturbed).  Lower is better.
inline double pgu(const Scorer& model, const State& x, const std::vector<double>& attribution,
                  int k, TopKMode mode, const FidelityConfig& cfg) {
  return detail::probability_shift(model, x, attribution, k, mode, cfg, /*perturb_top=*/false);
}

// Relative input stability: worst-case ratio of explanation change to input
// change over gaussian neighbors that keep the predicted action.  Neighbors
// that flip the action are discarded; if none survive the result is empty
// ("undefined"), never NaN.  Lower is better.
inline std::optional<double> ris(const ExplainValuesFn& explain_fn, const Scorer& model,
                                 const State& x, const StabilityConfig& cfg) {
  detail::check_same_size(x.size(), cfg.feature_std.size(), "state vs feature_std");
  if (cfg.n_nbr < 1) throw input_error("n_nbr must be >= 1");
  const int d = static_cast<int>(x.size());
  const int a_star = argmax_lowest(model(x));
  const std::vector<double> e = explain_fn(x, a_star);
  detail::check_same_size(e.size(), x.size(), "explanation vs state");

  auto eng = make_engine(derive_seed(cfg.seed, detail::kStreamStability));
  bool any = false;
  double worst = 0.0;
  State z(d);
  std::vector<double> num(d), den(d);
  for (int t = 0; t < cfg.n_nbr; ++t) {
    for (int i = 0; i < d; ++i)
      z[i] = x[i] + normal_sample(eng, 0.0, cfg.sigma_scale * cfg.feature_std[i]);
    if (argmax_lowest(model(z)) != a_star) continue;
    const std::vector<double> ez = explain_fn(z, a_star);
    for (int i = 0; i < d; ++i) {
      num[i] = (e[i] - ez[i]) / std::max(std::abs(e[i]), cfg.eps_den);
      den[i] = (x[i] - z[i]) / std::max(std::abs(x[i]), cfg.eps_den);
    }
    const double ratio =
        detail::pnorm(num, cfg.p) / std::max(detail::pnorm(den, cfg.p), cfg.eps_min);
    if (!any || ratio > worst) worst = ratio;
    any = true;
  }
  if (!any) return std::nullopt;
  return worst;
}

// ---------------------------------------------------------------------------

struct MetricCurve {
  std::string metric;
  TopKMode mode_chosen = TopKMode::by_absolute_value;
  std::vector<double> per_k;  // metric value at each requested K
  double auc = 0.0;           // arithmetic mean of per_k
};

// Evaluates the metric over k_range under both ranking modes and keeps the
// curve whose AUC is better for the metric's direction.  Ties keep
// by_absolute_value.
inline MetricCurve curve_and_auc(const std::string& metric,
                                 const std::function<double(int, TopKMode)>& metric_fn,
                                 const std::vector<int>& k_range, bool higher_is_better) {
  if (k_range.empty()) throw input_error("k_range must be non-empty");
  for (int k : k_range)
    if (k < 1) throw input_error("k_range entries must be >= 1");

  auto build = [&](TopKMode mode) {
    MetricCurve c;
    c.metric = metric;
    c.mode_chosen = mode;
    c.per_k.reserve(k_range.size());
    double total = 0.0;
    for (int k : k_range) {
      const double v = metric_fn(k, mode);
      c.per_k.push_back(v);
      total += v;
    }
    c.auc = total / static_cast<double>(k_range.size());
    return c;
  };
  MetricCurve abs_curve = build(TopKMode::by_absolute_value);
  MetricCurve raw_curve = build(TopKMode::by_raw_value);
  const bool raw_wins =
      higher_is_better ? raw_curve.auc > abs_curve.auc : raw_curve.auc < abs_curve.auc;
  return raw_wins ? raw_curve : abs_curve;
}

}  // namespace rlex
