#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rlex/errors.hpp"
#include "rlex/gbdt.hpp"

namespace rlex {

struct ShapVector {
  std::vector<double> phi;      // one value per feature
  double base_value = 0.0;      // expected margin at the empty feature set
};

namespace detail {

inline void validate_shap_inputs(const GbdtModel& m, const State& s, int action) {
  check_model_state(m, s);
  if (action < 0 || action >= m.action_count)
    throw input_error("action " + std::to_string(action) + " out of range [0, " +
                      std::to_string(m.action_count) + ")");
  for (const auto& per_action : m.trees) {
    for (const auto& tree : per_action) {
      for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const auto& n = tree.nodes[id];
        if (n.left < 0) continue;
        if (!(n.cover > 0.0) || !(tree.nodes[n.left].cover > 0.0) ||
            !(tree.nodes[n.right].cover > 0.0))
          throw model_error("internal node with zero cover; cannot weight branch averages");
        if (n.feature < 0 || n.feature >= m.feature_count)
          throw model_error("split feature out of range");
      }
    }
  }
}

// --- polynomial-weight decision-path algorithm ------------------------------
// The path records, per unique feature met so far, the fraction of
// "background" weight that flows past the split (zero_fraction, from covers)
// and whether x itself follows it (one_fraction); pweight holds the
// permutation weights for each possible count of active path features.

struct PathElement {
  int feature_index = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

inline void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction,
                        int feature_index) {
  path[depth].feature_index = feature_index;
  path[depth].zero_fraction = zero_fraction;
  path[depth].one_fraction = one_fraction;
  path[depth].pweight = depth == 0 ? 1.0 : 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

inline void unwind_path(PathElement* path, int depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[depth].pweight;

  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) /
                               static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero_fraction * (depth - i));
    }
  }
  for (int i = path_index; i < depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight if the extension at path_index were undone.
inline double unwound_path_sum(const PathElement* path, int depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;

  if (one_fraction != 0.0) {
    for (int i = depth - 1; i >= 0; --i) {
      const double tmp = next_one_portion / static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i);
    }
  } else {
    for (int i = depth - 1; i >= 0; --i) {
      total += path[i].pweight / (zero_fraction * (depth - i));
    }
  }
  return total * (depth + 1);
}

inline void shap_recurse(const RegressionTree& tree, const double* x, std::vector<double>& phi,
                         int node, int depth, PathElement* parent_path, double parent_zero,
                         double parent_one, int parent_feature) {
  PathElement* path = parent_path + depth + 1;
  std::copy(parent_path, parent_path + depth + 1, path);
  extend_path(path, depth, parent_zero, parent_one, parent_feature);

  const auto& nd = tree.nodes[node];
  if (nd.left < 0) {
    for (int i = 1; i <= depth; ++i) {
      const double w = unwound_path_sum(path, depth, i);
      const PathElement& el = path[i];
      phi[el.feature_index] += w * (el.one_fraction - el.zero_fraction) * nd.value;
    }
    return;
  }

  const int hot = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  const int cold = hot == nd.left ? nd.right : nd.left;
  const double hot_zero = tree.nodes[hot].cover / nd.cover;
  const double cold_zero = tree.nodes[cold].cover / nd.cover;

  // a repeated split feature is unwound and its fractions folded into this one
  double incoming_zero = 1.0, incoming_one = 1.0;
  int path_index = 0;
  for (; path_index <= depth; ++path_index)
    if (path[path_index].feature_index == nd.feature) break;
  if (path_index != depth + 1) {
    incoming_zero = path[path_index].zero_fraction;
    incoming_one = path[path_index].one_fraction;
    unwind_path(path, depth, path_index);
    depth -= 1;
  }

  shap_recurse(tree, x, phi, hot, depth + 1, path, hot_zero * incoming_zero, incoming_one,
               nd.feature);
  shap_recurse(tree, x, phi, cold, depth + 1, path, cold_zero * incoming_zero, 0.0, nd.feature);
}

inline void tree_shap_single(const RegressionTree& tree, const double* x, std::vector<double>& phi) {
  const int depth = tree.depth();
  std::vector<PathElement> path_storage(static_cast<std::size_t>(depth + 2) * (depth + 3) / 2 + 4);
  shap_recurse(tree, x, phi, 0, 0, path_storage.data(), 1.0, 1.0, -1);
}

}  // namespace detail

// Per-feature contributions to predict_margin(model, s)[action], with
// base_value + sum(phi) equal to the margin (up to rounding).
inline ShapVector tree_shap(const GbdtModel& m, const State& s, int action) {
  detail::validate_shap_inputs(m, s, action);
  ShapVector out;
  out.phi.assign(m.feature_count, 0.0);
  out.base_value = m.base_score[action];
  std::vector<double> tree_phi(m.feature_count, 0.0);
  for (const auto& tree : m.trees[action]) {
    detail::tree_shap_single(tree, s.data(), tree_phi);
    out.base_value += m.learning_rate * tree.expected_value();
  }
  for (int i = 0; i < m.feature_count; ++i) out.phi[i] = m.learning_rate * tree_phi[i];
  return out;
}

namespace detail {

// Cover-weighted traversal value of one tree when only the features in
// `mask` are fixed to x; all other splits average their branches.
inline double subset_value(const RegressionTree& tree, int node, const double* x,
                           std::uint32_t mask) {
  const auto& nd = tree.nodes[node];
  if (nd.left < 0) return nd.value;
  if ((mask >> nd.feature) & 1u)
    return subset_value(tree, x[nd.feature] <= nd.threshold ? nd.left : nd.right, x, mask);
  const double left = subset_value(tree, nd.left, x, mask);
  const double right = subset_value(tree, nd.right, x, mask);
  return (tree.nodes[nd.left].cover * left + tree.nodes[nd.right].cover * right) / nd.cover;
}

}  // namespace detail

// Power-set Shapley evaluation of the same branch-averaging game the fast
// algorithm plays; exponential in feature count, hence the hard cap.
inline ShapVector brute_shapley(const GbdtModel& m, const State& s, int action) {
  detail::validate_shap_inputs(m, s, action);
  const int d = m.feature_count;
  if (d > 15)
    throw resource_error("brute-force Shapley supports at most 15 features, got " +
                         std::to_string(d));

  const std::uint32_t full = 1u << d;
  std::vector<double> v(full, 0.0);
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    double acc = m.base_score[action];
    for (const auto& tree : m.trees[action])
      acc += m.learning_rate * detail::subset_value(tree, 0, s.data(), mask);
    v[mask] = acc;
  }

  std::vector<double> fact(d + 1, 1.0);
  for (int i = 1; i <= d; ++i) fact[i] = fact[i - 1] * i;

  ShapVector out;
  out.phi.assign(d, 0.0);
  out.base_value = v[0];
  for (int i = 0; i < d; ++i) {
    const std::uint32_t bit = 1u << i;
    double phi = 0.0;
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      if (mask & bit) continue;
      const int size = __builtin_popcount(mask);
      const double weight = fact[size] * fact[d - size - 1] / fact[d];
      phi += weight * (v[mask | bit] - v[mask]);
    }
    out.phi[i] = phi;
  }
  return out;
}

}  // namespace rlex
