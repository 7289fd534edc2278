#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlex/dataset.hpp"
#include "rlex/errors.hpp"

namespace rlex {

// Axis-aligned binary regression tree.  Internal nodes route x[feature] <=
// threshold to the left child; cover is the training row count that reached
// each node, so cover(parent) == cover(left) + cover(right) by construction.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;   // -1 marks a leaf
    int right = -1;
    double value = 0.0;  // leaf prediction; unused on internal nodes
    double cover = 0.0;
  };

  std::vector<Node> nodes;  // node 0 is the root

  bool is_leaf(int id) const { return nodes[id].left < 0; }

  double predict(const double* x) const {
    int id = 0;
    while (!is_leaf(id)) {
      const Node& n = nodes[id];
      id = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[id].value;
  }

  int depth_from(int id) const {
    if (is_leaf(id)) return 0;
    return 1 + std::max(depth_from(nodes[id].left), depth_from(nodes[id].right));
  }
  int depth() const { return nodes.empty() ? 0 : depth_from(0); }

  // Cover-weighted mean of leaf values: the tree's output at an empty
  // feature set.
  double expected_value() const { return expected_from(0); }
  double expected_from(int id) const {
    const Node& n = nodes[id];
    if (is_leaf(id)) return n.value;
    return (nodes[n.left].cover * expected_from(n.left) +
            nodes[n.right].cover * expected_from(n.right)) /
           n.cover;
  }
};

// One-vs-rest logistic ensemble: margin[a] = base_score[a] +
// learning_rate * sum of trees[a].
struct GbdtModel {
  int feature_count = 0;
  int action_count = 0;
  double learning_rate = 0.1;
  std::vector<double> base_score;
  std::vector<std::vector<RegressionTree>> trees;  // [action][round]
  std::vector<std::string> warnings;
};

namespace detail {

inline double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Exact greedy least-squares split: every midpoint between consecutive
// distinct sorted values of every feature is a candidate.  Scanning features
// and thresholds in ascending order and keeping strict improvements makes the
// (lower feature, lower threshold) tie rule automatic.
inline SplitChoice best_split(const std::vector<const double*>& rows,
                              const std::vector<double>& residual,
                              const std::vector<std::size_t>& node_rows, int feature_count,
                              int min_leaf, std::vector<std::pair<double, double>>& scratch) {
  SplitChoice best;
  const std::size_t n = node_rows.size();
  if (n < 2 * static_cast<std::size_t>(min_leaf)) return best;

  double total = 0.0;
  for (std::size_t r : node_rows) total += residual[r];
  const double parent_score = total * total / static_cast<double>(n);

  for (int f = 0; f < feature_count; ++f) {
    scratch.clear();
    for (std::size_t r : node_rows) scratch.emplace_back(rows[r][f], residual[r]);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += scratch[i].second;
      const std::size_t left_n = i + 1;
      const std::size_t right_n = n - left_n;
      if (left_n < static_cast<std::size_t>(min_leaf)) continue;
      if (right_n < static_cast<std::size_t>(min_leaf)) break;
      if (scratch[i].first == scratch[i + 1].first) continue;  // not a boundary
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                          right_sum * right_sum / static_cast<double>(right_n) - parent_score;
      if (gain > best.gain) {
        double thr = (scratch[i].first + scratch[i + 1].first) / 2.0;
        if (thr >= scratch[i + 1].first) thr = scratch[i].first;  // adjacent doubles
        best.found = true;
        best.feature = f;
        best.threshold = thr;
        best.gain = gain;
      }
    }
  }
  return best;
}

inline int build_tree_node(RegressionTree& tree, const std::vector<const double*>& rows,
                           const std::vector<double>& residual, std::vector<std::size_t>& node_rows,
                           int depth_left, int feature_count, int min_leaf,
                           std::vector<std::pair<double, double>>& scratch) {
  double sum = 0.0;
  for (std::size_t r : node_rows) sum += residual[r];
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  tree.nodes[id].cover = static_cast<double>(node_rows.size());
  tree.nodes[id].value = sum / static_cast<double>(node_rows.size());
  if (depth_left == 0) return id;

  const SplitChoice split = best_split(rows, residual, node_rows, feature_count, min_leaf, scratch);
  if (!split.found || !(split.gain > 0.0)) return id;

  std::vector<std::size_t> left_rows, right_rows;
  for (std::size_t r : node_rows)
    (rows[r][split.feature] <= split.threshold ? left_rows : right_rows).push_back(r);
  node_rows.clear();
  node_rows.shrink_to_fit();

  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  const int left = build_tree_node(tree, rows, residual, left_rows, depth_left - 1, feature_count,
                                   min_leaf, scratch);
  tree.nodes[id].left = left;
  const int right = build_tree_node(tree, rows, residual, right_rows, depth_left - 1, feature_count,
                                    min_leaf, scratch);
  tree.nodes[id].right = right;
  return id;
}

inline RegressionTree fit_tree(const std::vector<const double*>& rows,
                               const std::vector<double>& residual, int max_depth,
                               int feature_count, int min_leaf) {
  RegressionTree tree;
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<std::pair<double, double>> scratch;
  build_tree_node(tree, rows, residual, all, max_depth, feature_count, min_leaf, scratch);
  return tree;
}

}  // namespace detail

// Gradient boosting on the logistic loss, one binary ensemble per action.
// Each round fits a depth-capped least-squares tree to y - sigmoid(margin).
inline GbdtModel fit_gbdt(const Dataset& ds, int rounds = 100, int max_depth = 4,
                          double learning_rate = 0.1, int min_leaf = 5) {
  if (ds.pairs.empty()) throw input_error("cannot fit on an empty dataset");
  if (rounds < 1) throw input_error("rounds must be >= 1");
  if (max_depth < 1) throw input_error("max_depth must be >= 1");
  if (min_leaf < 1) throw input_error("min_leaf must be >= 1");
  if (!(learning_rate > 0.0)) throw input_error("learning_rate must be positive");

  const std::size_t n = ds.pairs.size();
  const int d = ds.spec.state_dim;
  const int actions = ds.spec.action_count;

  GbdtModel model;
  model.feature_count = d;
  model.action_count = actions;
  model.learning_rate = learning_rate;
  model.base_score.resize(actions);
  model.trees.resize(actions);

  std::vector<const double*> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = ds.pairs[i].state.data();

  for (int a = 0; a < actions; ++a) {
    std::vector<double> y(n, 0.0);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ds.pairs[i].action == a) {
        y[i] = 1.0;
        ++positives;
      }
    }
    if (positives == 0)
      model.warnings.push_back("action " + std::to_string(a) +
                               " absent from dataset; its margin stays near the clamped prior");
    double prior = static_cast<double>(positives) / static_cast<double>(n);
    prior = std::min(1.0 - 1e-6, std::max(1e-6, prior));
    model.base_score[a] = std::log(prior / (1.0 - prior));

    std::vector<double> margin(n, model.base_score[a]);
    std::vector<double> residual(n);
    model.trees[a].reserve(rounds);
    for (int r = 0; r < rounds; ++r) {
      for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - detail::sigmoid(margin[i]);
      RegressionTree tree = detail::fit_tree(rows, residual, max_depth, d, min_leaf);
      for (std::size_t i = 0; i < n; ++i) margin[i] += learning_rate * tree.predict(rows[i]);
      model.trees[a].push_back(std::move(tree));
    }
  }
  return model;
}

inline void check_model_state(const GbdtModel& m, const State& s) {
  if (static_cast<int>(s.size()) != m.feature_count)
    throw input_error("state has dimension " + std::to_string(s.size()) + ", model expects " +
                      std::to_string(m.feature_count));
}

inline std::vector<double> predict_margin(const GbdtModel& m, const State& s) {
  check_model_state(m, s);
  std::vector<double> margins(m.action_count, 0.0);
  for (int a = 0; a < m.action_count; ++a) {
    double acc = m.base_score[a];
    for (const auto& tree : m.trees[a]) acc += m.learning_rate * tree.predict(s.data());
    margins[a] = acc;
  }
  return margins;
}

inline int predict_action(const GbdtModel& m, const State& s) {
  return argmax_lowest(predict_margin(m, s));
}

}  // namespace rlex
