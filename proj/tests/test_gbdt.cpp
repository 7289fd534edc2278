#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rlex/dataset.hpp"
#include "rlex/env.hpp"
#include "rlex/gbdt.hpp"
#include "rlex/random.hpp"

using namespace rlex;

namespace {

EnvSpec toy_spec(int d, int actions) {
  EnvSpec s;
  s.name = "toy";
  s.state_dim = d;
  s.action_count = actions;
  for (int i = 0; i < d; ++i) s.feature_names.push_back("f" + std::to_string(i));
  s.reference_state = State(d, 0.0);
  return s;
}

Dataset threshold_dataset(int n, std::uint64_t seed) {
  // action = 1 iff s0 > 0.5, on two iid uniform features
  Dataset ds;
  ds.spec = toy_spec(2, 2);
  auto eng = make_engine(seed);
  for (int i = 0; i < n; ++i) {
    SAPair p;
    p.state = {uniform_in(eng, 0.0, 1.0), uniform_in(eng, 0.0, 1.0)};
    p.action = p.state[0] > 0.5 ? 1 : 0;
    ds.pairs.push_back(std::move(p));
  }
  ds.recompute_stats();
  return ds;
}

}  // namespace

TEST_CASE("the student learns a one-feature threshold rule exactly") {
  const Dataset ds = threshold_dataset(200, 42);
  const GbdtModel model = fit_gbdt(ds, 10, 3, 0.3, 5);
  CHECK(model.warnings.empty());
  for (const auto& p : ds.pairs) CHECK(predict_action(model, p.state) == p.action);
}

TEST_CASE("fitting is deterministic") {
  const Dataset ds = threshold_dataset(150, 7);
  const GbdtModel a = fit_gbdt(ds, 5, 3, 0.2, 5);
  const GbdtModel b = fit_gbdt(ds, 5, 3, 0.2, 5);
  REQUIRE(a.trees.size() == b.trees.size());
  auto eng = make_engine(9);
  for (int t = 0; t < 100; ++t) {
    const State s = {uniform_in(eng, 0.0, 1.0), uniform_in(eng, 0.0, 1.0)};
    CHECK(predict_margin(a, s) == predict_margin(b, s));  // bitwise
  }
}

TEST_CASE("identical states collapse to a single-leaf tree") {
  Dataset ds;
  ds.spec = toy_spec(3, 2);
  for (int i = 0; i < 40; ++i) {
    SAPair p;
    p.state = {1.0, 2.0, 3.0};
    p.action = i % 2;
    ds.pairs.push_back(std::move(p));
  }
  ds.recompute_stats();
  const GbdtModel model = fit_gbdt(ds, 1, 4, 1.0, 5);
  for (int a = 0; a < 2; ++a) {
    REQUIRE(model.trees[a].size() == 1);
    const RegressionTree& tree = model.trees[a][0];
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.is_leaf(0));
    CHECK(tree.nodes[0].cover == 40.0);
    // balanced labels: prior 0.5, base 0, residuals are +-0.5 and average 0
    CHECK(tree.nodes[0].value == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("a single balanced stump takes the hand-computed form") {
  // exact half/half split on s0 at the 0/1 midpoint
  Dataset ds;
  ds.spec = toy_spec(1, 2);
  for (int i = 0; i < 20; ++i) {
    SAPair p;
    p.state = {i < 10 ? 0.0 : 1.0};
    p.action = i < 10 ? 0 : 1;
    ds.pairs.push_back(std::move(p));
  }
  ds.recompute_stats();
  const GbdtModel model = fit_gbdt(ds, 1, 1, 1.0, 5);

  // balanced prior -> base score 0; residuals for class 1 are -0.5 and +0.5
  CHECK(model.base_score[1] == Catch::Approx(0.0).margin(1e-12));
  const RegressionTree& tree = model.trees[1][0];
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].feature == 0);
  CHECK(tree.nodes[0].threshold == Catch::Approx(0.5).margin(1e-12));
  CHECK(tree.nodes[0].cover == 20.0);
  CHECK(tree.predict(State{0.0}.data()) == Catch::Approx(-0.5).margin(1e-12));
  CHECK(tree.predict(State{1.0}.data()) == Catch::Approx(0.5).margin(1e-12));
  // cover-weighted mean of the two leaves is the balanced zero
  CHECK(tree.expected_value() == Catch::Approx(0.0).margin(1e-12));

  const auto m0 = predict_margin(model, {0.0});
  const auto m1 = predict_margin(model, {1.0});
  CHECK(m1[1] == Catch::Approx(0.5).margin(1e-12));
  CHECK(m0[1] == Catch::Approx(-0.5).margin(1e-12));
  CHECK(predict_action(model, {0.0}) == 0);
  CHECK(predict_action(model, {1.0}) == 1);
}

TEST_CASE("split ties prefer the lower feature index") {
  // feature 1 duplicates feature 0, so every split gain ties
  Dataset ds;
  ds.spec = toy_spec(2, 2);
  for (int i = 0; i < 30; ++i) {
    const double v = static_cast<double>(i) / 29.0;
    SAPair p;
    p.state = {v, v};
    p.action = v > 0.5 ? 1 : 0;
    ds.pairs.push_back(std::move(p));
  }
  ds.recompute_stats();
  const GbdtModel model = fit_gbdt(ds, 1, 1, 1.0, 5);
  for (int a = 0; a < 2; ++a) {
    const RegressionTree& tree = model.trees[a][0];
    REQUIRE_FALSE(tree.is_leaf(0));
    CHECK(tree.nodes[0].feature == 0);
  }
}

TEST_CASE("margins re-derive from a straight-line traversal of the stored trees") {
  const Dataset ds = threshold_dataset(120, 3);
  const GbdtModel model = fit_gbdt(ds, 8, 4, 0.1, 5);

  auto walk = [](const RegressionTree& t, const State& s) {
    int id = 0;
    while (t.nodes[id].left >= 0) {
      const auto& n = t.nodes[id];
      id = s[n.feature] <= n.threshold ? n.left : n.right;
    }
    return t.nodes[id].value;
  };
  auto eng = make_engine(77);
  for (int trial = 0; trial < 200; ++trial) {
    const State s = {uniform_in(eng, -0.5, 1.5), uniform_in(eng, -0.5, 1.5)};
    const auto margins = predict_margin(model, s);
    for (int a = 0; a < 2; ++a) {
      double acc = model.base_score[a];
      for (const auto& t : model.trees[a]) acc += model.learning_rate * walk(t, s);
      CHECK(margins[a] == Catch::Approx(acc).margin(1e-12));
    }
  }
}

TEST_CASE("trees respect the depth cap and leaf minimum") {
  const Dataset ds = threshold_dataset(300, 15);
  for (int cap : {1, 2, 4}) {
    const GbdtModel model = fit_gbdt(ds, 6, cap, 0.2, 9);
    for (const auto& per_action : model.trees)
      for (const auto& tree : per_action) {
        CHECK(tree.depth() <= cap);
        for (std::size_t id = 0; id < tree.nodes.size(); ++id)
          if (tree.is_leaf(static_cast<int>(id))) CHECK(tree.nodes[id].cover >= 9.0);
      }
  }
}

TEST_CASE("an absent action yields a warning and a pinned prior") {
  Dataset ds;
  ds.spec = toy_spec(2, 3);  // three actions, only 0 and 1 appear
  auto eng = make_engine(1);
  for (int i = 0; i < 60; ++i) {
    SAPair p;
    p.state = {uniform_in(eng, 0.0, 1.0), uniform_in(eng, 0.0, 1.0)};
    p.action = p.state[0] > 0.5 ? 1 : 0;
    ds.pairs.push_back(std::move(p));
  }
  ds.recompute_stats();
  const GbdtModel model = fit_gbdt(ds, 3, 2, 0.3, 5);
  REQUIRE(model.warnings.size() == 1);
  CHECK(model.warnings[0].find("action 2") != std::string::npos);
  CHECK(model.base_score[2] == Catch::Approx(std::log(1e-6 / (1.0 - 1e-6))).margin(1e-9));
  // class 2 never wins
  for (const auto& p : ds.pairs) CHECK(predict_action(model, p.state) != 2);
}

TEST_CASE("fit and predict validate their inputs") {
  Dataset empty;
  empty.spec = toy_spec(2, 2);
  CHECK_THROWS_AS(fit_gbdt(empty, 1, 1, 0.1, 1), input_error);

  const Dataset ds = threshold_dataset(50, 2);
  CHECK_THROWS_AS(fit_gbdt(ds, 0, 1, 0.1, 1), input_error);
  CHECK_THROWS_AS(fit_gbdt(ds, 1, 0, 0.1, 1), input_error);
  CHECK_THROWS_AS(fit_gbdt(ds, 1, 1, 0.0, 1), input_error);
  CHECK_THROWS_AS(fit_gbdt(ds, 1, 1, 0.1, 0), input_error);

  const GbdtModel model = fit_gbdt(ds, 1, 1, 0.1, 5);
  CHECK_THROWS_AS(predict_margin(model, State{1.0, 2.0, 3.0}), input_error);
}
