#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "rlex/errors.hpp"
#include "rlex/random.hpp"

namespace rlex {

using State = std::vector<double>;

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_count = 0;
  std::vector<std::string> feature_names;
  State reference_state;  // masking baseline; all zeros for the built-in envs
};

struct StepOutcome {
  State next_state;
  double reward = 0.0;
  bool terminal = false;
};

inline bool all_finite(const State& values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

// Shared tie rule: first index holding the maximum wins.
inline int argmax_lowest(const std::vector<double>& values) {
  if (values.empty()) throw input_error("argmax of empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  // Starts a new episode; the returned state is a pure function of (env kind, seed).
  virtual State reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(int action) = 0;

 protected:
  void check_action(int action) const {
    if (action < 0 || action >= spec().action_count)
      throw input_error("invalid action " + std::to_string(action) + " for env '" + spec().name +
                        "' with " + std::to_string(spec().action_count) + " actions");
  }
  void check_live(bool live) const {
    if (!live) throw input_error("step on env '" + spec().name + "' without a live episode");
  }
};

// ---------------------------------------------------------------------------
// Cart-pole balancing.  Euler-integrated dynamics: gravity 9.8, cart mass 1.0,
// pole mass 0.1, pole half-length 0.5, push force 10, time step 0.02.
// Actions: 0 pushes left, 1 pushes right.  The episode ends when the cart
// leaves +-2.4 or the pole tilts past 12 degrees.

inline State cartpole_euler_step(const State& s, double force) {
  constexpr double gravity = 9.8;
  constexpr double cart_mass = 1.0;
  constexpr double pole_mass = 0.1;
  constexpr double total_mass = cart_mass + pole_mass;
  constexpr double half_length = 0.5;
  constexpr double pole_mass_length = pole_mass * half_length;
  constexpr double tau = 0.02;

  const double x = s[0], x_dot = s[1], theta = s[2], theta_dot = s[3];
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (gravity * sin_t - cos_t * temp) /
                           (half_length * (4.0 / 3.0 - pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
  // semi-implicit would reuse updated velocities; this is the plain Euler form
  return {x + tau * x_dot, x_dot + tau * x_acc, theta + tau * theta_dot, theta_dot + tau * theta_acc};
}

class CartPole final : public Environment {
 public:
  static constexpr double kPositionLimit = 2.4;
  static constexpr double kAngleLimit = 12.0 * 3.14159265358979323846 / 180.0;

  CartPole() {
    spec_.name = "cartpole";
    spec_.state_dim = 4;
    spec_.action_count = 2;
    spec_.feature_names = {"cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"};
    spec_.reference_state = State(4, 0.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  State reset(std::uint64_t seed) override {
    auto eng = make_engine(derive_seed(seed, kStream));
    state_.resize(4);
    for (auto& v : state_) v = uniform_in(eng, -0.05, 0.05);
    live_ = true;
    return state_;
  }

  StepOutcome step(int action) override {
    check_live(live_);
    check_action(action);
    const double force = action == 1 ? 10.0 : -10.0;
    state_ = cartpole_euler_step(state_, force);
    const bool fell = std::abs(state_[0]) > kPositionLimit || std::abs(state_[2]) > kAngleLimit;
    if (fell) live_ = false;
    return {state_, fell ? 0.0 : 1.0, fell};
  }

 private:
  static constexpr std::uint64_t kStream = 0x63617274ULL;
  EnvSpec spec_;
  State state_;
  bool live_ = false;
};

// ---------------------------------------------------------------------------
// Scrolling-pipes hopper on a 100-unit-tall strip.  The bird sits at x=0;
// three upcoming pipe pairs scroll toward it at 3 units per step.  Flapping
// (action 1) sets vertical speed to +5, gravity then subtracts 1 per step.
// A pipe reaching the bird (dx <= 0) kills unless the bird is strictly inside
// its gap, in which case the pipe recycles to the back of the queue with a
// freshly drawn gap.  Leaving [0, 100] also kills.  Reward 1 per survived step.
//
// Step order: apply action; gravity; move bird; advance pipes; front-pipe
// collision/recycle; bounds check.

class FlappyBirdLite final : public Environment {
 public:
  static constexpr double kHeight = 100.0;
  static constexpr double kFlapSpeed = 5.0;
  static constexpr double kPipeSpeed = 3.0;
  static constexpr double kPipeSpacing = 30.0;
  static constexpr double kGapHalf = 10.0;

  FlappyBirdLite() {
    spec_.name = "flappybird-lite";
    spec_.state_dim = 12;
    spec_.action_count = 2;
    spec_.feature_names = {"bird_y",       "bird_vy",      "pipe1_dx",     "pipe1_gap_top",
                           "pipe1_gap_bottom", "pipe2_dx",     "pipe2_gap_top", "pipe2_gap_bottom",
                           "pipe3_dx",     "pipe3_gap_top", "pipe3_gap_bottom", "steps_since_flap"};
    spec_.reference_state = State(12, 0.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  State reset(std::uint64_t seed) override {
    eng_ = make_engine(derive_seed(seed, kStream));
    y_ = 50.0;
    vy_ = 0.0;
    since_flap_ = 0.0;
    pipes_.clear();
    for (int i = 0; i < 3; ++i) pipes_.push_back({kPipeSpacing * (i + 1), draw_gap_center()});
    live_ = true;
    return observe();
  }

  StepOutcome step(int action) override {
    check_live(live_);
    check_action(action);
    if (action == 1) {
      vy_ = kFlapSpeed;
      since_flap_ = 0.0;
    } else {
      since_flap_ += 1.0;
    }
    vy_ -= 1.0;
    y_ += vy_;
    for (auto& p : pipes_) p.dx -= kPipeSpeed;

    bool dead = false;
    if (pipes_.front().dx <= 0.0) {
      const auto& front = pipes_.front();
      if (y_ >= front.center + kGapHalf || y_ <= front.center - kGapHalf) {
        dead = true;
      } else {
        const double tail = pipes_.back().dx;
        pipes_.pop_front();
        pipes_.push_back({tail + kPipeSpacing, draw_gap_center()});
      }
    }
    if (y_ <= 0.0 || y_ >= kHeight) dead = true;
    if (dead) live_ = false;
    return {observe(), dead ? 0.0 : 1.0, dead};
  }

 private:
  struct Pipe {
    double dx;
    double center;
  };

  double draw_gap_center() { return 30.0 + static_cast<double>(eng_() % 41ULL); }

  State observe() const {
    State s;
    s.reserve(12);
    s.push_back(y_);
    s.push_back(vy_);
    for (const auto& p : pipes_) {
      s.push_back(p.dx);
      s.push_back(p.center + kGapHalf);
      s.push_back(p.center - kGapHalf);
    }
    s.push_back(since_flap_);
    return s;
  }

  static constexpr std::uint64_t kStream = 0x666c6170ULL;
  EnvSpec spec_;
  std::mt19937_64 eng_;
  std::deque<Pipe> pipes_;
  double y_ = 0.0, vy_ = 0.0, since_flap_ = 0.0;
  bool live_ = false;
};

// ---------------------------------------------------------------------------
// Synthetic stream of iid uniform states with a known linear ground truth.
// reset draws the state as the seeded generator's first d values in [-1, 1);
// each step draws a fresh state from the same stream.  Never terminal: callers
// bound episodes by step count.

class SyntheticLinear final : public Environment {
 public:
  static constexpr int kDim = 8;
  static constexpr int kActions = 3;

  SyntheticLinear() {
    spec_.name = "synthetic-linear";
    spec_.state_dim = kDim;
    spec_.action_count = kActions;
    for (int i = 0; i < kDim; ++i) spec_.feature_names.push_back("feature_" + std::to_string(i));
    spec_.reference_state = State(kDim, 0.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  State reset(std::uint64_t seed) override {
    eng_ = make_engine(derive_seed(seed, kStream));
    live_ = true;
    return draw();
  }

  StepOutcome step(int action) override {
    check_live(live_);
    check_action(action);
    return {draw(), 0.0, false};
  }

 private:
  State draw() {
    State s(kDim);
    for (auto& v : s) v = uniform_in(eng_, -1.0, 1.0);
    return s;
  }

  static constexpr std::uint64_t kStream = 0x73796e74ULL;
  EnvSpec spec_;
  std::mt19937_64 eng_;
  bool live_ = false;
};

// Fixed linear scoring model planted in the synthetic env.  Each row's entries
// strictly decrease in magnitude, and feature 0 dominates every pairwise
// action contrast, so the known per-sample importance |W[a][i] * s[i]| has an
// unambiguous interpretation as the feature ranking a faithful explainer of
// the induced greedy policy should recover.
struct PlantedTruthModel {
  std::array<std::array<double, SyntheticLinear::kDim>, SyntheticLinear::kActions> weights;

  std::vector<double> score(const State& s) const {
    if (static_cast<int>(s.size()) != SyntheticLinear::kDim)
      throw input_error("planted model expects dimension " + std::to_string(SyntheticLinear::kDim));
    std::vector<double> q(SyntheticLinear::kActions, 0.0);
    for (int a = 0; a < SyntheticLinear::kActions; ++a)
      for (int i = 0; i < SyntheticLinear::kDim; ++i) q[a] += weights[a][i] * s[i];
    return q;
  }

  int act(const State& s) const { return argmax_lowest(score(s)); }

  double importance(int action, const State& s, int feature) const {
    return std::abs(weights[action][feature] * s[feature]);
  }

  int top_feature(int action, const State& s) const {
    int best = 0;
    double best_val = importance(action, s, 0);
    for (int i = 1; i < SyntheticLinear::kDim; ++i) {
      const double v = importance(action, s, i);
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    return best;
  }
};

inline PlantedTruthModel planted_truth_model(const EnvSpec& spec) {
  if (spec.name != "synthetic-linear" || spec.state_dim != SyntheticLinear::kDim ||
      spec.action_count != SyntheticLinear::kActions)
    throw input_error("planted truth model is defined only for the synthetic-linear env");
  PlantedTruthModel m;
  m.weights = {{
      {+2.0, -0.30, -0.10, +0.033, +0.011, -0.0037, +0.0012, -0.0004},
      {-0.8, +0.08, -0.027, +0.009, -0.003, +0.001, -0.0003, +0.0001},
      {-2.0, -0.30, +0.10, -0.033, +0.011, +0.0037, -0.0012, -0.0004},
  }};
  return m;
}

// ---------------------------------------------------------------------------

inline std::vector<std::string> env_names() {
  return {"cartpole", "flappybird-lite", "synthetic-linear"};
}

inline std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "cartpole") return std::make_unique<CartPole>();
  if (name == "flappybird-lite") return std::make_unique<FlappyBirdLite>();
  if (name == "synthetic-linear") return std::make_unique<SyntheticLinear>();
  std::string known;
  for (const auto& n : env_names()) known += (known.empty() ? "" : ", ") + n;
  throw input_error("unknown env '" + name + "' (known: " + known + ")");
}

}  // namespace rlex
