#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <vector>

#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/policy.hpp"
#include "rlex/random.hpp"

namespace rlex {

struct DqnConfig {
  std::size_t replay_capacity = 50000;
  int batch_size = 64;
  double discount = 0.95;  // keeps bootstrapped targets small enough for plain SGD
  double learning_rate = 0.01;  // plain SGD on the squared TD error
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_steps = 10000;
  std::size_t target_sync_interval = 500;
  std::size_t max_steps = 200000;
  std::size_t max_episode_steps = 200;  // truncation bootstraps; only env terminals cut returns
  std::size_t warmup_transitions = 1000;
  double solve_threshold = 195.0;  // mean return over the trailing 100 episodes
  std::uint64_t seed = 0;
  // Optional observer, called every progress_interval steps (0 = never).
  // Purely informational; must not affect training numerics.
  std::size_t progress_interval = 0;
  std::function<void(std::size_t step, std::size_t episodes, double trailing_mean)> progress;
};

struct TrainResult {
  MlpPolicy policy;
  double trailing_mean_return = 0.0;
  std::size_t steps = 0;
  std::size_t episodes = 0;
  bool solved = false;
};

namespace detail {

struct Transition {
  State state;
  int action = 0;
  double reward = 0.0;
  State next_state;
  bool terminal = false;
};

// Fixed-capacity ring buffer with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  const Transition& sample(std::mt19937_64& eng) const {
    return items_[uniform_index(eng, items_.size())];
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

struct MlpGrads {
  std::vector<double> w1, b1, w2, b2, w3, b3;
  void zero_like(const MlpPolicy& p) {
    w1.assign(p.w1.size(), 0.0);
    b1.assign(p.b1.size(), 0.0);
    w2.assign(p.w2.size(), 0.0);
    b2.assign(p.b2.size(), 0.0);
    w3.assign(p.w3.size(), 0.0);
    b3.assign(p.b3.size(), 0.0);
  }
};

// Accumulates the gradient of 0.5 * (q[action] - target)^2 for one sample.
inline void accumulate_td_gradient(const MlpPolicy& p, const State& s, int action, double delta,
                                   const MlpScratch& sc, MlpGrads& g) {
  const int h = MlpPolicy::kHidden;
  // head layer: dL/dq[a] = delta
  const std::size_t row3 = static_cast<std::size_t>(action) * h;
  for (int j = 0; j < h; ++j) g.w3[row3 + j] += delta * sc.h2[j];
  g.b3[action] += delta;

  std::vector<double> d2(h, 0.0);
  const double* w3row = &p.w3[row3];
  for (int j = 0; j < h; ++j) d2[j] = sc.h2[j] > 0.0 ? delta * w3row[j] : 0.0;

  std::vector<double> d1(h, 0.0);
  for (int j = 0; j < h; ++j) {
    if (d2[j] == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(j) * h;
    for (int i = 0; i < h; ++i) {
      g.w2[row + i] += d2[j] * sc.h1[i];
      d1[i] += p.w2[row + i] * d2[j];
    }
    g.b2[j] += d2[j];
  }
  for (int i = 0; i < h; ++i)
    if (sc.h1[i] <= 0.0) d1[i] = 0.0;

  for (int j = 0; j < h; ++j) {
    if (d1[j] == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(j) * p.input_dim;
    for (int i = 0; i < p.input_dim; ++i) g.w1[row + i] += d1[j] * s[i];
    g.b1[j] += d1[j];
  }
}

inline void sgd_apply(std::vector<double>& w, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

}  // namespace detail

// Uniform-replay, epsilon-greedy deep Q-learning with a periodically synced
// target network and plain SGD.  Fully deterministic under (env, config, seed).
inline TrainResult train_dqn(Environment& env, const DqnConfig& cfg) {
  if (cfg.replay_capacity == 0 || cfg.batch_size < 1)
    throw input_error("replay_capacity and batch_size must be positive");
  if (!(cfg.discount > 0.0 && cfg.discount <= 1.0))
    throw input_error("discount must lie in (0, 1]");
  if (!(cfg.learning_rate > 0.0)) throw input_error("learning_rate must be positive");
  if (cfg.max_episode_steps == 0) throw input_error("max_episode_steps must be positive");

  const auto& spec = env.spec();
  constexpr std::uint64_t kStreamAgent = 0x64716e31ULL;
  constexpr std::uint64_t kStreamEpisode = 0x64716e32ULL;
  auto eng = make_engine(derive_seed(cfg.seed, kStreamAgent));

  TrainResult out;
  out.policy = make_policy(spec.state_dim, spec.action_count, derive_seed(cfg.seed, 0x696e6974ULL));
  MlpPolicy target = out.policy;

  detail::ReplayBuffer replay(cfg.replay_capacity);
  detail::MlpScratch scratch, scratch_target;
  detail::MlpGrads grads;
  std::deque<double> returns;

  auto epsilon_at = [&cfg](std::size_t step) {
    if (cfg.epsilon_decay_steps == 0 || step >= cfg.epsilon_decay_steps) return cfg.epsilon_end;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.epsilon_decay_steps);
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
  };

  State state = env.reset(derive_seed(cfg.seed, kStreamEpisode, 0));
  double episode_return = 0.0;
  std::size_t episode_steps = 0;

  auto finish_episode = [&]() {
    returns.push_back(episode_return);
    if (returns.size() > 100) returns.pop_front();
    ++out.episodes;
    if (returns.size() == 100) {
      const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / 100.0;
      if (mean >= cfg.solve_threshold) out.solved = true;
    }
    episode_return = 0.0;
    episode_steps = 0;
    state = env.reset(derive_seed(cfg.seed, kStreamEpisode, out.episodes));
  };

  for (std::size_t step = 0; step < cfg.max_steps && !out.solved; ++step) {
    out.steps = step + 1;
    int action;
    if (uniform_unit(eng) < epsilon_at(step)) {
      action = static_cast<int>(uniform_index(eng, spec.action_count));
    } else {
      detail::forward_into(out.policy, state.data(), scratch);
      action = argmax_lowest(scratch.q);
    }
    StepOutcome outcome = env.step(action);
    episode_return += outcome.reward;
    ++episode_steps;
    replay.push({state, action, outcome.reward, outcome.next_state, outcome.terminal});

    const bool truncated = !outcome.terminal && episode_steps >= cfg.max_episode_steps;
    if (outcome.terminal || truncated) {
      finish_episode();
    } else {
      state = outcome.next_state;
    }

    if (replay.size() >= std::max<std::size_t>(cfg.warmup_transitions, cfg.batch_size)) {
      grads.zero_like(out.policy);
      double loss = 0.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const detail::Transition& t = replay.sample(eng);
        double target_q = t.reward;
        if (!t.terminal) {
          detail::forward_into(target, t.next_state.data(), scratch_target);
          target_q += cfg.discount * scratch_target.q[argmax_lowest(scratch_target.q)];
        }
        detail::forward_into(out.policy, t.state.data(), scratch);
        const double delta = (scratch.q[t.action] - target_q) / cfg.batch_size;
        loss += 0.5 * (scratch.q[t.action] - target_q) * (scratch.q[t.action] - target_q);
        detail::accumulate_td_gradient(out.policy, t.state, t.action, delta, scratch, grads);
      }
      if (!std::isfinite(loss)) throw training_error("TD loss diverged to a non-finite value", step);
      detail::sgd_apply(out.policy.w1, grads.w1, cfg.learning_rate);
      detail::sgd_apply(out.policy.b1, grads.b1, cfg.learning_rate);
      detail::sgd_apply(out.policy.w2, grads.w2, cfg.learning_rate);
      detail::sgd_apply(out.policy.b2, grads.b2, cfg.learning_rate);
      detail::sgd_apply(out.policy.w3, grads.w3, cfg.learning_rate);
      detail::sgd_apply(out.policy.b3, grads.b3, cfg.learning_rate);
    }

    if (cfg.target_sync_interval > 0 && (step + 1) % cfg.target_sync_interval == 0)
      target = out.policy;

    if (cfg.progress && cfg.progress_interval > 0 && (step + 1) % cfg.progress_interval == 0) {
      const double mean =
          returns.empty() ? 0.0
                          : std::accumulate(returns.begin(), returns.end(), 0.0) /
                                static_cast<double>(returns.size());
      cfg.progress(step + 1, out.episodes, mean);
    }
  }

  if (!returns.empty())
    out.trailing_mean_return =
        std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
  return out;
}

}  // namespace rlex
