#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/random.hpp"

namespace rlex {

struct SAPair {
  State state;
  int action = 0;
};

struct Dataset {
  EnvSpec spec;
  std::vector<SAPair> pairs;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;  // population std; exactly 0 for constant columns

  bool has_stats() const { return !feature_mean.empty(); }

  void recompute_stats() {
    feature_mean.clear();
    feature_std.clear();
    if (pairs.empty()) return;
    const int d = spec.state_dim;
    feature_mean.assign(d, 0.0);
    feature_std.assign(d, 0.0);
    const double n = static_cast<double>(pairs.size());
    for (int i = 0; i < d; ++i) {
      double lo = pairs.front().state[i], hi = lo, sum = 0.0;
      for (const auto& p : pairs) {
        const double v = p.state[i];
        sum += v;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      if (lo == hi) {  // constant column: pin mean and std exactly
        feature_mean[i] = lo;
        feature_std[i] = 0.0;
        continue;
      }
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& p : pairs) {
        const double dv = p.state[i] - mean;
        ss += dv * dv;
      }
      feature_mean[i] = mean;
      feature_std[i] = std::sqrt(ss / n);
    }
  }
};

// Greedy rollouts: records (state, chosen action) before every step.  Episode
// e resets with a seed derived from (seed, e); episodes end at env terminals
// or after max_steps records.
template <class ActFn>
Dataset collect(Environment& env, ActFn&& act, int episodes, int max_steps, std::uint64_t seed) {
  if (episodes < 1 || max_steps < 1) throw input_error("episodes and max_steps must be >= 1");
  constexpr std::uint64_t kStream = 0x636f6c6cULL;
  Dataset out;
  out.spec = env.spec();
  for (int e = 0; e < episodes; ++e) {
    State s = env.reset(derive_seed(seed, kStream, static_cast<std::uint64_t>(e)));
    for (int t = 0; t < max_steps; ++t) {
      const int a = act(s);
      out.pairs.push_back({s, a});
      StepOutcome o = env.step(a);
      if (o.terminal) break;
      s = std::move(o.next_state);
    }
  }
  out.recompute_stats();
  return out;
}

namespace detail {

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double_cell(const std::string& cell, std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw format_error("line " + std::to_string(line) + ", column " + std::to_string(col + 1) +
                       ": cannot parse '" + cell + "' as a number");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string csv_header(int d) {
  std::string h;
  for (int i = 0; i < d; ++i) h += "state_" + std::to_string(i) + ",";
  h += "action";
  return h;
}

}  // namespace detail

// Column layout: state_0,...,state_{d-1},action.  Floats are written in
// shortest round-trip form, so write->read is bit-exact.
inline void render_csv(const Dataset& ds, std::ostream& f) {
  f << detail::csv_header(ds.spec.state_dim) << '\n';
  for (const auto& p : ds.pairs) {
    for (double v : p.state) f << detail::format_double(v) << ',';
    f << p.action << '\n';
  }
}

inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path.string() + "' for writing");
  render_csv(ds, f);
  f.flush();
  if (!f) throw io_error("short write to '" + path.string() + "'");
}

inline Dataset read_csv(const std::filesystem::path& path, const EnvSpec& spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path.string() + "' for reading");
  const int d = spec.state_dim;
  Dataset out;
  out.spec = spec;

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(f, line)) throw format_error("line 1: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != detail::csv_header(d))
    throw format_error("line 1: header mismatch; expected '" + detail::csv_header(d) + "'");

  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 1)
      throw format_error("line " + std::to_string(line_no) + ": expected " + std::to_string(d + 1) +
                         " columns, got " + std::to_string(cells.size()));
    SAPair p;
    p.state.resize(d);
    for (int i = 0; i < d; ++i) p.state[i] = detail::parse_double_cell(cells[i], line_no, i);
    if (!all_finite(p.state))
      throw format_error("line " + std::to_string(line_no) + ": non-finite state value");
    const std::string& acell = cells[d];
    int a = 0;
    auto res = std::from_chars(acell.data(), acell.data() + acell.size(), a);
    if (res.ec != std::errc() || res.ptr != acell.data() + acell.size())
      throw format_error("line " + std::to_string(line_no) + ": cannot parse action '" + acell + "'");
    if (a < 0 || a >= spec.action_count)
      throw format_error("line " + std::to_string(line_no) + ": action " + std::to_string(a) +
                         " outside [0, " + std::to_string(spec.action_count) + ")");
    p.action = a;
    out.pairs.push_back(std::move(p));
  }
  out.recompute_stats();
  return out;
}

// First n slots of a seeded Fisher-Yates permutation of [0, pool_size).
inline std::vector<std::size_t> subsample_indices(std::size_t pool_size, std::size_t n,
                                                  std::uint64_t seed) {
  if (n < 1 || n > pool_size) throw input_error("subsample size must lie in [1, pool size]");
  constexpr std::uint64_t kStream = 0x73756273ULL;
  auto eng = make_engine(derive_seed(seed, kStream));
  std::vector<std::size_t> idx(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(eng, pool_size - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

// Uniform subsample without replacement; stats recomputed on the result.
inline Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  const auto idx = subsample_indices(ds.pairs.size(), n, seed);
  Dataset out;
  out.spec = ds.spec;
  out.pairs.reserve(n);
  for (std::size_t i : idx) out.pairs.push_back(ds.pairs[i]);
  out.recompute_stats();
  return out;
}

}  // namespace rlex
