#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rlex/env.hpp"
#include "rlex/errors.hpp"
#include "rlex/random.hpp"

namespace rlex {

using QValues = std::vector<double>;

// Q-network: two ReLU hidden layers of width 64, linear head.
// Weight matrices are row-major; evaluation is pure (no internal state).
struct MlpPolicy {
  static constexpr int kHidden = 64;
  int input_dim = 0;
  int action_count = 0;
  std::vector<double> w1, b1;  // kHidden x input_dim
  std::vector<double> w2, b2;  // kHidden x kHidden
  std::vector<double> w3, b3;  // action_count x kHidden

  bool shape_ok() const {
    const std::size_t h = kHidden;
    return input_dim >= 1 && action_count >= 1 && w1.size() == h * input_dim && b1.size() == h &&
           w2.size() == h * h && b2.size() == h &&
           w3.size() == static_cast<std::size_t>(action_count) * h &&
           b3.size() == static_cast<std::size_t>(action_count);
  }
};

// Uniform +-1/sqrt(fan_in) init, fully determined by the seed.
inline MlpPolicy make_policy(int input_dim, int action_count, std::uint64_t seed) {
  if (input_dim < 1 || action_count < 1)
    throw input_error("policy needs input_dim >= 1 and action_count >= 1");
  constexpr std::uint64_t kStream = 0x6d6c7069ULL;
  auto eng = make_engine(derive_seed(seed, kStream));
  const int h = MlpPolicy::kHidden;
  MlpPolicy p;
  p.input_dim = input_dim;
  p.action_count = action_count;
  auto fill = [&eng](std::vector<double>& v, std::size_t n, double bound) {
    v.resize(n);
    for (auto& x : v) x = uniform_in(eng, -bound, bound);
  };
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(h));
  fill(p.w1, static_cast<std::size_t>(h) * input_dim, in_bound);
  fill(p.b1, h, in_bound);
  fill(p.w2, static_cast<std::size_t>(h) * h, hid_bound);
  fill(p.b2, h, hid_bound);
  fill(p.w3, static_cast<std::size_t>(action_count) * h, hid_bound);
  fill(p.b3, action_count, hid_bound);
  return p;
}

namespace detail {

struct MlpScratch {
  std::vector<double> h1, h2, q;
};

// Forward pass into caller-owned buffers; h1/h2 hold post-ReLU activations
// (h > 0 iff pre-activation > 0, which is exactly the ReLU subgradient mask
// with the value-0 convention).
inline void forward_into(const MlpPolicy& p, const double* s, MlpScratch& sc) {
  const int h = MlpPolicy::kHidden;
  sc.h1.assign(h, 0.0);
  sc.h2.assign(h, 0.0);
  sc.q.assign(p.action_count, 0.0);
  for (int j = 0; j < h; ++j) {
    double z = p.b1[j];
    const double* row = &p.w1[static_cast<std::size_t>(j) * p.input_dim];
    for (int i = 0; i < p.input_dim; ++i) z += row[i] * s[i];
    sc.h1[j] = z > 0.0 ? z : 0.0;
  }
  for (int j = 0; j < h; ++j) {
    double z = p.b2[j];
    const double* row = &p.w2[static_cast<std::size_t>(j) * h];
    for (int i = 0; i < h; ++i) z += row[i] * sc.h1[i];
    sc.h2[j] = z > 0.0 ? z : 0.0;
  }
  for (int a = 0; a < p.action_count; ++a) {
    double z = p.b3[a];
    const double* row = &p.w3[static_cast<std::size_t>(a) * h];
    for (int i = 0; i < h; ++i) z += row[i] * sc.h2[i];
    sc.q[a] = z;
  }
}

}  // namespace detail

inline void check_policy_state(const MlpPolicy& p, const State& s) {
  if (!p.shape_ok()) throw model_error("policy has inconsistent weight shapes");
  if (static_cast<int>(s.size()) != p.input_dim)
    throw input_error("state has dimension " + std::to_string(s.size()) + ", policy expects " +
                      std::to_string(p.input_dim));
  if (!all_finite(s)) throw input_error("state contains non-finite values");
}

inline QValues forward(const MlpPolicy& p, const State& s) {
  check_policy_state(p, s);
  detail::MlpScratch sc;
  detail::forward_into(p, s.data(), sc);
  return sc.q;
}

// Exact reverse-mode dQ[action]/ds.
inline std::vector<double> input_gradient(const MlpPolicy& p, const State& s, int action) {
  check_policy_state(p, s);
  if (action < 0 || action >= p.action_count)
    throw input_error("action " + std::to_string(action) + " out of range");
  const int h = MlpPolicy::kHidden;
  detail::MlpScratch sc;
  detail::forward_into(p, s.data(), sc);

  std::vector<double> g2(h, 0.0);
  const double* w3row = &p.w3[static_cast<std::size_t>(action) * h];
  for (int j = 0; j < h; ++j) g2[j] = sc.h2[j] > 0.0 ? w3row[j] : 0.0;

  std::vector<double> g1(h, 0.0);
  for (int j = 0; j < h; ++j) {
    if (g2[j] == 0.0) continue;
    const double* row = &p.w2[static_cast<std::size_t>(j) * h];
    for (int i = 0; i < h; ++i) g1[i] += row[i] * g2[j];
  }
  for (int i = 0; i < h; ++i)
    if (sc.h1[i] <= 0.0) g1[i] = 0.0;

  std::vector<double> gs(p.input_dim, 0.0);
  for (int j = 0; j < h; ++j) {
    if (g1[j] == 0.0) continue;
    const double* row = &p.w1[static_cast<std::size_t>(j) * p.input_dim];
    for (int i = 0; i < p.input_dim; ++i) gs[i] += row[i] * g1[j];
  }
  return gs;
}

inline int act_greedy(const MlpPolicy& p, const State& s) { return argmax_lowest(forward(p, s)); }

// ---------------------------------------------------------------------------
// Weight file: magic "RLEXMLP\0", u32 version (=1), u32 dims {input, 64, 64,
// actions}, then the six weight blocks as little-endian float64, row-major,
// in order w1 b1 w2 b2 w3 b3.

namespace detail {

constexpr char kWeightMagic[8] = {'R', 'L', 'E', 'X', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kWeightVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void save_weights(const MlpPolicy& p, const std::filesystem::path& path) {
  if (!p.shape_ok()) throw model_error("refusing to save policy with inconsistent shapes");
  std::string out;
  out.append(detail::kWeightMagic, 8);
  detail::put_u32(out, detail::kWeightVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p.input_dim));
  detail::put_u32(out, MlpPolicy::kHidden);
  detail::put_u32(out, MlpPolicy::kHidden);
  detail::put_u32(out, static_cast<std::uint32_t>(p.action_count));
  auto block = [&out](const std::vector<double>& v) {
    const std::size_t off = out.size();
    out.resize(off + v.size() * sizeof(double));
    std::memcpy(out.data() + off, v.data(), v.size() * sizeof(double));
  };
  block(p.w1);
  block(p.b1);
  block(p.w2);
  block(p.b2);
  block(p.w3);
  block(p.b3);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw io_error("short write to '" + path.string() + "'");
}

inline MlpPolicy load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());

  auto need = [&](std::size_t wanted) {
    if (data.size() < wanted)
      throw format_error("weight file '" + path.string() + "' truncated: expected " +
                         std::to_string(wanted - data.size()) + " more bytes");
  };
  need(8 + 4 * 5);
  if (std::memcmp(data.data(), detail::kWeightMagic, 8) != 0)
    throw format_error("weight file '" + path.string() + "' has wrong magic bytes");
  const std::uint32_t version = detail::get_u32(bytes + 8);
  if (version != detail::kWeightVersion)
    throw format_error("weight file '" + path.string() + "' has unsupported version " +
                       std::to_string(version));
  const std::uint32_t dim = detail::get_u32(bytes + 12);
  const std::uint32_t h1 = detail::get_u32(bytes + 16);
  const std::uint32_t h2 = detail::get_u32(bytes + 20);
  const std::uint32_t actions = detail::get_u32(bytes + 24);
  if (h1 != MlpPolicy::kHidden || h2 != MlpPolicy::kHidden)
    throw format_error("weight file '" + path.string() + "' has unsupported hidden widths " +
                       std::to_string(h1) + "x" + std::to_string(h2));
  if (dim < 1 || dim > 65536 || actions < 1 || actions > 65536)
    throw format_error("weight file '" + path.string() + "' has implausible dims");

  const std::size_t h = MlpPolicy::kHidden;
  const std::size_t doubles = h * dim + h + h * h + h + static_cast<std::size_t>(actions) * h + actions;
  need(28 + doubles * sizeof(double));
  if (data.size() > 28 + doubles * sizeof(double))
    throw format_error("weight file '" + path.string() + "' has trailing bytes");

  MlpPolicy p;
  p.input_dim = static_cast<int>(dim);
  p.action_count = static_cast<int>(actions);
  std::size_t off = 28;
  auto block = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    std::memcpy(v.data(), data.data() + off, n * sizeof(double));
    off += n * sizeof(double);
  };
  block(p.w1, h * dim);
  block(p.b1, h);
  block(p.w2, h * h);
  block(p.b2, h);
  block(p.w3, static_cast<std::size_t>(actions) * h);
  block(p.b3, actions);
  return p;
}

}  // namespace rlex
