#pragma once

// Shared test scaffolding: an exactly-linear policy encoding, a finite
// difference gradient oracle, and a self-cleaning temp directory.

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "rlex/env.hpp"
#include "rlex/policy.hpp"

namespace testsup {

// Encodes q(s) = W s exactly in the fixed [d, 64, 64, A] ReLU architecture:
//   h1[j] = relu(w_j . s + bound) = w_j . s + bound   (for j < A, given
//           bound > max |w_j . s| over the states exercised)
//   h2 = identity(h1),  q[a] = h2[a] - bound = w_a . s
// Unused hidden units carry exact zeros, which the relu gradient masks out,
// so both outputs and input gradients are exact (up to fp rounding).
inline rlex::MlpPolicy make_linear_policy(const std::vector<std::vector<double>>& W, double bound) {
  const int actions = static_cast<int>(W.size());
  const int d = static_cast<int>(W.front().size());
  const int h = rlex::MlpPolicy::kHidden;

  rlex::MlpPolicy p;
  p.input_dim = d;
  p.action_count = actions;
  p.w1.assign(static_cast<std::size_t>(h) * d, 0.0);
  p.b1.assign(h, 0.0);
  p.w2.assign(static_cast<std::size_t>(h) * h, 0.0);
  p.b2.assign(h, 0.0);
  p.w3.assign(static_cast<std::size_t>(actions) * h, 0.0);
  p.b3.assign(actions, 0.0);

  for (int a = 0; a < actions; ++a) {
    for (int i = 0; i < d; ++i) p.w1[static_cast<std::size_t>(a) * d + i] = W[a][i];
    p.b1[a] = bound;
    p.w3[static_cast<std::size_t>(a) * h + a] = 1.0;
    p.b3[a] = -bound;
  }
  for (int j = 0; j < h; ++j) p.w2[static_cast<std::size_t>(j) * h + j] = 1.0;
  return p;
}

// Central-difference gradient of q[action] with respect to the inputs.
inline std::vector<double> fd_gradient(const rlex::MlpPolicy& p, const rlex::State& s, int action,
                                       double h = 1e-4) {
  std::vector<double> g(s.size(), 0.0);
  rlex::State z = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    z[i] = s[i] + h;
    const double up = rlex::forward(p, z)[action];
    z[i] = s[i] - h;
    const double down = rlex::forward(p, z)[action];
    z[i] = s[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "rlex_test_XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    const char* got = mkdtemp(buf.data());
    if (!got) throw std::runtime_error("mkdtemp failed");
    path_ = got;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsup
