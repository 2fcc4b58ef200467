// Copyright 2026 The exsum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Shared test helpers: independent oracles and a central finite-difference
// gradient checker. Everything here is deliberately written without reusing
// the library's own computation paths.

#ifndef EXSUM_TESTS_SUPPORT_HPP_
#define EXSUM_TESTS_SUPPORT_HPP_

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "exsum/tensor.hpp"
#include "exsum/util.hpp"

namespace exsum_test {

// Brute-force ROUGE-N: enumerate n-grams into multisets and count clipped
// matches by repeated removal.
struct OracleTriple {
  double p = 0, r = 0, f1 = 0;
};

inline OracleTriple oracle_rouge_n(const std::vector<int>& hyp,
                                   const std::vector<int>& ref, int n) {
  auto grams = [n](const std::vector<int>& seq) {
    std::vector<std::vector<int>> out;
    if (seq.size() < static_cast<std::size_t>(n)) return out;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
      out.emplace_back(seq.begin() + i, seq.begin() + i + n);
    }
    return out;
  };
  const auto h = grams(hyp);
  auto r = grams(ref);
  OracleTriple out;
  if (h.empty() || r.empty()) return out;
  std::size_t overlap = 0;
  for (const auto& g : h) {
    auto it = std::find(r.begin(), r.end(), g);
    if (it != r.end()) {
      r.erase(it);
      ++overlap;
    }
  }
  const std::size_t ref_total = grams(ref).size();
  out.p = static_cast<double>(overlap) / static_cast<double>(h.size());
  out.r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  out.f1 = (out.p + out.r) > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

// Memoized recursive LCS, independent of the DP-table implementation.
inline std::size_t oracle_lcs(const std::vector<int>& a,
                              const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go =
      [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::size_t best;
    if (a[i] == b[j]) {
      best = 1 + go(i + 1, j + 1);
    } else {
      best = std::max(go(i + 1, j), go(i, j + 1));
    }
    memo.emplace(key, best);
    return best;
  };
  return go(0, 0);
}

// Central finite-difference gradient check at step h. `forward` must be a
// deterministic pure function of the parameter values. Checks up to
// max_coords_per_param coordinates of each parameter (all when 0).
struct GradCheckResult {
  double max_err = 0.0;
  std::size_t checked = 0;
  bool ok = true;
  std::string worst;
};

inline GradCheckResult grad_check(
    const std::function<exsum::Tensor()>& forward,
    const std::vector<exsum::Tensor>& params, double h = 1e-5,
    double tol = 1e-4, std::size_t max_coords_per_param = 0,
    exsum::Rng* pick_rng = nullptr) {
  GradCheckResult res;
  for (auto p : params) p.zero_grad();
  exsum::Tensor loss = forward();
  loss.backward();

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    exsum::Tensor p = params[pi];
    auto& vals = p.values();
    std::vector<std::size_t> coords;
    if (max_coords_per_param == 0 || p.size() <= max_coords_per_param) {
      for (std::size_t i = 0; i < p.size(); ++i) coords.push_back(i);
    } else {
      exsum::Rng fallback(17);
      exsum::Rng& rng = pick_rng ? *pick_rng : fallback;
      for (std::size_t i = 0; i < max_coords_per_param; ++i) {
        coords.push_back(rng.index(p.size()));
      }
    }
    for (std::size_t i : coords) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double fp = forward().item();
      vals[i] = saved - h;
      const double fm = forward().item();
      vals[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = p.grad()[i];
      const double denom = std::max(std::abs(ad), std::abs(fd));
      double err = 0.0;
      if (denom >= 1e-6) {
        err = std::abs(ad - fd) / denom;
        if (std::abs(ad - fd) < 1e-9) err = 0.0;
      }
      ++res.checked;
      if (err > res.max_err) {
        res.max_err = err;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "param %zu coord %zu: ad=%.8g fd=%.8g",
                      pi, i, ad, fd);
        res.worst = buf;
      }
      if (err >= tol) res.ok = false;
    }
  }
  return res;
}

// Unique scratch directory under the build tree.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("exsum_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace exsum_test

#endif  // EXSUM_TESTS_SUPPORT_HPP_
