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
// ROUGE-1/2/L over token ids, plus the three-way F1 average used to rank
// candidate exemplars. No stemming or stopword filtering.

#ifndef EXSUM_ROUGE_HPP_
#define EXSUM_ROUGE_HPP_

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "exsum/util.hpp"

namespace exsum {

struct RougeTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScores {
  RougeTriple r1;
  RougeTriple r2;
  RougeTriple rl;
  double avg = 0.0;  // (r1.f1 + r2.f1 + rl.f1) / 3
};

// Which component of a triple downstream consumers score with. F1 is the
// default everywhere; recall is available for sensitivity studies.
enum class RougeMode { kF1, kRecall };

inline double rouge_value(const RougeTriple& t, RougeMode mode) {
  return mode == RougeMode::kRecall ? t.recall : t.f1;
}

namespace detail {

inline double harmonic_f1(double p, double r) {
  const double s = p + r;
  return s > 0.0 ? 2.0 * p * r / s : 0.0;
}

// Packs an n-gram (n <= 2) into one key. Ids are non-negative and well below
// 2^31; unigrams use the all-ones sentinel in the low half.
inline std::uint64_t ngram_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

inline std::unordered_map<std::uint64_t, int> ngram_counts(
    std::span<const int> seq, int n) {
  std::unordered_map<std::uint64_t, int> counts;
  if (seq.size() < static_cast<std::size_t>(n)) return counts;
  const std::size_t total = seq.size() - static_cast<std::size_t>(n) + 1;
  counts.reserve(total * 2);
  for (std::size_t i = 0; i < total; ++i) {
    const int a = seq[i];
    const int b = n == 2 ? seq[i + 1] : -1;
    ++counts[ngram_key(a, b)];
  }
  return counts;
}

}  // namespace detail

// Clipped n-gram overlap, n in {1, 2}.
inline RougeTriple rouge_n(std::span<const int> hyp, std::span<const int> ref,
                           int n) {
  if (n != 1 && n != 2) {
    throw DataError("rouge_n supports n in {1,2}, got " + std::to_string(n));
  }
  RougeTriple out;
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t hyp_total = hyp.size() >= nn ? hyp.size() - nn + 1 : 0;
  const std::size_t ref_total = ref.size() >= nn ? ref.size() - nn + 1 : 0;
  if (hyp_total == 0 || ref_total == 0) return out;

  const auto hyp_counts = detail::ngram_counts(hyp, n);
  const auto ref_counts = detail::ngram_counts(ref, n);
  std::size_t overlap = 0;
  for (const auto& [key, count] : hyp_counts) {
    auto it = ref_counts.find(key);
    if (it != ref_counts.end()) {
      overlap += static_cast<std::size_t>(std::min(count, it->second));
    }
  }
  out.precision = static_cast<double>(overlap) / static_cast<double>(hyp_total);
  out.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  out.f1 = detail::harmonic_f1(out.precision, out.recall);
  return out;
}

// Longest common subsequence via the classic DP table.
inline std::size_t lcs_length(std::span<const int> a, std::span<const int> b) {
  if (a.empty() || b.empty()) return 0;
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1, 0);
  std::vector<std::size_t> cur(m + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cur[j + 1] = a[i] == b[j] ? prev[j] + 1 : std::max(cur[j], prev[j + 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline RougeTriple rouge_l(std::span<const int> hyp, std::span<const int> ref) {
  RougeTriple out;
  if (hyp.empty() || ref.empty()) return out;
  const double lcs = static_cast<double>(lcs_length(hyp, ref));
  out.precision = lcs / static_cast<double>(hyp.size());
  out.recall = lcs / static_cast<double>(ref.size());
  out.f1 = detail::harmonic_f1(out.precision, out.recall);
  return out;
}

inline RougeScores rouge_all(std::span<const int> hyp,
                             std::span<const int> ref) {
  RougeScores s;
  s.r1 = rouge_n(hyp, ref, 1);
  s.r2 = rouge_n(hyp, ref, 2);
  s.rl = rouge_l(hyp, ref);
  s.avg = (s.r1.f1 + s.r2.f1 + s.rl.f1) / 3.0;
  return s;
}

// Mean of the three F1 scores (reported x100 in printed tables).
inline double rouge_avg(std::span<const int> hyp, std::span<const int> ref) {
  return rouge_all(hyp, ref).avg;
}

}  // namespace exsum

#endif  // EXSUM_ROUGE_HPP_
