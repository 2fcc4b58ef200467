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
// Sparse TF-IDF vectors over token ids with smoothed idf:
//   idf(t) = ln((1 + N) / (1 + df(t))) + 1

#ifndef EXSUM_TFIDF_HPP_
#define EXSUM_TFIDF_HPP_

#include <cmath>
#include <cstddef>
#include <unordered_map>
#include <vector>

#include "exsum/util.hpp"

namespace exsum {

using SparseVec = std::unordered_map<int, double>;

inline double sparse_cosine(const SparseVec& a, const SparseVec& b) {
  const SparseVec& small = a.size() <= b.size() ? a : b;
  const SparseVec& large = a.size() <= b.size() ? b : a;
  double dot = 0.0;
  for (const auto& [k, v] : small) {
    auto it = large.find(k);
    if (it != large.end()) dot += v * it->second;
  }
  auto norm = [](const SparseVec& v) {
    double s = 0.0;
    for (const auto& [k, x] : v) s += x * x;
    return std::sqrt(s);
  };
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

// Smoothed document-frequency idf over a collection of token-id documents.
inline std::vector<double> compute_idf(
    const std::vector<std::vector<int>>& docs, std::size_t vocab_size) {
  std::vector<std::size_t> df(vocab_size, 0);
  std::vector<bool> seen(vocab_size, false);
  for (const auto& doc : docs) {
    for (int t : doc) {
      if (t >= 0 && static_cast<std::size_t>(t) < vocab_size && !seen[t]) {
        seen[t] = true;
        ++df[static_cast<std::size_t>(t)];
      }
    }
    for (int t : doc) {
      if (t >= 0 && static_cast<std::size_t>(t) < vocab_size) seen[t] = false;
    }
  }
  const double n = static_cast<double>(docs.size());
  std::vector<double> idf(vocab_size, 0.0);
  for (std::size_t t = 0; t < vocab_size; ++t) {
    idf[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }
  return idf;
}

inline SparseVec tfidf_vector(const std::vector<int>& tokens,
                              const std::vector<double>& idf) {
  SparseVec tf;
  for (int t : tokens) {
    if (t >= 0 && static_cast<std::size_t>(t) < idf.size()) tf[t] += 1.0;
  }
  for (auto& [t, v] : tf) v *= idf[static_cast<std::size_t>(t)];
  return tf;
}

class TfIdfIndex {
 public:
  static TfIdfIndex build(const std::vector<std::vector<int>>& docs,
                          std::size_t vocab_size) {
    TfIdfIndex index;
    index.idf_ = compute_idf(docs, vocab_size);
    index.vectors_.reserve(docs.size());
    for (const auto& doc : docs) {
      index.vectors_.push_back(tfidf_vector(doc, index.idf_));
    }
    return index;
  }

  const std::vector<double>& idf() const { return idf_; }
  std::size_t size() const { return vectors_.size(); }

  double score(const std::vector<int>& query, std::size_t doc_index) const {
    return sparse_cosine(tfidf_vector(query, idf_), vectors_[doc_index]);
  }

  std::vector<double> scores(const std::vector<int>& query) const {
    const SparseVec q = tfidf_vector(query, idf_);
    std::vector<double> out(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
      out[i] = sparse_cosine(q, vectors_[i]);
    }
    return out;
  }

 private:
  std::vector<double> idf_;
  std::vector<SparseVec> vectors_;
};

}  // namespace exsum

#endif  // EXSUM_TFIDF_HPP_
