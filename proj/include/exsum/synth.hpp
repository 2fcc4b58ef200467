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
// Seeded synthetic corpora with topic clusters. Summaries inside a cluster
// share a phrasing scaffold, so exemplar style genuinely transfers between
// same-cluster records.
//
// Each cluster splits into two subtypes with their own summary scaffold.
// Documents reveal the subtype only through marker words that never occur in
// any summary, so term matching can locate the cluster at best while a
// trained encoder can also resolve the subtype.
//
// Two styles:
//  - clustered: documents and summaries share topic keywords; documents swap
//    in doc-only variant forms for half of the keyword mentions, which
//    weakens purely lexical doc->summary matching without touching the
//    summary-to-summary labels.
//  - paraphrase: documents and summaries use disjoint surface vocabularies
//    for the same concepts (synonym substitution); lexical doc->summary
//    matching carries almost no signal while summary-side labels stay strong.

#ifndef EXSUM_SYNTH_HPP_
#define EXSUM_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "exsum/corpus.hpp"
#include "exsum/util.hpp"

namespace exsum {

struct SynthConfig {
  enum class Style { kClustered, kParaphrase };
  Style style = Style::kClustered;
  std::size_t clusters = 10;
  std::size_t train = 500;
  std::size_t valid = 0;
  std::size_t test = 50;
  std::uint64_t seed = 13;
};

inline SynthConfig::Style synth_style_from_name(std::string_view name) {
  if (name == "clustered") return SynthConfig::Style::kClustered;
  if (name == "paraphrase") return SynthConfig::Style::kParaphrase;
  throw DataError("unknown synthetic corpus style: " + std::string(name));
}

namespace detail {

// Deterministic pseudo-words: index -> three syllables. Distinct indices
// give distinct words, so the disjoint index ranges below guarantee the
// vocabulary registers never collide.
inline std::string synth_word(std::size_t index) {
  static const char* kSyllables[] = {
      "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du", "ka", "ke",
      "ki", "ko", "ku", "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo",
      "mu", "na", "ne", "ni", "no", "nu", "pa", "pe", "pi", "po", "pu", "ra",
      "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su", "ta", "te", "ti",
      "to", "tu", "va", "ve", "vi", "vo", "vu", "za", "ze", "zi", "zo", "zu"};
  constexpr std::size_t n = sizeof(kSyllables) / sizeof(kSyllables[0]);
  std::string out;
  out += kSyllables[index % n];
  out += kSyllables[(index / n) % n];
  out += kSyllables[(index / (n * n)) % n];
  return out;
}

// Index ranges per register.
inline std::string filler_word(std::size_t i) { return synth_word(i); }
inline std::string slot_word(std::size_t i) { return synth_word(300 + i); }
inline std::string keyword(std::size_t cluster, std::size_t i) {
  return synth_word(1000 + cluster * 40 + i);
}
inline std::string keyword_variant(std::size_t cluster, std::size_t i) {
  return synth_word(1000 + cluster * 40 + 20 + i);
}
inline std::string scaffold_word(std::size_t cluster, std::size_t subtype,
                                 std::size_t i) {
  return synth_word(3000 + cluster * 40 + subtype * 10 + i);
}
inline std::string doc_concept(std::size_t cluster, std::size_t i) {
  return synth_word(5000 + cluster * 40 + i);
}
inline std::string summary_slot_word(std::size_t i) {
  return synth_word(7000 + i);
}
inline std::string subtype_marker(std::size_t cluster, std::size_t subtype,
                                  std::size_t i) {
  return synth_word(9000 + cluster * 40 + subtype * 10 + i);
}

constexpr std::size_t kFillerPool = 200;
constexpr std::size_t kSlotPool = 120;
constexpr std::size_t kSummarySlotPool = 120;

}  // namespace detail

// Record ids carry cluster and subtype ("c03-s1-train-0007") so evaluation
// code can recover membership without side tables.
inline std::size_t subtype_of_id(const std::string& record_id) {
  const std::size_t pos = record_id.find("-s");
  if (pos == std::string::npos || pos + 2 >= record_id.size()) {
    throw DataError("not a synthetic record id: " + record_id);
  }
  return static_cast<std::size_t>(record_id[pos + 2] - '0');
}

inline std::size_t cluster_of_id(const std::string& record_id) {
  if (record_id.size() < 2 || record_id[0] != 'c') {
    throw DataError("not a synthetic record id: " + record_id);
  }
  std::size_t pos = 1;
  std::size_t value = 0;
  while (pos < record_id.size() && record_id[pos] >= '0' &&
         record_id[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(record_id[pos] - '0');
    ++pos;
  }
  if (pos == 1) throw DataError("not a synthetic record id: " + record_id);
  return value;
}

inline Corpus generate_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.clusters == 0) throw DataError("synth: clusters must be >= 1");
  if (cfg.clusters > 40) {
    throw DataError("synth: at most 40 clusters (word registers would clash)");
  }
  Rng rng(cfg.seed);
  Corpus corpus;

  auto join = [](const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  };

  auto make_record = [&](std::size_t cluster, Split split,
                         std::size_t index) {
    const bool paraphrase = cfg.style == SynthConfig::Style::kParaphrase;
    const std::size_t subtype = rng.index(2);

    // Record-specific slots. Summary slots come from a summary-only
    // register, so no retriever can match them lexically from the document;
    // document slots are per-record noise.
    const std::string slot_a = detail::slot_word(rng.index(detail::kSlotPool));
    const std::string slot_b = detail::slot_word(rng.index(detail::kSlotPool));
    const std::string sum_slot_a =
        detail::summary_slot_word(rng.index(detail::kSummarySlotPool));
    const std::string sum_slot_b =
        detail::summary_slot_word(rng.index(detail::kSummarySlotPool));

    auto kw = [&](std::size_t i) {
      return detail::keyword(cluster, i);
    };
    auto sc = [&](std::size_t i) {
      return detail::scaffold_word(cluster, subtype, i);
    };
    auto dm = [&](std::size_t i) {
      return detail::subtype_marker(cluster, subtype, i);
    };

    // Summary: three sentences whose scaffold words are shared by the
    // cluster subtype, keywords by the whole cluster, and two slots by
    // nobody. Only the sentence terminators are shared between clusters.
    std::vector<std::string> summary_words = {
        sc(0), kw(0), kw(1), sc(1), sum_slot_a, ".",
        sc(2), kw(2), sc(3), kw(3), sc(4),      ".",
        sc(5), kw(4), sc(6), kw(5), sum_slot_b, sc(7), "."};

    // Document: five sentences mixing topic terms, subtype markers and
    // per-record filler.
    auto filler = [&] {
      return detail::filler_word(rng.index(detail::kFillerPool));
    };
    // Surface form of topic term i as it appears in this document. In
    // clustered style half of the mentions switch to a document-only
    // variant, so lexical doc->summary matching works but is lossy.
    auto doc_term = [&](std::size_t i) {
      if (paraphrase) return detail::doc_concept(cluster, i);
      return rng.uniform() < 0.5 ? detail::keyword_variant(cluster, i)
                                 : detail::keyword(cluster, i);
    };
    std::vector<std::string> doc_words;
    auto sentence = [&](std::initializer_list<std::string> words) {
      for (const auto& w : words) doc_words.push_back(w);
      doc_words.push_back(".");
    };
    sentence({"the", doc_term(0), filler(), filler(), doc_term(1), "of",
              slot_a});
    sentence({filler(), doc_term(2), "and", filler(), doc_term(3), dm(0)});
    sentence({"the", doc_term(4), filler(), slot_b, dm(1)});
    sentence({filler(), "in", doc_term(5), filler(), doc_term(0)});
    sentence({filler(), doc_term(1), dm(2), "to", filler(), doc_term(2)});

    char id[48];
    std::snprintf(id, sizeof(id), "c%02zu-s%zu-%s-%04zu", cluster, subtype,
                  split_name(split), index);
    DocumentRecord rec;
    rec.id = id;
    rec.split = split;
    rec.document = join(doc_words);
    rec.summary = join(summary_words);
    return rec;
  };

  const struct {
    Split split;
    std::size_t count;
  } plan[] = {{Split::kTrain, cfg.train},
              {Split::kValid, cfg.valid},
              {Split::kTest, cfg.test}};
  for (const auto& [split, count] : plan) {
    for (std::size_t i = 0; i < count; ++i) {
      corpus.records.push_back(make_record(i % cfg.clusters, split, i));
    }
  }
  return corpus;
}

}  // namespace exsum

#endif  // EXSUM_SYNTH_HPP_
