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
// Corpus ingestion, tokenization, vocabulary construction and persistence.
// Tokens are lowercased words split on whitespace and punctuation
// (punctuation characters are kept as single-character tokens). Sentences end
// after '.', '!' or '?' followed by whitespace or end of text.

#ifndef EXSUM_CORPUS_HPP_
#define EXSUM_CORPUS_HPP_

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "exsum/util.hpp"
#include "json.hpp"

namespace exsum {

enum class Split { kTrain, kValid, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split split_from_name(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split: " + std::string(name));
}

// One document/summary pair; the unit of the knowledge base.
struct DocumentRecord {
  std::string id;
  Split split = Split::kTrain;
  std::string document;
  std::string summary;
};

struct Corpus {
  std::vector<DocumentRecord> records;

  std::vector<std::size_t> split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].split == s) out.push_back(i);
    }
    return out;
  }

  const DocumentRecord* find(std::string_view id) const {
    for (const auto& r : records) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }
};

// Token ids plus the half-open sentence ranges over those ids. For plain
// tokenized text the spans partition [0, ids.size()).
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::pair<std::size_t, std::size_t>> sentence_spans;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kBos = 4;
  static constexpr int kEos = 5;
  static constexpr int kReservedCount = 6;

  Vocabulary() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"}) {
      token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
      id_to_token_.emplace_back(t);
    }
  }

  std::size_t size() const { return id_to_token_.size(); }

  int id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw DataError("vocabulary id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  // Inserts a non-reserved token; no-op if already present.
  void add(const std::string& token) {
    if (token_to_id_.count(token)) return;
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
  }

  // Persisted as "token<TAB>id", one line per entry, ordered by id.
  std::string serialize() const {
    std::string out;
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
      out += id_to_token_[i];
      out += '\t';
      out += std::to_string(i);
      out += '\n';
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    write_file(path, serialize());
  }

  static Vocabulary load(const std::filesystem::path& path) {
    Vocabulary v;
    const std::string text = read_file(path);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (line.empty()) continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw DataError("vocab line " + std::to_string(line_no) +
                        ": missing tab separator");
      }
      const std::string token(line.substr(0, tab));
      const int id = std::stoi(std::string(line.substr(tab + 1)));
      if (id < kReservedCount) {
        if (v.token(id) != token) {
          throw DataError("vocab line " + std::to_string(line_no) +
                          ": reserved id mismatch for " + token);
        }
        continue;
      }
      if (static_cast<std::size_t>(id) != v.id_to_token_.size()) {
        throw DataError("vocab line " + std::to_string(line_no) +
                        ": non-contiguous id " + std::to_string(id));
      }
      v.add(token);
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

namespace detail {

inline bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }
inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace detail

// Lowercased word tokens; every punctuation character is its own token.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (detail::is_space(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (detail::is_punct(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Splits after '.', '!' or '?' when followed by whitespace or end of text.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      const bool at_end = i + 1 == text.size();
      if (at_end || detail::is_space(static_cast<unsigned char>(text[i + 1]))) {
        out.emplace_back(text.substr(start, i + 1 - start));
        start = i + 1;
      }
    }
  }
  if (start < text.size()) {
    std::string_view tail = text.substr(start);
    // Trailing text without a terminator forms a final sentence unless blank.
    bool blank = true;
    for (unsigned char c : tail) {
      if (!detail::is_space(c)) {
        blank = false;
        break;
      }
    }
    if (!blank) out.emplace_back(tail);
  }
  return out;
}

// Tokenize with sentence spans; truncation to max_len clips spans and drops
// the ones that become empty.
inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                              std::size_t max_len) {
  TokenSequence seq;
  for (const std::string& sent : split_sentences(text)) {
    const std::size_t begin = seq.ids.size();
    for (const std::string& tok : word_tokens(sent)) {
      seq.ids.push_back(vocab.id(tok));
    }
    if (seq.ids.size() > begin) {
      seq.sentence_spans.emplace_back(begin, seq.ids.size());
    }
  }
  if (seq.ids.size() > max_len) {
    seq.ids.resize(max_len);
    std::vector<std::pair<std::size_t, std::size_t>> clipped;
    for (auto [b, e] : seq.sentence_spans) {
      if (b >= max_len) break;
      clipped.emplace_back(b, std::min(e, max_len));
    }
    seq.sentence_spans = std::move(clipped);
  }
  return seq;
}

inline std::string detokenize(const std::vector<int>& ids,
                              const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

// Most frequent tokens up to cap (which includes the 6 reserved ids); ties
// are broken lexicographically.
inline Vocabulary build_vocab(const Corpus& corpus, std::size_t cap) {
  if (cap <= Vocabulary::kReservedCount) {
    throw DataError("vocabulary cap must exceed the reserved count of " +
                    std::to_string(Vocabulary::kReservedCount));
  }
  if (corpus.records.empty()) {
    throw DataError("cannot build a vocabulary from an empty corpus");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& rec : corpus.records) {
    for (const auto& tok : word_tokens(rec.document)) ++counts[tok];
    for (const auto& tok : word_tokens(rec.summary)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  const std::size_t room = cap - Vocabulary::kReservedCount;
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) {
    v.add(ranked[i].first);
  }
  return v;
}

// JSONL ingestion. Each line: {"id","split","document","summary"}.
inline Corpus parse_corpus_jsonl(const std::string& text) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    const std::size_t next = nl + 1;
    ++line_no;
    if (!line.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError("line " + std::to_string(line_no) +
                        ": JSON parse error: " + e.what());
      }
      // Skip metadata lines (leading-underscore keys only).
      bool meta = j.is_object() && !j.empty();
      for (auto it = j.begin(); meta && it != j.end(); ++it) {
        if (it.key().empty() || it.key()[0] != '_') meta = false;
      }
      if (!meta) {
        for (const char* field : {"id", "split", "document", "summary"}) {
          if (!j.contains(field) || !j[field].is_string()) {
            throw DataError("line " + std::to_string(line_no) +
                            ": missing or non-string field '" + field + "'");
          }
        }
        DocumentRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.split = split_from_name(j["split"].get<std::string>());
        rec.document = j["document"].get<std::string>();
        rec.summary = j["summary"].get<std::string>();
        if (!seen.insert(rec.id).second) {
          throw DataError("line " + std::to_string(line_no) +
                          ": duplicate record id \"" + rec.id + "\"");
        }
        if (rec.document.empty()) {
          throw DataError("line " + std::to_string(line_no) +
                          ": empty document for id \"" + rec.id + "\"");
        }
        if (rec.summary.empty() && rec.split != Split::kTest) {
          throw DataError("line " + std::to_string(line_no) +
                          ": empty summary for non-test id \"" + rec.id +
                          "\"");
        }
        corpus.records.push_back(std::move(rec));
      }
    }
    if (nl == text.size()) break;
    pos = next;
  }
  return corpus;
}

inline Corpus ingest(const std::filesystem::path& path) {
  return parse_corpus_jsonl(read_file(path));
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& rec : corpus.records) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["split"] = split_name(rec.split);
    j["document"] = rec.document;
    j["summary"] = rec.summary;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& corpus,
                        const std::filesystem::path& path) {
  write_file(path, serialize_corpus(corpus));
}

// Token sequences for every record, computed once and shared read-only.
struct TokenizedCorpus {
  std::vector<TokenSequence> documents;
  std::vector<TokenSequence> summaries;

  static TokenizedCorpus build(const Corpus& corpus, const Vocabulary& vocab,
                               std::size_t doc_max_len,
                               std::size_t summary_max_len) {
    TokenizedCorpus out;
    out.documents.reserve(corpus.records.size());
    out.summaries.reserve(corpus.records.size());
    for (const auto& rec : corpus.records) {
      out.documents.push_back(tokenize(rec.document, vocab, doc_max_len));
      out.summaries.push_back(tokenize(rec.summary, vocab, summary_max_len));
    }
    return out;
  }
};

}  // namespace exsum

#endif  // EXSUM_CORPUS_HPP_
