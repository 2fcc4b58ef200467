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

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <string>
#include <vector>

#include "exsum/corpus.hpp"
#include "support.hpp"

using namespace exsum;

namespace {

Corpus tiny_corpus() {
  Corpus c;
  c.records.push_back({"a1", Split::kTrain, "a a a b b c", "a b"});
  return c;
}

}  // namespace

TEST_CASE("word tokenization lowercases and splits punctuation") {
  const auto toks = word_tokens("The cat. It sat.");
  REQUIRE(toks == std::vector<std::string>{"the", "cat", ".", "it", "sat", "."});
  REQUIRE(word_tokens("Don't stop") ==
          std::vector<std::string>{"don", "'", "t", "stop"});
  REQUIRE(word_tokens("").empty());
  REQUIRE(word_tokens("   \t\n ").empty());
}

TEST_CASE("sentence splitting ends after terminator plus space or EOT") {
  auto s = split_sentences("The cat. It sat.");
  REQUIRE(s.size() == 2);
  REQUIRE(s[0] == "The cat.");
  s = split_sentences("No terminator here");
  REQUIRE(s.size() == 1);
  s = split_sentences("Version 1.2 is out. Yes!");
  // "1.2" does not split: '.' is followed by a digit.
  REQUIRE(s.size() == 2);
  REQUIRE(s[0] == "Version 1.2 is out.");
  REQUIRE(split_sentences("").empty());
}

TEST_CASE("tokenize produces ids and sentence spans") {
  Corpus c;
  c.records.push_back(
      {"d", Split::kTrain, "the cat . it sat .", "the cat . it sat ."});
  Vocabulary v = build_vocab(c, 64);
  const TokenSequence seq = tokenize("The cat. It sat.", v, 100);
  REQUIRE(seq.ids.size() == 6);
  REQUIRE(seq.sentence_spans ==
          std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}});
  REQUIRE(v.token(seq.ids[0]) == "the");
  REQUIRE(v.token(seq.ids[2]) == ".");

  SECTION("truncation to max_len keeps whole tokens and clips spans") {
    std::string text;
    for (int i = 0; i < 2000; ++i) text += "cat ";
    const TokenSequence t = tokenize(text, v, 1024);
    REQUIRE(t.ids.size() == 1024);
    REQUIRE(t.sentence_spans.back().second == 1024);
  }

  SECTION("empty text gives empty sequence") {
    const TokenSequence t = tokenize("", v, 10);
    REQUIRE(t.ids.empty());
    REQUIRE(t.sentence_spans.empty());
  }
}

TEST_CASE("sentence spans partition the token range") {
  Rng rng(42);
  const std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta",
                                          "eps",   "zeta.", "eta!",  "theta?"};
  Vocabulary v = build_vocab(tiny_corpus(), 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    const std::size_t n = rng.index(60);
    for (std::size_t i = 0; i < n; ++i) {
      text += words[rng.index(words.size())];
      text += ' ';
    }
    const std::size_t cap = 1 + rng.index(40);
    const TokenSequence seq = tokenize(text, v, cap);
    std::size_t expect_begin = 0;
    for (auto [b, e] : seq.sentence_spans) {
      REQUIRE(b == expect_begin);
      REQUIRE(e > b);
      expect_begin = e;
    }
    REQUIRE(expect_begin == seq.ids.size());
  }
}

TEST_CASE("decode of encode equals lowercased stream with UNK for OOV") {
  Corpus c;
  c.records.push_back({"d", Split::kTrain, "known words only here",
                       "known words only here"});
  Vocabulary v = build_vocab(c, 64);
  const TokenSequence seq = tokenize("Known UNSEEN words!", v, 100);
  REQUIRE(detokenize(seq.ids, v) == "known [UNK] words [UNK]");
}

TEST_CASE("build_vocab keeps most frequent tokens up to cap") {
  Corpus c;
  c.records.push_back({"x", Split::kTrain, "a a a b b c", "a"});
  // cap 8 leaves room for two tokens beyond the six reserved ids.
  Vocabulary v = build_vocab(c, 8);
  REQUIRE(v.size() == 8);
  REQUIRE(v.contains("a"));
  REQUIRE(v.contains("b"));
  REQUIRE_FALSE(v.contains("c"));
  REQUIRE(v.id("c") == Vocabulary::kUnk);

  SECTION("ties break lexicographically") {
    Corpus t;
    t.records.push_back({"x", Split::kTrain, "zz yy", "zz yy"});
    Vocabulary tv = build_vocab(t, 7);
    REQUIRE(tv.contains("yy"));
    REQUIRE_FALSE(tv.contains("zz"));
  }

  SECTION("cap at or below reserved count is rejected") {
    REQUIRE_THROWS_AS(build_vocab(c, 5), DataError);
    REQUIRE_THROWS_AS(build_vocab(c, 6), DataError);
  }

  SECTION("empty corpus is rejected") {
    Corpus empty;
    REQUIRE_THROWS_AS(build_vocab(empty, 100), DataError);
  }

  SECTION("reserved ids are fixed") {
    REQUIRE(v.id("[PAD]") == 0);
    REQUIRE(v.id("[UNK]") == 1);
    REQUIRE(v.id("[CLS]") == 2);
    REQUIRE(v.id("[SEP]") == 3);
    REQUIRE(v.id("[BOS]") == 4);
    REQUIRE(v.id("[EOS]") == 5);
  }
}

TEST_CASE("vocabulary serialization round-trips and is deterministic") {
  Corpus c;
  c.records.push_back({"x", Split::kTrain, "red green blue red green red",
                       "blue green"});
  Vocabulary v1 = build_vocab(c, 32);
  Vocabulary v2 = build_vocab(c, 32);
  REQUIRE(v1.serialize() == v2.serialize());

  const auto dir = exsum_test::temp_dir("vocab");
  v1.save(dir / "vocab.tsv");
  Vocabulary loaded = Vocabulary::load(dir / "vocab.tsv");
  REQUIRE(loaded.serialize() == v1.serialize());
  std::filesystem::remove_all(dir);
}

TEST_CASE("jsonl ingestion") {
  const auto dir = exsum_test::temp_dir("ingest");

  SECTION("well-formed file round-trips") {
    const std::string body =
        R"({"id":"d1","split":"train","document":"doc one","summary":"sum one"})"
        "\n"
        R"({"id":"d2","split":"valid","document":"doc two","summary":"sum two"})"
        "\n"
        R"({"id":"d3","split":"test","document":"doc three","summary":"sum three"})"
        "\n";
    write_file(dir / "c.jsonl", body);
    const Corpus c = ingest(dir / "c.jsonl");
    REQUIRE(c.records.size() == 3);
    REQUIRE(c.records[0].id == "d1");
    REQUIRE(c.records[1].split == Split::kValid);
    REQUIRE(c.records[2].document == "doc three");

    save_corpus(c, dir / "copy.jsonl");
    const Corpus c2 = ingest(dir / "copy.jsonl");
    REQUIRE(c2.records.size() == 3);
    REQUIRE(serialize_corpus(c) == serialize_corpus(c2));
  }

  SECTION("duplicate id is rejected by name") {
    const std::string body =
        R"({"id":"d1","split":"train","document":"x","summary":"y"})" "\n"
        R"({"id":"d1","split":"train","document":"x","summary":"y"})" "\n";
    write_file(dir / "dup.jsonl", body);
    REQUIRE_THROWS_WITH(ingest(dir / "dup.jsonl"),
                        Catch::Matchers::ContainsSubstring("d1"));
  }

  SECTION("parse errors carry the line number") {
    write_file(dir / "bad.jsonl",
               R"({"id":"d1","split":"train","document":"x","summary":"y"})"
               "\nnot json\n");
    REQUIRE_THROWS_WITH(ingest(dir / "bad.jsonl"),
                        Catch::Matchers::ContainsSubstring("line 2"));
  }

  SECTION("missing fields are named") {
    write_file(dir / "missing.jsonl", R"({"id":"d1","split":"train"})" "\n");
    REQUIRE_THROWS_WITH(ingest(dir / "missing.jsonl"),
                        Catch::Matchers::ContainsSubstring("document"));
  }

  SECTION("empty file gives an empty corpus") {
    write_file(dir / "empty.jsonl", "");
    REQUIRE(ingest(dir / "empty.jsonl").records.empty());
  }

  SECTION("empty summary allowed only for test split") {
    write_file(dir / "t.jsonl",
               R"({"id":"d1","split":"test","document":"x","summary":""})"
               "\n");
    REQUIRE(ingest(dir / "t.jsonl").records.size() == 1);
    write_file(dir / "v.jsonl",
               R"({"id":"d1","split":"valid","document":"x","summary":""})"
               "\n");
    REQUIRE_THROWS_AS(ingest(dir / "v.jsonl"), DataError);
  }

  std::filesystem::remove_all(dir);
}
