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
#include <cmath>
#include <unordered_map>
#include <vector>

#include "exsum/summarizer.hpp"
#include "exsum/synth.hpp"
#include "support.hpp"

using namespace exsum;
using Catch::Approx;

namespace {

TokenSequence seq(std::vector<int> ids,
                  std::vector<std::pair<std::size_t, std::size_t>> spans) {
  TokenSequence s;
  s.ids = std::move(ids);
  s.sentence_spans = std::move(spans);
  return s;
}

SummarizerConfig tiny_config(std::size_t vocab) {
  SummarizerConfig cfg;
  cfg.vocab = vocab;
  cfg.d_model = 32;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.attn_heads = 2;
  cfg.ffn_hidden = 64;
  cfg.max_src_len = 256;
  cfg.max_tgt_len = 64;
  cfg.max_tags = 8;
  return cfg;
}

}  // namespace

TEST_CASE("assemble lays out CLS/SEP structure and tags") {
  // Document of 3 tokens, one exemplar with two sentences (2 + 2 tokens).
  const TokenSequence doc = seq({10, 11, 12}, {{0, 3}});
  const TokenSequence ex = seq({20, 21, 22, 23}, {{0, 2}, {2, 4}});
  AssembleBudget budget;
  budget.max_tags = 32;
  const AssembledInput in = assemble(doc, {ex}, budget);

  const std::vector<int> want_ids = {Vocabulary::kCls, 10, 11, 12,
                                     Vocabulary::kSep, Vocabulary::kCls, 20,
                                     21, 22, 23, Vocabulary::kSep};
  const std::vector<int> want_tags = {0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 0};
  REQUIRE(in.ids == want_ids);
  REQUIRE(in.group_tags == want_tags);
  REQUIRE(in.exemplar_cls_positions == std::vector<std::size_t>{5});
}

TEST_CASE("assemble with no exemplars tags everything G0") {
  const TokenSequence doc = seq({7, 8}, {{0, 2}});
  const AssembledInput in = assemble(doc, {}, AssembleBudget{});
  for (int t : in.group_tags) REQUIRE(t == 0);
  REQUIRE(in.exemplar_cls_positions.empty());
  REQUIRE(in.ids.size() == 4);  // [CLS] 7 8 [SEP]
}

TEST_CASE("assemble clamps sentence tags at N-1") {
  std::vector<int> ids;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (int s = 0; s < 40; ++s) {
    ids.push_back(100 + s);
    spans.emplace_back(s, s + 1);
  }
  AssembleBudget budget;
  budget.max_tags = 32;
  const AssembledInput in =
      assemble(seq({1}, {{0, 1}}), {seq(ids, spans)}, budget);
  int max_tag = 0;
  std::size_t clamped = 0;
  for (int t : in.group_tags) {
    max_tag = std::max(max_tag, t);
    if (t == 31) ++clamped;
  }
  REQUIRE(max_tag == 31);
  REQUIRE(clamped == 10);  // sentences 31..40 all carry tag 31
}

TEST_CASE("assemble respects the total exemplar budget") {
  const TokenSequence doc = seq({1, 2}, {{0, 2}});
  const TokenSequence ex = seq({30, 31, 32, 33, 34, 35}, {{0, 6}});
  AssembleBudget budget;
  budget.total_exemplar_tokens = 8;
  const AssembledInput in = assemble(doc, {ex, ex, ex}, budget);
  // First exemplar fits (6), second is cut to 2 tokens, third is dropped.
  REQUIRE(in.exemplar_cls_positions.size() == 2);
  std::size_t exemplar_tokens = 0;
  for (std::size_t i = 0; i < in.ids.size(); ++i) {
    if (in.group_tags[i] > 0) ++exemplar_tokens;
  }
  REQUIRE(exemplar_tokens == 8);
}

TEST_CASE("tag bookkeeping invariant over random assemblies") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t doc_len = 1 + rng.index(20);
    std::vector<int> doc_ids(doc_len);
    for (auto& t : doc_ids) t = 10 + static_cast<int>(rng.index(50));
    std::vector<TokenSequence> exs;
    std::size_t total_ex_tokens = 0;
    const std::size_t n_ex = rng.index(4);
    for (std::size_t e = 0; e < n_ex; ++e) {
      const std::size_t n_sents = 1 + rng.index(3);
      std::vector<int> ids;
      std::vector<std::pair<std::size_t, std::size_t>> spans;
      for (std::size_t s = 0; s < n_sents; ++s) {
        const std::size_t len = 1 + rng.index(4);
        const std::size_t b = ids.size();
        for (std::size_t i = 0; i < len; ++i) {
          ids.push_back(10 + static_cast<int>(rng.index(50)));
        }
        spans.emplace_back(b, ids.size());
      }
      total_ex_tokens += ids.size();
      exs.push_back(seq(ids, spans));
    }
    AssembleBudget budget;  // large enough to keep everything
    const AssembledInput in = assemble(seq(doc_ids, {{0, doc_len}}), exs,
                                       budget);
    std::size_t tagged = 0, g0 = 0;
    for (int t : in.group_tags) (t > 0 ? tagged : g0)++;
    REQUIRE(tagged == total_ex_tokens);
    // G0 covers the document plus [CLS]/[SEP] pairs around doc and exemplars.
    REQUIRE(g0 == doc_len + 2 + 2 * in.exemplar_cls_positions.size());
  }
}

TEST_CASE("target groups count separators before each position") {
  // [BOS] w1 [SEP] w2 -> 1 1 1 2
  const std::vector<int> ids = {Vocabulary::kBos, 42, Vocabulary::kSep, 43};
  REQUIRE(target_groups_for(ids, 32) == std::vector<int>{1, 1, 1, 2});

  SECTION("clamped at N-1") {
    std::vector<int> many = {Vocabulary::kBos};
    for (int i = 0; i < 10; ++i) {
      many.push_back(50 + i);
      many.push_back(Vocabulary::kSep);
    }
    const auto groups = target_groups_for(many, 4);
    REQUIRE(*std::max_element(groups.begin(), groups.end()) == 3);
  }
}

TEST_CASE("build_tagged_target inserts SEP at boundaries and truncates") {
  const TokenSequence summary = seq({10, 11, 12, 13}, {{0, 2}, {2, 4}});
  const TaggedTarget t = build_tagged_target(summary, 64, 32);
  REQUIRE(t.ids == std::vector<int>{Vocabulary::kBos, 10, 11, Vocabulary::kSep,
                                    12, 13, Vocabulary::kEos});
  REQUIRE(t.groups == std::vector<int>{1, 1, 1, 1, 2, 2, 2});

  SECTION("truncation keeps the trailing EOS") {
    const TaggedTarget cut = build_tagged_target(summary, 4, 32);
    REQUIRE(cut.ids.size() == 4);
    REQUIRE(cut.ids.back() == Vocabulary::kEos);
  }
}

TEST_CASE("encode adds tag rows to encoder output") {
  SummarizerConfig cfg = tiny_config(100);
  SummarizerModel model(cfg);
  SummarizerConfig plain_cfg = cfg;
  plain_cfg.group_tags = false;
  SummarizerModel plain(plain_cfg);  // same seed -> identical weights

  const TokenSequence doc = seq({10, 11, 12}, {{0, 3}});
  const TokenSequence ex = seq({20, 21}, {{0, 2}});
  AssembleBudget budget;
  budget.max_tags = cfg.max_tags;
  const AssembledInput in = assemble(doc, {ex}, budget);

  NoGradGuard guard;

  SECTION("zeroed tag table reproduces the plain encoder") {
    auto& table = model.tag_table().values();
    std::fill(table.begin(), table.end(), 0.0);
    const Tensor with_tags = model.encode(in);
    const Tensor without = plain.encode(in);
    REQUIRE(with_tags.values() == without.values());
  }

  SECTION("changing one token's tag shifts only that row by the tag delta") {
    const Tensor base = model.encode(in);
    AssembledInput changed = in;
    const std::size_t pos = 6;  // first exemplar token
    REQUIRE(changed.group_tags[pos] == 1);
    changed.group_tags[pos] = 2;
    const Tensor moved = model.encode(changed);
    const std::size_t d = cfg.d_model;
    const auto& table = model.tag_table().values();
    for (std::size_t i = 0; i < base.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double delta = moved.values()[i * d + j] -
                             base.values()[i * d + j];
        const double want =
            i == pos ? table[2 * d + j] - table[1 * d + j] : 0.0;
        REQUIRE(delta == Approx(want).margin(1e-12));
      }
    }
  }

  SECTION("shape contract") {
    const Tensor h = model.encode(in);
    REQUIRE(h.rows() == in.ids.size());
    REQUIRE(h.cols() == cfg.d_model);
  }
}

TEST_CASE("decode shapes, tying, and uniform-logit loss") {
  SummarizerConfig cfg = tiny_config(50);
  SummarizerModel model(cfg);
  const AssembledInput in =
      assemble(seq({10, 11}, {{0, 2}}), {}, AssembleBudget{});
  const std::vector<int> prefix = {Vocabulary::kBos, 12, Vocabulary::kSep, 13};
  const auto groups = target_groups_for(prefix, cfg.max_tags);

  NoGradGuard guard;
  const Tensor h_enc = model.encode(in);
  const Tensor logits = model.decode(h_enc, prefix, groups);
  REQUIRE(logits.rows() == prefix.size());
  REQUIRE(logits.cols() == 50);

  SECTION("weight tying by mutation: one storage serves both roles") {
    const Tensor before = model.decode(h_enc, prefix, groups);
    auto& emb = const_cast<Tensor&>(model.token_embedding()).values();
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      emb[13 * cfg.d_model + j] += 0.5;
    }
    const Tensor after = model.decode(h_enc, prefix, groups);
    // Logit column 13 changes at every position...
    bool column_changed = false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (after.values()[i * 50 + 13] != before.values()[i * 50 + 13]) {
        column_changed = true;
      }
    }
    REQUIRE(column_changed);
    // ...and the input embedding of token 13 (position 3) shifts every
    // logit at that position, not just column 13.
    bool row_changed = false;
    for (std::size_t v = 0; v < 50; ++v) {
      if (v != 13 &&
          after.values()[3 * 50 + v] != before.values()[3 * 50 + v]) {
        row_changed = true;
      }
    }
    REQUIRE(row_changed);
  }

  SECTION("zeroed token embedding gives uniform logits and ln V loss") {
    SummarizerModel zeroed(tiny_config(50));
    auto& emb = const_cast<Tensor&>(zeroed.token_embedding()).values();
    std::fill(emb.begin(), emb.end(), 0.0);
    TaggedTarget target;
    target.ids = {Vocabulary::kBos, 10, 11, Vocabulary::kEos};
    target.groups = target_groups_for(target.ids, cfg.max_tags);
    const Tensor loss = nll_loss(zeroed, in, target);
    REQUIRE(loss.item() == Approx(std::log(50.0)).margin(1e-12));
  }
}

TEST_CASE("nll_loss rejects empty targets") {
  SummarizerModel model(tiny_config(30));
  const AssembledInput in =
      assemble(seq({10}, {{0, 1}}), {}, AssembleBudget{});
  TaggedTarget empty;
  empty.ids = {Vocabulary::kBos, Vocabulary::kEos};
  empty.groups = target_groups_for(empty.ids, 8);
  REQUIRE_THROWS_AS(nll_loss(model, in, empty), DataError);
}

TEST_CASE("summarizer gradients match finite differences") {
  SummarizerConfig cfg = tiny_config(24);
  cfg.d_model = 16;
  cfg.ffn_hidden = 32;
  SummarizerModel model(cfg);
  const TokenSequence doc = seq({10, 11, 12}, {{0, 3}});
  const TokenSequence ex = seq({14, 15}, {{0, 2}});
  AssembleBudget budget;
  budget.max_tags = cfg.max_tags;
  const AssembledInput in = assemble(doc, {ex}, budget);
  TaggedTarget target;
  target.ids = {Vocabulary::kBos, 16, 17, Vocabulary::kSep, 18,
                Vocabulary::kEos};
  target.groups = target_groups_for(target.ids, cfg.max_tags);

  auto f = [&] { return nll_loss(model, in, target); };
  auto res = exsum_test::grad_check(f, model.params().all(), 1e-5, 1e-4, 6);
  INFO(res.worst);
  REQUIRE(res.ok);
}

TEST_CASE("training on a toy corpus decreases the loss and is deterministic") {
  SynthConfig sc;
  sc.clusters = 4;
  sc.train = 20;
  sc.test = 0;
  sc.seed = 5;
  const Corpus corpus = generate_synthetic_corpus(sc);
  const Vocabulary vocab = build_vocab(corpus, 2000);
  const TokenizedCorpus tokens = TokenizedCorpus::build(corpus, vocab, 256, 64);
  const auto kb = corpus.split_indices(Split::kTrain);

  std::unordered_map<std::string, ExemplarSet> sets;
  for (std::size_t rec : kb) {
    sets.emplace(corpus.records[rec].id,
                 retrieve_oracle(rec, corpus, tokens, kb, 2));
  }

  auto make_cfg = [&] {
    SummarizerConfig cfg = tiny_config(vocab.size());
    cfg.max_src_len = 192;
    return cfg;
  };
  SummarizerTrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.assembly.exemplar_count = 2;
  tc.assembly.exemplar_max_len = 32;
  tc.adam.lr_max = 3e-4;
  tc.adam.warmup_steps = 10;
  tc.seed = 9;
  tc.assembly.budget.max_tags = 8;

  SummarizerModel model(make_cfg());
  const TrainCurve curve = train_summarizer(model, corpus, tokens, sets, tc);
  REQUIRE(curve.epoch_mean_loss.size() == 3);
  REQUIRE(curve.epoch_mean_loss[1] < curve.epoch_mean_loss[0]);
  REQUIRE(curve.epoch_mean_loss[2] < curve.epoch_mean_loss[1]);

  SECTION("same seed, same final parameters") {
    SummarizerModel again(make_cfg());
    train_summarizer(again, corpus, tokens, sets, tc);
    const auto& a = model.params().entries();
    const auto& b = again.params().entries();
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].second.values() == b[i].second.values());
    }
  }

  SECTION("missing exemplar set names the record") {
    std::unordered_map<std::string, ExemplarSet> partial = sets;
    partial.erase(corpus.records[kb[3]].id);
    SummarizerModel fresh(make_cfg());
    REQUIRE_THROWS_WITH(
        train_summarizer(fresh, corpus, tokens, partial, tc),
        Catch::Matchers::ContainsSubstring(corpus.records[kb[3]].id));
  }

  SECTION("retrieval-ablated mode trains without exemplar sets") {
    SummarizerTrainConfig ablated = tc;
    ablated.use_exemplars = false;
    ablated.epochs = 1;
    SummarizerModel fresh(make_cfg());
    const TrainCurve c =
        train_summarizer(fresh, corpus, tokens, {}, ablated);
    REQUIRE(c.epoch_mean_loss.size() == 1);
  }
}
