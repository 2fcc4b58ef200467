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
// Exemplar-conditioned encoder-decoder. Document and exemplars are packed
// into one source sequence ([CLS] X [SEP] [CLS] E1 [SEP] ...) and linked to
// the target through group tag embeddings: sentence i of every exemplar and
// sentence i of the target share tag Gi, while G0 marks the document and all
// special tokens. Tag embeddings are added to the encoder *output* states
// (an encoder-input variant exists behind a flag). The output projection is
// tied to the token embedding matrix.

#ifndef EXSUM_SUMMARIZER_HPP_
#define EXSUM_SUMMARIZER_HPP_

#include <algorithm>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exsum/corpus.hpp"
#include "exsum/nn.hpp"
#include "exsum/optimizer.hpp"
#include "exsum/retriever.hpp"
#include "exsum/tensor.hpp"
#include "json.hpp"

namespace exsum {

// ---- Input assembly ----

struct AssembleBudget {
  std::size_t total_exemplar_tokens = 768;
  std::size_t max_tags = 32;  // N; sentence indices clamp to N-1
};

struct AssembledInput {
  std::vector<int> ids;
  std::vector<int> group_tags;  // one tag per id; same length as ids
  std::vector<std::size_t> exemplar_cls_positions;
};

inline TokenSequence truncate_sequence(const TokenSequence& seq,
                                       std::size_t max_len) {
  if (seq.ids.size() <= max_len) return seq;
  TokenSequence out;
  out.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<long>(max_len));
  for (auto [b, e] : seq.sentence_spans) {
    if (b >= max_len) break;
    out.sentence_spans.emplace_back(b, std::min(e, max_len));
  }
  return out;
}

// Layout: [CLS] X [SEP] then [CLS] Ei [SEP] per exemplar. Document tokens and
// every special token carry tag G0; tokens of sentence s (1-based) of each
// exemplar carry tag min(s, N-1). Exemplars are cut off once the total
// exemplar token budget is exhausted.
inline AssembledInput assemble(const TokenSequence& doc,
                               const std::vector<TokenSequence>& exemplars,
                               const AssembleBudget& budget) {
  if (budget.max_tags < 2) {
    throw DataError("assemble: max_tags must be at least 2");
  }
  AssembledInput out;
  out.ids.push_back(Vocabulary::kCls);
  out.group_tags.push_back(0);
  for (int id : doc.ids) {
    out.ids.push_back(id);
    out.group_tags.push_back(0);
  }
  out.ids.push_back(Vocabulary::kSep);
  out.group_tags.push_back(0);

  std::size_t remaining = budget.total_exemplar_tokens;
  for (const TokenSequence& raw : exemplars) {
    if (remaining == 0) break;
    const TokenSequence ex = truncate_sequence(raw, remaining);
    if (ex.ids.empty()) continue;
    remaining -= ex.ids.size();
    out.exemplar_cls_positions.push_back(out.ids.size());
    out.ids.push_back(Vocabulary::kCls);
    out.group_tags.push_back(0);
    for (std::size_t s = 0; s < ex.sentence_spans.size(); ++s) {
      const auto [b, e] = ex.sentence_spans[s];
      const int tag = static_cast<int>(
          std::min(s + 1, budget.max_tags - 1));
      for (std::size_t i = b; i < e; ++i) {
        out.ids.push_back(ex.ids[i]);
        out.group_tags.push_back(tag);
      }
    }
    out.ids.push_back(Vocabulary::kSep);
    out.group_tags.push_back(0);
  }
  return out;
}

// ---- Target construction ----

// Targets are [BOS] s1 [SEP] s2 [SEP] ... [EOS]; the group index of a
// position is 1 + the number of [SEP] strictly before it, clamped to N-1.
struct TaggedTarget {
  std::vector<int> ids;
  std::vector<int> groups;
};

inline std::vector<int> target_groups_for(const std::vector<int>& ids,
                                          std::size_t max_tags) {
  std::vector<int> groups(ids.size());
  int seps = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    groups[i] = static_cast<int>(
        std::min<std::size_t>(1 + seps, max_tags - 1));
    if (ids[i] == Vocabulary::kSep) ++seps;
  }
  return groups;
}

inline TaggedTarget build_tagged_target(const TokenSequence& summary,
                                        std::size_t max_len,
                                        std::size_t max_tags) {
  TaggedTarget t;
  t.ids.push_back(Vocabulary::kBos);
  for (std::size_t s = 0; s < summary.sentence_spans.size(); ++s) {
    if (s > 0) t.ids.push_back(Vocabulary::kSep);
    const auto [b, e] = summary.sentence_spans[s];
    for (std::size_t i = b; i < e; ++i) t.ids.push_back(summary.ids[i]);
  }
  if (max_len < 2) throw DataError("target max_len must be >= 2");
  if (t.ids.size() > max_len - 1) t.ids.resize(max_len - 1);
  t.ids.push_back(Vocabulary::kEos);
  t.groups = target_groups_for(t.ids, max_tags);
  return t;
}

// ---- Model ----

struct SummarizerConfig {
  std::size_t vocab = 0;
  std::size_t d_model = 64;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t attn_heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t max_tags = 32;  // N
  std::size_t max_src_len = 2048;
  std::size_t max_tgt_len = 128;
  double dropout = 0.0;
  bool group_tags = true;
  bool tags_at_encoder_input = false;  // variant of the tag-addition point
  std::uint64_t seed = 2;

  nlohmann::json to_json() const {
    return {{"vocab", vocab},
            {"d_model", d_model},
            {"enc_layers", enc_layers},
            {"dec_layers", dec_layers},
            {"attn_heads", attn_heads},
            {"ffn_hidden", ffn_hidden},
            {"max_tags", max_tags},
            {"max_src_len", max_src_len},
            {"max_tgt_len", max_tgt_len},
            {"dropout", dropout},
            {"group_tags", group_tags},
            {"tags_at_encoder_input", tags_at_encoder_input},
            {"seed", seed}};
  }

  static SummarizerConfig from_json(const nlohmann::json& j) {
    SummarizerConfig c;
    c.vocab = j.at("vocab").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.enc_layers = j.at("enc_layers").get<std::size_t>();
    c.dec_layers = j.at("dec_layers").get<std::size_t>();
    c.attn_heads = j.at("attn_heads").get<std::size_t>();
    c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
    c.max_tags = j.at("max_tags").get<std::size_t>();
    c.max_src_len = j.at("max_src_len").get<std::size_t>();
    c.max_tgt_len = j.at("max_tgt_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.group_tags = j.at("group_tags").get<bool>();
    c.tags_at_encoder_input = j.at("tags_at_encoder_input").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

class SummarizerModel {
 public:
  explicit SummarizerModel(SummarizerConfig cfg) : cfg_(cfg) {
    if (cfg_.vocab == 0) throw DataError("summarizer: vocab size not set");
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.d_model;
    tok_emb_ = store_.add("tok_emb", {cfg_.vocab, d},
                          normal_init(cfg_.vocab * d, 0.02, rng));
    src_pos_ = store_.add("src_pos", {cfg_.max_src_len, d},
                          normal_init(cfg_.max_src_len * d, 0.02, rng));
    tgt_pos_ = store_.add("tgt_pos", {cfg_.max_tgt_len, d},
                          normal_init(cfg_.max_tgt_len * d, 0.02, rng));
    tag_emb_ = store_.add("tag_emb", {cfg_.max_tags, d},
                          normal_init(cfg_.max_tags * d, 0.02, rng));
    for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
      enc_.push_back(EncoderLayer::create(store_, "enc" + std::to_string(l),
                                          d, cfg_.attn_heads, cfg_.ffn_hidden,
                                          rng));
    }
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      dec_.push_back(DecoderLayer::create(store_, "dec" + std::to_string(l),
                                          d, cfg_.attn_heads, cfg_.ffn_hidden,
                                          rng));
    }
  }

  const SummarizerConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Output projection W shares storage with the token embedding matrix.
  const Tensor& token_embedding() const { return tok_emb_; }
  Tensor& tag_table() { return tag_emb_; }

  Tensor encode(const AssembledInput& input, bool train = false,
                Rng* rng = nullptr) const {
    if (input.ids.size() > cfg_.max_src_len) {
      throw DataError("encode: source length " +
                      std::to_string(input.ids.size()) + " exceeds table " +
                      std::to_string(cfg_.max_src_len));
    }
    if (input.ids.size() != input.group_tags.size()) {
      throw ShapeError("encode: ids and group_tags length mismatch");
    }
    Tensor x = add(embedding_lookup(tok_emb_, input.ids),
                   embedding_lookup(src_pos_, iota_ids(input.ids.size())));
    if (cfg_.group_tags && cfg_.tags_at_encoder_input) {
      x = add(x, embedding_lookup(tag_emb_, input.group_tags));
    }
    const double drop = train ? cfg_.dropout : 0.0;
    for (const auto& layer : enc_) {
      x = layer.forward(x, drop, rng);
    }
    if (cfg_.group_tags && !cfg_.tags_at_encoder_input) {
      x = add(x, embedding_lookup(tag_emb_, input.group_tags));
    }
    return x;
  }

  // Teacher-forced decoder pass over the whole prefix; returns logits
  // (prefix length x vocab). The decoder input embedding is
  // Emb(t) + E(G_i) + E(G_0) plus learned positions; cross-attention of the
  // last decoder layer can be recorded for the final prefix position.
  Tensor decode(const Tensor& h_enc, const std::vector<int>& prefix_ids,
                const std::vector<int>& prefix_groups, bool train = false,
                Rng* rng = nullptr, AttnRecord* cross_record = nullptr) const {
    if (prefix_ids.empty()) throw DataError("decode: empty prefix");
    if (prefix_ids.size() > cfg_.max_tgt_len) {
      throw DataError("decode: prefix length " +
                      std::to_string(prefix_ids.size()) + " exceeds table " +
                      std::to_string(cfg_.max_tgt_len));
    }
    if (prefix_ids.size() != prefix_groups.size()) {
      throw ShapeError("decode: ids and groups length mismatch");
    }
    Tensor x = add(embedding_lookup(tok_emb_, prefix_ids),
                   embedding_lookup(tgt_pos_, iota_ids(prefix_ids.size())));
    if (cfg_.group_tags) {
      x = add(x, embedding_lookup(tag_emb_, prefix_groups));
      x = add_rowvec(x, take_row(tag_emb_, 0));  // E(G0) on every position
    }
    const auto mask = causal_mask(prefix_ids.size());
    const double drop = train ? cfg_.dropout : 0.0;
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      AttnRecord* rec = (l + 1 == dec_.size()) ? cross_record : nullptr;
      x = dec_[l].forward(x, h_enc, mask, drop, rng, rec);
    }
    return matmul_nt(x, tok_emb_);  // tied output projection
  }

 private:
  SummarizerConfig cfg_;
  ParamStore store_;
  Tensor tok_emb_;
  Tensor src_pos_;
  Tensor tgt_pos_;
  Tensor tag_emb_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
};

// ---- Loss ----

// Token-level cross entropy under teacher forcing, averaged over target
// positions (Eq-style 1/n normalization; pad positions excluded).
inline Tensor nll_loss(const SummarizerModel& model,
                       const AssembledInput& input, const TaggedTarget& target,
                       bool train = false, Rng* rng = nullptr) {
  if (target.ids.size() < 3) {
    throw DataError("nll_loss: empty target");
  }
  const Tensor h_enc = model.encode(input, train, rng);
  const std::vector<int> prefix_ids(target.ids.begin(), target.ids.end() - 1);
  const std::vector<int> prefix_groups(target.groups.begin(),
                                       target.groups.end() - 1);
  const Tensor logits =
      model.decode(h_enc, prefix_ids, prefix_groups, train, rng);
  const std::vector<int> gold(target.ids.begin() + 1, target.ids.end());
  return cross_entropy(logits, gold, Vocabulary::kPad);
}

// ---- Assembly parameters shared by training and evaluation ----

struct AssemblyConfig {
  std::size_t exemplar_count = 5;    // e
  std::size_t exemplar_max_len = 64; // per-exemplar truncation
  std::size_t doc_max_len = 1024;
  AssembleBudget budget;
};

struct TrainingExample {
  AssembledInput input;
  TaggedTarget target;
};

// Exemplar token sequences for one record, truncated per configuration.
inline std::vector<TokenSequence> exemplar_sequences(
    const TokenizedCorpus& tokens, const ExemplarSet* exemplars,
    const AssemblyConfig& cfg) {
  std::vector<TokenSequence> out;
  if (!exemplars) return out;
  for (std::size_t i = 0;
       i < exemplars->items.size() && i < cfg.exemplar_count; ++i) {
    out.push_back(truncate_sequence(
        tokens.summaries[exemplars->items[i].record], cfg.exemplar_max_len));
  }
  return out;
}

inline AssembledInput assemble_record(std::size_t record,
                                      const TokenizedCorpus& tokens,
                                      const ExemplarSet* exemplars,
                                      const AssemblyConfig& cfg) {
  return assemble(truncate_sequence(tokens.documents[record], cfg.doc_max_len),
                  exemplar_sequences(tokens, exemplars, cfg), cfg.budget);
}

// ---- Training ----

struct SummarizerTrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 11;
  bool use_exemplars = true;  // false = retrieval-ablated mode
  AssemblyConfig assembly;
};

// Builds the assembled input + tagged target for one record.
inline TrainingExample build_training_example(
    std::size_t record, const TokenizedCorpus& tokens,
    const ExemplarSet* exemplars, const SummarizerTrainConfig& cfg,
    std::size_t max_tgt_len) {
  TrainingExample ex;
  ex.input = assemble_record(record, tokens, exemplars, cfg.assembly);
  ex.target = build_tagged_target(tokens.summaries[record], max_tgt_len,
                                  cfg.assembly.budget.max_tags);
  return ex;
}

inline TrainCurve train_summarizer(
    SummarizerModel& model, const Corpus& corpus,
    const TokenizedCorpus& tokens,
    const std::unordered_map<std::string, ExemplarSet>& exemplar_sets,
    const SummarizerTrainConfig& cfg,
    const std::function<void(std::size_t epoch)>& on_epoch_end = {}) {
  const auto train_idx = corpus.split_indices(Split::kTrain);
  if (train_idx.empty()) {
    throw DataError("train_summarizer: no train-split records");
  }

  std::vector<TrainingExample> examples;
  examples.reserve(train_idx.size());
  for (std::size_t rec : train_idx) {
    const ExemplarSet* set = nullptr;
    if (cfg.use_exemplars) {
      auto it = exemplar_sets.find(corpus.records[rec].id);
      if (it == exemplar_sets.end()) {
        throw DataError("train_summarizer: no exemplar set for record " +
                        corpus.records[rec].id +
                        "; run retrieval first or disable exemplars");
      }
      set = &it->second;
    }
    examples.push_back(build_training_example(
        rec, tokens, set, cfg, model.config().max_tgt_len));
  }

  Adam adam(model.params().all(), cfg.adam);
  Rng rng(cfg.seed);
  TrainCurve curve;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    Tensor batch_loss = Tensor::scalar(0.0);
    std::size_t in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      const Tensor mean =
          scale(batch_loss, 1.0 / static_cast<double>(in_batch));
      if (!std::isfinite(mean.item())) {
        throw NumericError("train_summarizer: non-finite loss");
      }
      mean.backward();
      adam.step();
      batch_loss = Tensor::scalar(0.0);
      in_batch = 0;
    };
    for (std::size_t i : order) {
      const Tensor loss = nll_loss(model, examples[i].input,
                                   examples[i].target, true, &rng);
      epoch_loss += loss.item();
      batch_loss = add(batch_loss, loss);
      if (++in_batch >= cfg.batch_size) flush();
    }
    flush();
    curve.epoch_mean_loss.push_back(epoch_loss /
                                    static_cast<double>(examples.size()));
    if (on_epoch_end) on_epoch_end(epoch);
  }
  return curve;
}

}  // namespace exsum

#endif  // EXSUM_SUMMARIZER_HPP_
