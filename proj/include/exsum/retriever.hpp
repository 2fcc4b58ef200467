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
// Dense exemplar retrieval: a Siamese transformer encoder with non-shared
// projection stacks per side, multi-head cosine similarity trained with a
// temperature-scaled contrastive loss, and head-voting retrieval. Candidate
// pools come from a cheap lexical coarse ranking; Random / TF-IDF / Oracle
// baselines share the same interfaces.

#ifndef EXSUM_RETRIEVER_HPP_
#define EXSUM_RETRIEVER_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "exsum/corpus.hpp"
#include "exsum/nn.hpp"
#include "exsum/optimizer.hpp"
#include "exsum/rouge.hpp"
#include "exsum/tensor.hpp"
#include "exsum/tfidf.hpp"
#include "json.hpp"

namespace exsum {

// ---- Salience extraction ----
//
// Stand-in for a learned extractor: rank sentences by the cosine between
// their tf-idf vector and the whole-document tf-idf vector, keep the top m in
// document order.
inline TokenSequence salient_extract(const TokenSequence& doc, std::size_t m,
                                     const std::vector<double>& idf) {
  if (m == 0) throw DataError("salient_extract: m must be >= 1");
  if (doc.sentence_spans.size() <= m) return doc;

  const SparseVec doc_vec = tfidf_vector(doc.ids, idf);
  struct Scored {
    std::size_t sentence;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(doc.sentence_spans.size());
  for (std::size_t s = 0; s < doc.sentence_spans.size(); ++s) {
    const auto [b, e] = doc.sentence_spans[s];
    const std::vector<int> sent(doc.ids.begin() + static_cast<long>(b),
                                doc.ids.begin() + static_cast<long>(e));
    scored.push_back({s, sparse_cosine(tfidf_vector(sent, idf), doc_vec)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) {
                     return a.score > b.score;
                   });
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < m; ++i) keep.push_back(scored[i].sentence);
  std::sort(keep.begin(), keep.end());

  TokenSequence out;
  for (std::size_t s : keep) {
    const auto [b, e] = doc.sentence_spans[s];
    const std::size_t begin = out.ids.size();
    out.ids.insert(out.ids.end(), doc.ids.begin() + static_cast<long>(b),
                   doc.ids.begin() + static_cast<long>(e));
    out.sentence_spans.emplace_back(begin, out.ids.size());
  }
  return out;
}

// ---- Candidate pools ----

struct PoolEntry {
  std::size_t record;   // index into the corpus
  double coarse_score;  // lexical score used for pooling
  double label_score;   // ROUGE average against the query's gold summary
  bool positive = false;
};

struct CandidatePool {
  std::string query_id;
  std::size_t query_record = 0;
  std::vector<PoolEntry> entries;

  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.positive ? 1 : 0;
    return n;
  }
};

struct CoarseRankConfig {
  std::size_t pool_cap = 100;
  std::size_t positives = 8;
  std::size_t salient_sentences = 3;
};

// Lexical pre-filter over the knowledge base: score every train-split
// summary against the query's salient sentences, keep the top pool_cap, and
// label positives by ROUGE against the query's own gold summary. The query's
// own record never enters its pool.
inline CandidatePool coarse_rank(std::size_t query_record,
                                 const Corpus& corpus,
                                 const TokenizedCorpus& tokens,
                                 const std::vector<std::size_t>& kb,
                                 const std::vector<double>& idf,
                                 const CoarseRankConfig& cfg) {
  if (kb.empty()) throw DataError("coarse_rank: empty knowledge base");
  const DocumentRecord& query = corpus.records[query_record];
  const TokenSequence salient = salient_extract(
      tokens.documents[query_record], cfg.salient_sentences, idf);

  CandidatePool pool;
  pool.query_id = query.id;
  pool.query_record = query_record;
  pool.entries.reserve(kb.size());
  for (std::size_t rec : kb) {
    if (rec == query_record) continue;
    PoolEntry e;
    e.record = rec;
    e.coarse_score = rouge_avg(salient.ids, tokens.summaries[rec].ids);
    pool.entries.push_back(e);
  }
  // Ties are broken by a query-keyed hash: deterministic, but not biased
  // toward any fixed corpus prefix when the lexical signal is flat.
  auto tie_hash = [&](const PoolEntry& e) {
    return fnv1a64(query.id + "|" + corpus.records[e.record].id);
  };
  std::stable_sort(pool.entries.begin(), pool.entries.end(),
                   [&](const PoolEntry& a, const PoolEntry& b) {
                     if (a.coarse_score != b.coarse_score) {
                       return a.coarse_score > b.coarse_score;
                     }
                     const auto ha = tie_hash(a), hb = tie_hash(b);
                     if (ha != hb) return ha < hb;
                     return corpus.records[a.record].id <
                            corpus.records[b.record].id;
                   });
  if (pool.entries.size() > cfg.pool_cap) pool.entries.resize(cfg.pool_cap);

  if (!query.summary.empty()) {
    for (auto& e : pool.entries) {
      e.label_score = rouge_avg(tokens.summaries[e.record].ids,
                                tokens.summaries[query_record].ids);
    }
    std::vector<std::size_t> order(pool.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       const auto& ea = pool.entries[a];
                       const auto& eb = pool.entries[b];
                       if (ea.label_score != eb.label_score) {
                         return ea.label_score > eb.label_score;
                       }
                       return corpus.records[ea.record].id <
                              corpus.records[eb.record].id;
                     });
    for (std::size_t i = 0; i < order.size() && i < cfg.positives; ++i) {
      pool.entries[order[i]].positive = true;
    }
  }
  return pool;
}

// ---- Model ----

struct RetrieverConfig {
  std::size_t vocab = 0;
  std::size_t d_model = 64;
  std::size_t enc_layers = 2;
  std::size_t attn_heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t sim_heads = 16;  // similarity heads H; d_model % H == 0
  std::size_t max_query_len = 128;
  std::size_t max_cand_len = 64;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const {
    return {{"vocab", vocab},          {"d_model", d_model},
            {"enc_layers", enc_layers}, {"attn_heads", attn_heads},
            {"ffn_hidden", ffn_hidden}, {"sim_heads", sim_heads},
            {"max_query_len", max_query_len},
            {"max_cand_len", max_cand_len},
            {"dropout", dropout},       {"seed", seed}};
  }

  static RetrieverConfig from_json(const nlohmann::json& j) {
    RetrieverConfig c;
    c.vocab = j.at("vocab").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.enc_layers = j.at("enc_layers").get<std::size_t>();
    c.attn_heads = j.at("attn_heads").get<std::size_t>();
    c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
    c.sim_heads = j.at("sim_heads").get<std::size_t>();
    c.max_query_len = j.at("max_query_len").get<std::size_t>();
    c.max_cand_len = j.at("max_cand_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

// Shared encoder, two non-shared projection stacks (3 affine layers with
// residual connections and dropout). Representations are taken at the [CLS]
// position prepended to every sequence.
class RetrieverModel {
 public:
  enum class Side { kQuery, kCandidate };
  static constexpr std::size_t kProjLayers = 3;

  explicit RetrieverModel(RetrieverConfig cfg) : cfg_(cfg) {
    if (cfg_.vocab == 0) throw DataError("retriever: vocab size not set");
    if (cfg_.sim_heads == 0 || cfg_.d_model % cfg_.sim_heads != 0) {
      throw DataError("retriever: d_model must be divisible by sim_heads");
    }
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.d_model;
    const std::size_t max_len =
        std::max(cfg_.max_query_len, cfg_.max_cand_len) + 1;  // + [CLS]
    tok_emb_ = store_.add("tok_emb", {cfg_.vocab, d},
                          normal_init(cfg_.vocab * d, 0.02, rng));
    pos_emb_ = store_.add("pos_emb", {max_len, d},
                          normal_init(max_len * d, 0.02, rng));
    for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
      layers_.push_back(EncoderLayer::create(store_,
                                             "enc" + std::to_string(l), d,
                                             cfg_.attn_heads,
                                             cfg_.ffn_hidden, rng));
    }
    const char* side_name[2] = {"proj_q", "proj_c"};
    for (int side = 0; side < 2; ++side) {
      for (std::size_t l = 0; l < kProjLayers; ++l) {
        proj_[side].push_back(Linear::create(
            store_,
            std::string(side_name[side]) + std::to_string(l), d, d, rng));
      }
    }
  }

  const RetrieverConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Per-side representation at the [CLS] position, shape {1, d}. In train
  // mode the projection stack applies dropout draws from `rng`.
  Tensor encode(const std::vector<int>& ids, Side side, bool train = false,
                Rng* rng = nullptr) const {
    const std::size_t max_len = side == Side::kQuery ? cfg_.max_query_len
                                                     : cfg_.max_cand_len;
    std::vector<int> input;
    input.reserve(std::min(ids.size(), max_len) + 1);
    input.push_back(Vocabulary::kCls);
    for (std::size_t i = 0; i < ids.size() && i < max_len; ++i) {
      input.push_back(ids[i]);
    }
    Tensor x = add(embedding_lookup(tok_emb_, input),
                   embedding_lookup(pos_emb_, iota_ids(input.size())));
    for (const auto& layer : layers_) {
      x = layer.forward(x, 0.0, nullptr);
    }
    Tensor h = take_row(x, 0);
    const auto& stack = proj_[side == Side::kQuery ? 0 : 1];
    const double drop = train ? cfg_.dropout : 0.0;
    for (const auto& lin : stack) {
      Tensor y = lin.forward(h);
      if (drop > 0.0 && rng) y = dropout(y, drop, *rng);
      h = add(h, y);
    }
    return h;
  }

 private:
  RetrieverConfig cfg_;
  ParamStore store_;
  Tensor tok_emb_;
  Tensor pos_emb_;
  std::vector<EncoderLayer> layers_;
  std::vector<Linear> proj_[2];
};

// ---- Multi-head similarity ----

// Slices two {1, d} representations into H contiguous blocks of d/H and
// returns the per-head cosine similarities.
inline std::vector<Tensor> head_similarities(const Tensor& query_repr,
                                             const Tensor& cand_repr,
                                             std::size_t heads) {
  const std::size_t d = shape_size(query_repr.shape());
  if (d != shape_size(cand_repr.shape())) {
    throw ShapeError("head_similarities: " + shape_str(query_repr.shape()) +
                     " vs " + shape_str(cand_repr.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("head_similarities: dimension " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  std::vector<Tensor> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    out.push_back(cosine_similarity(slice_cols(query_repr, h * dh, dh),
                                    slice_cols(cand_repr, h * dh, dh)));
  }
  return out;
}

// Plain-value twin of head_similarities for frozen-model scoring; the unit
// tests pin the two routes against each other.
inline std::vector<double> head_cosine_values(const std::vector<double>& a,
                                              const std::vector<double>& b,
                                              std::size_t heads) {
  if (a.size() != b.size() || heads == 0 || a.size() % heads != 0) {
    throw ShapeError("head_cosine_values: " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + " with " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = a.size() / heads;
  std::vector<double> out(heads, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = h * dh; i < (h + 1) * dh; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
      ++detail::zero_cosine_events;
      out[h] = 0.0;
    } else {
      out[h] = dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  return out;
}

inline std::vector<double> head_similarity_values(const Tensor& query_repr,
                                                  const Tensor& cand_repr,
                                                  std::size_t heads) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(heads);
  for (const Tensor& t : head_similarities(query_repr, cand_repr, heads)) {
    out.push_back(t.item());
  }
  return out;
}

// ---- Contrastive loss ----
//
// L = sum_h sum_j -log( exp(s+_hj / tau) /
//                       (exp(s+_hj / tau) + sum_i exp(s-_hi / tau)) )
// computed as logsumexp([s+; s-...] / tau) - s+ / tau per (head, positive).

inline Tensor contrastive_loss(
    const std::vector<std::vector<Tensor>>& pos_scores,
    const std::vector<std::vector<Tensor>>& neg_scores, double tau) {
  if (tau <= 0.0) {
    throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  }
  if (pos_scores.size() != neg_scores.size()) {
    throw ShapeError("contrastive_loss: per-head score lists disagree");
  }
  Tensor total = Tensor::scalar(0.0);
  const double inv_tau = 1.0 / tau;
  for (std::size_t h = 0; h < pos_scores.size(); ++h) {
    for (const Tensor& pos : pos_scores[h]) {
      std::vector<Tensor> scaled;
      scaled.reserve(1 + neg_scores[h].size());
      const Tensor pos_scaled = scale(pos, inv_tau);
      scaled.push_back(pos_scaled);
      for (const Tensor& neg : neg_scores[h]) {
        scaled.push_back(scale(neg, inv_tau));
      }
      total = add(total, sub(log_sum_exp(stack_scalars(scaled)), pos_scaled));
    }
  }
  return total;
}

// Same formula on plain values; used for analytic checks.
inline double contrastive_loss_value(
    const std::vector<std::vector<double>>& pos_scores,
    const std::vector<std::vector<double>>& neg_scores, double tau) {
  if (tau <= 0.0) {
    throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  }
  double total = 0.0;
  for (std::size_t h = 0; h < pos_scores.size(); ++h) {
    for (double pos : pos_scores[h]) {
      double mx = pos / tau;
      for (double neg : neg_scores[h]) mx = std::max(mx, neg / tau);
      double z = std::exp(pos / tau - mx);
      for (double neg : neg_scores[h]) z += std::exp(neg / tau - mx);
      total += (mx + std::log(z)) - pos / tau;
    }
  }
  return total;
}

// ---- Training ----

struct RetrieverTrainConfig {
  std::size_t epochs = 2;
  std::size_t batch_size = 8;
  std::size_t negatives = 16;  // sampled per query from the non-positives
  double tau = 0.1;
  AdamConfig adam;
  std::uint64_t seed = 7;
};

struct TrainCurve {
  std::vector<double> epoch_mean_loss;
};

inline TrainCurve train_retriever(RetrieverModel& model,
                                  const std::vector<CandidatePool>& pools,
                                  const TokenizedCorpus& tokens,
                                  const RetrieverTrainConfig& cfg) {
  bool any_positive = false;
  for (const auto& pool : pools) any_positive |= pool.positives() > 0;
  if (!any_positive) {
    throw DataError("train_retriever: no positive candidates in any pool");
  }

  Adam adam(model.params().all(), cfg.adam);
  Rng rng(cfg.seed);
  TrainCurve curve;
  const std::size_t heads = model.config().sim_heads;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(pools.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t counted = 0;
    Tensor batch_loss = Tensor::scalar(0.0);
    std::size_t in_batch = 0;

    auto flush = [&]() {
      if (in_batch == 0) return;
      const Tensor mean = scale(batch_loss, 1.0 / static_cast<double>(in_batch));
      if (!std::isfinite(mean.item())) {
        throw NumericError("train_retriever: non-finite loss");
      }
      mean.backward();
      adam.step();
      batch_loss = Tensor::scalar(0.0);
      in_batch = 0;
    };

    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const CandidatePool& pool = pools[order[oi]];
      std::vector<std::size_t> pos_entries;
      std::vector<std::size_t> neg_entries;
      for (std::size_t i = 0; i < pool.entries.size(); ++i) {
        (pool.entries[i].positive ? pos_entries : neg_entries).push_back(i);
      }
      if (pos_entries.empty()) continue;
      std::vector<std::size_t> sampled_negs;
      if (neg_entries.size() > cfg.negatives) {
        for (std::size_t k :
             rng.sample_without_replacement(neg_entries.size(),
                                            cfg.negatives)) {
          sampled_negs.push_back(neg_entries[k]);
        }
        std::sort(sampled_negs.begin(), sampled_negs.end());
      } else {
        sampled_negs = neg_entries;
      }

      const Tensor query_repr =
          model.encode(tokens.documents[pool.query_record].ids,
                       RetrieverModel::Side::kQuery, true, &rng);
      std::vector<std::vector<Tensor>> pos_scores(heads);
      std::vector<std::vector<Tensor>> neg_scores(heads);
      for (std::size_t e : pos_entries) {
        const Tensor repr =
            model.encode(tokens.summaries[pool.entries[e].record].ids,
                         RetrieverModel::Side::kCandidate, true, &rng);
        auto sims = head_similarities(query_repr, repr, heads);
        for (std::size_t h = 0; h < heads; ++h) {
          pos_scores[h].push_back(sims[h]);
        }
      }
      for (std::size_t e : sampled_negs) {
        const Tensor repr =
            model.encode(tokens.summaries[pool.entries[e].record].ids,
                         RetrieverModel::Side::kCandidate, true, &rng);
        auto sims = head_similarities(query_repr, repr, heads);
        for (std::size_t h = 0; h < heads; ++h) {
          neg_scores[h].push_back(sims[h]);
        }
      }
      const Tensor loss = contrastive_loss(pos_scores, neg_scores, cfg.tau);
      epoch_loss += loss.item();
      ++counted;
      batch_loss = add(batch_loss, loss);
      if (++in_batch >= cfg.batch_size) flush();
    }
    flush();
    curve.epoch_mean_loss.push_back(
        counted ? epoch_loss / static_cast<double>(counted) : 0.0);
  }
  return curve;
}

// ---- Retrieval ----

struct ExemplarItem {
  std::size_t record = 0;
  std::string id;
  std::size_t votes = 0;
  double score = 0.0;  // mean cosine for dense; mode-specific otherwise
};

struct ExemplarSet {
  std::string query_id;
  std::string source;  // dense | tfidf | random | oracle
  std::vector<ExemplarItem> items;
};

struct VoteRanking {
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<std::size_t> votes;
  std::vector<double> mean_cosine;
};

// Each similarity head nominates its top-e candidates by cosine (ties by
// id); candidates are then ordered by (votes desc, mean cosine desc, id asc).
inline VoteRanking head_vote_ranking(
    const std::vector<std::vector<double>>& cosines,  // [candidate][head]
    const std::vector<std::string>& ids, std::size_t e) {
  const std::size_t n = cosines.size();
  if (ids.size() != n) {
    throw ShapeError("head_vote_ranking: ids and cosines disagree");
  }
  VoteRanking r;
  r.votes.assign(n, 0);
  r.mean_cosine.assign(n, 0.0);
  const std::size_t heads = n ? cosines[0].size() : 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (double c : cosines[i]) r.mean_cosine[i] += c;
    r.mean_cosine[i] /= static_cast<double>(heads);
  }
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       if (cosines[a][h] != cosines[b][h]) {
                         return cosines[a][h] > cosines[b][h];
                       }
                       return ids[a] < ids[b];
                     });
    for (std::size_t i = 0; i < order.size() && i < e; ++i) {
      ++r.votes[order[i]];
    }
  }
  r.order.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) r.order[i] = i;
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (r.votes[a] != r.votes[b]) {
                       return r.votes[a] > r.votes[b];
                     }
                     if (r.mean_cosine[a] != r.mean_cosine[b]) {
                       return r.mean_cosine[a] > r.mean_cosine[b];
                     }
                     return ids[a] < ids[b];
                   });
  return r;
}

// Frozen-model scorer with a candidate-representation cache; one instance
// serves many queries against the same knowledge base.
class DenseScorer {
 public:
  DenseScorer(const RetrieverModel& model, const TokenizedCorpus& tokens)
      : model_(model), tokens_(tokens) {}

  const std::vector<double>& candidate_repr(std::size_t record) {
    auto it = cache_.find(record);
    if (it != cache_.end()) return it->second;
    NoGradGuard guard;
    const Tensor repr = model_.encode(tokens_.summaries[record].ids,
                                      RetrieverModel::Side::kCandidate);
    return cache_.emplace(record, repr.values()).first->second;
  }

  std::vector<double> query_repr(std::size_t record) const {
    NoGradGuard guard;
    return model_
        .encode(tokens_.documents[record].ids, RetrieverModel::Side::kQuery)
        .values();
  }

  ExemplarSet retrieve(const CandidatePool& pool, const Corpus& corpus,
                       std::size_t e) {
    if (e == 0) throw DataError("retrieve: e must be >= 1");
    if (pool.entries.empty()) {
      throw DataError("retrieve: empty candidate pool for query " +
                      pool.query_id);
    }
    const std::size_t heads = model_.config().sim_heads;
    const std::vector<double> query = query_repr(pool.query_record);

    const std::size_t n = pool.entries.size();
    std::vector<std::vector<double>> cosines(n);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      cosines[i] = head_cosine_values(
          query, candidate_repr(pool.entries[i].record), heads);
      ids[i] = corpus.records[pool.entries[i].record].id;
    }
    const VoteRanking ranking = head_vote_ranking(cosines, ids, e);

    ExemplarSet set;
    set.query_id = pool.query_id;
    set.source = "dense";
    for (std::size_t i = 0; i < ranking.order.size() && i < e; ++i) {
      const std::size_t c = ranking.order[i];
      set.items.push_back({pool.entries[c].record, ids[c], ranking.votes[c],
                           ranking.mean_cosine[c]});
    }
    return set;
  }

 private:
  const RetrieverModel& model_;
  const TokenizedCorpus& tokens_;
  std::unordered_map<std::size_t, std::vector<double>> cache_;
};

inline ExemplarSet retrieve_dense(const RetrieverModel& model,
                                  const CandidatePool& pool,
                                  const Corpus& corpus,
                                  const TokenizedCorpus& tokens,
                                  std::size_t e) {
  DenseScorer scorer(model, tokens);
  return scorer.retrieve(pool, corpus, e);
}

inline ExemplarSet retrieve_random(std::size_t query_record,
                                   const Corpus& corpus,
                                   const std::vector<std::size_t>& kb,
                                   std::size_t e, std::uint64_t seed) {
  if (kb.empty()) throw DataError("retrieve_random: empty knowledge base");
  std::vector<std::size_t> candidates;
  for (std::size_t rec : kb) {
    if (rec != query_record) candidates.push_back(rec);
  }
  Rng rng(seed ^ fnv1a64(corpus.records[query_record].id));
  ExemplarSet set;
  set.query_id = corpus.records[query_record].id;
  set.source = "random";
  for (std::size_t k :
       rng.sample_without_replacement(candidates.size(),
                                      std::min(e, candidates.size()))) {
    set.items.push_back({candidates[k], corpus.records[candidates[k]].id, 0,
                         0.0});
  }
  return set;
}

inline ExemplarSet retrieve_tfidf(std::size_t query_record,
                                  const Corpus& corpus,
                                  const TokenizedCorpus& tokens,
                                  const std::vector<std::size_t>& kb,
                                  const TfIdfIndex& summary_index,
                                  std::size_t e) {
  // summary_index holds one vector per kb entry, in kb order.
  if (kb.size() != summary_index.size()) {
    throw DataError("retrieve_tfidf: index size does not match kb");
  }
  const auto scores =
      summary_index.scores(tokens.documents[query_record].ids);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < kb.size(); ++i) {
    if (kb[i] != query_record) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return corpus.records[kb[a]].id < corpus.records[kb[b]].id;
                   });
  ExemplarSet set;
  set.query_id = corpus.records[query_record].id;
  set.source = "tfidf";
  for (std::size_t i = 0; i < order.size() && i < e; ++i) {
    const std::size_t rec = kb[order[i]];
    set.items.push_back({rec, corpus.records[rec].id, 0, scores[order[i]]});
  }
  return set;
}

// Upper bound: best candidates by ROUGE average against the query's gold
// summary. Evaluation only; the gold summary must exist.
inline ExemplarSet retrieve_oracle(std::size_t query_record,
                                   const Corpus& corpus,
                                   const TokenizedCorpus& tokens,
                                   const std::vector<std::size_t>& kb,
                                   std::size_t e) {
  if (corpus.records[query_record].summary.empty()) {
    throw DataError("retrieve_oracle: query " +
                    corpus.records[query_record].id + " has no gold summary");
  }
  std::vector<std::pair<std::size_t, double>> scored;
  for (std::size_t rec : kb) {
    if (rec == query_record) continue;
    scored.emplace_back(rec,
                        rouge_avg(tokens.summaries[rec].ids,
                                  tokens.summaries[query_record].ids));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [&](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return corpus.records[a.first].id <
                            corpus.records[b.first].id;
                   });
  ExemplarSet set;
  set.query_id = corpus.records[query_record].id;
  set.source = "oracle";
  for (std::size_t i = 0; i < scored.size() && i < e; ++i) {
    set.items.push_back({scored[i].first, corpus.records[scored[i].first].id,
                         0, scored[i].second});
  }
  return set;
}

// ---- Persistence ----

inline nlohmann::json exemplar_set_to_json(const ExemplarSet& set) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : set.items) {
    items.push_back({{"id", item.id},
                     {"votes", item.votes},
                     {"score", item.score}});
  }
  return {{"query_id", set.query_id},
          {"source", set.source},
          {"exemplars", items}};
}

inline ExemplarSet exemplar_set_from_json(const nlohmann::json& j,
                                          const Corpus& corpus) {
  ExemplarSet set;
  set.query_id = j.at("query_id").get<std::string>();
  set.source = j.at("source").get<std::string>();
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    by_id.emplace(corpus.records[i].id, i);
  }
  for (const auto& item : j.at("exemplars")) {
    ExemplarItem e;
    e.id = item.at("id").get<std::string>();
    auto it = by_id.find(e.id);
    if (it == by_id.end()) {
      throw DataError("exemplar set references unknown record " + e.id);
    }
    e.record = it->second;
    e.votes = item.at("votes").get<std::size_t>();
    e.score = item.at("score").get<double>();
    set.items.push_back(std::move(e));
  }
  return set;
}

inline nlohmann::json pool_to_json(const CandidatePool& pool,
                                   const Corpus& corpus) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : pool.entries) {
    entries.push_back({{"id", corpus.records[e.record].id},
                       {"coarse", e.coarse_score},
                       {"label", e.label_score},
                       {"positive", e.positive}});
  }
  return {{"query_id", pool.query_id}, {"candidates", entries}};
}

}  // namespace exsum

#endif  // EXSUM_RETRIEVER_HPP_
