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
// Pipeline entry point. Subcommands: ingest, synth-corpus, train-retriever,
// retrieve, train-summarizer, summarize, evaluate, ablate. Every stage
// writes its artifacts under --workdir with a config fingerprint embedded,
// and reruns with the same fingerprint produce byte-identical files.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#ifndef EXSUM_CLI_HPP_
#define EXSUM_CLI_HPP_

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "exsum/beam.hpp"
#include "exsum/corpus.hpp"
#include "exsum/eval.hpp"
#include "exsum/retriever.hpp"
#include "exsum/rouge.hpp"
#include "exsum/summarizer.hpp"
#include "exsum/synth.hpp"
#include "exsum/tensor.hpp"
#include "exsum/tfidf.hpp"
#include "exsum/util.hpp"
#include "json.hpp"

namespace exsum::cli {

namespace fs = std::filesystem;

// Every hyperparameter of the pipeline, with library defaults. Flags are
// layered over an optional key=value config file; flags win.
struct RunConfig {
  std::string workdir = "work";
  std::uint64_t seed = 1;

  // corpus
  std::size_t vocab_cap = 8000;
  std::size_t doc_max_len = 1024;
  std::size_t summary_max_len = 256;

  // synthetic corpus
  std::string synth_style = "clustered";
  std::size_t synth_clusters = 10;
  std::size_t synth_train = 500;
  std::size_t synth_valid = 0;
  std::size_t synth_test = 50;

  // shared model dimensions
  std::size_t d_model = 64;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t attn_heads = 4;
  std::size_t ffn_hidden = 256;

  // retriever
  double tau = 0.1;
  std::size_t sim_heads = 16;
  std::size_t pool_cap = 100;
  std::size_t positives = 8;
  std::size_t negatives = 16;
  std::size_t salient_sentences = 3;
  double retriever_dropout = 0.1;
  std::size_t retriever_epochs = 2;
  std::size_t retriever_batch = 8;
  double retriever_lr = 1e-4;
  std::size_t retriever_warmup = 400;
  std::size_t retriever_max_query_len = 128;
  std::size_t retriever_max_cand_len = 64;
  double train_fraction = 1.0;

  // exemplars
  std::size_t exemplar_count = 5;
  std::size_t exemplar_max_len = 64;
  std::size_t exemplar_budget = 768;

  // summarizer
  std::size_t max_tags = 32;
  std::size_t max_tgt_len = 128;
  double summarizer_dropout = 0.0;
  bool group_tags = true;
  bool tags_at_encoder_input = false;
  std::size_t summarizer_epochs = 5;
  std::size_t summarizer_batch = 4;
  double summarizer_lr = 1e-4;
  std::size_t summarizer_warmup = 400;

  // decoding
  std::size_t beam_size = 4;
  std::size_t credit_start = 4;  // l_s
  std::size_t credit_interval = 6;
  double lambda = 1.0;
  bool credit_uses_avg = false;
  bool ebest_all_steps = false;
  std::size_t max_decode_steps = 64;

  nlohmann::json to_json() const {
    return {{"workdir", workdir},
            {"seed", seed},
            {"vocab_cap", vocab_cap},
            {"doc_max_len", doc_max_len},
            {"summary_max_len", summary_max_len},
            {"synth_style", synth_style},
            {"synth_clusters", synth_clusters},
            {"synth_train", synth_train},
            {"synth_valid", synth_valid},
            {"synth_test", synth_test},
            {"d_model", d_model},
            {"enc_layers", enc_layers},
            {"dec_layers", dec_layers},
            {"attn_heads", attn_heads},
            {"ffn_hidden", ffn_hidden},
            {"tau", tau},
            {"sim_heads", sim_heads},
            {"pool_cap", pool_cap},
            {"positives", positives},
            {"negatives", negatives},
            {"salient_sentences", salient_sentences},
            {"retriever_dropout", retriever_dropout},
            {"retriever_epochs", retriever_epochs},
            {"retriever_batch", retriever_batch},
            {"retriever_lr", retriever_lr},
            {"retriever_warmup", retriever_warmup},
            {"retriever_max_query_len", retriever_max_query_len},
            {"retriever_max_cand_len", retriever_max_cand_len},
            {"train_fraction", train_fraction},
            {"exemplar_count", exemplar_count},
            {"exemplar_max_len", exemplar_max_len},
            {"exemplar_budget", exemplar_budget},
            {"max_tags", max_tags},
            {"max_tgt_len", max_tgt_len},
            {"summarizer_dropout", summarizer_dropout},
            {"group_tags", group_tags},
            {"tags_at_encoder_input", tags_at_encoder_input},
            {"summarizer_epochs", summarizer_epochs},
            {"summarizer_batch", summarizer_batch},
            {"summarizer_lr", summarizer_lr},
            {"summarizer_warmup", summarizer_warmup},
            {"beam_size", beam_size},
            {"credit_start", credit_start},
            {"credit_interval", credit_interval},
            {"lambda", lambda},
            {"credit_uses_avg", credit_uses_avg},
            {"ebest_all_steps", ebest_all_steps},
            {"max_decode_steps", max_decode_steps}};
  }

  void validate() const {
    if (tau <= 0.0) throw DataError("tau must be > 0");
    if (sim_heads == 0 || d_model % sim_heads != 0) {
      throw DataError("d_model must be divisible by sim_heads");
    }
    if (attn_heads == 0 || d_model % attn_heads != 0) {
      throw DataError("d_model must be divisible by attn_heads");
    }
    if (vocab_cap <= Vocabulary::kReservedCount) {
      throw DataError("vocab_cap must exceed the reserved token count");
    }
    if (pool_cap == 0 || positives == 0 || exemplar_count == 0) {
      throw DataError("pool_cap, positives and exemplar_count must be >= 1");
    }
    if (lambda < 0.0) throw DataError("lambda must be >= 0");
    if (credit_interval == 0) throw DataError("credit_interval must be >= 1");
    if (max_tags < 2) throw DataError("max_tags must be >= 2");
    if (train_fraction <= 0.0 || train_fraction > 1.0) {
      throw DataError("train_fraction must be in (0, 1]");
    }
  }
};

inline std::string fingerprint(const RunConfig& cfg,
                               const std::string& stage) {
  nlohmann::json j = cfg.to_json();
  j["stage"] = stage;
  return to_hex(fnv1a64(j.dump()));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return fnv1a64(std::to_string(base) + ":" + std::string(tag));
}

// ---- Workdir layout ----

struct Workspace {
  fs::path root;
  fs::path corpus_file() const { return root / "corpus" / "corpus.jsonl"; }
  fs::path vocab_file() const { return root / "corpus" / "vocab.tsv"; }
  fs::path corpus_meta() const { return root / "corpus" / "meta.json"; }
  fs::path retriever_ckpt() const {
    return root / "retriever" / "retriever.ckpt";
  }
  fs::path pools_file() const { return root / "retriever" / "pools.jsonl"; }
  fs::path retriever_loss() const { return root / "retriever" / "loss.csv"; }
  fs::path exemplars_file(const std::string& split,
                          const std::string& mode) const {
    return root / "exemplars" / (split + "_" + mode + ".jsonl");
  }
  fs::path summarizer_ckpt(const std::string& name) const {
    return root / "summarizer" / (name + ".ckpt");
  }
  fs::path summarizer_epoch_ckpt(const std::string& name,
                                 std::size_t epoch) const {
    return root / "summarizer" /
           (name + "_epoch" + std::to_string(epoch) + ".ckpt");
  }
  fs::path summarizer_loss(const std::string& name) const {
    return root / "summarizer" / (name + "_loss.csv");
  }
  fs::path report(const std::string& name) const {
    return root / "reports" / name;
  }
};

// ---- Stage loading ----

struct Stage {
  Corpus corpus;
  Vocabulary vocab;
  TokenizedCorpus tokens;
  std::vector<std::size_t> kb;  // train-split record indices
  std::vector<double> idf;      // over kb documents, for salience
};

inline Stage load_stage(const RunConfig& cfg) {
  Workspace ws{cfg.workdir};
  if (!fs::exists(ws.corpus_file()) || !fs::exists(ws.vocab_file())) {
    throw DataError("corpus artifacts missing under " + cfg.workdir +
                    "; run `exsum ingest` or `exsum synth-corpus` first");
  }
  Stage st;
  st.corpus = ingest(ws.corpus_file());
  st.vocab = Vocabulary::load(ws.vocab_file());
  st.tokens = TokenizedCorpus::build(st.corpus, st.vocab, cfg.doc_max_len,
                                     cfg.summary_max_len);
  st.kb = st.corpus.split_indices(Split::kTrain);
  std::vector<std::vector<int>> docs;
  docs.reserve(st.kb.size());
  for (std::size_t rec : st.kb) docs.push_back(st.tokens.documents[rec].ids);
  st.idf = compute_idf(docs, st.vocab.size());
  return st;
}

inline std::vector<std::size_t> split_queries(const Stage& st,
                                              const std::string& split) {
  const auto out = st.corpus.split_indices(split_from_name(split));
  if (out.empty()) {
    throw DataError("no records in split '" + split + "'");
  }
  return out;
}

// ---- Artifact writers/readers ----

inline void write_corpus_stage(const RunConfig& cfg, const Corpus& corpus) {
  Workspace ws{cfg.workdir};
  const std::string fp = fingerprint(cfg, "corpus");
  nlohmann::json meta_line = {{"_stage", "corpus"}, {"_fingerprint", fp}};
  write_file(ws.corpus_file(), meta_line.dump() + "\n" +
                                   serialize_corpus(corpus));
  // Vocabulary from the train split (fallback: all records).
  Corpus train_only;
  for (const auto& rec : corpus.records) {
    if (rec.split == Split::kTrain) train_only.records.push_back(rec);
  }
  const Vocabulary vocab =
      build_vocab(train_only.records.empty() ? corpus : train_only,
                  cfg.vocab_cap);
  vocab.save(ws.vocab_file());
  nlohmann::json meta = {{"stage", "corpus"},
                         {"fingerprint", fp},
                         {"records", corpus.records.size()},
                         {"vocab_size", vocab.size()},
                         {"config", cfg.to_json()}};
  write_file(ws.corpus_meta(), meta.dump(2) + "\n");
}

inline std::unordered_map<std::string, ExemplarSet> load_exemplar_file(
    const fs::path& path, const Corpus& corpus,
    const std::string& producer_hint) {
  if (!fs::exists(path)) {
    throw DataError("exemplar file missing: " + path.string() + "; run `" +
                    producer_hint + "` first");
  }
  std::unordered_map<std::string, ExemplarSet> out;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("_stage") || j.contains("_fingerprint")) continue;
    ExemplarSet set = exemplar_set_from_json(j, corpus);
    const std::string id = set.query_id;
    out.emplace(id, std::move(set));
  }
  return out;
}

// ---- Model construction from config ----

inline RetrieverConfig retriever_config(const RunConfig& cfg,
                                        std::size_t vocab_size) {
  RetrieverConfig rc;
  rc.vocab = vocab_size;
  rc.d_model = cfg.d_model;
  rc.enc_layers = cfg.enc_layers;
  rc.attn_heads = cfg.attn_heads;
  rc.ffn_hidden = cfg.ffn_hidden;
  rc.sim_heads = cfg.sim_heads;
  rc.max_query_len = cfg.retriever_max_query_len;
  rc.max_cand_len = cfg.retriever_max_cand_len;
  rc.dropout = cfg.retriever_dropout;
  rc.seed = derive_seed(cfg.seed, "retriever-model");
  return rc;
}

inline SummarizerConfig summarizer_config(const RunConfig& cfg,
                                          std::size_t vocab_size,
                                          bool group_tags) {
  SummarizerConfig sc;
  sc.vocab = vocab_size;
  sc.d_model = cfg.d_model;
  sc.enc_layers = cfg.enc_layers;
  sc.dec_layers = cfg.dec_layers;
  sc.attn_heads = cfg.attn_heads;
  sc.ffn_hidden = cfg.ffn_hidden;
  sc.max_tags = cfg.max_tags;
  sc.max_src_len =
      cfg.doc_max_len + cfg.exemplar_budget + 2 * cfg.exemplar_count + 2;
  sc.max_tgt_len = cfg.max_tgt_len;
  sc.dropout = cfg.summarizer_dropout;
  sc.group_tags = group_tags;
  sc.tags_at_encoder_input = cfg.tags_at_encoder_input;
  sc.seed = derive_seed(cfg.seed, "summarizer-model");
  return sc;
}

inline AssemblyConfig assembly_config(const RunConfig& cfg) {
  AssemblyConfig ac;
  ac.exemplar_count = cfg.exemplar_count;
  ac.exemplar_max_len = cfg.exemplar_max_len;
  ac.doc_max_len = cfg.doc_max_len;
  ac.budget.total_exemplar_tokens = cfg.exemplar_budget;
  ac.budget.max_tags = cfg.max_tags;
  return ac;
}

inline CreditConfig credit_config(const RunConfig& cfg) {
  CreditConfig cc;
  cc.beam_size = cfg.beam_size;
  cc.start_step = cfg.credit_start;
  cc.interval = cfg.credit_interval;
  cc.lambda = cfg.lambda;
  cc.credit_uses_avg = cfg.credit_uses_avg;
  cc.ebest_all_steps = cfg.ebest_all_steps;
  cc.max_steps = std::min(cfg.max_decode_steps, cfg.max_tgt_len - 1);
  return cc;
}

// Reads just the meta block of a checkpoint (magic, version, length, JSON).
inline nlohmann::json peek_checkpoint_meta(const fs::path& path) {
  const std::string raw = read_file(path);
  if (raw.size() < 16 || raw.compare(0, 4, "EXCK") != 0) {
    throw DataError("corrupt checkpoint " + path.string());
  }
  std::uint64_t meta_len = 0;
  std::memcpy(&meta_len, raw.data() + 8, sizeof(meta_len));
  if (raw.size() < 16 + meta_len) {
    throw DataError("corrupt checkpoint " + path.string());
  }
  return nlohmann::json::parse(raw.substr(16, meta_len));
}

inline RetrieverModel load_retriever(const RunConfig& cfg,
                                     std::size_t vocab_size) {
  Workspace ws{cfg.workdir};
  if (!fs::exists(ws.retriever_ckpt())) {
    throw DataError("retriever checkpoint missing: " +
                    ws.retriever_ckpt().string() +
                    "; run `exsum train-retriever` first");
  }
  // Construct from the checkpoint's own config to stay shape-compatible.
  const nlohmann::json meta = peek_checkpoint_meta(ws.retriever_ckpt());
  RetrieverConfig rc = RetrieverConfig::from_json(meta.at("config"));
  if (rc.vocab != vocab_size) {
    throw DataError("retriever checkpoint was trained with vocab " +
                    std::to_string(rc.vocab) + ", corpus has " +
                    std::to_string(vocab_size));
  }
  RetrieverModel model(rc);
  load_checkpoint(model.params(), ws.retriever_ckpt());
  return model;
}

inline SummarizerModel load_summarizer(const RunConfig& cfg,
                                       const std::string& name,
                                       std::size_t vocab_size) {
  Workspace ws{cfg.workdir};
  const fs::path path = ws.summarizer_ckpt(name);
  if (!fs::exists(path)) {
    throw DataError("summarizer checkpoint missing: " + path.string() +
                    "; run `exsum train-summarizer` first");
  }
  // Construct from the checkpoint's own config to stay shape-compatible.
  const nlohmann::json meta = peek_checkpoint_meta(path);
  SummarizerConfig sc = SummarizerConfig::from_json(meta.at("config"));
  if (sc.vocab != vocab_size) {
    throw DataError("summarizer checkpoint was trained with vocab " +
                    std::to_string(sc.vocab) + ", corpus has " +
                    std::to_string(vocab_size));
  }
  SummarizerModel model(sc);
  load_checkpoint(model.params(), path);
  return model;
}

// ---- Shared pipeline pieces ----

inline std::vector<std::size_t> training_queries(const Stage& st,
                                                 const RunConfig& cfg) {
  std::vector<std::size_t> queries = st.kb;
  if (cfg.train_fraction < 1.0) {
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.train_fraction *
                                    static_cast<double>(queries.size())));
    Rng rng(derive_seed(cfg.seed, "train-fraction"));
    std::vector<std::size_t> picked;
    for (std::size_t k : rng.sample_without_replacement(queries.size(), keep)) {
      picked.push_back(queries[k]);
    }
    std::sort(picked.begin(), picked.end());
    queries = std::move(picked);
  }
  return queries;
}

inline CoarseRankConfig coarse_config(const RunConfig& cfg) {
  CoarseRankConfig cc;
  cc.pool_cap = cfg.pool_cap;
  cc.positives = cfg.positives;
  cc.salient_sentences = cfg.salient_sentences;
  return cc;
}

// Builds exemplar sets for the given queries in the given mode and writes
// them to the standard location. Returns the file path.
inline fs::path run_retrieval(const RunConfig& cfg, const Stage& st,
                              const std::string& split,
                              const std::string& mode) {
  Workspace ws{cfg.workdir};
  const auto queries = split_queries(st, split);
  const std::size_t e = cfg.exemplar_count;

  std::vector<ExemplarSet> sets;
  sets.reserve(queries.size());
  if (mode == "dense") {
    RetrieverModel model = load_retriever(cfg, st.vocab.size());
    DenseScorer scorer(model, st.tokens);
    const CoarseRankConfig cc = coarse_config(cfg);
    for (std::size_t rec : queries) {
      const CandidatePool pool =
          coarse_rank(rec, st.corpus, st.tokens, st.kb, st.idf, cc);
      sets.push_back(scorer.retrieve(pool, st.corpus, e));
    }
  } else if (mode == "tfidf") {
    std::vector<std::vector<int>> kb_summaries;
    for (std::size_t rec : st.kb) {
      kb_summaries.push_back(st.tokens.summaries[rec].ids);
    }
    const TfIdfIndex index =
        TfIdfIndex::build(kb_summaries, st.vocab.size());
    for (std::size_t rec : queries) {
      sets.push_back(
          retrieve_tfidf(rec, st.corpus, st.tokens, st.kb, index, e));
    }
  } else if (mode == "random") {
    const std::uint64_t seed = derive_seed(cfg.seed, "retrieve-random");
    for (std::size_t rec : queries) {
      sets.push_back(retrieve_random(rec, st.corpus, st.kb, e, seed));
    }
  } else if (mode == "oracle") {
    for (std::size_t rec : queries) {
      sets.push_back(retrieve_oracle(rec, st.corpus, st.tokens, st.kb, e));
    }
  } else {
    throw DataError("unknown retrieval mode: " + mode);
  }

  const std::string fp = fingerprint(cfg, "retrieve-" + split + "-" + mode);
  std::string out =
      nlohmann::json({{"_stage", "exemplars"}, {"_fingerprint", fp}}).dump() +
      "\n";
  for (const auto& set : sets) out += exemplar_set_to_json(set).dump() + "\n";
  const fs::path path = ws.exemplars_file(split, mode);
  write_file(path, out);
  return path;
}

inline void train_summarizer_stage(const RunConfig& cfg, const Stage& st,
                                   const std::string& name, bool group_tags,
                                   bool use_exemplars,
                                   const std::string& exemplar_mode) {
  Workspace ws{cfg.workdir};
  std::unordered_map<std::string, ExemplarSet> sets;
  if (use_exemplars) {
    sets = load_exemplar_file(
        ws.exemplars_file("train", exemplar_mode), st.corpus,
        "exsum retrieve --split train --mode " + exemplar_mode);
  }

  SummarizerModel model(summarizer_config(cfg, st.vocab.size(), group_tags));
  SummarizerTrainConfig tc;
  tc.epochs = cfg.summarizer_epochs;
  tc.batch_size = cfg.summarizer_batch;
  tc.adam.lr_max = cfg.summarizer_lr;
  tc.adam.warmup_steps = cfg.summarizer_warmup;
  tc.seed = derive_seed(cfg.seed, "summarizer-train");
  tc.use_exemplars = use_exemplars;
  tc.assembly = assembly_config(cfg);

  const std::string fp = fingerprint(cfg, "train-summarizer-" + name);
  nlohmann::json meta = {{"kind", "summarizer"},
                         {"name", name},
                         {"config", model.config().to_json()},
                         {"fingerprint", fp}};
  const TrainCurve curve = train_summarizer(
      model, st.corpus, st.tokens, sets, tc, [&](std::size_t epoch) {
        save_checkpoint(model.params(), meta,
                        ws.summarizer_epoch_ckpt(name, epoch));
      });
  save_checkpoint(model.params(), meta, ws.summarizer_ckpt(name));

  std::string csv = "# fingerprint=" + fp + "\nepoch,mean_loss\n";
  for (std::size_t i = 0; i < curve.epoch_mean_loss.size(); ++i) {
    csv += std::to_string(i) + ',' + format_double(curve.epoch_mean_loss[i]) +
           '\n';
  }
  write_file(ws.summarizer_loss(name), csv);
}

inline EndToEndResult decode_split(const RunConfig& cfg, const Stage& st,
                                   SummarizerModel& model,
                                   const std::string& split,
                                   bool use_exemplars,
                                   const std::string& exemplar_mode,
                                   double lambda, const std::string& label) {
  Workspace ws{cfg.workdir};
  std::unordered_map<std::string, ExemplarSet> sets;
  if (use_exemplars) {
    sets = load_exemplar_file(
        ws.exemplars_file(split, exemplar_mode), st.corpus,
        "exsum retrieve --split " + split + " --mode " + exemplar_mode);
  }
  EvalConfig ec;
  ec.assembly = assembly_config(cfg);
  ec.credit = credit_config(cfg);
  ec.credit.lambda = lambda;
  return end_to_end_eval(model, st.corpus, st.tokens,
                         split_queries(st, split),
                         use_exemplars ? &sets : nullptr, ec, label,
                         fingerprint(cfg, "decode-" + label));
}

// ---- Subcommands ----

inline int cmd_synth_corpus(const RunConfig& cfg) {
  SynthConfig sc;
  sc.style = synth_style_from_name(cfg.synth_style);
  sc.clusters = cfg.synth_clusters;
  sc.train = cfg.synth_train;
  sc.valid = cfg.synth_valid;
  sc.test = cfg.synth_test;
  sc.seed = derive_seed(cfg.seed, "synth-corpus");
  const Corpus corpus = generate_synthetic_corpus(sc);
  write_corpus_stage(cfg, corpus);
  std::cout << "synth-corpus: wrote " << corpus.records.size()
            << " records under " << cfg.workdir << "/corpus\n";
  return 0;
}

inline int cmd_ingest(const RunConfig& cfg, const std::string& input) {
  const Corpus corpus = ingest(input);
  write_corpus_stage(cfg, corpus);
  std::cout << "ingest: " << corpus.records.size() << " records from "
            << input << '\n';
  return 0;
}

inline int cmd_train_retriever(const RunConfig& cfg) {
  const Stage st = load_stage(cfg);
  Workspace ws{cfg.workdir};
  const auto queries = training_queries(st, cfg);
  const CoarseRankConfig cc = coarse_config(cfg);

  std::vector<CandidatePool> pools;
  pools.reserve(queries.size());
  for (std::size_t rec : queries) {
    pools.push_back(coarse_rank(rec, st.corpus, st.tokens, st.kb, st.idf, cc));
  }
  const std::string fp = fingerprint(cfg, "train-retriever");
  std::string pool_lines =
      nlohmann::json({{"_stage", "pools"}, {"_fingerprint", fp}}).dump() + "\n";
  for (const auto& pool : pools) {
    pool_lines += pool_to_json(pool, st.corpus).dump() + "\n";
  }
  write_file(ws.pools_file(), pool_lines);

  RetrieverModel model(retriever_config(cfg, st.vocab.size()));
  RetrieverTrainConfig tc;
  tc.epochs = cfg.retriever_epochs;
  tc.batch_size = cfg.retriever_batch;
  tc.negatives = cfg.negatives;
  tc.tau = cfg.tau;
  tc.adam.lr_max = cfg.retriever_lr;
  tc.adam.warmup_steps = cfg.retriever_warmup;
  tc.seed = derive_seed(cfg.seed, "retriever-train");
  const TrainCurve curve = train_retriever(model, pools, st.tokens, tc);

  nlohmann::json meta = {{"kind", "retriever"},
                         {"config", model.config().to_json()},
                         {"fingerprint", fp}};
  save_checkpoint(model.params(), meta, ws.retriever_ckpt());
  std::string csv = "# fingerprint=" + fp + "\nepoch,mean_loss\n";
  for (std::size_t i = 0; i < curve.epoch_mean_loss.size(); ++i) {
    csv += std::to_string(i) + ',' + format_double(curve.epoch_mean_loss[i]) +
           '\n';
  }
  write_file(ws.retriever_loss(), csv);
  std::cout << "train-retriever: " << pools.size() << " pools, "
            << curve.epoch_mean_loss.size() << " epochs, final mean loss "
            << format_double(curve.epoch_mean_loss.back(), 4) << '\n';
  return 0;
}

inline int cmd_retrieve(const RunConfig& cfg, const std::string& split,
                        const std::string& mode) {
  const Stage st = load_stage(cfg);
  const fs::path path = run_retrieval(cfg, st, split, mode);
  std::cout << "retrieve: wrote " << path.string() << '\n';
  return 0;
}

inline int cmd_train_summarizer(const RunConfig& cfg, const std::string& name,
                                bool no_exemplars,
                                const std::string& exemplar_mode) {
  const Stage st = load_stage(cfg);
  train_summarizer_stage(cfg, st, name, cfg.group_tags, !no_exemplars,
                         exemplar_mode);
  std::cout << "train-summarizer: checkpoint "
            << Workspace{cfg.workdir}.summarizer_ckpt(name).string() << '\n';
  return 0;
}

inline int cmd_summarize(const RunConfig& cfg, const std::string& name,
                         const std::string& split, bool no_exemplars,
                         const std::string& exemplar_mode,
                         const std::string& output, bool dump_input,
                         bool trace) {
  const Stage st = load_stage(cfg);
  Workspace ws{cfg.workdir};
  SummarizerModel model = load_summarizer(cfg, name, st.vocab.size());

  std::unordered_map<std::string, ExemplarSet> sets;
  if (!no_exemplars) {
    sets = load_exemplar_file(
        ws.exemplars_file(split, exemplar_mode), st.corpus,
        "exsum retrieve --split " + split + " --mode " + exemplar_mode);
  }
  const auto queries = split_queries(st, split);
  const AssemblyConfig ac = assembly_config(cfg);
  const CreditConfig credit = credit_config(cfg);
  const std::string fp = fingerprint(cfg, "summarize-" + name + "-" + split);

  std::string out_lines =
      nlohmann::json({{"_stage", "summaries"}, {"_fingerprint", fp}}).dump() +
      "\n";
  std::string trace_lines;
  std::string dump_lines;
  for (std::size_t rec : queries) {
    const std::string& id = st.corpus.records[rec].id;
    const ExemplarSet* set = nullptr;
    if (!no_exemplars) {
      auto it = sets.find(id);
      if (it == sets.end()) {
        throw DataError("no exemplar set for query " + id +
                        "; rerun `exsum retrieve --split " + split + "`");
      }
      set = &it->second;
    }
    const AssembledInput input = assemble_record(rec, st.tokens, set, ac);
    const auto ex_seqs = exemplar_sequences(st.tokens, set, ac);
    if (dump_input) {
      dump_lines += nlohmann::json({{"id", id},
                                    {"ids", input.ids},
                                    {"group_tags", input.group_tags},
                                    {"exemplar_cls_positions",
                                     input.exemplar_cls_positions}})
                        .dump() +
                    "\n";
    }
    nlohmann::json trace_json = nlohmann::json::array();
    const BeamResult beam = beam_search(model, input, ex_seqs, credit,
                                        trace ? &trace_json : nullptr);
    const std::vector<int> tokens = beam_output_tokens(beam);
    out_lines += nlohmann::json({{"id", id},
                                 {"tokens", tokens},
                                 {"text", detokenize(tokens, st.vocab)}})
                     .dump() +
                 "\n";
    if (trace) {
      trace_lines +=
          nlohmann::json({{"id", id}, {"trace", trace_json}}).dump() + "\n";
    }
  }
  const fs::path out_path = ws.report(output);
  write_file(out_path, out_lines);
  if (trace) write_file(ws.report(output + ".trace.jsonl"), trace_lines);
  if (dump_input) write_file(ws.report(output + ".inputs.jsonl"), dump_lines);
  std::cout << "summarize: wrote " << out_path.string() << '\n';
  return 0;
}

inline int cmd_evaluate(const RunConfig& cfg, const std::string& split,
                        const std::string& summaries,
                        const std::vector<std::string>& exemplar_files) {
  const Stage st = load_stage(cfg);
  Workspace ws{cfg.workdir};
  const auto queries = split_queries(st, split);

  if (!exemplar_files.empty()) {
    // Exemplar-quality mode: one column per file.
    std::vector<ExemplarQualityColumn> columns;
    for (const std::string& file : exemplar_files) {
      auto sets = load_exemplar_file(file, st.corpus, "exsum retrieve");
      std::vector<ExemplarSet> aligned;
      std::string source = "?";
      for (std::size_t rec : queries) {
        auto it = sets.find(st.corpus.records[rec].id);
        if (it == sets.end()) {
          throw DataError("file " + file + " lacks exemplars for query " +
                          st.corpus.records[rec].id);
        }
        source = it->second.source;
        aligned.push_back(it->second);
      }
      columns.push_back(exemplar_quality_column(source, st.corpus, st.tokens,
                                                queries, aligned));
    }
    const std::string table = exemplar_quality_table(columns);
    const std::string fp = fingerprint(cfg, "exemplar-quality-" + split);
    write_file(ws.report("exemplar_quality.csv"),
               "# fingerprint=" + fp + "\n" + table);
    std::cout << table;
    return 0;
  }

  // Summary-scoring mode.
  const fs::path sum_path = ws.report(summaries);
  if (!fs::exists(sum_path)) {
    throw DataError("summaries file missing: " + sum_path.string() +
                    "; run `exsum summarize` first");
  }
  std::unordered_map<std::string, std::vector<int>> decoded;
  const std::string text = read_file(sum_path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("_stage")) continue;
    decoded.emplace(j.at("id").get<std::string>(),
                    j.at("tokens").get<std::vector<int>>());
  }
  std::vector<EvalRow> rows;
  for (std::size_t rec : queries) {
    const std::string& id = st.corpus.records[rec].id;
    auto it = decoded.find(id);
    if (it == decoded.end()) {
      throw DataError("summaries file lacks an output for query " + id);
    }
    rows.push_back(
        {id, rouge_all(it->second, st.tokens.summaries[rec].ids)});
  }
  const EvalReport report = make_report(
      summaries, fingerprint(cfg, "evaluate-" + split), std::move(rows));
  write_file(ws.report("eval.csv"), report_to_csv(report));
  write_file(ws.report("eval.json"), report_to_json(report).dump(2) + "\n");
  std::cout << "R-1 " << format_score_x100(report.aggregate.r1.f1) << "  R-2 "
            << format_score_x100(report.aggregate.r2.f1) << "  R-L "
            << format_score_x100(report.aggregate.rl.f1) << "  avg "
            << format_score_x100(report.aggregate.avg) << '\n';
  return 0;
}

inline int cmd_ablate(const RunConfig& cfg, const std::string& split) {
  const Stage st = load_stage(cfg);
  Workspace ws{cfg.workdir};

  // Exemplar files needed by the arms; build any that are missing.
  for (const std::string mode : {"dense", "tfidf"}) {
    for (const std::string sp : {std::string("train"), split}) {
      if (!fs::exists(ws.exemplars_file(sp, mode))) {
        run_retrieval(cfg, st, sp, mode);
      }
    }
  }

  // Checkpoints (one training per distinct name).
  struct CkptSpec {
    std::string name;
    bool group_tags;
    bool use_exemplars;
    std::string mode;
  };
  const std::vector<CkptSpec> ckpts = {
      {"ablate_full", true, true, "dense"},
      {"ablate_nogroup", false, true, "dense"},
      {"ablate_noexemplar", true, false, ""},
      {"ablate_tfidf", true, true, "tfidf"},
  };
  for (const auto& spec : ckpts) {
    if (!fs::exists(ws.summarizer_ckpt(spec.name))) {
      std::cout << "ablate: training arm checkpoint " << spec.name << "\n";
      train_summarizer_stage(cfg, st, spec.name, spec.group_tags,
                             spec.use_exemplars, spec.mode);
    }
  }

  const std::unordered_map<std::string, std::string> arm_ckpt = {
      {"full", "ablate_full"},
      {"-group_alignment", "ablate_nogroup"},
      {"-rouge_credit", "ablate_full"},
      {"-retrieval", "ablate_noexemplar"},
      {"-dense_retriever", "ablate_tfidf"},
      {"-concatenate", "ablate_nogroup"},
  };

  std::string csv = "# fingerprint=" + fingerprint(cfg, "ablate-" + split) +
                    "\narm,r1,r2,rl,avg\n";
  std::cout << "arm                 R-1    R-2    R-L    avg\n";
  for (const AblationArmSpec& arm : standard_ablation_arms()) {
    SummarizerModel model =
        load_summarizer(cfg, arm_ckpt.at(arm.name), st.vocab.size());
    const EndToEndResult result = decode_split(
        cfg, st, model, split, arm.use_exemplars, arm.exemplar_source,
        arm.lambda, arm.name);
    const RougeScores& s = result.report.aggregate;
    csv += arm.name + ',' + format_double(s.r1.f1) + ',' +
           format_double(s.r2.f1) + ',' + format_double(s.rl.f1) + ',' +
           format_double(s.avg) + '\n';
    char line[120];
    std::snprintf(line, sizeof(line), "%-18s %6s %6s %6s %6s\n",
                  arm.name.c_str(), format_score_x100(s.r1.f1).c_str(),
                  format_score_x100(s.r2.f1).c_str(),
                  format_score_x100(s.rl.f1).c_str(),
                  format_score_x100(s.avg).c_str());
    std::cout << line;
  }
  write_file(ws.report("ablation.csv"), csv);
  return 0;
}

// ---- Entry point ----

inline int run(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"exemplar-guided summarization pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may appear after the subcommand
  app.set_config("--config", "", "key=value config file; flags override it");

  // Global options shared by all subcommands.
  app.add_option("--workdir", cfg.workdir, "artifact tree root")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "global seed")->capture_default_str();
  app.add_option("--vocab-cap", cfg.vocab_cap)->capture_default_str();
  app.add_option("--doc-max-len", cfg.doc_max_len)->capture_default_str();
  app.add_option("--summary-max-len", cfg.summary_max_len)
      ->capture_default_str();
  app.add_option("--d-model", cfg.d_model)->capture_default_str();
  app.add_option("--enc-layers", cfg.enc_layers)->capture_default_str();
  app.add_option("--dec-layers", cfg.dec_layers)->capture_default_str();
  app.add_option("--attn-heads", cfg.attn_heads)->capture_default_str();
  app.add_option("--ffn-hidden", cfg.ffn_hidden)->capture_default_str();
  app.add_option("--tau", cfg.tau, "contrastive temperature")
      ->capture_default_str();
  app.add_option("--sim-heads", cfg.sim_heads, "similarity heads H")
      ->capture_default_str();
  app.add_option("--pool-cap", cfg.pool_cap)->capture_default_str();
  app.add_option("--positives", cfg.positives)->capture_default_str();
  app.add_option("--negatives", cfg.negatives)->capture_default_str();
  app.add_option("--salient-sentences", cfg.salient_sentences)
      ->capture_default_str();
  app.add_option("--retriever-dropout", cfg.retriever_dropout)
      ->capture_default_str();
  app.add_option("--retriever-epochs", cfg.retriever_epochs)
      ->capture_default_str();
  app.add_option("--retriever-batch", cfg.retriever_batch)
      ->capture_default_str();
  app.add_option("--retriever-lr", cfg.retriever_lr)->capture_default_str();
  app.add_option("--retriever-warmup", cfg.retriever_warmup)
      ->capture_default_str();
  app.add_option("--retriever-max-query-len", cfg.retriever_max_query_len)
      ->capture_default_str();
  app.add_option("--retriever-max-cand-len", cfg.retriever_max_cand_len)
      ->capture_default_str();
  app.add_option("--train-fraction", cfg.train_fraction,
                 "fraction of the kb used to train the retriever")
      ->capture_default_str();
  app.add_option("--exemplar-count", cfg.exemplar_count, "e")
      ->capture_default_str();
  app.add_option("--exemplar-max-len", cfg.exemplar_max_len)
      ->capture_default_str();
  app.add_option("--exemplar-budget", cfg.exemplar_budget)
      ->capture_default_str();
  app.add_option("--max-tags", cfg.max_tags, "group tag table size N")
      ->capture_default_str();
  app.add_option("--max-tgt-len", cfg.max_tgt_len)->capture_default_str();
  app.add_option("--summarizer-dropout", cfg.summarizer_dropout)
      ->capture_default_str();
  app.add_flag("--group-tags,!--no-group-tags", cfg.group_tags,
               "group tag alignment")
      ->capture_default_str();
  app.add_flag("--tags-at-encoder-input", cfg.tags_at_encoder_input,
               "add tags to encoder input instead of output")
      ->capture_default_str();
  app.add_option("--summarizer-epochs", cfg.summarizer_epochs)
      ->capture_default_str();
  app.add_option("--summarizer-batch", cfg.summarizer_batch)
      ->capture_default_str();
  app.add_option("--summarizer-lr", cfg.summarizer_lr)->capture_default_str();
  app.add_option("--summarizer-warmup", cfg.summarizer_warmup)
      ->capture_default_str();
  app.add_option("--beam-size", cfg.beam_size)->capture_default_str();
  app.add_option("--ls,--credit-start", cfg.credit_start,
                 "ROUGE credit start step l_s")
      ->capture_default_str();
  app.add_option("--credit-interval", cfg.credit_interval)
      ->capture_default_str();
  app.add_option("--lambda", cfg.lambda, "credit weight")
      ->capture_default_str();
  app.add_flag("--credit-avg", cfg.credit_uses_avg,
               "credit uses the three-way ROUGE average instead of ROUGE-1");
  app.add_flag("--ebest-all-steps", cfg.ebest_all_steps,
               "pick E_best from attention averaged over all decoded steps");
  app.add_option("--max-decode-steps", cfg.max_decode_steps)
      ->capture_default_str();

  int rc = 0;

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus",
                                   "generate a seeded synthetic corpus");
  synth->add_option("--style", cfg.synth_style, "clustered | paraphrase")
      ->capture_default_str();
  synth->add_option("--clusters", cfg.synth_clusters)->capture_default_str();
  synth->add_option("--train", cfg.synth_train)->capture_default_str();
  synth->add_option("--valid", cfg.synth_valid)->capture_default_str();
  synth->add_option("--test", cfg.synth_test)->capture_default_str();
  synth->callback([&] {
    cfg.validate();
    rc = cmd_synth_corpus(cfg);
  });

  // ingest
  std::string ingest_input;
  auto* ing = app.add_subcommand("ingest", "ingest a JSONL corpus");
  ing->add_option("--input", ingest_input, "JSONL corpus file")->required();
  ing->callback([&] {
    cfg.validate();
    rc = cmd_ingest(cfg, ingest_input);
  });

  // train-retriever
  auto* tr = app.add_subcommand("train-retriever",
                                "contrastive training of the dense retriever");
  tr->callback([&] {
    cfg.validate();
    rc = cmd_train_retriever(cfg);
  });

  // retrieve
  std::string r_split = "test";
  std::string r_mode = "dense";
  auto* ret = app.add_subcommand("retrieve", "build exemplar sets");
  ret->add_option("--split", r_split, "train | valid | test")
      ->capture_default_str();
  ret->add_option("--mode", r_mode, "dense | tfidf | random | oracle")
      ->capture_default_str();
  ret->callback([&] {
    cfg.validate();
    rc = cmd_retrieve(cfg, r_split, r_mode);
  });

  // train-summarizer
  std::string ts_name = "summarizer";
  std::string ts_mode = "dense";
  bool ts_no_exemplars = false;
  auto* ts = app.add_subcommand("train-summarizer",
                                "train the exemplar-conditioned summarizer");
  ts->add_option("--model-name", ts_name)->capture_default_str();
  ts->add_option("--mode", ts_mode, "exemplar source for training inputs")
      ->capture_default_str();
  ts->add_flag("--no-exemplars", ts_no_exemplars,
               "retrieval-ablated training (document only)");
  ts->callback([&] {
    cfg.validate();
    rc = cmd_train_summarizer(cfg, ts_name, ts_no_exemplars, ts_mode);
  });

  // summarize
  std::string s_name = "summarizer";
  std::string s_split = "test";
  std::string s_mode = "dense";
  std::string s_output = "summaries.jsonl";
  bool s_no_exemplars = false;
  bool s_no_credit = false;
  bool s_dump_input = false;
  bool s_trace = false;
  auto* sum = app.add_subcommand("summarize", "decode a split");
  sum->add_option("--model-name", s_name)->capture_default_str();
  sum->add_option("--split", s_split)->capture_default_str();
  sum->add_option("--mode", s_mode, "exemplar source")->capture_default_str();
  sum->add_option("--output", s_output, "file name under reports/")
      ->capture_default_str();
  sum->add_flag("--no-exemplars", s_no_exemplars, "decode without exemplars");
  sum->add_flag("--no-credit", s_no_credit, "alias for --lambda 0");
  sum->add_flag("--dump-input", s_dump_input,
                "dump assembled inputs next to the summaries");
  sum->add_flag("--trace", s_trace, "dump per-step beam traces");
  sum->callback([&] {
    cfg.validate();
    if (s_no_credit) cfg.lambda = 0.0;
    rc = cmd_summarize(cfg, s_name, s_split, s_no_exemplars, s_mode, s_output,
                       s_dump_input, s_trace);
  });

  // evaluate
  std::string e_split = "test";
  std::string e_summaries = "summaries.jsonl";
  std::vector<std::string> e_exemplars;
  auto* ev = app.add_subcommand("evaluate",
                                "score summaries or exemplar quality");
  ev->add_option("--split", e_split)->capture_default_str();
  ev->add_option("--summaries", e_summaries, "file name under reports/")
      ->capture_default_str();
  ev->add_option("--exemplar-quality", e_exemplars,
                 "exemplar files to score instead of summaries");
  ev->callback([&] {
    cfg.validate();
    rc = cmd_evaluate(cfg, e_split, e_summaries, e_exemplars);
  });

  // ablate
  std::string a_split = "test";
  auto* ab = app.add_subcommand("ablate", "run the standard ablation arms");
  ab->add_option("--split", a_split)->capture_default_str();
  ab->callback([&] {
    cfg.validate();
    rc = cmd_ablate(cfg, a_split);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}

}  // namespace exsum::cli

#endif  // EXSUM_CLI_HPP_
