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
// Evaluation protocols: exemplar-quality columns (mean top-1 ROUGE average
// per retriever), end-to-end decoding reports, and the standard ablation
// arms. All reports are pure functions of (checkpoint, corpus, config, seed).

#ifndef EXSUM_EVAL_HPP_
#define EXSUM_EVAL_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exsum/beam.hpp"
#include "exsum/corpus.hpp"
#include "exsum/retriever.hpp"
#include "exsum/rouge.hpp"
#include "exsum/summarizer.hpp"
#include "json.hpp"

namespace exsum {

// ---- Reports ----

struct EvalRow {
  std::string id;
  RougeScores scores;
};

struct EvalReport {
  std::string label;
  std::string fingerprint;
  std::vector<EvalRow> rows;
  RougeScores aggregate;  // arithmetic mean per component
};

inline RougeScores mean_scores(const std::vector<EvalRow>& rows) {
  RougeScores agg;
  if (rows.empty()) return agg;
  const double n = static_cast<double>(rows.size());
  auto acc = [&](auto member, auto field) {
    double s = 0.0;
    for (const auto& row : rows) s += (row.scores.*member).*field;
    return s / n;
  };
  for (auto member : {&RougeScores::r1, &RougeScores::r2, &RougeScores::rl}) {
    (agg.*member).precision = acc(member, &RougeTriple::precision);
    (agg.*member).recall = acc(member, &RougeTriple::recall);
    (agg.*member).f1 = acc(member, &RougeTriple::f1);
  }
  for (const auto& row : rows) agg.avg += row.scores.avg;
  agg.avg /= n;
  return agg;
}

inline EvalReport make_report(std::string label, std::string fingerprint,
                              std::vector<EvalRow> rows) {
  EvalReport r;
  r.label = std::move(label);
  r.fingerprint = std::move(fingerprint);
  r.rows = std::move(rows);
  r.aggregate = mean_scores(r.rows);
  return r;
}

// CSV: one row per query plus a trailing mean row; scores are F1 in [0,1].
inline std::string report_to_csv(const EvalReport& report) {
  std::string out = "# label=" + report.label +
                    " fingerprint=" + report.fingerprint + "\n";
  out += "id,r1,r2,rl,avg\n";
  auto line = [&](const std::string& id, const RougeScores& s) {
    out += id + ',' + format_double(s.r1.f1) + ',' + format_double(s.r2.f1) +
           ',' + format_double(s.rl.f1) + ',' + format_double(s.avg) + '\n';
  };
  for (const auto& row : report.rows) line(row.id, row.scores);
  line("MEAN", report.aggregate);
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"id", row.id},
                    {"r1", row.scores.r1.f1},
                    {"r2", row.scores.r2.f1},
                    {"rl", row.scores.rl.f1},
                    {"avg", row.scores.avg}});
  }
  return {{"label", report.label},
          {"fingerprint", report.fingerprint},
          {"mean",
           {{"r1", report.aggregate.r1.f1},
            {"r2", report.aggregate.r2.f1},
            {"rl", report.aggregate.rl.f1},
            {"avg", report.aggregate.avg}}},
          {"rows", rows}};
}

// Printed tables use x100 with two decimals.
inline std::string format_score_x100(double v) {
  return format_double(100.0 * v, 2);
}

// ---- Exemplar quality (mean top-1 ROUGE average per retriever) ----

struct ExemplarQualityColumn {
  std::string retriever;
  std::vector<double> per_query;  // aligned with the query list
  double mean = 0.0;
};

inline ExemplarQualityColumn exemplar_quality_column(
    const std::string& name, const Corpus& corpus,
    const TokenizedCorpus& tokens, const std::vector<std::size_t>& queries,
    const std::vector<ExemplarSet>& sets) {
  if (sets.size() != queries.size()) {
    throw DataError("exemplar_quality: set count does not match queries");
  }
  ExemplarQualityColumn col;
  col.retriever = name;
  col.per_query.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (sets[i].items.empty()) {
      throw DataError("exemplar_quality: empty exemplar set for query " +
                      corpus.records[queries[i]].id);
    }
    const std::size_t top1 = sets[i].items[0].record;
    col.per_query.push_back(rouge_avg(tokens.summaries[top1].ids,
                                      tokens.summaries[queries[i]].ids));
  }
  for (double v : col.per_query) col.mean += v;
  if (!col.per_query.empty()) {
    col.mean /= static_cast<double>(col.per_query.size());
  }
  return col;
}

inline std::string exemplar_quality_table(
    const std::vector<ExemplarQualityColumn>& columns) {
  std::string out = "retriever,mean_top1_rouge_avg_x100\n";
  for (const auto& col : columns) {
    out += col.retriever + ',' + format_score_x100(col.mean) + '\n';
  }
  return out;
}

// ---- End-to-end decoding ----

struct DecodedSummary {
  std::string id;
  std::vector<int> tokens;  // content tokens of the winning beam
};

struct EvalConfig {
  AssemblyConfig assembly;
  CreditConfig credit;
};

struct EndToEndResult {
  EvalReport report;
  std::vector<DecodedSummary> outputs;
};

// Decodes every query and scores it against the gold summary. Passing
// nullptr for `sets` runs the retrieval-ablated (document-only) mode.
inline EndToEndResult end_to_end_eval(
    const SummarizerModel& model, const Corpus& corpus,
    const TokenizedCorpus& tokens, const std::vector<std::size_t>& queries,
    const std::unordered_map<std::string, ExemplarSet>* sets,
    const EvalConfig& cfg, const std::string& label,
    const std::string& fingerprint = "") {
  EndToEndResult result;
  std::vector<EvalRow> rows;
  for (std::size_t rec : queries) {
    const std::string& id = corpus.records[rec].id;
    const ExemplarSet* set = nullptr;
    if (sets) {
      auto it = sets->find(id);
      if (it == sets->end()) {
        throw DataError("end_to_end_eval: no exemplar set for query " + id);
      }
      set = &it->second;
    }
    const AssembledInput input =
        assemble_record(rec, tokens, set, cfg.assembly);
    const std::vector<TokenSequence> ex_seqs =
        exemplar_sequences(tokens, set, cfg.assembly);
    const BeamResult beam = beam_search(model, input, ex_seqs, cfg.credit);
    DecodedSummary out;
    out.id = id;
    out.tokens = beam_output_tokens(beam);
    rows.push_back({id, rouge_all(out.tokens, tokens.summaries[rec].ids)});
    result.outputs.push_back(std::move(out));
  }
  result.report = make_report(label, fingerprint, std::move(rows));
  return result;
}

// ---- Ablation arms ----

struct AblationArmSpec {
  std::string name;
  bool group_tags = true;      // training-time architecture switch
  bool use_exemplars = true;   // training & decoding
  std::string exemplar_source; // "dense" or "tfidf" (when exemplars in use)
  double lambda = 1.0;         // decoding-time credit weight
  // Arms that share a checkpoint name reuse that training run.
  std::string checkpoint;
};

inline std::vector<AblationArmSpec> standard_ablation_arms() {
  return {
      {"full", true, true, "dense", 1.0, "full"},
      {"-group_alignment", false, true, "dense", 1.0, "nogroup"},
      {"-rouge_credit", true, true, "dense", 0.0, "full"},
      {"-retrieval", true, false, "", 0.0, "noexemplar"},
      {"-dense_retriever", true, true, "tfidf", 1.0, "tfidf"},
      {"-concatenate", false, true, "dense", 0.0, "nogroup"},
  };
}

}  // namespace exsum

#endif  // EXSUM_EVAL_HPP_
