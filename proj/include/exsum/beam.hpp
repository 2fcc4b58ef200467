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
// Length-normalized beam search with periodic ROUGE Credit: every `interval`
// steps and at finalization, each beam's ranking score becomes
//   avg_logprob + lambda * ROUGE(beam, E_best) * g(k)
// where E_best is the exemplar whose [CLS] position receives the most
// cross-attention from the decoder at the beam's current position, and
//   g(k) = 0 for k <= l_s, exp(1 - l_s/k) otherwise.
// With lambda = 0 or no exemplars the credit machinery is skipped entirely
// and the decoder is plain length-normalized beam search.

#ifndef EXSUM_BEAM_HPP_
#define EXSUM_BEAM_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "exsum/rouge.hpp"
#include "exsum/summarizer.hpp"
#include "exsum/tensor.hpp"
#include "json.hpp"

namespace exsum {

inline double g_weight(std::size_t k, std::size_t start_step) {
  if (k <= start_step) return 0.0;
  return std::exp(1.0 - static_cast<double>(start_step) /
                            static_cast<double>(k));
}

struct CreditConfig {
  std::size_t beam_size = 4;
  std::size_t start_step = 4;  // l_s
  std::size_t interval = 6;
  double lambda = 1.0;
  RougeMode rouge_mode = RougeMode::kF1;
  bool credit_uses_avg = false;  // false: ROUGE-1; true: (R1+R2+RL)/3
  // E_best from the current step's attention row (default) or averaged over
  // every decoded position so far.
  bool ebest_all_steps = false;
  std::size_t max_steps = 64;
};

struct BeamHypothesis {
  std::vector<int> ids;  // starts at [BOS]
  double logprob_sum = 0.0;
  bool finished = false;
  double last_credit = 0.0;
  int last_best_exemplar = -1;

  std::size_t generated() const { return ids.size() - 1; }
  double avg_logprob() const {
    return generated() ? logprob_sum / static_cast<double>(generated()) : 0.0;
  }
};

namespace detail {

inline std::vector<int> content_tokens(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= Vocabulary::kReservedCount) out.push_back(id);
  }
  return out;
}

// Lexicographic comparison of token sequences; the deterministic tie-break.
inline bool ids_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

// ROUGE between the hypothesis' content tokens and an exemplar, gated by
// g(k). Defaults to ROUGE-1 (the sturdier choice on short prefixes).
inline double rouge_credit(const BeamHypothesis& hyp,
                           const TokenSequence& exemplar, std::size_t k,
                           const CreditConfig& cfg) {
  const double gate = g_weight(k, cfg.start_step);
  if (gate == 0.0) return 0.0;
  const std::vector<int> content = detail::content_tokens(hyp.ids);
  double base;
  if (cfg.credit_uses_avg) {
    const RougeScores s = rouge_all(content, exemplar.ids);
    base = cfg.rouge_mode == RougeMode::kRecall
               ? (s.r1.recall + s.r2.recall + s.rl.recall) / 3.0
               : s.avg;
  } else {
    base = rouge_value(rouge_n(content, exemplar.ids, 1), cfg.rouge_mode);
  }
  return base * gate;
}

// Argmax of attention mass restricted to the exemplar [CLS] positions; exact
// ties go to the lowest exemplar index.
inline std::size_t argmax_exemplar_mass(
    const std::vector<double>& attention_row,
    const std::vector<std::size_t>& cls_positions) {
  if (cls_positions.empty()) {
    throw DataError("argmax_exemplar_mass: no exemplar positions");
  }
  std::size_t best = 0;
  double best_mass = attention_row.at(cls_positions[0]);
  for (std::size_t e = 1; e < cls_positions.size(); ++e) {
    const double mass = attention_row.at(cls_positions[e]);
    if (mass > best_mass) {
      best_mass = mass;
      best = e;
    }
  }
  return best;
}

// Runs the decoder over the prefix and picks the exemplar whose [CLS]
// position gets the highest heads-averaged cross-attention mass at the
// current (last) position of the last decoder layer; optionally averaged
// over every position decoded so far instead.
inline std::size_t select_best_exemplar(const SummarizerModel& model,
                                        const Tensor& h_enc,
                                        const AssembledInput& input,
                                        const std::vector<int>& prefix_ids,
                                        const std::vector<int>& prefix_groups,
                                        bool all_steps = false) {
  if (input.exemplar_cls_positions.empty()) {
    throw DataError("select_best_exemplar: input has no exemplars");
  }
  NoGradGuard guard;
  AttnRecord rec;
  model.decode(h_enc, prefix_ids, prefix_groups, false, nullptr, &rec);
  return argmax_exemplar_mass(all_steps ? rec.mean_query_row
                                        : rec.last_query_row,
                              input.exemplar_cls_positions);
}

struct BeamResult {
  BeamHypothesis best;
  std::vector<BeamHypothesis> finished;
};

inline BeamResult beam_search(const SummarizerModel& model,
                              const AssembledInput& input,
                              const std::vector<TokenSequence>& exemplars,
                              const CreditConfig& cfg,
                              nlohmann::json* trace = nullptr) {
  if (cfg.beam_size == 0) throw DataError("beam_search: beam size >= 1");
  if (cfg.interval == 0) throw DataError("beam_search: interval >= 1");
  if (cfg.lambda < 0.0) throw DataError("beam_search: lambda >= 0");
  if (cfg.max_steps + 1 > model.config().max_tgt_len) {
    throw DataError("beam_search: max_steps exceeds the decoder table");
  }
  NoGradGuard guard;
  const Tensor h_enc = model.encode(input);
  const std::size_t n_tags = model.config().max_tags;
  const bool credit_on = cfg.lambda != 0.0 && !exemplars.empty() &&
                         !input.exemplar_cls_positions.empty();

  struct Candidate {
    BeamHypothesis hyp;
    double score = 0.0;
  };

  std::vector<BeamHypothesis> live{
      BeamHypothesis{{Vocabulary::kBos}, 0.0, false, 0.0, -1}};
  std::vector<BeamHypothesis> finished;

  for (std::size_t k = 1;
       k <= cfg.max_steps && !live.empty() && finished.size() < cfg.beam_size;
       ++k) {
    const bool credit_step = credit_on && (k % cfg.interval == 0);
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * cfg.beam_size);

    for (const BeamHypothesis& beam : live) {
      const auto groups = target_groups_for(beam.ids, n_tags);
      AttnRecord rec;
      const Tensor logits = model.decode(h_enc, beam.ids, groups, false,
                                         nullptr, credit_step ? &rec : nullptr);
      // Log-softmax of the last row.
      const std::size_t v = logits.cols();
      const double* row = logits.values().data() + (logits.rows() - 1) * v;
      double mx = row[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
      const double lse = mx + std::log(z);

      int parent_best = -1;
      if (credit_step) {
        parent_best = static_cast<int>(argmax_exemplar_mass(
            cfg.ebest_all_steps ? rec.mean_query_row : rec.last_query_row,
            input.exemplar_cls_positions));
      }

      // Top beam_size continuations of this beam by logprob (ties: lower
      // token id). Min-heap keeps the current worst at the front.
      const auto better = [](const std::pair<double, int>& a,
                             const std::pair<double, int>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      };
      std::vector<std::pair<double, int>> top;
      for (std::size_t j = 0; j < v; ++j) {
        const std::pair<double, int> cand{row[j] - lse, static_cast<int>(j)};
        if (top.size() < cfg.beam_size) {
          top.push_back(cand);
          std::push_heap(top.begin(), top.end(), better);
        } else if (better(cand, top.front())) {
          std::pop_heap(top.begin(), top.end(), better);
          top.back() = cand;
          std::push_heap(top.begin(), top.end(), better);
        }
      }
      std::sort(top.begin(), top.end(), better);

      for (const auto& [lp, tok] : top) {
        Candidate c;
        c.hyp.ids = beam.ids;
        c.hyp.ids.push_back(tok);
        c.hyp.logprob_sum = beam.logprob_sum + lp;
        c.hyp.finished = tok == Vocabulary::kEos;
        c.hyp.last_best_exemplar = parent_best;
        c.score = c.hyp.avg_logprob();
        if (credit_step) {
          c.hyp.last_credit = rouge_credit(
              c.hyp, exemplars[static_cast<std::size_t>(parent_best)], k, cfg);
          c.score += cfg.lambda * c.hyp.last_credit;
        }
        candidates.push_back(std::move(c));
      }
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return detail::ids_less(a.hyp.ids, b.hyp.ids);
                     });
    if (candidates.size() > cfg.beam_size) candidates.resize(cfg.beam_size);

    live.clear();
    for (Candidate& c : candidates) {
      if (c.hyp.finished) {
        finished.push_back(std::move(c.hyp));
      } else {
        live.push_back(std::move(c.hyp));
      }
    }

    if (trace) {
      nlohmann::json step;
      step["k"] = k;
      step["credit_applied"] = credit_step;
      nlohmann::json beams = nlohmann::json::array();
      for (const Candidate& c : candidates) {
        beams.push_back({{"ids", c.hyp.ids},
                         {"score", c.score},
                         {"avg_logprob", c.hyp.avg_logprob()},
                         {"credit", c.hyp.last_credit},
                         {"e_best", c.hyp.last_best_exemplar},
                         {"finished", c.hyp.finished}});
      }
      step["beams"] = std::move(beams);
      trace->push_back(std::move(step));
    }
  }

  // Out of steps: whatever is still live retires as-is.
  for (BeamHypothesis& b : live) {
    b.finished = true;
    finished.push_back(std::move(b));
  }
  if (finished.empty()) {
    throw NumericError("beam_search: no hypotheses produced");
  }

  // Finalization: rescore every finished beam, recomputing E_best on its own
  // full prefix; the gate uses the beam's own length.
  struct Final {
    std::size_t index;
    double score;
  };
  std::vector<Final> finals;
  finals.reserve(finished.size());
  for (std::size_t i = 0; i < finished.size(); ++i) {
    BeamHypothesis& beam = finished[i];
    double score = beam.avg_logprob();
    if (credit_on) {
      const auto groups = target_groups_for(beam.ids, n_tags);
      const std::size_t best = select_best_exemplar(
          model, h_enc, input, beam.ids, groups, cfg.ebest_all_steps);
      beam.last_best_exemplar = static_cast<int>(best);
      beam.last_credit =
          rouge_credit(beam, exemplars[best], beam.generated(), cfg);
      score += cfg.lambda * beam.last_credit;
    }
    finals.push_back({i, score});
  }
  std::stable_sort(finals.begin(), finals.end(),
                   [&](const Final& a, const Final& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return detail::ids_less(finished[a.index].ids,
                                             finished[b.index].ids);
                   });

  BeamResult result;
  result.best = finished[finals[0].index];
  for (const Final& f : finals) result.finished.push_back(finished[f.index]);
  if (trace) {
    nlohmann::json fin;
    fin["final"] = true;
    nlohmann::json beams = nlohmann::json::array();
    for (const BeamHypothesis& b : result.finished) {
      beams.push_back({{"ids", b.ids},
                       {"avg_logprob", b.avg_logprob()},
                       {"credit", b.last_credit},
                       {"e_best", b.last_best_exemplar}});
    }
    fin["beams"] = std::move(beams);
    trace->push_back(std::move(fin));
  }
  return result;
}

// Generated token ids of the winning beam without specials.
inline std::vector<int> beam_output_tokens(const BeamResult& result) {
  return detail::content_tokens(result.best.ids);
}

}  // namespace exsum

#endif  // EXSUM_BEAM_HPP_
