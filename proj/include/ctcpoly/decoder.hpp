// ctcpoly/decoder.hpp
//
// Copyright 2026  The ctcpoly Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CTCPOLY_DECODER_HPP_
#define CTCPOLY_DECODER_HPP_

#include <algorithm>
#include <map>
#include <vector>

#include "ctcpoly/char_lm.hpp"
#include "ctcpoly/ctc.hpp"

namespace ctcpoly {

/// Best path: per-frame argmax (lowest id on ties), then collapse.
inline std::vector<int> greedy_decode(const Matrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) throw Error("greedy_decode: empty logits");
  std::vector<int> path(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index v = 1; v < logits.cols(); ++v) {
      if (logits(t, v) > logits(t, best)) best = v;
    }
    path[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return collapse(path);
}

/// How surviving prefixes are chosen after each frame. kBestPath ranks by
/// the most probable single path into the prefix, kTotalMass by the summed
/// mass. The final choice always uses the summed mass. Only kBestPath turns
/// into greedy decoding at beam 1.
enum class BeamPruning { kBestPath, kTotalMass };

struct BeamOptions {
  int beam = 64;
  double alpha = 1.0;  // LM weight
  double beta = 0.5;   // per-unit length bonus
  BeamPruning pruning = BeamPruning::kBestPath;
};

/// A decoded prefix with its blank/non-blank ending mass.
struct Hypothesis {
  std::vector<int> prefix;
  double logp_blank = kLogZero;
  double logp_nonblank = kLogZero;
  double best_blank = kLogZero;  // single best path, per ending
  double best_nonblank = kLogZero;
  double lm_logp = 0.0;
  CharNgramLm::State lm_state;

  double acoustic() const { return log_add(logp_blank, logp_nonblank); }
  double best_path() const { return std::max(best_blank, best_nonblank); }
};

/// CTC prefix beam search. Candidates are ranked by
///   acoustic log-score + alpha * LM log-prob + beta * |prefix|
/// and the top `beam` survive each frame; the acoustic term follows
/// `opts.pruning`. Ties go to the lexicographically smaller prefix. The final
/// ranking uses the summed acoustic mass and adds the LM end-of-sentence score.
inline std::vector<int> prefix_beam_decode(const Matrix& logits, const CharNgramLm* lm,
                                           const BeamOptions& opts,
                                           Hypothesis* best_out = nullptr) {
  if (opts.beam < 1) throw Error("prefix_beam_decode: beam must be >= 1");
  if (opts.alpha < 0.0 || opts.beta < 0.0) throw Error("prefix_beam_decode: alpha, beta must be >= 0");
  if (logits.rows() == 0 || logits.cols() < 2) throw Error("prefix_beam_decode: empty logits");
  if (lm && lm->vocab_size() != logits.cols()) {
    throw Error("prefix_beam_decode: LM vocabulary size differs from the logits width");
  }
  const Matrix lp = log_softmax_rows(logits);
  const int V = static_cast<int>(lp.cols());
  const double alpha = lm ? opts.alpha : 0.0;

  auto rank_score = [&](const Hypothesis& h) {
    const double ac = opts.pruning == BeamPruning::kBestPath ? h.best_path() : h.acoustic();
    return ac + alpha * h.lm_logp + opts.beta * static_cast<double>(h.prefix.size());
  };

  std::map<std::vector<int>, Hypothesis> beams;
  {
    Hypothesis root;
    root.logp_blank = 0.0;
    root.best_blank = 0.0;
    if (lm) root.lm_state = lm->start();
    beams.emplace(root.prefix, std::move(root));
  }
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    std::map<std::vector<int>, Hypothesis> next;
    auto slot = [&](const std::vector<int>& prefix, const Hypothesis& like) -> Hypothesis& {
      auto it = next.find(prefix);
      if (it != next.end()) return it->second;
      Hypothesis h;
      h.prefix = prefix;
      h.lm_logp = like.lm_logp;
      h.lm_state = like.lm_state;
      return next.emplace(prefix, std::move(h)).first->second;
    };
    for (const auto& [prefix, h] : beams) {
      const double total = h.acoustic();
      const double best = h.best_path();
      Hypothesis& same = slot(prefix, h);
      same.logp_blank = log_add(same.logp_blank, total + lp(t, kBlankId));
      same.best_blank = std::max(same.best_blank, best + lp(t, kBlankId));
      const int last = prefix.empty() ? -1 : prefix.back();
      if (last >= 0) {
        same.logp_nonblank = log_add(same.logp_nonblank, h.logp_nonblank + lp(t, last));
        same.best_nonblank = std::max(same.best_nonblank, h.best_nonblank + lp(t, last));
      }
      for (int c = 1; c < V; ++c) {
        std::vector<int> ext = prefix;
        ext.push_back(c);
        auto it = next.find(ext);
        Hypothesis* target;
        if (it != next.end()) {
          target = &it->second;
        } else {
          Hypothesis nh;
          nh.prefix = ext;
          nh.lm_logp = h.lm_logp;
          if (lm) {
            nh.lm_logp += lm->score(h.lm_state, c);
            nh.lm_state = lm->advance(h.lm_state, c);
          }
          target = &next.emplace(ext, std::move(nh)).first->second;
        }
        const double from = c == last ? h.logp_blank : total;
        const double from_best = c == last ? h.best_blank : best;
        target->logp_nonblank = log_add(target->logp_nonblank, from + lp(t, c));
        target->best_nonblank = std::max(target->best_nonblank, from_best + lp(t, c));
      }
    }
    std::vector<Hypothesis*> ranked;
    ranked.reserve(next.size());
    for (auto& [p, h] : next) {
      if (std::isfinite(h.acoustic())) ranked.push_back(&h);
    }
    // std::map iteration is lexicographic, so a stable sort keeps the smaller
    // prefix first among equal scores.
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Hypothesis* a, const Hypothesis* b) {
      return rank_score(*a) > rank_score(*b);
    });
    if (ranked.size() > static_cast<std::size_t>(opts.beam)) ranked.resize(static_cast<std::size_t>(opts.beam));
    std::map<std::vector<int>, Hypothesis> kept;
    for (Hypothesis* h : ranked) kept.emplace(h->prefix, std::move(*h));
    beams = std::move(kept);
  }
  const Hypothesis* best = nullptr;
  double best_score = kLogZero;
  for (const auto& [p, h] : beams) {
    double s = h.acoustic() + opts.beta * static_cast<double>(p.size());
    if (lm) s += alpha * (h.lm_logp + lm->score(h.lm_state, CharNgramLm::kEos));
    if (best == nullptr || s > best_score) {
      best = &h;
      best_score = s;
    }
  }
  if (best == nullptr) throw Error("prefix_beam_decode: all hypotheses pruned");
  if (best_out) *best_out = *best;
  return best->prefix;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_DECODER_HPP_
