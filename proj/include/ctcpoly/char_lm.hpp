// ctcpoly/char_lm.hpp
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

// Character n-gram language model over inventory units.
//
// Every context seen in training (all suffix lengths up to order-1) stores a
// full add-k smoothed distribution over the predicted symbols; an unseen
// context backs off to its longest stored suffix. Each stored distribution is
// normalized on its own, so scores always sum to one.
//
// Predicted symbols are inventory ids 1..V-1 plus end-of-sentence, which
// reuses slot 0 (blank is never predicted).

#ifndef CTCPOLY_CHAR_LM_HPP_
#define CTCPOLY_CHAR_LM_HPP_

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/unitset.hpp"

namespace ctcpoly {

class CharNgramLm {
 public:
  static constexpr int kBos = -1;
  static constexpr int kEos = 0;
  static constexpr std::string_view kBosSymbol = "<s>";
  static constexpr std::string_view kEosSymbol = "</s>";

  struct State {
    std::vector<int> context;  // at most order-1 most recent tokens
    bool operator==(const State&) const = default;
  };

  CharNgramLm() = default;

  int order() const { return order_; }
  double add_k() const { return k_; }
  int vocab_size() const { return vocab_; }
  std::uint64_t inventory_hash() const { return inventory_hash_; }
  std::size_t n_contexts() const { return table_.size(); }

  State start() const { return State{{kBos}}; }

  State advance(const State& s, int symbol) const {
    State next = s;
    next.context.push_back(symbol);
    const std::size_t keep = static_cast<std::size_t>(order_ - 1);
    if (next.context.size() > keep) {
      next.context.erase(next.context.begin(),
                         next.context.end() - static_cast<std::ptrdiff_t>(keep));
    }
    return next;
  }

  /// log P(symbol | state); symbol is an inventory id >= 1 or kEos.
  double score(const State& s, int symbol) const {
    if (symbol < 0 || symbol >= vocab_) {
      throw Error("lm: symbol id " + std::to_string(symbol) + " outside the LM vocabulary");
    }
    return distribution(s)[static_cast<std::size_t>(symbol)];
  }

  /// Stored distribution for the longest seen suffix of the state's context.
  const std::vector<double>& distribution(const State& s) const {
    for (std::size_t skip = 0; skip <= s.context.size(); ++skip) {
      std::vector<int> ctx(s.context.begin() + static_cast<std::ptrdiff_t>(skip), s.context.end());
      auto it = table_.find(ctx);
      if (it != table_.end()) return it->second;
    }
    throw Error("lm: no distribution for the empty context");
  }

  /// Sum of log-probabilities of `ids`, optionally followed by end-of-sentence.
  double score_sequence(std::span<const int> ids, bool with_eos) const {
    State s = start();
    double total = 0.0;
    for (int id : ids) {
      total += score(s, id);
      s = advance(s, id);
    }
    if (with_eos) total += score(s, kEos);
    return total;
  }

  void save(std::ostream& os, const UnitInventory& inventory) const {
    check_inventory(inventory);
    char buf[64];
    os << "#ctcpoly-charlm\n";
    os << "order\t" << order_ << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", k_);
    os << "k\t" << buf << '\n';
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(inventory_hash_));
    os << "inventory\t" << buf << '\n';
    for (const auto& [ctx, dist] : table_) {
      std::string c;
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        if (i) c += ' ';
        c += token_name(ctx[i], inventory);
      }
      for (int w = 0; w < vocab_; ++w) {
        std::snprintf(buf, sizeof buf, "%.17g", dist[static_cast<std::size_t>(w)]);
        os << c << '\t' << token_name(w, inventory) << '\t' << buf << '\n';
      }
    }
  }

  void save(const std::string& path, const UnitInventory& inventory) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write LM file " + path);
    save(os, inventory);
  }

  static CharNgramLm load(std::istream& is, const UnitInventory& inventory) {
    CharNgramLm lm;
    lm.vocab_ = inventory.size();
    std::string line;
    if (!std::getline(is, line) || line != "#ctcpoly-charlm") throw Error("lm: bad header");
    auto header = [&](const char* key) {
      if (!std::getline(is, line)) throw Error(std::string("lm: missing header field ") + key);
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.substr(0, tab) != key) {
        throw Error(std::string("lm: expected header field ") + key);
      }
      return line.substr(tab + 1);
    };
    lm.order_ = std::stoi(header("order"));
    lm.k_ = std::stod(header("k"));
    lm.inventory_hash_ = std::stoull(header("inventory"), nullptr, 16);
    if (lm.inventory_hash_ != inventory.hash()) {
      throw Error("lm: inventory hash mismatch (LM built for a different unit inventory)");
    }
    int lineno = 4;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, '\t')) f.push_back(field);
      if (f.size() != 3) throw Error("lm: line " + std::to_string(lineno) + ": expected 3 fields");
      std::vector<int> ctx;
      std::stringstream cs(f[0]);
      std::string tok;
      while (cs >> tok) ctx.push_back(lm.token_id(tok, inventory, true));
      auto& dist = lm.table_[ctx];
      if (dist.empty()) dist.assign(static_cast<std::size_t>(lm.vocab_), kLogZero);
      dist[static_cast<std::size_t>(lm.token_id(f[1], inventory, false))] = std::stod(f[2]);
    }
    if (!lm.table_.count({})) throw Error("lm: missing empty-context distribution");
    return lm;
  }

  static CharNgramLm load(const std::string& path, const UnitInventory& inventory) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read LM file " + path);
    return load(is, inventory);
  }

  friend CharNgramLm train_char_lm_ids(const std::vector<std::vector<int>>& sequences, int order,
                                       const UnitInventory& inventory, double k);

 private:
  void check_inventory(const UnitInventory& inventory) const {
    if (inventory.hash() != inventory_hash_) throw Error("lm: inventory mismatch");
  }

  static std::string token_name(int id, const UnitInventory& inventory) {
    if (id == kBos) return std::string(kBosSymbol);
    if (id == kEos) return std::string(kEosSymbol);
    return inventory.symbol(id);
  }

  int token_id(const std::string& name, const UnitInventory& inventory, bool context) const {
    if (name == kBosSymbol && context) return kBos;
    if (name == kEosSymbol && !context) return kEos;
    auto id = inventory.find(name);
    if (!id || *id == kBlankId) throw Error("lm: unknown symbol '" + name + "'");
    return *id;
  }

  int order_ = 1;
  double k_ = 1.0;
  int vocab_ = 0;
  std::uint64_t inventory_hash_ = 0;
  std::map<std::vector<int>, std::vector<double>> table_;
};

/// Trains from unit-id sequences (no blanks).
inline CharNgramLm train_char_lm_ids(const std::vector<std::vector<int>>& sequences, int order,
                                     const UnitInventory& inventory, double k = 1.0) {
  if (order < 1) throw Error("lm: order must be >= 1");
  if (!(k > 0.0)) throw Error("lm: add-k constant must be > 0");
  if (sequences.empty()) throw Error("lm: empty training corpus");
  CharNgramLm lm;
  lm.order_ = order;
  lm.k_ = k;
  lm.vocab_ = inventory.size();
  lm.inventory_hash_ = inventory.hash();
  std::map<std::vector<int>, std::vector<double>> counts;
  const std::size_t V = static_cast<std::size_t>(lm.vocab_);
  for (const auto& ids : sequences) {
    std::vector<int> seq{CharNgramLm::kBos};
    for (int id : ids) {
      if (id <= kBlankId || id >= lm.vocab_) throw Error("lm: training symbol outside inventory");
      seq.push_back(id);
    }
    seq.push_back(CharNgramLm::kEos);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const std::size_t ctx_len = std::min<std::size_t>(i, static_cast<std::size_t>(order - 1));
      for (std::size_t m = 0; m <= ctx_len; ++m) {
        std::vector<int> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - m),
                             seq.begin() + static_cast<std::ptrdiff_t>(i));
        auto& c = counts[ctx];
        if (c.empty()) c.assign(V, 0.0);
        c[static_cast<std::size_t>(seq[i])] += 1.0;
      }
    }
  }
  // The predicted vocabulary is V-1 units plus end-of-sentence.
  const double n_symbols = static_cast<double>(V);
  for (const auto& [ctx, c] : counts) {
    double total = 0.0;
    for (double x : c) total += x;
    std::vector<double> dist(V);
    for (std::size_t w = 0; w < V; ++w) dist[w] = std::log((c[w] + k) / (total + k * n_symbols));
    lm.table_.emplace(ctx, std::move(dist));
  }
  return lm;
}

/// Trains from transcripts tokenized against `inventory` (phone mode needs
/// the lexicon).
inline CharNgramLm train_char_lm(const std::vector<std::string>& transcripts, int order,
                                 const UnitInventory& inventory, double k = 1.0,
                                 const Lexicon* lexicon = nullptr) {
  if (transcripts.empty()) throw Error("lm: empty training corpus");
  std::vector<std::vector<int>> seqs;
  for (const auto& t : transcripts) seqs.push_back(tokenize(t, inventory, lexicon));
  return train_char_lm_ids(seqs, order, inventory, k);
}

/// Full-prefix rescoring: log P(next | prefix).
inline double lm_score(const CharNgramLm& lm, std::span<const int> prefix, int next) {
  CharNgramLm::State s = lm.start();
  for (int id : prefix) {
    if (id <= kBlankId || id >= lm.vocab_size()) throw Error("lm: foreign symbol in prefix");
    s = lm.advance(s, id);
  }
  return lm.score(s, next);
}

}  // namespace ctcpoly

#endif  // CTCPOLY_CHAR_LM_HPP_
