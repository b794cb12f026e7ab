// ctcpoly/scoring.hpp
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

// Levenshtein-based token and word error rates with corpus-level aggregation.

#ifndef CTCPOLY_SCORING_HPP_
#define CTCPOLY_SCORING_HPP_

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/unitset.hpp"

namespace ctcpoly {

struct ErrorBreakdown {
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long ref_len = 0;

  long errors() const { return substitutions + insertions + deletions; }

  /// (S + I + D) / N. An empty reference scores 0 when the hypothesis is
  /// empty too and +inf otherwise.
  double rate() const {
    if (ref_len == 0) return errors() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return static_cast<double>(errors()) / static_cast<double>(ref_len);
  }

  ErrorBreakdown& operator+=(const ErrorBreakdown& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_len += o.ref_len;
    return *this;
  }

  bool operator==(const ErrorBreakdown&) const = default;
};

/// Minimal unit-cost alignment. Among minimal alignments the one with the
/// fewest insertions plus deletions wins, which keeps the substitution count
/// symmetric in (ref, hyp). Remaining ties in the backtrace prefer
/// match/substitution, then deletion, then insertion.
template <typename T>
ErrorBreakdown edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  using Cost = std::pair<long, long>;  // (edits, insertions + deletions)
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<Cost>> d(n + 1, std::vector<Cost>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = {static_cast<long>(i), static_cast<long>(i)};
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = {static_cast<long>(j), static_cast<long>(j)};
  auto diag = [&](std::size_t i, std::size_t j) {
    const Cost& c = d[i - 1][j - 1];
    return Cost{c.first + (ref[i - 1] == hyp[j - 1] ? 0 : 1), c.second};
  };
  auto gap = [](const Cost& c) { return Cost{c.first + 1, c.second + 1}; };
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({diag(i, j), gap(d[i - 1][j]), gap(d[i][j - 1])});
    }
  }
  ErrorBreakdown e;
  e.ref_len = static_cast<long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == diag(i, j)) {
      if (ref[i - 1] != hyp[j - 1]) ++e.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == gap(d[i - 1][j])) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

template <typename T>
ErrorBreakdown edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return edit_distance(std::span<const T>(ref), std::span<const T>(hyp));
}

inline ErrorBreakdown edit_distance(std::string_view ref, std::string_view hyp) {
  return edit_distance(std::span<const char>(ref.data(), ref.size()),
                       std::span<const char>(hyp.data(), hyp.size()));
}

struct TerOptions {
  bool include_word_boundary = true;
};

/// Corpus TER: summed errors over summed reference length.
inline ErrorBreakdown ter(const std::vector<std::vector<int>>& refs,
                          const std::vector<std::vector<int>>& hyps, const TerOptions& opts = {}) {
  if (refs.size() != hyps.size()) {
    throw Error("ter: " + std::to_string(refs.size()) + " references vs " +
                std::to_string(hyps.size()) + " hypotheses");
  }
  auto strip = [&](const std::vector<int>& s) {
    if (opts.include_word_boundary) return s;
    std::vector<int> out;
    for (int id : s) {
      if (id != kWordBoundaryId) out.push_back(id);
    }
    return out;
  };
  ErrorBreakdown total;
  for (std::size_t i = 0; i < refs.size(); ++i) total += edit_distance(strip(refs[i]), strip(hyps[i]));
  return total;
}

/// Words of a transcript: whitespace-separated, with the word-boundary
/// symbol also acting as a separator.
inline std::vector<std::string> split_words_at_boundaries(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : text::split_words(s)) {
    std::size_t start = 0;
    while (true) {
      const auto pos = w.find(kWordBoundarySymbol, start);
      const std::string piece = w.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      if (!piece.empty()) out.push_back(piece);
      if (pos == std::string::npos) break;
      start = pos + kWordBoundarySymbol.size();
    }
  }
  return out;
}

inline ErrorBreakdown wer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size()) {
    throw Error("wer: " + std::to_string(refs.size()) + " references vs " +
                std::to_string(hyps.size()) + " hypotheses");
  }
  ErrorBreakdown total;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    total += edit_distance(split_words_at_boundaries(refs[i]), split_words_at_boundaries(hyps[i]));
  }
  return total;
}

/// Rate as a percentage with one decimal, "inf" for an empty reference.
inline std::string format_percent(double rate) {
  if (!std::isfinite(rate)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", rate * 100.0);
  return buf;
}

struct ResultRow {
  std::string system;
  std::string language;
  std::string metric;
  ErrorBreakdown errors;

  /// `system  language  metric  rate  S  I  D  ref_len`, tab-separated.
  std::string to_tsv() const {
    std::ostringstream os;
    os << system << '\t' << language << '\t' << metric << '\t' << format_percent(errors.rate()) << '\t'
       << errors.substitutions << '\t' << errors.insertions << '\t' << errors.deletions << '\t'
       << errors.ref_len;
    return os.str();
  }

  static ResultRow from_tsv(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 8) throw Error("results row: expected 8 tab-separated fields");
    ResultRow r{f[0], f[1], f[2], {}};
    r.errors.substitutions = std::stol(f[4]);
    r.errors.insertions = std::stol(f[5]);
    r.errors.deletions = std::stol(f[6]);
    r.errors.ref_len = std::stol(f[7]);
    return r;
  }
};

/// System x language grid of error rates for one metric. Systems and
/// languages keep first-insertion order.
class ResultTable {
 public:
  explicit ResultTable(std::string metric = "TER") : metric_(std::move(metric)) {}

  void add(const std::string& system, const std::string& language, const ErrorBreakdown& e) {
    if (std::find(systems_.begin(), systems_.end(), system) == systems_.end()) systems_.push_back(system);
    if (std::find(languages_.begin(), languages_.end(), language) == languages_.end()) {
      languages_.push_back(language);
    }
    for (auto& r : rows_) {
      if (r.system == system && r.language == language) {
        r.errors = e;
        return;
      }
    }
    rows_.push_back({system, language, metric_, e});
  }

  const std::vector<ResultRow>& rows() const { return rows_; }
  const std::vector<std::string>& systems() const { return systems_; }
  const std::vector<std::string>& languages() const { return languages_; }
  const std::string& metric() const { return metric_; }

  const ResultRow* find(const std::string& system, const std::string& language) const {
    for (const auto& r : rows_) {
      if (r.system == system && r.language == language) return &r;
    }
    return nullptr;
  }

  std::size_t data_cells() const { return rows_.size(); }

  std::string tsv() const {
    std::string out;
    for (const auto& r : rows_) out += r.to_tsv() + '\n';
    return out;
  }

  /// Aligned text grid: one row per system, one column per language.
  std::string table() const {
    if (rows_.empty()) throw Error("report: no results");
    std::size_t w0 = std::string("Condition").size();
    for (const auto& s : systems_) w0 = std::max(w0, s.size());
    std::vector<std::size_t> w;
    for (const auto& l : languages_) w.push_back(std::max<std::size_t>(l.size(), 7));
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w0)) << "Condition";
    for (std::size_t j = 0; j < languages_.size(); ++j) {
      os << " | " << std::right << std::setw(static_cast<int>(w[j])) << languages_[j];
    }
    os << '\n' << std::string(w0, '-');
    for (std::size_t j = 0; j < languages_.size(); ++j) os << "-+-" << std::string(w[j], '-');
    os << '\n';
    for (const auto& s : systems_) {
      os << std::left << std::setw(static_cast<int>(w0)) << s;
      for (std::size_t j = 0; j < languages_.size(); ++j) {
        const ResultRow* r = find(s, languages_[j]);
        const std::string cell = r ? format_percent(r->errors.rate()) + "%" : "-";
        os << " | " << std::right << std::setw(static_cast<int>(w[j])) << cell;
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  std::string metric_;
  std::vector<std::string> systems_;
  std::vector<std::string> languages_;
  std::vector<ResultRow> rows_;
};

struct Report {
  std::string table;
  std::vector<ResultRow> rows;
};

inline Report report(const ResultTable& results) {
  if (results.rows().empty()) throw Error("report: no results");
  return {results.table(), results.rows()};
}

}  // namespace ctcpoly

#endif  // CTCPOLY_SCORING_HPP_
