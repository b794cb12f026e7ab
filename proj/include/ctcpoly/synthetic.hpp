// ctcpoly/synthetic.hpp
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

// Pseudo-language corpus generator.
//
// Every language draws its units from one global phone set but realizes them
// with its own Gaussian prototypes, so a shared unit sounds different across
// languages. Each language also spells its phones with its own letters.
// Utterances are word sequences from a per-language lexicon; words are
// separated by a short silence segment that carries the word-boundary label.

#ifndef CTCPOLY_SYNTHETIC_HPP_
#define CTCPOLY_SYNTHETIC_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/features.hpp"
#include "ctcpoly/manifest.hpp"
#include "ctcpoly/unitset.hpp"

namespace ctcpoly {

struct SyntheticLanguageSpec {
  std::string code;
  std::vector<std::string> units;       // global phone symbols used here
  std::vector<std::string> letters;     // spelling of each unit
  std::vector<Vector> means;            // prototype mean of each unit
  std::vector<double> scales;           // per-unit noise standard deviation
  Vector silence_mean;                  // word-boundary realization
  double silence_scale = 1.0;
  int min_frames = 4;                   // unit duration range, inclusive
  int max_frames = 7;
  int min_silence_frames = 2;
  int max_silence_frames = 3;
  Matrix transition_bias;               // units x units, added log-weights
  std::vector<std::vector<int>> words;  // lexicon, as indices into `units`

  std::size_t size() const { return units.size(); }

  void validate(int dim) const {
    const std::string where = "synthetic language '" + code + "': ";
    if (code.empty()) throw Error("synthetic language: empty code");
    const std::size_t n = units.size();
    if (n < 2) throw Error(where + "needs >= 2 units");
    if (letters.size() != n || means.size() != n || scales.size() != n) {
      throw Error(where + "units, letters, means and scales differ in length");
    }
    if (std::set<std::string>(letters.begin(), letters.end()).size() != n) {
      throw Error(where + "spelling must be one letter per unit");
    }
    for (std::size_t u = 0; u < n; ++u) {
      if (means[u].size() != dim) {
        throw Error(where + "prototype of '" + units[u] + "' has dim " +
                    std::to_string(means[u].size()) + ", expected " + std::to_string(dim));
      }
      if (!(scales[u] > 0.0)) throw Error(where + "prototype scales must be > 0");
    }
    if (silence_mean.size() != dim) throw Error(where + "silence prototype dim mismatch");
    if (min_frames < 2 || max_frames < min_frames) {
      throw Error(where + "unit duration range must satisfy 2 <= min <= max");
    }
    if (min_silence_frames < 2 || max_silence_frames < min_silence_frames) {
      throw Error(where + "silence duration range must satisfy 2 <= min <= max");
    }
    if (transition_bias.rows() != static_cast<Eigen::Index>(n) ||
        transition_bias.cols() != static_cast<Eigen::Index>(n)) {
      throw Error(where + "transition bias must be units x units");
    }
    if (words.empty()) throw Error(where + "empty lexicon");
    for (const auto& w : words) {
      if (w.empty()) throw Error(where + "empty word");
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] < 0 || static_cast<std::size_t>(w[i]) >= n) throw Error(where + "word unit out of range");
        if (i > 0 && w[i] == w[i - 1]) throw Error(where + "word repeats a unit back to back");
      }
    }
  }

  std::string spell(const std::vector<int>& word) const {
    std::string s;
    for (int u : word) s += letters[static_cast<std::size_t>(u)];
    return s;
  }

  Lexicon lexicon() const {
    Lexicon lex;
    for (const auto& w : words) {
      std::vector<std::string> phones;
      for (int u : w) phones.push_back(units[static_cast<std::size_t>(u)]);
      lex.add(spell(w), std::move(phones));
    }
    return lex;
  }
};

/// Knobs for a family of pseudo-languages built around one phone set.
struct SyntheticBenchmarkOptions {
  int n_languages = 2;
  int n_phones = 10;            // global phone set size
  int units_per_language = 8;   // each language uses a random subset
  int feature_dim = 16;
  int words_per_language = 40;
  int min_word_units = 2;
  int max_word_units = 4;
  double base_spread = 1.0;     // std of the shared base prototypes
  double noise = 1.0;           // per-frame noise std
  double language_offset = 0.3; // std of each language's mean shift
  double confusion = 0.5;       // share of phones realized by another base
  double spelling_confusion = 0.5;  // share of letters assigned differently
  double transition_scale = 1.0;
  int min_frames = 4;
  int max_frames = 7;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_languages < 1) throw Error("synthetic: n_languages must be >= 1");
    if (n_phones < 2 || n_phones > 26) throw Error("synthetic: n_phones must be in [2, 26]");
    if (units_per_language < 2 || units_per_language > n_phones) {
      throw Error("synthetic: units_per_language must be in [2, n_phones]");
    }
    if (feature_dim < 1) throw Error("synthetic: feature_dim must be >= 1");
    if (words_per_language < 1) throw Error("synthetic: words_per_language must be >= 1");
    if (min_word_units < 1 || max_word_units < min_word_units) {
      throw Error("synthetic: word length range invalid");
    }
    if (!(noise > 0.0)) throw Error("synthetic: noise must be > 0");
    if (confusion < 0.0 || confusion > 1.0 || spelling_confusion < 0.0 || spelling_confusion > 1.0) {
      throw Error("synthetic: confusion shares must lie in [0, 1]");
    }
  }
};

namespace detail {

inline Vector gaussian_vector(int dim, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v;
}

/// Identity permutation with a random `share` of positions shuffled among
/// themselves (a derangement when possible).
inline std::vector<int> partial_permutation(int n, double share, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  const int k = static_cast<int>(std::lround(share * n));
  if (k < 2) return p;
  std::vector<int> pos = p;
  std::shuffle(pos.begin(), pos.end(), rng);
  pos.resize(static_cast<std::size_t>(k));
  // Rotating the chosen positions moves every one of them.
  for (int i = 0; i < k; ++i) {
    p[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] =
        pos[static_cast<std::size_t>((i + 1) % k)];
  }
  return p;
}

inline int sample_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<int> d(weights.begin(), weights.end());
  return d(rng);
}

}  // namespace detail

/// Phone symbol for global phone index i.
inline std::string synthetic_phone(int i) { return "p" + std::to_string(i); }

inline std::string synthetic_language_code(int i) {
  return std::string("l") + static_cast<char>('a' + i);
}

/// Builds the pseudo-language specs. Language L realizes phone p with base
/// prototype pi_L(p) shifted by a language offset and spells it with letter
/// sigma_L(p), where pi_L and sigma_L are partial permutations.
inline std::vector<SyntheticLanguageSpec> make_benchmark_specs(const SyntheticBenchmarkOptions& o) {
  o.validate();
  std::mt19937_64 rng(o.seed);
  std::vector<Vector> base;
  for (int p = 0; p < o.n_phones; ++p) base.push_back(detail::gaussian_vector(o.feature_dim, o.base_spread, rng));
  const Vector silence = detail::gaussian_vector(o.feature_dim, 0.25 * o.base_spread, rng);
  std::vector<SyntheticLanguageSpec> specs;
  for (int l = 0; l < o.n_languages; ++l) {
    SyntheticLanguageSpec s;
    s.code = synthetic_language_code(l);
    s.min_frames = o.min_frames;
    s.max_frames = o.max_frames;
    const Vector offset = detail::gaussian_vector(o.feature_dim, o.language_offset, rng);
    const auto pi = detail::partial_permutation(o.n_phones, o.confusion, rng);
    const auto sigma = detail::partial_permutation(o.n_phones, o.spelling_confusion, rng);
    std::vector<int> phones(static_cast<std::size_t>(o.n_phones));
    std::iota(phones.begin(), phones.end(), 0);
    std::shuffle(phones.begin(), phones.end(), rng);
    phones.resize(static_cast<std::size_t>(o.units_per_language));
    std::sort(phones.begin(), phones.end());
    for (int p : phones) {
      s.units.push_back(synthetic_phone(p));
      s.letters.push_back(std::string(1, static_cast<char>('a' + sigma[static_cast<std::size_t>(p)])));
      s.means.push_back(base[static_cast<std::size_t>(pi[static_cast<std::size_t>(p)])] + offset);
      s.scales.push_back(o.noise);
    }
    s.silence_mean = silence;
    s.silence_scale = o.noise;
    const int n = o.units_per_language;
    s.transition_bias = Matrix::Zero(n, n);
    std::normal_distribution<double> tb(0.0, o.transition_scale);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s.transition_bias(i, j) = tb(rng);
    std::set<std::vector<int>> seen;
    std::uniform_int_distribution<int> len(o.min_word_units, o.max_word_units);
    int attempts = 0;
    while (static_cast<int>(s.words.size()) < o.words_per_language && attempts++ < 100000) {
      std::vector<int> w;
      const int L = len(rng);
      std::vector<double> weights(static_cast<std::size_t>(n), 1.0);
      w.push_back(detail::sample_index(weights, rng));
      while (static_cast<int>(w.size()) < L) {
        for (int j = 0; j < n; ++j) {
          weights[static_cast<std::size_t>(j)] = j == w.back() ? 0.0 : std::exp(s.transition_bias(w.back(), j));
        }
        w.push_back(detail::sample_index(weights, rng));
      }
      if (seen.insert(w).second) s.words.push_back(w);
    }
    s.validate(o.feature_dim);
    specs.push_back(std::move(s));
  }
  return specs;
}

struct CorpusOptions {
  int utts_per_language = 100;
  int min_words = 2;
  int max_words = 4;
  float frame_shift_ms = 10.0f;
  std::uint64_t seed = 0;
};

struct SyntheticUtterance {
  ManifestEntry entry;
  FeatureMatrix features;
  std::vector<std::string> units;        // generating sequence, boundaries included
  std::vector<std::string> frame_units;  // one label per frame
};

struct SyntheticCorpus {
  std::vector<SyntheticLanguageSpec> specs;
  std::vector<SyntheticUtterance> utterances;
};

/// Renders `utts_per_language` random utterances per language. Fully
/// determined by the specs and `opts.seed`.
inline SyntheticCorpus generate_corpus(const std::vector<SyntheticLanguageSpec>& specs,
                                       const CorpusOptions& opts) {
  if (specs.empty()) throw Error("generate_corpus: no language specs");
  if (opts.utts_per_language < 0) throw Error("generate_corpus: negative utterance count");
  if (opts.min_words < 1 || opts.max_words < opts.min_words) {
    throw Error("generate_corpus: invalid words-per-utterance range");
  }
  const int dim = static_cast<int>(specs.front().silence_mean.size());
  for (const auto& s : specs) s.validate(dim);
  SyntheticCorpus corpus;
  corpus.specs = specs;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (const auto& s : specs) {
    std::uniform_int_distribution<int> n_words(opts.min_words, opts.max_words);
    std::uniform_int_distribution<std::size_t> pick_word(0, s.words.size() - 1);
    std::uniform_int_distribution<int> dur(s.min_frames, s.max_frames);
    std::uniform_int_distribution<int> sil(s.min_silence_frames, s.max_silence_frames);
    for (int i = 0; i < opts.utts_per_language; ++i) {
      SyntheticUtterance u;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05d", s.code.c_str(), i);
      u.entry.utterance_id = id;
      u.entry.language = s.code;
      u.entry.source = "feats/" + u.entry.utterance_id + ".feat";
      const int W = n_words(rng);
      std::vector<Vector> frames;
      auto render = [&](const Vector& mean, double scale, int n, const std::string& label) {
        for (int k = 0; k < n; ++k) {
          Vector f(dim);
          for (int d = 0; d < dim; ++d) f(d) = mean(d) + scale * unit_normal(rng);
          frames.push_back(std::move(f));
          u.frame_units.push_back(label);
        }
      };
      for (int w = 0; w < W; ++w) {
        const auto& word = s.words[pick_word(rng)];
        if (w > 0) {
          u.entry.transcript += ' ';
          u.units.emplace_back(kWordBoundarySymbol);
          render(s.silence_mean, s.silence_scale, sil(rng), std::string(kWordBoundarySymbol));
        }
        u.entry.transcript += s.spell(word);
        for (int unit : word) {
          const auto k = static_cast<std::size_t>(unit);
          u.units.push_back(s.units[k]);
          render(s.means[k], s.scales[k], dur(rng), s.units[k]);
        }
      }
      u.features.kind = FeatureKind::kLogMel;
      u.features.frame_shift_ms = opts.frame_shift_ms;
      u.features.data.resize(static_cast<Eigen::Index>(frames.size()), dim);
      for (std::size_t t = 0; t < frames.size(); ++t) {
        u.features.data.row(static_cast<Eigen::Index>(t)) = frames[t].transpose();
      }
      u.entry.duration = static_cast<double>(frames.size()) * opts.frame_shift_ms / 1000.0;
      corpus.utterances.push_back(std::move(u));
    }
  }
  return corpus;
}

/// Merges consecutive equal frame labels.
inline std::vector<std::string> merge_repeats(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) {
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

/// Global phone inventory over every language of the corpus.
inline UnitInventory corpus_phone_inventory(const SyntheticCorpus& c) {
  std::vector<UnitInventory> parts;
  for (const auto& s : c.specs) parts.push_back(build_phone_inventory(s.lexicon(), s.code));
  return merge_inventories(parts);
}

// On-disk layout under a corpus directory:
//   manifest.jsonl         one entry per utterance
//   feats/<id>.feat        feature matrices
//   frame_targets.tsv      <id> TAB space-separated per-frame unit symbols
//   lexicon.<lang>.tsv     spelling -> phones per language
//   phones.units           global phone inventory

inline void write_frame_targets(const SyntheticCorpus& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  for (const auto& u : c.utterances) {
    os << u.entry.utterance_id << '\t';
    for (std::size_t t = 0; t < u.frame_units.size(); ++t) os << (t ? " " : "") << u.frame_units[t];
    os << '\n';
  }
}

inline std::map<std::string, std::vector<std::string>> read_frame_targets(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read frame targets " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error("frame targets line " + std::to_string(lineno) + ": missing tab");
    }
    std::vector<std::string> labels;
    std::istringstream ss(line.substr(tab + 1));
    std::string l;
    while (ss >> l) labels.push_back(l);
    out[line.substr(0, tab)] = std::move(labels);
  }
  return out;
}

inline void write_corpus(const SyntheticCorpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "feats");
  std::vector<ManifestEntry> entries;
  for (const auto& u : c.utterances) {
    save_features(u.features, (fs::path(dir) / u.entry.source).string());
    entries.push_back(u.entry);
  }
  write_manifest(entries, (fs::path(dir) / "manifest.jsonl").string());
  write_frame_targets(c, (fs::path(dir) / "frame_targets.tsv").string());
  for (const auto& s : c.specs) s.lexicon().save((fs::path(dir) / ("lexicon." + s.code + ".tsv")).string());
  if (!c.specs.empty()) corpus_phone_inventory(c).save((fs::path(dir) / "phones.units").string());
}

}  // namespace ctcpoly

#endif  // CTCPOLY_SYNTHETIC_HPP_
