// ctcpoly/experiment.hpp
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

#ifndef CTCPOLY_EXPERIMENT_HPP_
#define CTCPOLY_EXPERIMENT_HPP_

// End-to-end recipe: manifest -> features -> optional BNF -> optional LFV ->
// CTC training -> greedy (and optionally beam + LM) decoding -> scoring.
// One config describes one system; monolingual systems train one model per
// language.

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toml.hpp"

#include "ctcpoly/bottleneck.hpp"
#include "ctcpoly/char_lm.hpp"
#include "ctcpoly/decoder.hpp"
#include "ctcpoly/manifest.hpp"
#include "ctcpoly/scoring.hpp"
#include "ctcpoly/synthetic.hpp"
#include "ctcpoly/trainer.hpp"

namespace ctcpoly {

enum class Condition { kMonolingual, kMultilingual };

inline std::string_view to_string(Condition c) {
  return c == Condition::kMonolingual ? "monolingual" : "multilingual";
}

inline Condition parse_condition(std::string_view s) {
  if (s == "monolingual" || s == "mono") return Condition::kMonolingual;
  if (s == "multilingual" || s == "ml") return Condition::kMultilingual;
  throw Error("unknown condition '" + std::string(s) + "' (expected monolingual|multilingual)");
}

struct SyntheticDataConfig {
  SyntheticBenchmarkOptions benchmark;
  CorpusOptions corpus;
  std::optional<std::uint64_t> language_seed;  // fixes the languages across run seeds
};

struct ExperimentConfig {
  // [data]
  std::string manifest;       // ignored when `synthetic` is set
  std::string frame_targets;  // default: frame_targets.tsv next to the manifest
  std::string lexicon_pattern = "lexicon.{lang}.tsv";
  std::vector<std::string> languages;  // empty: every language in the manifest
  double test_fraction = 0.1;
  IngestFilters filters;
  std::optional<SyntheticDataConfig> synthetic;

  // [features]
  FeatureKind input = FeatureKind::kLogMel;  // logmel or bnf
  bool lfv = false;
  std::string bnf_net;  // trained and saved under output_dir when empty
  std::string lfv_net;
  BottleneckNetConfig bnf_config = BottleneckNetConfig::desk_bnf(1, 1, 1);
  BottleneckNetConfig lfv_config = BottleneckNetConfig::desk_lfv(1, 1);
  TrainConfig bnf_train{0.02, 0.9, 64, 5, false, 0, 0.0};
  TrainConfig lfv_train{0.02, 0.9, 64, 5, false, 0, 0.0};

  // [model]
  Condition condition = Condition::kMultilingual;
  UnitMode unit_mode = UnitMode::kGrapheme;
  ModelConfig model;  // input_dim, lfv_dim and output_dim are derived

  // [train]
  TrainConfig train{1e-2, 0.9, 20, 20, true, 0, 0.0};
  bool equal_updates = false;  // monolingual epochs x number of languages

  // [decode]
  int beam = 0;  // 0: greedy only
  int lm_order = 0;
  double lm_k = 0.1;
  double alpha = 1.0;
  double beta = 0.5;

  // [score]
  std::string system;  // results label; derived from the condition when empty

  std::string output_dir = "exp";
  std::uint64_t seed = 0;

  std::string system_label() const {
    if (!system.empty()) return system;
    std::string s = condition == Condition::kMonolingual ? "Mono" : "ML";
    if (lfv) s += "+LFV";
    if (input == FeatureKind::kBnf) s += "/BNF";
    return s;
  }

  void validate() const {
    if (!synthetic && manifest.empty()) throw Error("config: [data] needs manifest or [data.synthetic]");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw Error("config: [data] test_fraction must be in (0, 1)");
    }
    if (input != FeatureKind::kLogMel && input != FeatureKind::kBnf) {
      throw Error("config: [features] input must be logmel or bnf");
    }
    if (beam < 0) throw Error("config: [decode] beam must be >= 0");
    if (lm_order < 0) throw Error("config: [decode] lm_order must be >= 0");
    if (lm_order > 0 && beam == 0) throw Error("config: [decode] lm_order needs beam > 0");
    if (output_dir.empty()) throw Error("config: output_dir must not be empty");
    train.validate();
  }
};

// ---------------------------------------------------------------------------
// TOML loading.

namespace detail {

class TomlSection {
 public:
  TomlSection(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  bool present() const { return t_ != nullptr; }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n->value<bool>()) { out = *v; return; }
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = n->value<std::int64_t>(); v && n->is_integer()) {
        if (*v < 0 && std::is_unsigned_v<T>) fail(key, "must be non-negative");
        out = static_cast<T>(*v);
        return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = n->value<double>()) { out = *v; return; }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n->value<std::string>()) { out = *v; return; }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (const auto* arr = n->as_array()) {
        out.clear();
        for (const auto& e : *arr) {
          auto v = e.value<std::string>();
          if (!v) fail(key, "expected an array of strings");
          out.push_back(*v);
        }
        return;
      }
    }
    fail(key, "has the wrong type");
  }

  /// Rejects keys this section does not know; catches typos early.
  void finish(std::initializer_list<const char*> subtables = {}) const {
    if (!t_) return;
    std::set<std::string> allowed(seen_.begin(), seen_.end());
    allowed.insert(subtables.begin(), subtables.end());
    for (const auto& [k, v] : *t_) {
      if (!allowed.count(std::string(k.str()))) {
        throw Error("config: unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
      }
    }
  }

  const toml::table* sub(const char* key) const {
    if (!t_) return nullptr;
    const toml::node* n = t_->get(key);
    if (n && !n->is_table()) throw Error("config: [" + name_ + "] " + key + " must be a table");
    return n ? n->as_table() : nullptr;
  }

 private:
  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw Error("config: [" + name_ + "] " + key + " " + why);
  }

  const toml::table* t_;
  std::string name_;
  std::set<std::string> seen_;
};

inline void read_train(TomlSection s, TrainConfig& tc) {
  s.get("learning_rate", tc.learning_rate);
  s.get("momentum", tc.momentum);
  s.get("batch_size", tc.batch_size);
  s.get("epochs", tc.epochs);
  s.get("sort_first_epoch", tc.sort_first_epoch);
  s.get("max_grad_norm", tc.max_grad_norm);
  s.finish();
}

inline void read_bottleneck(TomlSection s, BottleneckNetConfig& c, TrainConfig& tc,
                            const std::string& name) {
  s.get("layers", c.n_layers);
  s.get("width", c.layer_width);
  s.get("bottleneck_dim", c.bottleneck_dim);
  s.get("bottleneck_position", c.bottleneck_position);
  s.get("context_left", c.context_left);
  s.get("context_right", c.context_right);
  s.get("context_stride", c.context_stride);
  read_train(TomlSection(s.sub("train"), name + ".train"), tc);
  s.finish({"train"});
}

}  // namespace detail

/// Parses an experiment config. Relative paths resolve against `base_dir`.
/// CTCPOLY_SEED, when set, overrides the seed.
inline ExperimentConfig parse_experiment_config(const toml::table& root,
                                                const std::string& base_dir = ".") {
  namespace fs = std::filesystem;
  ExperimentConfig c;
  detail::TomlSection top(&root, "top level");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.finish({"data", "features", "model", "train", "decode", "score"});

  detail::TomlSection data(root["data"].as_table(), "data");
  data.get("manifest", c.manifest);
  data.get("frame_targets", c.frame_targets);
  data.get("lexicon_pattern", c.lexicon_pattern);
  data.get("languages", c.languages);
  data.get("test_fraction", c.test_fraction);
  data.get("min_duration", c.filters.min_duration);
  data.get("max_symbols", c.filters.max_symbols);
  data.get("noise_markers", c.filters.noise_markers);
  if (const toml::table* syn = data.sub("synthetic")) {
    SyntheticDataConfig sd;
    auto& b = sd.benchmark;
    detail::TomlSection s(syn, "data.synthetic");
    s.get("languages", b.n_languages);
    s.get("phones", b.n_phones);
    s.get("units_per_language", b.units_per_language);
    s.get("feature_dim", b.feature_dim);
    s.get("words_per_language", b.words_per_language);
    s.get("min_word_units", b.min_word_units);
    s.get("max_word_units", b.max_word_units);
    s.get("base_spread", b.base_spread);
    s.get("noise", b.noise);
    s.get("language_offset", b.language_offset);
    s.get("confusion", b.confusion);
    s.get("spelling_confusion", b.spelling_confusion);
    s.get("transition_scale", b.transition_scale);
    s.get("min_frames", b.min_frames);
    s.get("max_frames", b.max_frames);
    s.get("utterances_per_language", sd.corpus.utts_per_language);
    s.get("min_words", sd.corpus.min_words);
    s.get("max_words", sd.corpus.max_words);
    std::int64_t language_seed = -1;
    s.get("language_seed", language_seed);
    if (language_seed >= 0) sd.language_seed = static_cast<std::uint64_t>(language_seed);
    s.finish();
    c.synthetic = sd;
  }
  data.finish({"synthetic"});

  detail::TomlSection feat(root["features"].as_table(), "features");
  std::string input = "logmel";
  feat.get("input", input);
  c.input = parse_feature_kind(input);
  feat.get("lfv", c.lfv);
  feat.get("bnf_checkpoint", c.bnf_net);
  feat.get("lfv_checkpoint", c.lfv_net);
  detail::read_bottleneck(detail::TomlSection(feat.sub("bnf_net"), "features.bnf_net"), c.bnf_config,
                          c.bnf_train, "features.bnf_net");
  detail::read_bottleneck(detail::TomlSection(feat.sub("lfv_net"), "features.lfv_net"), c.lfv_config,
                          c.lfv_train, "features.lfv_net");
  feat.finish({"bnf_net", "lfv_net"});

  detail::TomlSection model(root["model"].as_table(), "model");
  std::string condition = std::string(to_string(c.condition));
  std::string units = std::string(to_string(c.unit_mode));
  model.get("condition", condition);
  model.get("units", units);
  c.condition = parse_condition(condition);
  c.unit_mode = parse_unit_mode(units);
  for (int i = 0; i < 2; ++i) {
    auto& cv = c.model.conv[static_cast<std::size_t>(i)];
    detail::TomlSection s(model.sub(i == 0 ? "conv1" : "conv2"), i == 0 ? "model.conv1" : "model.conv2");
    s.get("kernel_time", cv.kernel_time);
    s.get("kernel_freq", cv.kernel_freq);
    s.get("stride_time", cv.stride_time);
    s.get("stride_freq", cv.stride_freq);
    s.get("channels", cv.channels);
    s.finish();
  }
  model.get("recurrent_layers", c.model.recurrent_layers);
  model.get("recurrent_width", c.model.recurrent_width);
  model.finish({"conv1", "conv2"});

  detail::TomlSection train(root["train"].as_table(), "train");
  train.get("learning_rate", c.train.learning_rate);
  train.get("momentum", c.train.momentum);
  train.get("batch_size", c.train.batch_size);
  train.get("epochs", c.train.epochs);
  train.get("sort_first_epoch", c.train.sort_first_epoch);
  train.get("max_grad_norm", c.train.max_grad_norm);
  train.get("equal_updates", c.equal_updates);
  train.finish();

  detail::TomlSection dec(root["decode"].as_table(), "decode");
  dec.get("beam", c.beam);
  dec.get("lm_order", c.lm_order);
  dec.get("lm_k", c.lm_k);
  dec.get("alpha", c.alpha);
  dec.get("beta", c.beta);
  dec.finish();

  detail::TomlSection score(root["score"].as_table(), "score");
  score.get("system", c.system);
  score.finish();

  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (fs::path(base_dir) / p).lexically_normal().string();
  };
  resolve(c.manifest);
  resolve(c.frame_targets);
  resolve(c.bnf_net);
  resolve(c.lfv_net);
  resolve(c.output_dir);

  if (const char* env = std::getenv("CTCPOLY_SEED")) {
    const std::string_view v(env);
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), c.seed);
    if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
      throw Error("CTCPOLY_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  toml::table root;
  try {
    root = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config " << path << ": " << e.description() << " at line " << e.source().begin.line;
    throw Error(os.str());
  }
  return parse_experiment_config(root, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Pipeline pieces, usable on their own.

struct ExperimentUtterance {
  ManifestEntry entry;
  FeatureMatrix features;                // acoustic model input (log-Mel or BNF)
  FeatureMatrix bnf;                     // set when a BNF net is in use
  std::optional<FeatureMatrix> lfv;
  std::vector<std::string> frame_targets;
  int language = 0;                      // index into the selected languages
  bool test = false;
};

/// Loads features of a manifest entry: a FEAT file, or a wav file that is
/// turned into log-Mel features.
inline FeatureMatrix load_entry_features(const std::string& manifest_path, const ManifestEntry& e) {
  const std::string src = resolve_source(manifest_path, e);
  if (std::filesystem::path(src).extension() == ".wav") {
    const Waveform w = load_wav(src);
    return log_mel(w.samples, w.sample_rate);
  }
  return load_features(src);
}

/// Utterance-disjoint split: per language, a seeded shuffle of the
/// id-sorted entries sends round(fraction * n) of them, at least one when
/// n >= 2, to the test set.
inline std::vector<bool> split_test(const std::vector<ManifestEntry>& entries, double fraction,
                                    std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (std::size_t i = 0; i < entries.size(); ++i) by_lang[entries[i].language].push_back(i);
  std::vector<bool> test(entries.size(), false);
  for (auto& [lang, idx] : by_lang) {
    std::mt19937_64 rng(seed ^ fnv1a(lang));
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n = std::clamp<std::size_t>(n, 1, idx.size() - 1);
    else n = 0;
    for (std::size_t k = 0; k < n; ++k) test[idx[k]] = true;
  }
  return test;
}

struct DataOptions {
  std::string manifest;
  std::string frame_targets;  // default: frame_targets.tsv next to the manifest
  std::vector<std::string> languages;  // empty: all
  double test_fraction = 0.1;
  IngestFilters filters;
  std::uint64_t seed = 0;
  bool with_frame_targets = false;
};

struct ExperimentData {
  std::vector<std::string> languages;
  std::vector<ExperimentUtterance> utterances;
  IngestCounters counters;
};

/// Ingests a manifest, keeps the selected languages, splits off the test set
/// and loads features (and frame targets when asked).
inline ExperimentData load_experiment_data(const DataOptions& opt) {
  namespace fs = std::filesystem;
  ExperimentData data;
  std::vector<ManifestEntry> entries = ingest(opt.manifest, opt.filters, &data.counters);
  std::set<std::string> present;
  for (const auto& e : entries) present.insert(e.language);
  auto& langs = data.languages;
  if (opt.languages.empty()) {
    langs.assign(present.begin(), present.end());
  } else {
    for (const auto& l : opt.languages) {
      if (!present.count(l)) throw Error("language '" + l + "' has no utterances in " + opt.manifest);
    }
    langs = opt.languages;
  }
  if (langs.empty()) throw Error("no utterances left after ingestion");
  std::erase_if(entries, [&](const ManifestEntry& e) {
    return std::find(langs.begin(), langs.end(), e.language) == langs.end();
  });
  const std::vector<bool> test = split_test(entries, opt.test_fraction, opt.seed);
  std::map<std::string, std::vector<std::string>> targets;
  if (opt.with_frame_targets) {
    const std::string path = opt.frame_targets.empty()
                                 ? (fs::path(opt.manifest).parent_path() / "frame_targets.tsv").string()
                                 : opt.frame_targets;
    targets = read_frame_targets(path);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ExperimentUtterance u;
    u.entry = entries[i];
    u.features = load_entry_features(opt.manifest, entries[i]);
    if (u.features.kind != FeatureKind::kLogMel) {
      throw Error("'" + u.entry.utterance_id + "': manifest sources must hold log-Mel features");
    }
    u.language = static_cast<int>(std::find(langs.begin(), langs.end(), entries[i].language) - langs.begin());
    u.test = test[i];
    if (opt.with_frame_targets) {
      auto it = targets.find(u.entry.utterance_id);
      if (it == targets.end()) throw Error("no frame targets for '" + u.entry.utterance_id + "'");
      if (static_cast<Eigen::Index>(it->second.size()) != u.features.frames()) {
        throw Error("frame target count mismatch for '" + u.entry.utterance_id + "'");
      }
      u.frame_targets = it->second;
    }
    data.utterances.push_back(std::move(u));
  }
  if (!data.utterances.empty() && data.utterances.front().features.dim() < 1) {
    throw Error("empty feature dimension");
  }
  return data;
}

/// Lexicon file of `lang`: `pattern` with {lang} substituted, relative
/// paths taken from the manifest's directory.
inline std::string lexicon_path(const std::string& pattern, const std::string& manifest,
                                const std::string& lang) {
  std::string file = pattern;
  const auto pos = file.find("{lang}");
  if (pos == std::string::npos) throw Error("lexicon_pattern must contain {lang}");
  file.replace(pos, 6, lang);
  const std::filesystem::path p(file);
  return p.is_relative() ? (std::filesystem::path(manifest).parent_path() / p).string() : file;
}

/// Inventory over `group` languages: lexicon phones in phone mode (the
/// lexicons are returned through `lexicons`), transcript characters otherwise.
inline UnitInventory build_units(const std::vector<ExperimentUtterance>& utts,
                                 const std::vector<std::string>& langs,
                                 const std::vector<std::string>& group, UnitMode mode,
                                 const std::string& lexicon_pattern, const std::string& manifest,
                                 std::map<std::string, Lexicon>* lexicons) {
  std::vector<UnitInventory> parts;
  for (const auto& lang : group) {
    if (mode == UnitMode::kPhone) {
      Lexicon lex = Lexicon::load(lexicon_path(lexicon_pattern, manifest, lang));
      parts.push_back(build_phone_inventory(lex, lang));
      if (lexicons) lexicons->insert_or_assign(lang, std::move(lex));
    } else {
      const int l = static_cast<int>(std::find(langs.begin(), langs.end(), lang) - langs.begin());
      std::vector<std::string> tr;
      for (const auto& u : utts) {
        if (u.language == l) tr.push_back(u.entry.transcript);
      }
      parts.push_back(build_grapheme_inventory(tr, lang));
    }
  }
  return merge_inventories(parts);
}

/// Frame-target symbols mapped to dense class ids in sorted order.
inline std::map<std::string, int> frame_target_classes(const std::vector<ExperimentUtterance>& utts) {
  std::set<std::string> symbols;
  for (const auto& u : utts) symbols.insert(u.frame_targets.begin(), u.frame_targets.end());
  std::map<std::string, int> out;
  for (const auto& s : symbols) out.emplace(s, static_cast<int>(out.size()));
  return out;
}

/// Trains the unit classifier on the training utterances; one output block
/// per language.
inline BnfNet train_bnf_on(const std::vector<ExperimentUtterance>& utts, int n_languages,
                           BottleneckNetConfig cfg, TrainConfig tc) {
  const auto classes = frame_target_classes(utts);
  if (classes.empty()) throw Error("no frame targets for BNF training");
  std::vector<FrameLabeledUtterance> corpus;
  for (const auto& u : utts) {
    if (u.test) continue;
    FrameLabeledUtterance f{u.features, {}, u.language};
    for (const auto& s : u.frame_targets) f.frame_targets.push_back(classes.at(s));
    corpus.push_back(std::move(f));
  }
  cfg.input_dim = static_cast<int>(utts.front().features.dim());
  cfg.n_targets = static_cast<int>(classes.size());
  cfg.n_output_blocks = n_languages;
  return train_bottleneck_net(corpus, cfg, tc);
}

inline LfvNet train_lfv_on(const std::vector<ExperimentUtterance>& utts, int n_languages,
                           BottleneckNetConfig cfg, TrainConfig tc) {
  std::vector<LanguageLabeledUtterance> corpus;
  for (const auto& u : utts) {
    if (!u.test) corpus.push_back({u.bnf, u.language});
  }
  cfg.input_dim = static_cast<int>(utts.front().bnf.dim());
  cfg.n_targets = n_languages;
  cfg.n_output_blocks = 1;
  return train_lfv_net(corpus, cfg, tc);
}

/// Held-out frame accuracy of a language classifier trained on the raw
/// features; a diagnostic for whether languages are acoustically separable
/// at all. Chance is 1 / n_languages.
struct SeparabilityReport {
  double frame_accuracy = 0.0;
  double chance = 0.0;
};

inline SeparabilityReport language_separability(const std::vector<ExperimentUtterance>& utts,
                                                int n_languages, std::uint64_t seed,
                                                int context = 3) {
  if (n_languages < 2) throw Error("separability needs >= 2 languages");
  BottleneckNetConfig cfg = BottleneckNetConfig::desk_lfv(static_cast<int>(utts.front().features.dim()),
                                                          n_languages);
  cfg.context_left = cfg.context_right = context;
  cfg.context_stride = 1;
  std::vector<FrameLabeledUtterance> train_set;
  for (const auto& u : utts) {
    if (u.test) continue;
    train_set.push_back({u.features, std::vector<int>(static_cast<std::size_t>(u.features.frames()), u.language), 0});
  }
  TrainConfig tc{0.02, 0.9, 64, 5, false, seed, 0.0};
  const BnfNet net = train_bottleneck_net(train_set, cfg, tc);
  double correct = 0.0, total = 0.0;
  for (const auto& u : utts) {
    if (!u.test) continue;
    const std::vector<int> labels(static_cast<std::size_t>(u.features.frames()), u.language);
    correct += frame_accuracy(net.net, u.features, labels) * static_cast<double>(labels.size());
    total += static_cast<double>(labels.size());
  }
  if (total == 0.0) throw Error("separability: empty test set");
  return {correct / total, 1.0 / n_languages};
}

// ---------------------------------------------------------------------------
// run_experiment

struct ModelRun {
  std::string name;        // "all" or a language code
  std::string checkpoint;
  TrainReport report;
};

struct ExperimentResult {
  std::string system;
  std::vector<std::string> languages;
  ResultTable ter{"TER"};
  std::optional<ResultTable> wer;
  std::vector<ModelRun> models;
  std::string results_path;
  std::string bnf_net_path;
  std::string lfv_net_path;
  std::string manifest_path;

  std::vector<ResultRow> rows() const {
    std::vector<ResultRow> r = ter.rows();
    if (wer) r.insert(r.end(), wer->rows().begin(), wer->rows().end());
    return r;
  }
};

namespace detail {

// Appends timestamp-free progress lines to <output_dir>/experiment.log and
// mirrors them to `echo`.
class ExperimentLog {
 public:
  ExperimentLog(const std::string& path, std::ostream* echo) : os_(path, std::ios::app), echo_(echo) {
    if (!os_) throw Error("cannot write " + path);
  }
  void line(const std::string& s) {
    os_ << s << '\n';
    os_.flush();
    if (echo_) *echo_ << s << '\n';
  }

 private:
  std::ofstream os_;
  std::ostream* echo_;
};

inline void run_stage(const char* name, ExperimentLog& log, const std::function<void()>& body) {
  log.line(std::string("stage ") + name);
  try {
    body();
  } catch (const std::exception& e) {
    log.line(std::string("stage ") + name + " failed: " + e.what());
    throw Error(std::string("stage '") + name + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* echo = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  detail::ExperimentLog log((out / "experiment.log").string(), echo);
  log.line("experiment " + cfg.system_label() + " seed " + std::to_string(cfg.seed));

  ExperimentResult res;
  res.system = cfg.system_label();
  std::vector<ExperimentUtterance> utts;
  std::vector<std::string>& langs = res.languages;
  std::string manifest = cfg.manifest;

  detail::run_stage("data", log, [&] {
    if (cfg.synthetic) {
      SyntheticBenchmarkOptions b = cfg.synthetic->benchmark;
      b.seed = cfg.synthetic->language_seed.value_or(cfg.seed);
      CorpusOptions co = cfg.synthetic->corpus;
      co.seed = cfg.seed + 1;
      const fs::path dir = out / "data";
      write_corpus(generate_corpus(make_benchmark_specs(b), co), dir.string());
      manifest = (dir / "manifest.jsonl").string();
    }
    const bool train_bnf = (cfg.input == FeatureKind::kBnf || cfg.lfv) && cfg.bnf_net.empty();
    DataOptions d{manifest, cfg.frame_targets, cfg.languages, cfg.test_fraction, cfg.filters, cfg.seed, train_bnf};
    ExperimentData data = load_experiment_data(d);
    const IngestCounters& counters = data.counters;
    log.line("ingest: read " + std::to_string(counters.read) + ", kept " + std::to_string(counters.kept) +
             ", too short " + std::to_string(counters.too_short) + ", too long " +
             std::to_string(counters.too_long) + ", noise only " + std::to_string(counters.noise_only));
    langs = std::move(data.languages);
    utts = std::move(data.utterances);
    res.manifest_path = manifest;
  });

  const bool need_bnf = cfg.input == FeatureKind::kBnf || cfg.lfv;
  if (need_bnf) {
    detail::run_stage("bnf", log, [&] {
      BnfNet bnf;
      if (!cfg.bnf_net.empty()) {
        bnf.net = BottleneckNet::load(cfg.bnf_net);
        res.bnf_net_path = cfg.bnf_net;
      } else {
        TrainConfig tc = cfg.bnf_train;
        tc.seed = cfg.seed + 2;
        bnf = train_bnf_on(utts, static_cast<int>(langs.size()), cfg.bnf_config, tc);
        res.bnf_net_path = (out / "bnf.ckpt").string();
        bnf.net.save(res.bnf_net_path);
      }
      for (auto& u : utts) u.bnf = extract_bnf(bnf, u.features);
    });
  }
  if (cfg.lfv) {
    detail::run_stage("lfv", log, [&] {
      LfvNet lfv;
      if (!cfg.lfv_net.empty()) {
        lfv.net = BottleneckNet::load(cfg.lfv_net);
        res.lfv_net_path = cfg.lfv_net;
      } else {
        TrainConfig tc = cfg.lfv_train;
        tc.seed = cfg.seed + 3;
        lfv = train_lfv_on(utts, static_cast<int>(langs.size()), cfg.lfv_config, tc);
        res.lfv_net_path = (out / "lfv.ckpt").string();
        lfv.net.save(res.lfv_net_path);
      }
      for (auto& u : utts) u.lfv = extract_lfv(lfv, u.bnf);
    });
  }
  if (cfg.input == FeatureKind::kBnf) {
    for (auto& u : utts) u.features = u.bnf;
  }

  // One model over all selected languages, or one per language.
  std::vector<std::vector<int>> groups;
  if (cfg.condition == Condition::kMultilingual) {
    groups.push_back({});
    for (int l = 0; l < static_cast<int>(langs.size()); ++l) groups.back().push_back(l);
  } else {
    for (int l = 0; l < static_cast<int>(langs.size()); ++l) groups.push_back({l});
  }

  if (cfg.beam > 0) res.wer.emplace("WER");
  std::ofstream loss_os((out / "loss.tsv").string());
  std::ofstream hyp_os((out / "hyp.txt").string());
  for (const auto& group : groups) {
    const std::string name = group.size() == 1 && cfg.condition == Condition::kMonolingual
                                 ? langs[static_cast<std::size_t>(group[0])]
                                 : "all";
    auto in_group = [&](const ExperimentUtterance& u) {
      return std::find(group.begin(), group.end(), u.language) != group.end();
    };
    UnitInventory inv;
    std::map<std::string, Lexicon> lexicons;
    auto lexicon_for = [&](const std::string& lang) -> const Lexicon* {
      if (cfg.unit_mode != UnitMode::kPhone) return nullptr;
      return &lexicons.at(lang);
    };
    detail::run_stage("units", log, [&] {
      std::vector<std::string> group_langs;
      for (int l : group) group_langs.push_back(langs[static_cast<std::size_t>(l)]);
      inv = build_units(utts, langs, group_langs, cfg.unit_mode, cfg.lexicon_pattern, manifest, &lexicons);
      inv.save((out / ("units." + name + ".txt")).string());
    });

    std::vector<TrainingUtterance> train_set;
    std::vector<std::pair<const ExperimentUtterance*, std::vector<int>>> test_set;
    std::map<int, std::vector<std::vector<int>>> lm_text;  // per language, training targets
    detail::run_stage("tokenize", log, [&] {
      for (const auto& u : utts) {
        if (!in_group(u)) continue;
        std::vector<int> ids = tokenize(u.entry.transcript, inv, lexicon_for(u.entry.language));
        if (u.test) {
          test_set.emplace_back(&u, std::move(ids));
        } else {
          lm_text[u.language].push_back(ids);
          train_set.push_back({u.entry.utterance_id, u.features, u.lfv, std::move(ids)});
        }
      }
      if (train_set.empty()) throw Error("no training utterances for model '" + name + "'");
    });

    ModelConfig mc = cfg.model;
    mc.input_dim = static_cast<int>(utts.front().features.dim());
    mc.lfv_dim = cfg.lfv ? static_cast<int>(utts.front().lfv->dim()) : 0;
    mc.output_dim = inv.size();
    AcousticModel model;
    ModelRun run;
    run.name = name;
    detail::run_stage("train", log, [&] {
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed + 4;
      if (cfg.condition == Condition::kMonolingual && cfg.equal_updates) {
        tc.epochs *= static_cast<int>(langs.size());
      }
      model = AcousticModel(mc, cfg.seed + 5);
      run.report = train(model, train_set, tc, nullptr);
      for (std::size_t e = 0; e < run.report.epoch_loss.size(); ++e) {
        loss_os << name << '\t' << e + 1 << '\t' << run.report.epoch_loss[e] << '\n';
      }
      loss_os.flush();
      log.line("train " + name + ": " + std::to_string(train_set.size()) + " utterances, " +
               std::to_string(run.report.skipped) + " skipped, best epoch " +
               std::to_string(run.report.best_epoch + 1));
      run.checkpoint = (out / ("model." + name + ".ckpt")).string();
      save_checkpoint(model, run.checkpoint);
    });

    detail::run_stage("decode", log, [&] {
      std::map<int, CharNgramLm> lms;
      if (cfg.lm_order > 0) {
        for (const auto& [l, seqs] : lm_text) lms.emplace(l, train_char_lm_ids(seqs, cfg.lm_order, inv, cfg.lm_k));
      }
      std::map<int, std::vector<std::vector<int>>> refs, hyps;
      std::map<int, std::vector<std::string>> ref_words, hyp_words;
      for (const auto& [u, ref] : test_set) {
        const Matrix logits = model.forward(u->features, u->lfv ? &*u->lfv : nullptr);
        std::vector<int> hyp = greedy_decode(logits);
        hyp_os << u->entry.utterance_id << '\t' << detokenize(hyp, inv) << '\n';
        refs[u->language].push_back(ref);
        hyps[u->language].push_back(std::move(hyp));
        if (cfg.beam > 0) {
          auto it = lms.find(u->language);
          const BeamOptions bo{cfg.beam, cfg.alpha, cfg.beta, BeamPruning::kBestPath};
          const std::vector<int> beam_hyp = prefix_beam_decode(logits, it == lms.end() ? nullptr : &it->second, bo);
          ref_words[u->language].push_back(detokenize(ref, inv));
          hyp_words[u->language].push_back(detokenize(beam_hyp, inv));
        }
      }
      for (int l : group) {
        const std::string& lang = langs[static_cast<std::size_t>(l)];
        res.ter.add(res.system, lang, ter(refs[l], hyps[l]));
        if (res.wer) res.wer->add(res.system, lang, wer(ref_words[l], hyp_words[l]));
      }
    });
    res.models.push_back(std::move(run));
  }

  detail::run_stage("score", log, [&] {
    res.results_path = (out / "results.tsv").string();
    std::ofstream os(res.results_path);
    if (!os) throw Error("cannot write " + res.results_path);
    for (const auto& r : res.rows()) os << r.to_tsv() << '\n';
    log.line(res.ter.table());
  });
  return res;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_EXPERIMENT_HPP_
