// tools/ctcpoly.cpp
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

// Command-line front end. Logs go to stderr; data goes to files or stdout.
// Usage errors exit with 2, runtime errors with 1.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctcpoly/ctcpoly.hpp"

namespace {

using namespace ctcpoly;
namespace fs = std::filesystem;

struct DataArgs {
  std::string manifest;
  std::vector<std::string> languages;
  double min_duration = 1.0;
  std::size_t max_symbols = 639;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--manifest", manifest, "JSON-lines manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--languages", languages, "language codes to keep (default: all)")->delimiter(',');
    app->add_option("--min-duration", min_duration, "drop utterances shorter than this (s)")
        ->capture_default_str();
    app->add_option("--max-symbols", max_symbols, "drop transcripts longer than this")->capture_default_str();
    app->add_option("--test-fraction", test_fraction, "held-out share per language")->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
  }

  DataOptions options(bool frame_targets = false, const std::string& targets_path = {}) const {
    DataOptions d;
    d.manifest = manifest;
    d.frame_targets = targets_path;
    d.languages = languages;
    d.test_fraction = test_fraction;
    d.filters.min_duration = min_duration;
    d.filters.max_symbols = max_symbols;
    d.seed = seed;
    d.with_frame_targets = frame_targets;
    return d;
  }
};

struct TrainArgs {
  TrainConfig tc;
  explicit TrainArgs(TrainConfig d) : tc(d) {}

  void add_to(CLI::App* app) {
    app->add_option("--epochs", tc.epochs)->capture_default_str();
    app->add_option("--lr", tc.learning_rate, "learning rate")->capture_default_str();
    app->add_option("--momentum", tc.momentum)->capture_default_str();
    app->add_option("--batch-size", tc.batch_size)->capture_default_str();
    app->add_option("--max-grad-norm", tc.max_grad_norm, "0 disables clipping")->capture_default_str();
  }
};

struct NetArgs {
  BottleneckNetConfig c;
  explicit NetArgs(BottleneckNetConfig d) : c(d) {}

  void add_to(CLI::App* app) {
    app->add_option("--layers", c.n_layers, "hidden layers")->capture_default_str();
    app->add_option("--width", c.layer_width, "hidden layer width")->capture_default_str();
    app->add_option("--bottleneck-dim", c.bottleneck_dim)->capture_default_str();
    app->add_option("--bottleneck-position", c.bottleneck_position, "1-based hidden layer")
        ->capture_default_str();
    app->add_option("--context", c.context_left, "frames of context on each side")->capture_default_str();
    app->add_option("--context-stride", c.context_stride)->capture_default_str();
  }
  BottleneckNetConfig get() const {
    BottleneckNetConfig out = c;
    out.context_right = out.context_left;
    return out;
  }
};

// Front-end feature options shared by train and decode.
struct FrontEndArgs {
  std::string input = "logmel";
  std::string bnf_net;
  std::string lfv_net;

  void add_to(CLI::App* app) {
    app->add_option("--input", input, "acoustic input: logmel or bnf")
        ->check(CLI::IsMember({"logmel", "bnf"}))
        ->capture_default_str();
    app->add_option("--bnf-net", bnf_net, "BNF extractor checkpoint")->check(CLI::ExistingFile);
    app->add_option("--lfv-net", lfv_net, "LFV extractor checkpoint; enables LFV input")
        ->check(CLI::ExistingFile);
  }

  bool wants_bnf() const { return input == "bnf" || !lfv_net.empty(); }

  void apply(std::vector<ExperimentUtterance>& utts) const {
    if (!wants_bnf()) return;
    if (bnf_net.empty()) throw Error("--bnf-net is required for BNF input or LFVs");
    const BnfNet bnf{BottleneckNet::load(bnf_net)};
    std::optional<LfvNet> lfv;
    if (!lfv_net.empty()) lfv = LfvNet{BottleneckNet::load(lfv_net)};
    for (auto& u : utts) {
      u.bnf = extract_bnf(bnf, u.features);
      if (lfv) u.lfv = extract_lfv(*lfv, u.bnf);
      if (input == "bnf") u.features = u.bnf;
    }
  }
};

void log_ingest(const ExperimentData& data) {
  const auto& c = data.counters;
  std::cerr << "ingest: read " << c.read << ", kept " << c.kept << ", too short " << c.too_short
            << ", too long " << c.too_long << ", noise only " << c.noise_only << '\n';
}

// ---------------------------------------------------------------------------

int run_gen_data(const std::string& out, SyntheticBenchmarkOptions bench, CorpusOptions corpus) {
  corpus.seed = bench.seed + 1;
  const SyntheticCorpus c = generate_corpus(make_benchmark_specs(bench), corpus);
  write_corpus(c, out);
  std::cerr << "wrote " << c.utterances.size() << " utterances to " << out << '\n';
  return 0;
}

int run_featurize(const std::string& manifest, const std::string& out, const FrontEndArgs& fe,
                  const std::string& kind) {
  std::vector<ManifestEntry> entries = read_manifest(manifest);
  const fs::path dir(out);
  fs::create_directories(dir / "feats");
  std::optional<BnfNet> bnf;
  std::optional<LfvNet> lfv;
  if (kind != "logmel") {
    if (fe.bnf_net.empty()) throw Error("--bnf-net is required for " + kind + " output");
    bnf = BnfNet{BottleneckNet::load(fe.bnf_net)};
  }
  if (kind == "lfv") {
    if (fe.lfv_net.empty()) throw Error("--lfv-net is required for lfv output");
    lfv = LfvNet{BottleneckNet::load(fe.lfv_net)};
  }
  for (auto& e : entries) {
    FeatureMatrix f = load_entry_features(manifest, e);
    if (bnf) f = extract_bnf(*bnf, f);
    if (lfv) f = extract_lfv(*lfv, f);
    e.source = "feats/" + e.utterance_id + ".feat";
    save_features(f, (dir / e.source).string());
  }
  write_manifest(entries, (dir / "manifest.jsonl").string());
  std::cerr << "featurized " << entries.size() << " utterances (" << kind << ")\n";
  return 0;
}

int run_train_bnf(const DataArgs& da, const std::string& targets, const NetArgs& na, TrainArgs ta,
                  const std::string& out) {
  ExperimentData data = load_experiment_data(da.options(true, targets));
  log_ingest(data);
  ta.tc.seed = da.seed;
  const BnfNet net =
      train_bnf_on(data.utterances, static_cast<int>(data.languages.size()), na.get(), ta.tc);
  net.net.save(out);
  std::cerr << "saved BNF net to " << out << '\n';
  return 0;
}

int run_train_lfv(const DataArgs& da, const std::string& bnf_path, const NetArgs& na, TrainArgs ta,
                  const std::string& out) {
  ExperimentData data = load_experiment_data(da.options());
  log_ingest(data);
  const BnfNet bnf{BottleneckNet::load(bnf_path)};
  for (auto& u : data.utterances) u.bnf = extract_bnf(bnf, u.features);
  ta.tc.seed = da.seed;
  const LfvNet net =
      train_lfv_on(data.utterances, static_cast<int>(data.languages.size()), na.get(), ta.tc);
  net.net.save(out);
  std::cerr << "saved LFV net to " << out << '\n';
  return 0;
}

struct UnitArgs {
  std::string mode = "grapheme";
  std::string lexicon_pattern = "lexicon.{lang}.tsv";

  void add_to(CLI::App* app) {
    app->add_option("--units", mode, "grapheme or phone")
        ->check(CLI::IsMember({"grapheme", "phone"}))
        ->capture_default_str();
    app->add_option("--lexicon-pattern", lexicon_pattern, "phone mode lexicons; {lang} is substituted")
        ->capture_default_str();
  }

  std::map<std::string, Lexicon> lexicons(const std::string& manifest,
                                          const std::vector<std::string>& langs) const {
    std::map<std::string, Lexicon> out;
    if (mode != "phone") return out;
    for (const auto& l : langs) out.emplace(l, Lexicon::load(lexicon_path(lexicon_pattern, manifest, l)));
    return out;
  }
};

const Lexicon* lexicon_of(const std::map<std::string, Lexicon>& lex, const std::string& lang) {
  auto it = lex.find(lang);
  return it == lex.end() ? nullptr : &it->second;
}

int run_train(const DataArgs& da, const FrontEndArgs& fe, const UnitArgs& ua, ModelConfig mc,
              TrainArgs ta, const std::string& out, std::string inventory_path,
              const std::string& loss_path) {
  ExperimentData data = load_experiment_data(da.options());
  log_ingest(data);
  fe.apply(data.utterances);
  std::map<std::string, Lexicon> lex;
  const UnitInventory inv = build_units(data.utterances, data.languages, data.languages,
                                        parse_unit_mode(ua.mode), ua.lexicon_pattern, da.manifest, &lex);
  if (inventory_path.empty()) inventory_path = out + ".units";
  inv.save(inventory_path);
  std::vector<TrainingUtterance> corpus;
  for (const auto& u : data.utterances) {
    if (u.test) continue;
    corpus.push_back({u.entry.utterance_id, u.features, u.lfv,
                      tokenize(u.entry.transcript, inv, lexicon_of(lex, u.entry.language))});
  }
  if (corpus.empty()) throw Error("no training utterances");
  mc.input_dim = static_cast<int>(corpus.front().features.dim());
  mc.lfv_dim = corpus.front().lfv ? static_cast<int>(corpus.front().lfv->dim()) : 0;
  mc.output_dim = inv.size();
  ta.tc.seed = da.seed;
  AcousticModel model(mc, da.seed + 1);
  std::ostringstream train_log;
  const TrainReport rep = train(model, corpus, ta.tc, &train_log);
  std::cerr << train_log.str();
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
    std::cerr << "epoch " << e + 1 << " loss " << rep.epoch_loss[e] << '\n';
  }
  if (!loss_path.empty()) {
    std::ofstream os(loss_path);
    if (!os) throw Error("cannot write " + loss_path);
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) os << e + 1 << '\t' << rep.epoch_loss[e] << '\n';
  }
  save_checkpoint(model, out);
  std::cerr << "saved model to " << out << " and units to " << inventory_path << '\n';
  return 0;
}

int run_decode(const DataArgs& da, const FrontEndArgs& fe, const UnitArgs& ua,
               const std::string& model_path, const std::string& inventory_path,
               const std::string& split, BeamOptions bo, int lm_order, double lm_k,
               const std::string& out) {
  ExperimentData data = load_experiment_data(da.options());
  log_ingest(data);
  fe.apply(data.utterances);
  const AcousticModel model = load_checkpoint(model_path);
  const UnitInventory inv = UnitInventory::load(inventory_path);
  if (model.config().output_dim != inv.size()) {
    throw Error("model has " + std::to_string(model.config().output_dim) + " outputs but the inventory has " +
                std::to_string(inv.size()) + " units");
  }
  std::map<int, CharNgramLm> lms;
  if (lm_order > 0) {
    const auto lex = ua.lexicons(da.manifest, data.languages);
    std::map<int, std::vector<std::vector<int>>> text;
    for (const auto& u : data.utterances) {
      if (!u.test) text[u.language].push_back(tokenize(u.entry.transcript, inv, lexicon_of(lex, u.entry.language)));
    }
    for (const auto& [l, seqs] : text) lms.emplace(l, train_char_lm_ids(seqs, lm_order, inv, lm_k));
  }
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw Error("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file;
  std::size_t n = 0;
  for (const auto& u : data.utterances) {
    if ((split == "test" && !u.test) || (split == "train" && u.test)) continue;
    const Matrix logits = model.forward(u.features, u.lfv ? &*u.lfv : nullptr);
    std::vector<int> hyp;
    if (bo.beam > 0) {
      auto it = lms.find(u.language);
      hyp = prefix_beam_decode(logits, it == lms.end() ? nullptr : &it->second, bo);
    } else {
      hyp = greedy_decode(logits);
    }
    os << u.entry.utterance_id << '\t' << detokenize(hyp, inv) << '\n';
    ++n;
  }
  std::cerr << "decoded " << n << " utterances\n";
  return 0;
}

// Reads "id<TAB>text" or bare "text" lines; bare lines are keyed by position.
std::vector<std::pair<std::string, std::string>> read_transcripts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.emplace_back("#" + std::to_string(out.size()), line);
    } else {
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  return out;
}

// Token sequence of a transcript for TER. Graphemes: characters with one
// boundary token per whitespace run. Phones: whitespace-separated symbols.
std::vector<std::string> ter_tokens(const std::string& s, bool phone) {
  std::vector<std::string> out;
  if (phone) {
    for (auto& w : text::split_words(s)) out.push_back(w);
    return out;
  }
  bool pending = false;
  for (char32_t cp : text::to_u32(text::normalize(s))) {
    if (text::is_space(cp)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.emplace_back(kWordBoundarySymbol);
    pending = false;
    out.push_back(text::to_utf8(cp));
  }
  return out;
}

int run_score(const std::string& ref_path, const std::string& hyp_path, const std::string& metric,
              const std::string& units, const std::string& system, const std::string& language) {
  const auto refs = read_transcripts(ref_path);
  const auto hyps = read_transcripts(hyp_path);
  std::map<std::string, std::string> by_id;
  for (const auto& [id, t] : hyps) {
    if (!by_id.emplace(id, t).second) throw Error("duplicate id '" + id + "' in " + hyp_path);
  }
  std::vector<std::string> r, h;
  for (const auto& [id, t] : refs) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("no hypothesis for '" + id + "'");
    r.push_back(t);
    h.push_back(it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) throw Error("hypothesis '" + by_id.begin()->first + "' has no reference");
  ErrorBreakdown e;
  if (metric == "wer") {
    e = wer(r, h);
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) {
      e += edit_distance(ter_tokens(r[i], units == "phone"), ter_tokens(h[i], units == "phone"));
    }
  }
  const std::string name = metric == "wer" ? "WER" : "TER";
  std::cout << format_percent(e.rate()) << "% " << name << " (S=" << e.substitutions << " I=" << e.insertions
            << " D=" << e.deletions << " N=" << e.ref_len << ")\n";
  if (!system.empty()) std::cout << ResultRow{system, language, name, e}.to_tsv() << '\n';
  return 0;
}

int run_experiment_cmd(const std::string& config, const std::string& out_dir) {
  ExperimentConfig cfg = load_experiment_config(config);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const ExperimentResult res = run_experiment(cfg, &std::cerr);
  std::cout << res.ter.tsv();
  if (res.wer) std::cout << res.wer->tsv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctcpoly: multilingual CTC speech recognition at desk scale"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // gen-data
  std::string gen_out;
  SyntheticBenchmarkOptions bench;
  bench.n_languages = 4;
  CorpusOptions corpus;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic pseudo-language corpus");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--languages", bench.n_languages)->capture_default_str();
  gen->add_option("--utts", corpus.utts_per_language, "utterances per language")->capture_default_str();
  gen->add_option("--phones", bench.n_phones, "global phone set size")->capture_default_str();
  gen->add_option("--units-per-language", bench.units_per_language)->capture_default_str();
  gen->add_option("--feature-dim", bench.feature_dim)->capture_default_str();
  gen->add_option("--noise", bench.noise, "per-frame noise std")->capture_default_str();
  gen->add_option("--offset", bench.language_offset, "std of per-language mean shift")->capture_default_str();
  gen->add_option("--confusion", bench.confusion, "share of phones realized by another base")
      ->capture_default_str();
  gen->add_option("--seed", bench.seed)->capture_default_str();

  // featurize
  std::string feat_manifest, feat_out, feat_kind = "logmel";
  FrontEndArgs feat_fe;
  auto* feat = app.add_subcommand("featurize", "write log-Mel, BNF or LFV features for a manifest");
  feat->add_option("--manifest", feat_manifest)->required()->check(CLI::ExistingFile);
  feat->add_option("--out", feat_out, "output directory (feats/ and manifest.jsonl)")->required();
  feat->add_option("--kind", feat_kind, "logmel, bnf or lfv")
      ->check(CLI::IsMember({"logmel", "bnf", "lfv"}))
      ->capture_default_str();
  feat->add_option("--bnf-net", feat_fe.bnf_net)->check(CLI::ExistingFile);
  feat->add_option("--lfv-net", feat_fe.lfv_net)->check(CLI::ExistingFile);

  // train-bnf
  DataArgs bnf_data;
  std::string bnf_targets, bnf_out;
  NetArgs bnf_net(BottleneckNetConfig::desk_bnf(1, 1, 1));
  TrainArgs bnf_train(TrainConfig{0.02, 0.9, 64, 5, false, 0, 0.0});
  auto* tbnf = app.add_subcommand("train-bnf", "train the unit classifier that yields BNFs");
  bnf_data.add_to(tbnf);
  tbnf->add_option("--frame-targets", bnf_targets, "default: frame_targets.tsv next to the manifest");
  tbnf->add_option("--out", bnf_out, "checkpoint path")->required();
  bnf_net.add_to(tbnf);
  bnf_train.add_to(tbnf);

  // train-lfv
  DataArgs lfv_data;
  std::string lfv_bnf, lfv_out;
  NetArgs lfv_net(BottleneckNetConfig::desk_lfv(1, 1));
  TrainArgs lfv_train(TrainConfig{0.02, 0.9, 64, 5, false, 0, 0.0});
  auto* tlfv = app.add_subcommand("train-lfv", "train the language classifier that yields LFVs");
  lfv_data.add_to(tlfv);
  tlfv->add_option("--bnf-net", lfv_bnf, "BNF extractor checkpoint")->required()->check(CLI::ExistingFile);
  tlfv->add_option("--out", lfv_out, "checkpoint path")->required();
  lfv_net.add_to(tlfv);
  lfv_train.add_to(tlfv);

  // train
  DataArgs tr_data;
  FrontEndArgs tr_fe;
  UnitArgs tr_units;
  ModelConfig tr_model;
  tr_model.conv = {{{5, 5, 2, 2, 8}, {5, 5, 1, 2, 8}}};
  TrainArgs tr_train(TrainConfig{1e-2, 0.9, 20, 20, true, 0, 0.0});
  std::string tr_out, tr_inv, tr_loss;
  auto* tr = app.add_subcommand("train", "train a CTC acoustic model");
  tr_data.add_to(tr);
  tr_fe.add_to(tr);
  tr_units.add_to(tr);
  tr->add_option("--out", tr_out, "model checkpoint path")->required();
  tr->add_option("--inventory", tr_inv, "unit inventory path (default: <out>.units)");
  tr->add_option("--loss", tr_loss, "per-epoch loss TSV");
  tr->add_option("--recurrent-layers", tr_model.recurrent_layers)->capture_default_str();
  tr->add_option("--recurrent-width", tr_model.recurrent_width, "units per direction")->capture_default_str();
  tr->add_option("--kernel", tr_model.conv[0].kernel_time, "conv kernel size (time and frequency)")
      ->capture_default_str();
  tr->add_option("--channels", tr_model.conv[0].channels, "conv channels")->capture_default_str();
  tr_train.add_to(tr);

  // decode
  DataArgs dec_data;
  FrontEndArgs dec_fe;
  UnitArgs dec_units;
  std::string dec_model, dec_inv, dec_split = "test", dec_out;
  BeamOptions dec_beam;
  dec_beam.beam = 0;
  int dec_lm_order = 0;
  double dec_lm_k = 0.1;
  auto* dec = app.add_subcommand("decode", "decode a manifest; prints id<TAB>hypothesis");
  dec_data.add_to(dec);
  dec_fe.add_to(dec);
  dec_units.add_to(dec);
  dec->add_option("--model", dec_model)->required()->check(CLI::ExistingFile);
  dec->add_option("--inventory", dec_inv, "unit inventory (default: <model>.units)");
  dec->add_option("--split", dec_split, "test, train or all")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  dec->add_option("--beam", dec_beam.beam, "0: greedy")->capture_default_str();
  dec->add_option("--alpha", dec_beam.alpha, "LM weight")->capture_default_str();
  dec->add_option("--beta", dec_beam.beta, "length bonus")->capture_default_str();
  dec->add_option("--lm-order", dec_lm_order, "character LM order, 0: none")->capture_default_str();
  dec->add_option("--lm-k", dec_lm_k, "add-k smoothing")->capture_default_str();
  dec->add_option("--out", dec_out, "write here instead of stdout");

  // score
  std::string sc_ref, sc_hyp, sc_metric = "ter", sc_units = "grapheme", sc_system, sc_lang = "all";
  auto* sc = app.add_subcommand("score", "score hypotheses against references");
  sc->add_option("--ref", sc_ref)->required()->check(CLI::ExistingFile);
  sc->add_option("--hyp", sc_hyp)->required()->check(CLI::ExistingFile);
  sc->add_option("--metric", sc_metric, "ter or wer")->check(CLI::IsMember({"ter", "wer"}))->capture_default_str();
  sc->add_option("--units", sc_units, "TER tokens: grapheme or phone")
      ->check(CLI::IsMember({"grapheme", "phone"}))
      ->capture_default_str();
  sc->add_option("--system", sc_system, "also print a results row for this system");
  sc->add_option("--language", sc_lang, "language of the results row")->capture_default_str();

  // experiment
  std::string ex_config, ex_out;
  auto* ex = app.add_subcommand("experiment", "run a TOML-configured experiment end to end");
  ex->add_option("--config", ex_config)->required()->check(CLI::ExistingFile);
  ex->add_option("--output-dir", ex_out, "overrides output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*gen) return run_gen_data(gen_out, bench, corpus);
    if (*feat) return run_featurize(feat_manifest, feat_out, feat_fe, feat_kind);
    if (*tbnf) return run_train_bnf(bnf_data, bnf_targets, bnf_net, bnf_train, bnf_out);
    if (*tlfv) return run_train_lfv(lfv_data, lfv_bnf, lfv_net, lfv_train, lfv_out);
    if (*tr) {
      tr_model.conv[0].kernel_freq = tr_model.conv[0].kernel_time;
      tr_model.conv[1].kernel_time = tr_model.conv[1].kernel_freq = tr_model.conv[0].kernel_time;
      tr_model.conv[1].channels = tr_model.conv[0].channels;
      return run_train(tr_data, tr_fe, tr_units, tr_model, tr_train, tr_out, tr_inv, tr_loss);
    }
    if (*dec) {
      return run_decode(dec_data, dec_fe, dec_units, dec_model, dec_inv.empty() ? dec_model + ".units" : dec_inv,
                        dec_split, dec_beam, dec_lm_order, dec_lm_k, dec_out);
    }
    if (*sc) return run_score(sc_ref, sc_hyp, sc_metric, sc_units, sc_system, sc_lang);
    if (*ex) return run_experiment_cmd(ex_config, ex_out);
  } catch (const std::exception& e) {
    std::cerr << "ctcpoly: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
