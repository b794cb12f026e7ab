// tests/harness_test.cpp
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

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ctcpoly/experiment.hpp"
#include "test_util.hpp"

namespace ctcpoly {
namespace {

namespace fs = std::filesystem;

ManifestEntry entry(const std::string& id, double dur, const std::string& transcript,
                    const std::string& lang = "la") {
  return {id, "feats/" + id + ".feat", transcript, lang, dur};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Ingestion

TEST(Ingest, DropsShortAndOverlongUtterances) {
  std::vector<ManifestEntry> in{
      entry("u1", 2.0, "keep me"),
      entry("u2", 0.5, "too short"),
      entry("u3", 3.0, std::string(640, 'a')),
      entry("u4", 3.0, std::string(639, 'a')),
      entry("u5", 1.0, "exactly one second"),
  };
  IngestCounters c;
  const auto out = ingest(in, IngestFilters{}, &c);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].utterance_id, "u1");
  EXPECT_EQ(out[1].utterance_id, "u4");
  EXPECT_EQ(out[2].utterance_id, "u5");
  EXPECT_EQ(c.read, 5u);
  EXPECT_EQ(c.too_short, 1u);
  EXPECT_EQ(c.too_long, 1u);
  EXPECT_EQ(c.kept, 3u);
}

TEST(Ingest, SymbolCountUsesCodePoints) {
  // 639 two-byte characters are 1278 bytes but only 639 symbols.
  std::string s;
  for (int i = 0; i < 639; ++i) s += "\xc3\xa9";
  IngestCounters c;
  EXPECT_EQ(ingest({entry("u", 2.0, s)}, IngestFilters{}, &c).size(), 1u);
  EXPECT_EQ(ingest({entry("u", 2.0, s + "\xc3\xa9")}, IngestFilters{}, &c).size(), 0u);
  EXPECT_EQ(c.too_long, 1u);
}

TEST(Ingest, NoiseOnlyDropped) {
  IngestCounters c;
  const auto out = ingest({entry("a", 2.0, "<noise>"), entry("b", 2.0, "<noise> <noise>"),
                           entry("c", 2.0, "word <noise>"), entry("d", 2.0, "   ")},
                          IngestFilters{}, &c);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].utterance_id, "c");
  EXPECT_EQ(c.noise_only, 3u);
}

TEST(Ingest, EmptyManifest) {
  const auto dir = test::temp_dir("ingest_empty");
  std::ofstream((dir / "m.jsonl").string()).close();
  IngestCounters c;
  c.read = 99;
  EXPECT_TRUE(ingest((dir / "m.jsonl").string(), IngestFilters{}, &c).empty());
  EXPECT_EQ(c.read, 0u);
  EXPECT_EQ(c.kept, 0u);
  EXPECT_EQ(c.dropped(), 0u);
}

TEST(Ingest, MalformedLineReportsLineNumber) {
  std::istringstream is(to_json(entry("a", 2.0, "x")).dump() + "\n\n{not json\n");
  try {
    read_manifest(is);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream missing(R"({"utterance_id":"a","source":"s","transcript":"t","language":"l"})");
  EXPECT_THROW(read_manifest(missing), Error);
}

TEST(Ingest, DuplicateIdsRejected) {
  EXPECT_THROW(ingest({entry("a", 2.0, "x"), entry("a", 3.0, "y")}, IngestFilters{}), Error);
}

TEST(Ingest, ManifestRoundTrip) {
  const std::vector<ManifestEntry> in{entry("b", 1.25, "zwei w\xc3\xb6rter", "de"), entry("a", 3.0, "one")};
  std::stringstream ss;
  write_manifest(in, ss);
  EXPECT_EQ(read_manifest(ss), in);
}

// Every surviving entry satisfies the filters, counters add up, and the
// output is sorted by id.
TEST(Ingest, FilterSoundnessProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dur(0.0, 3.0);
  std::uniform_int_distribution<int> len(0, 700);
  std::bernoulli_distribution noise(0.1);
  const IngestFilters f;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ManifestEntry> in;
    for (int i = 0; i < 50; ++i) {
      const std::string t = noise(rng) ? "<noise>" : std::string(static_cast<std::size_t>(len(rng)), 'x');
      in.push_back(entry("u" + std::to_string(rng() % 1000000) + "_" + std::to_string(i), dur(rng), t));
    }
    IngestCounters c;
    const auto out = ingest(in, f, &c);
    EXPECT_EQ(c.read, in.size());
    EXPECT_EQ(c.kept + c.dropped(), c.read);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_GE(out[i].duration, 1.0);
      EXPECT_LE(text::length(text::normalize(out[i].transcript)), 639u);
      EXPECT_FALSE(is_noise_only(out[i].transcript, f));
      if (i > 0) EXPECT_LT(out[i - 1].utterance_id, out[i].utterance_id);
    }
  }
}

// ---------------------------------------------------------------------------
// Generator

SyntheticBenchmarkOptions small_bench(int n_languages, std::uint64_t seed) {
  SyntheticBenchmarkOptions b;
  b.n_languages = n_languages;
  b.n_phones = 8;
  b.units_per_language = 5;
  b.feature_dim = 6;
  b.words_per_language = 10;
  b.seed = seed;
  return b;
}

TEST(Generator, SameSeedGivesIdenticalFiles) {
  const auto specs = make_benchmark_specs(small_bench(2, 3));
  CorpusOptions co;
  co.utts_per_language = 5;
  co.seed = 9;
  const auto d1 = test::temp_dir("gen_a"), d2 = test::temp_dir("gen_b");
  write_corpus(generate_corpus(specs, co), d1.string());
  write_corpus(generate_corpus(make_benchmark_specs(small_bench(2, 3)), co), d2.string());
  std::size_t files = 0;
  for (const auto& f : fs::recursive_directory_iterator(d1)) {
    if (!f.is_regular_file()) continue;
    const auto rel = fs::relative(f.path(), d1);
    EXPECT_EQ(slurp(f.path()), slurp(d2 / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 10u + 5u);  // features, manifest, targets, 2 lexicons, phones

  const auto first = generate_corpus(specs, co);
  co.seed = 10;
  const auto other = generate_corpus(specs, co);
  EXPECT_FALSE(other.utterances[0].features.data.isApprox(first.utterances[0].features.data));
}

TEST(Generator, ZeroUtterancesGivesEmptyValidManifest) {
  CorpusOptions co;
  co.utts_per_language = 0;
  const auto c = generate_corpus(make_benchmark_specs(small_bench(2, 1)), co);
  EXPECT_TRUE(c.utterances.empty());
  const auto dir = test::temp_dir("gen_empty");
  write_corpus(c, dir.string());
  IngestCounters n;
  EXPECT_TRUE(ingest((dir / "manifest.jsonl").string(), IngestFilters{}, &n).empty());
  EXPECT_EQ(n.read, 0u);
}

TEST(Generator, LabelFidelity) {
  CorpusOptions co;
  co.utts_per_language = 30;
  co.seed = 4;
  const auto c = generate_corpus(make_benchmark_specs(small_bench(3, 2)), co);
  for (const auto& u : c.utterances) {
    ASSERT_EQ(static_cast<Eigen::Index>(u.frame_units.size()), u.features.frames());
    EXPECT_EQ(merge_repeats(u.frame_units), u.units) << u.entry.utterance_id;
    EXPECT_DOUBLE_EQ(u.entry.duration, static_cast<double>(u.features.frames()) * 0.01);
  }
}

TEST(Generator, SpellingMatchesLexicon) {
  CorpusOptions co;
  co.utts_per_language = 10;
  const auto c = generate_corpus(make_benchmark_specs(small_bench(2, 5)), co);
  const UnitInventory inv = corpus_phone_inventory(c);
  for (const auto& u : c.utterances) {
    const auto& spec = *std::find_if(c.specs.begin(), c.specs.end(),
                                     [&](const auto& s) { return s.code == u.entry.language; });
    const Lexicon lex = spec.lexicon();
    const auto ids = tokenize(u.entry.transcript, inv, &lex);
    std::vector<std::string> syms;
    for (int id : ids) syms.push_back(inv.unit(id).symbol);
    EXPECT_EQ(syms, u.units);
  }
}

// Two hand-made languages share units "a" and "b"; each unit's prototypes
// sit 4.5 sigma apart across the languages.
std::vector<SyntheticLanguageSpec> two_separated_languages() {
  const int dim = 4;
  std::vector<SyntheticLanguageSpec> specs;
  for (int l = 0; l < 2; ++l) {
    SyntheticLanguageSpec s;
    s.code = l == 0 ? "la" : "lb";
    s.units = {"a", "b"};
    s.letters = {"a", "b"};
    Vector shift = Vector::Zero(dim);
    shift(1) = 4.5 * l;
    Vector a = Vector::Zero(dim), b = Vector::Zero(dim), sil = Vector::Zero(dim);
    b(0) = 10.0;
    sil(0) = -10.0;
    s.means = {a + shift, b + shift};
    s.scales = {1.0, 1.0};
    s.silence_mean = sil + shift;
    s.transition_bias = Matrix::Zero(2, 2);
    s.words = {{0, 1}, {1, 0}, {0}};
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<ExperimentUtterance> as_experiment(const SyntheticCorpus& c, double test_fraction,
                                               std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  for (const auto& u : c.utterances) entries.push_back(u.entry);
  const auto test = split_test(entries, test_fraction, seed);
  std::vector<ExperimentUtterance> out;
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    ExperimentUtterance e;
    e.entry = entries[i];
    e.features = c.utterances[i].features;
    e.frame_targets = c.utterances[i].frame_units;
    e.language = entries[i].language == c.specs[0].code ? 0 : 1;
    e.test = test[i];
    out.push_back(std::move(e));
  }
  return out;
}

TEST(Generator, SeparatedPrototypesAreSeparable) {
  CorpusOptions co;
  co.utts_per_language = 60;
  co.seed = 1;
  const auto utts = as_experiment(generate_corpus(two_separated_languages(), co), 0.25, 1);
  const SeparabilityReport r = language_separability(utts, 2, 3, 0);
  // Bayes accuracy for a 4.5 sigma gap is Phi(2.25), about 0.988.
  EXPECT_GT(r.frame_accuracy, 0.95);
  EXPECT_DOUBLE_EQ(r.chance, 0.5);
}

TEST(Generator, DimMismatchRejected) {
  auto specs = two_separated_languages();
  specs[1].means[0] = Vector::Zero(5);
  EXPECT_THROW(generate_corpus(specs, CorpusOptions{}), Error);
  specs = two_separated_languages();
  specs[1].silence_mean = Vector::Zero(3);
  EXPECT_THROW(generate_corpus(specs, CorpusOptions{}), Error);
  specs = two_separated_languages();
  specs[0].min_frames = 1;
  EXPECT_THROW(generate_corpus(specs, CorpusOptions{}), Error);
  EXPECT_THROW(generate_corpus({}, CorpusOptions{}), Error);
}

// ---------------------------------------------------------------------------
// Split

TEST(Split, DisjointDeterministicAndPerLanguage) {
  std::vector<ManifestEntry> es;
  for (int i = 0; i < 45; ++i) es.push_back(entry("a" + std::to_string(i), 2.0, "x", "la"));
  for (int i = 0; i < 7; ++i) es.push_back(entry("b" + std::to_string(i), 2.0, "x", "lb"));
  es.push_back(entry("c0", 2.0, "x", "lc"));
  const auto t1 = split_test(es, 0.1, 5);
  EXPECT_EQ(t1, split_test(es, 0.1, 5));
  EXPECT_NE(t1, split_test(es, 0.1, 6));
  std::map<std::string, int> n_test;
  for (std::size_t i = 0; i < es.size(); ++i) n_test[es[i].language] += t1[i];
  EXPECT_EQ(n_test["la"], 5);  // round(4.5) away from zero
  EXPECT_EQ(n_test["lb"], 1);  // round(0.7)
  EXPECT_EQ(n_test["lc"], 0);  // a single utterance stays in training
}

TEST(Split, AtLeastOneEachSide) {
  std::vector<ManifestEntry> es{entry("a", 2.0, "x"), entry("b", 2.0, "x")};
  for (double f : {0.01, 0.5, 0.99}) {
    const auto t = split_test(es, f, 1);
    EXPECT_EQ(std::count(t.begin(), t.end(), true), 1) << f;
  }
}

// ---------------------------------------------------------------------------
// Config

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) ::setenv(name, value, 1);
    else ::unsetenv(name);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

ExperimentConfig parse(const std::string& text) {
  return parse_experiment_config(toml::parse(text), "/base");
}

TEST(Config, ParsesEverySection) {
  ScopedEnv env("CTCPOLY_SEED", nullptr);
  const auto c = parse(R"(
seed = 3
output_dir = "out"
[data]
manifest = "data/m.jsonl"
languages = ["la", "lb"]
min_duration = 0.0
[features]
input = "bnf"
lfv = true
bnf_checkpoint = "/nets/bnf.ckpt"
[features.lfv_net]
width = 48
[features.lfv_net.train]
epochs = 7
[model]
condition = "mono"
units = "phone"
recurrent_width = 16
[model.conv1]
channels = 4
[train]
epochs = 12
max_grad_norm = 5.0
equal_updates = true
[decode]
beam = 8
lm_order = 3
[score]
system = "X"
)");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.output_dir, "/base/out");
  EXPECT_EQ(c.manifest, "/base/data/m.jsonl");
  EXPECT_EQ(c.languages, (std::vector<std::string>{"la", "lb"}));
  EXPECT_EQ(c.filters.min_duration, 0.0);
  EXPECT_EQ(c.input, FeatureKind::kBnf);
  EXPECT_TRUE(c.lfv);
  EXPECT_EQ(c.bnf_net, "/nets/bnf.ckpt");
  EXPECT_EQ(c.lfv_config.layer_width, 48);
  EXPECT_EQ(c.lfv_train.epochs, 7);
  EXPECT_EQ(c.condition, Condition::kMonolingual);
  EXPECT_EQ(c.unit_mode, UnitMode::kPhone);
  EXPECT_EQ(c.model.recurrent_width, 16);
  EXPECT_EQ(c.model.conv[0].channels, 4);
  EXPECT_EQ(c.train.epochs, 12);
  EXPECT_EQ(c.train.max_grad_norm, 5.0);
  EXPECT_TRUE(c.equal_updates);
  EXPECT_EQ(c.beam, 8);
  EXPECT_EQ(c.lm_order, 3);
  EXPECT_EQ(c.system_label(), "X");
}

TEST(Config, SystemLabels) {
  ExperimentConfig c;
  EXPECT_EQ(c.system_label(), "ML");
  c.lfv = true;
  EXPECT_EQ(c.system_label(), "ML+LFV");
  c.input = FeatureKind::kBnf;
  EXPECT_EQ(c.system_label(), "ML+LFV/BNF");
  c = ExperimentConfig{};
  c.condition = Condition::kMonolingual;
  EXPECT_EQ(c.system_label(), "Mono");
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  ScopedEnv env("CTCPOLY_SEED", nullptr);
  const std::string base = "[data]\nmanifest = \"m\"\n";
  EXPECT_THROW(parse(base + "[train]\nepoch = 3\n"), Error);
  EXPECT_THROW(parse(base + "[training]\n"), Error);
  EXPECT_THROW(parse(base + "[train]\nepochs = \"3\"\n"), Error);
  EXPECT_THROW(parse(base + "[model]\ncondition = \"bilingual\"\n"), Error);
  EXPECT_THROW(parse(base + "[features]\ninput = \"lfv\"\n"), Error);
  EXPECT_THROW(parse(base + "[decode]\nlm_order = 3\n"), Error);  // LM needs a beam
  EXPECT_THROW(parse("[train]\nepochs = 3\n"), Error);             // no data
  try {
    parse(base + "[train]\nepoch = 3\n");
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "config: unknown key 'epoch' in [train]");
  }
}

TEST(Config, SeedEnvironmentOverride) {
  const std::string text = "seed = 4\n[data]\nmanifest = \"m\"\n";
  {
    ScopedEnv env("CTCPOLY_SEED", "17");
    EXPECT_EQ(parse(text).seed, 17u);
  }
  {
    ScopedEnv env("CTCPOLY_SEED", nullptr);
    EXPECT_EQ(parse(text).seed, 4u);
  }
  for (const char* bad : {"abc", "12x", "-1", ""}) {
    ScopedEnv env("CTCPOLY_SEED", bad);
    EXPECT_THROW(parse(text), Error) << bad;
  }
}

TEST(Config, ParseErrorNamesLine) {
  const auto dir = test::temp_dir("cfg_bad");
  std::ofstream((dir / "x.toml").string()) << "seed = 1\n[data\n";
  try {
    load_experiment_config((dir / "x.toml").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// Data loading

TEST(Data, WavSourcesBecomeLogMel) {
  const auto dir = test::temp_dir("wav_manifest");
  Waveform w{std::vector<double>(19200), 16000};
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 300.0 * static_cast<double>(i) / 16000.0);
  }
  std::ofstream os((dir / "a.wav").string(), std::ios::binary);
  write_wav(w, os);
  os.close();
  write_manifest({{"a", "a.wav", "hi", "la", 1.2}, {"b", "a.wav", "ho", "la", 1.2}},
                 (dir / "m.jsonl").string());
  DataOptions d;
  d.manifest = (dir / "m.jsonl").string();
  const auto data = load_experiment_data(d);
  ASSERT_EQ(data.utterances.size(), 2u);
  EXPECT_EQ(data.utterances[0].features.kind, FeatureKind::kLogMel);
  EXPECT_EQ(data.utterances[0].features.dim(), 40);
  EXPECT_EQ(data.utterances[0].features.frames(), 1 + (19200 - 512) / 160);
}

TEST(Data, UnknownLanguageRejected) {
  const auto dir = test::temp_dir("data_lang");
  CorpusOptions co;
  co.utts_per_language = 3;
  write_corpus(generate_corpus(make_benchmark_specs(small_bench(2, 1)), co), dir.string());
  DataOptions d;
  d.manifest = (dir / "manifest.jsonl").string();
  d.filters.min_duration = 0.0;
  d.languages = {"la", "zz"};
  EXPECT_THROW(load_experiment_data(d), Error);
  d.languages = {"lb"};
  const auto data = load_experiment_data(d);
  EXPECT_EQ(data.languages, std::vector<std::string>{"lb"});
  EXPECT_EQ(data.utterances.size(), 3u);
  EXPECT_EQ(data.counters.read, 6u);
}

// ---------------------------------------------------------------------------
// End to end

ExperimentConfig tiny_config(const fs::path& out, std::uint64_t seed) {
  ExperimentConfig c;
  SyntheticDataConfig s;
  s.benchmark = small_bench(2, 0);
  s.corpus.utts_per_language = 20;
  c.synthetic = s;
  c.filters.min_duration = 0.0;
  c.test_fraction = 0.2;
  c.model.conv = {{{3, 3, 2, 2, 2}, {3, 3, 1, 2, 2}}};
  c.model.recurrent_layers = 1;
  c.model.recurrent_width = 6;
  c.train.epochs = 3;
  c.train.learning_rate = 1e-2;
  c.bnf_train.epochs = 1;
  c.lfv_train.epochs = 1;
  c.seed = seed;
  c.output_dir = out.string();
  return c;
}

TEST(Experiment, FixedSeedIsReproducible) {
  const auto d1 = test::temp_dir("exp_det_a"), d2 = test::temp_dir("exp_det_b");
  auto c1 = tiny_config(d1, 7);
  c1.lfv = true;
  c1.beam = 4;
  c1.lm_order = 2;
  auto c2 = c1;
  c2.output_dir = d2.string();
  const auto r1 = run_experiment(c1);
  const auto r2 = run_experiment(c2);
  ASSERT_EQ(r1.rows().size(), 4u);  // TER and WER for two languages
  for (std::size_t i = 0; i < r1.rows().size(); ++i) {
    EXPECT_EQ(r1.rows()[i].to_tsv(), r2.rows()[i].to_tsv());
  }
  for (const char* f : {"results.tsv", "loss.tsv", "hyp.txt", "model.all.ckpt", "bnf.ckpt", "lfv.ckpt",
                        "units.all.txt"}) {
    ASSERT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  EXPECT_EQ(r1.system, "ML+LFV");
}

TEST(Experiment, OutputFormats) {
  const auto dir = test::temp_dir("exp_formats");
  const auto r = run_experiment(tiny_config(dir, 1));
  std::ifstream res((dir / "results.tsv").string());
  std::string line;
  int n = 0;
  while (std::getline(res, line)) {
    const ResultRow row = ResultRow::from_tsv(line);
    EXPECT_EQ(row.system, "ML");
    EXPECT_EQ(row.metric, "TER");
    EXPECT_GT(row.errors.ref_len, 0);
    ++n;
  }
  EXPECT_EQ(n, 2);
  std::ifstream loss((dir / "loss.tsv").string());
  int epochs = 0;
  while (std::getline(loss, line)) {
    EXPECT_EQ(line.rfind("all\t", 0), 0u) << line;
    ++epochs;
  }
  EXPECT_EQ(epochs, 3);
  EXPECT_NE(slurp(dir / "experiment.log").find("stage score"), std::string::npos);
  // The saved model reproduces the decoded hypotheses' source logits.
  const AcousticModel m = load_checkpoint(r.models.at(0).checkpoint);
  EXPECT_EQ(m.config().output_dim, UnitInventory::load((dir / "units.all.txt").string()).size());
}

// Monolingual / ML / ML+LFV rows per pseudo-language, in grapheme and phone mode.
TEST(Experiment, ConditionGrid) {
  for (UnitMode mode : {UnitMode::kGrapheme, UnitMode::kPhone}) {
    ResultTable grid("TER");
    for (int k = 0; k < 3; ++k) {
      const auto dir = test::temp_dir("exp_grid_" + std::to_string(k));
      auto c = tiny_config(dir, 2);
      c.unit_mode = mode;
      c.condition = k == 0 ? Condition::kMonolingual : Condition::kMultilingual;
      c.lfv = k == 2;
      c.train.epochs = 1;
      const auto r = run_experiment(c);
      if (k == 0) {
        ASSERT_EQ(r.models.size(), 2u);
        EXPECT_EQ(r.models[0].name, "la");
      }
      for (const auto& row : r.ter.rows()) grid.add(row.system, row.language, row.errors);
    }
    EXPECT_EQ(grid.systems(), (std::vector<std::string>{"Mono", "ML", "ML+LFV"}));
    EXPECT_EQ(grid.languages(), (std::vector<std::string>{"la", "lb"}));
    EXPECT_EQ(grid.data_cells(), 6u);
  }
}

TEST(Experiment, LogMelAndBnfRows) {
  ResultTable t("TER");
  for (FeatureKind k : {FeatureKind::kLogMel, FeatureKind::kBnf}) {
    const auto dir = test::temp_dir("exp_bnf");
    auto c = tiny_config(dir, 3);
    c.input = k;
    c.train.epochs = 1;
    const ExperimentResult r = run_experiment(c);
    for (const auto& row : r.ter.rows()) t.add(row.system, row.language, row.errors);
  }
  EXPECT_EQ(t.systems(), (std::vector<std::string>{"ML", "ML/BNF"}));
}

TEST(Experiment, StageFailureNamesStageAndKeepsLog) {
  const auto dir = test::temp_dir("exp_fail");
  auto c = tiny_config(dir, 1);
  c.unit_mode = UnitMode::kPhone;
  c.lexicon_pattern = "lexicon.tsv";  // no {lang}
  try {
    run_experiment(c);
    FAIL() << "expected a stage error";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("stage 'units':", 0), 0u) << e.what();
  }
  const std::string log = slurp(dir / "experiment.log");
  EXPECT_NE(log.find("stage data"), std::string::npos);
  EXPECT_NE(log.find("stage units failed"), std::string::npos);

  auto missing = tiny_config(test::temp_dir("exp_fail_data"), 1);
  missing.synthetic.reset();
  missing.manifest = "/nonexistent/manifest.jsonl";
  try {
    run_experiment(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("stage 'data':", 0), 0u) << e.what();
  }
}

TEST(Experiment, LanguageSeedFixesSpecsAcrossRuns) {
  const auto d1 = test::temp_dir("exp_ls_a"), d2 = test::temp_dir("exp_ls_b");
  auto c1 = tiny_config(d1, 1);
  c1.synthetic->language_seed = 42;
  c1.train.epochs = 1;
  auto c2 = c1;
  c2.seed = 2;
  c2.output_dir = d2.string();
  run_experiment(c1);
  run_experiment(c2);
  EXPECT_EQ(slurp(d1 / "data" / "lexicon.la.tsv"), slurp(d2 / "data" / "lexicon.la.tsv"));
  EXPECT_NE(slurp(d1 / "data" / "manifest.jsonl"), slurp(d2 / "data" / "manifest.jsonl"));
}

}  // namespace
}  // namespace ctcpoly
