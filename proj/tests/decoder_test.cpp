// Copyright 2026  The ctcpoly Authors
// Licensed under the Apache License, Version 2.0.

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "ctcpoly/char_lm.hpp"
#include "ctcpoly/decoder.hpp"
#include "test_util.hpp"

namespace ctcpoly {
namespace {

// Probability of every labeling, by summing all V^T frame paths.
std::map<std::vector<int>, double> labeling_posteriors(const Matrix& logits) {
  const Matrix lp = log_softmax_rows(logits);
  const auto T = lp.rows();
  const auto V = lp.cols();
  std::map<std::vector<int>, double> out;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  while (true) {
    double logp = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) logp += lp(t, path[static_cast<std::size_t>(t)]);
    out[collapse(path)] += std::exp(logp);
    Eigen::Index t = 0;
    while (t < T && ++path[static_cast<std::size_t>(t)] == V) path[static_cast<std::size_t>(t++)] = 0;
    if (t == T) break;
  }
  return out;
}

std::vector<int> argmax_then_collapse(const Matrix& logits) {
  std::vector<int> path;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    int best = 0;
    for (int v = 0; v < logits.cols(); ++v) {
      if (logits(t, v) > logits(t, best)) best = v;
    }
    path.push_back(best);
  }
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != 0) out.push_back(s);
    prev = s;
  }
  return out;
}

UnitInventory abc_inventory() { return build_grapheme_inventory({"ab c"}); }  // blank <wb> a b c

TEST(Greedy, Examples) {
  const int a = 2, b = 3;
  Matrix logits = Matrix::Constant(5, 4, -5.0);
  const int path[] = {a, a, 0, a, b};
  for (int t = 0; t < 5; ++t) logits(t, path[t]) = 0.0;
  EXPECT_EQ(greedy_decode(logits), (std::vector<int>{a, a, b}));
  EXPECT_TRUE(greedy_decode(Matrix::Zero(4, 3)).empty());  // ties go to blank
  EXPECT_THROW(greedy_decode(Matrix(0, 3)), Error);
}

TEST(Greedy, MatchesIndependentArgmaxCollapse) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Matrix logits = test::random_matrix(50, 6, rng);
    const auto out = greedy_decode(logits);
    EXPECT_EQ(out, argmax_then_collapse(logits));
    for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NE(out[k], 0);
  }
}

TEST(Beam, ExhaustiveBeamFindsMapLabeling) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 120; ++i) {
    const int T = std::uniform_int_distribution<int>(1, 6)(rng);
    const int V = std::uniform_int_distribution<int>(2, 4)(rng);
    const Matrix logits = test::random_matrix(T, V, rng, 2.0);
    const auto post = labeling_posteriors(logits);
    auto best = post.begin();
    for (auto it = post.begin(); it != post.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    BeamOptions opts{100000, 0.0, 0.0};
    Hypothesis h;
    EXPECT_EQ(prefix_beam_decode(logits, nullptr, opts, &h), best->first) << "instance " << i;
    EXPECT_NEAR(std::exp(h.acoustic()), best->second, 1e-12);
  }
}

TEST(Beam, BeamOneMatchesGreedy) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Matrix logits = test::random_matrix(std::uniform_int_distribution<int>(1, 30)(rng), 5, rng, 2.0);
    EXPECT_EQ(prefix_beam_decode(logits, nullptr, BeamOptions{1, 0.0, 0.0}), greedy_decode(logits));
  }
}

TEST(Beam, TotalMassPruningCanLeaveGreedyAtBeamOne) {
  // Frame 2: unit 2 is the argmax (0.4), but blank plus repeating unit 1
  // (0.3 + 0.3) keep more mass on the prefix [1].
  Matrix p(2, 3);
  p << 0.1, 0.8, 0.1,
       0.3, 0.3, 0.4;
  const Matrix logits = p.array().log().matrix();
  EXPECT_EQ(greedy_decode(logits), (std::vector<int>{1, 2}));
  BeamOptions mass{1, 0.0, 0.0, BeamPruning::kTotalMass};
  EXPECT_EQ(prefix_beam_decode(logits, nullptr, mass), (std::vector<int>{1}));
  EXPECT_EQ(prefix_beam_decode(logits, nullptr, BeamOptions{1, 0.0, 0.0}), (std::vector<int>{1, 2}));
}

TEST(Beam, RejectsBadOptions) {
  const Matrix logits = Matrix::Zero(3, 3);
  EXPECT_THROW(prefix_beam_decode(logits, nullptr, BeamOptions{0, 0.0, 0.0}), Error);
  EXPECT_THROW(prefix_beam_decode(logits, nullptr, BeamOptions{4, -1.0, 0.0}), Error);
  EXPECT_THROW(prefix_beam_decode(logits, nullptr, BeamOptions{4, 0.0, -0.5}), Error);
}

TEST(Beam, ReturnedScoreNonDecreasingInBeamWidth) {
  std::mt19937_64 rng(4);
  const UnitInventory inv = abc_inventory();
  const CharNgramLm lm = train_char_lm({"ab c", "abc", "ca b"}, 3, inv, 0.5);
  for (int i = 0; i < 60; ++i) {
    const Matrix logits = test::random_matrix(std::uniform_int_distribution<int>(2, 8)(rng), 5, rng, 2.0);
    for (const CharNgramLm* model : {static_cast<const CharNgramLm*>(nullptr), &lm}) {
      double prev = -std::numeric_limits<double>::infinity();
      for (int beam : {1, 2, 4, 8, 16, 64, 4096}) {
        const BeamOptions opts{beam, 0.8, 0.3};
        Hypothesis h;
        prefix_beam_decode(logits, model, opts, &h);
        double s = h.acoustic() + opts.beta * static_cast<double>(h.prefix.size());
        if (model) s += opts.alpha * (h.lm_logp + model->score(h.lm_state, CharNgramLm::kEos));
        EXPECT_GE(s, prev - 1e-12) << "instance " << i << " beam " << beam;
        prev = std::max(prev, s);
      }
    }
  }
}

TEST(Beam, LmDominatesAtLargeWeight) {
  // Units: blank, <wb>, a, b, c. The LM has only seen "ab".
  const UnitInventory inv = abc_inventory();
  const CharNgramLm lm = train_char_lm({"ab"}, 2, inv, 0.01);
  const int wb = kWordBoundaryId, a = inv.id("a"), b = inv.id("b");
  const std::set<std::pair<int, int>> allowed{{a, b}, {b, wb}, {wb, a}};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    const Matrix logits = test::random_matrix(8, 5, rng, 2.0);
    const auto out = prefix_beam_decode(logits, &lm, BeamOptions{64, 50.0, 0.0});
    EXPECT_FALSE(out.empty());
    for (std::size_t k = 1; k < out.size(); ++k) {
      EXPECT_TRUE(allowed.count({out[k - 1], out[k]})) << out[k - 1] << "," << out[k];
    }
  }
}

TEST(Beam, LmVocabularyMustMatchLogits) {
  const UnitInventory inv = abc_inventory();
  const CharNgramLm lm = train_char_lm({"ab"}, 2, inv);
  EXPECT_THROW(prefix_beam_decode(Matrix::Zero(3, 4), &lm, BeamOptions{}), Error);
}

TEST(CharLm, HandCountedBigram) {
  // Inventory blank <wb> a b; predicted symbols are </s>, <wb>, a, b (4).
  // "aa" yields context a -> {a: 1, </s>: 1}; add-1 gives (1+1)/(2+4).
  const UnitInventory inv = build_grapheme_inventory({"ab"});
  const CharNgramLm lm = train_char_lm({"aa"}, 2, inv, 1.0);
  const int a = inv.id("a");
  const std::vector<int> prefix{a};
  EXPECT_NEAR(std::exp(lm_score(lm, prefix, a)), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(std::exp(lm_score(lm, prefix, CharNgramLm::kEos)), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(std::exp(lm_score(lm, prefix, inv.id("b"))), 1.0 / 6.0, 1e-12);
  // Context <s> -> {a: 1}: (1+1)/(1+4).
  EXPECT_NEAR(std::exp(lm_score(lm, {}, a)), 2.0 / 5.0, 1e-12);
}

TEST(CharLm, DistributionsNormalizeAndSmooth) {
  const UnitInventory inv = abc_inventory();
  for (int order = 1; order <= 5; ++order) {
    const CharNgramLm lm = train_char_lm({"ab c", "abc", "cab ba"}, order, inv, 0.3);
    std::mt19937_64 rng(static_cast<std::uint64_t>(order));
    std::uniform_int_distribution<int> sym(1, inv.size() - 1);
    for (int i = 0; i < 50; ++i) {
      std::vector<int> prefix;
      for (int k = 0, n = std::uniform_int_distribution<int>(0, 6)(rng); k < n; ++k) prefix.push_back(sym(rng));
      double sum = 0.0;
      for (int s = 0; s < inv.size(); ++s) {
        const double p = std::exp(lm_score(lm, prefix, s));
        EXPECT_GT(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(CharLm, UnseenTrigramHasPositiveProbability) {
  const UnitInventory inv = abc_inventory();
  const CharNgramLm lm = train_char_lm({"abc"}, 3, inv);
  const int a = inv.id("a"), c = inv.id("c");
  const std::vector<int> prefix{c, c};
  EXPECT_TRUE(std::isfinite(lm_score(lm, prefix, a)));
  EXPECT_GT(std::exp(lm_score(lm, prefix, a)), 0.0);
}

TEST(CharLm, StreamingMatchesFullPrefixRescoring) {
  const UnitInventory inv = abc_inventory();
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> sym(1, inv.size() - 1);
  for (int order = 1; order <= 5; ++order) {
    const CharNgramLm lm = train_char_lm({"abc ab", "ca", "bbc a"}, order, inv);
    for (int i = 0; i < 30; ++i) {
      CharNgramLm::State s = lm.start();
      std::vector<int> prefix;
      for (int k = 0; k < 8; ++k) {
        const int next = sym(rng);
        EXPECT_EQ(lm.score(s, next), lm_score(lm, prefix, next));
        s = lm.advance(s, next);
        prefix.push_back(next);
      }
      EXPECT_EQ(lm.score(s, CharNgramLm::kEos), lm_score(lm, prefix, CharNgramLm::kEos));
    }
  }
}

TEST(CharLm, UniformOnFlatCorpus) {
  // "a b" gives a, <wb>, b, </s> once each: every unigram count is 1.
  const UnitInventory inv = build_grapheme_inventory({"ab"});
  const CharNgramLm lm = train_char_lm({"a b"}, 1, inv);
  const double first = lm_score(lm, {}, 0);
  for (int s = 0; s < inv.size(); ++s) EXPECT_NEAR(lm_score(lm, {}, s), first, 1e-9);
}

TEST(CharLm, Errors) {
  const UnitInventory inv = abc_inventory();
  EXPECT_THROW(train_char_lm({}, 2, inv), Error);
  EXPECT_THROW(train_char_lm({"ab"}, 0, inv), Error);
  EXPECT_THROW(train_char_lm({"ab"}, 2, inv, 0.0), Error);
  EXPECT_THROW(train_char_lm({"abz"}, 2, inv), Error);
  const CharNgramLm lm = train_char_lm({"ab"}, 2, inv);
  EXPECT_THROW(lm_score(lm, {}, 7), Error);
  const std::vector<int> foreign{0};
  EXPECT_THROW(lm_score(lm, foreign, 2), Error);
}

TEST(CharLm, SaveLoadRoundTrip) {
  const UnitInventory inv = abc_inventory();
  const CharNgramLm lm = train_char_lm({"ab c", "cab"}, 3, inv, 0.5);
  std::stringstream ss;
  lm.save(ss, inv);
  const CharNgramLm back = CharNgramLm::load(ss, inv);
  EXPECT_EQ(back.order(), 3);
  EXPECT_EQ(back.n_contexts(), lm.n_contexts());
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> sym(1, inv.size() - 1);
  for (int i = 0; i < 30; ++i) {
    std::vector<int> prefix{sym(rng), sym(rng)};
    for (int s = 0; s < inv.size(); ++s) EXPECT_EQ(lm_score(lm, prefix, s), lm_score(back, prefix, s));
  }
  const UnitInventory other = build_grapheme_inventory({"xyz"});
  std::stringstream ss2;
  lm.save(ss2, inv);
  EXPECT_THROW(CharNgramLm::load(ss2, other), Error);
}

}  // namespace
}  // namespace ctcpoly
