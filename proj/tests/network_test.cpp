// Copyright 2026  The ctcpoly Authors
// Licensed under the Apache License, Version 2.0.

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "ctcpoly/network.hpp"
#include "ctcpoly/trainer.hpp"
#include "test_util.hpp"

namespace ctcpoly {
namespace {

ModelConfig small_config(int lfv_dim = 0) {
  ModelConfig c;
  c.input_dim = 8;
  c.conv = {{{3, 3, 2, 2, 2}, {3, 3, 1, 2, 2}}};
  c.recurrent_layers = 2;
  c.recurrent_width = 4;
  c.lfv_dim = lfv_dim;
  c.output_dim = 5;
  return c;
}

FeatureMatrix random_features(int T, int D, std::mt19937_64& rng, FeatureKind kind = FeatureKind::kLogMel) {
  FeatureMatrix f;
  f.kind = kind;
  f.data = test::random_matrix(T, D, rng);
  return f;
}

TEST(ModelConfig, OutputFramesFollowStrides) {
  ModelConfig c;  // strides 2 then 1
  EXPECT_EQ(c.output_frames(1), 1);
  EXPECT_EQ(c.output_frames(100), 50);
  EXPECT_EQ(c.output_frames(101), 51);
  c.conv[1].stride_time = 3;
  EXPECT_EQ(c.output_frames(101), 17);  // ceil(ceil(101/2)/3)
  EXPECT_EQ(c.time_stride(), 6);
}

TEST(ModelConfig, ForwardShape) {
  std::mt19937_64 rng(1);
  for (int T : {1, 2, 7, 20, 33}) {
    const ModelConfig c = small_config();
    AcousticModel m(c, 3);
    const Matrix logits = m.forward(random_features(T, c.input_dim, rng));
    EXPECT_EQ(logits.rows(), c.output_frames(T));
    EXPECT_EQ(logits.cols(), c.output_dim);
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  c.output_dim = 1;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.recurrent_layers = 0;
  EXPECT_THROW(AcousticModel(c, 0), Error);
}

TEST(ModelConfig, PaperShapedFourLayersAccepted) {
  const ModelConfig c = ModelConfig::paper_shaped(40, 30, 42);
  EXPECT_EQ(c.recurrent_layers, 4);
  AcousticModel m(c, 0);
  int lstm_blocks = 0;
  for (const auto& p : m.parameters().trainable) {
    if (p.name.ends_with(".w_input")) ++lstm_blocks;
  }
  EXPECT_EQ(lstm_blocks, 8);  // 4 layers x 2 directions
  std::mt19937_64 rng(2);
  const FeatureMatrix f = random_features(12, 40, rng);
  const FeatureMatrix l = random_features(12, 42, rng, FeatureKind::kLfv);
  EXPECT_EQ(m.forward(f, &l).rows(), 6);
}

TEST(Forward, DimensionErrorsNameTheLayer) {
  std::mt19937_64 rng(4);
  AcousticModel m(small_config(2), 0);
  const FeatureMatrix f = random_features(10, 8, rng);
  const FeatureMatrix bad = random_features(10, 7, rng);
  const FeatureMatrix lfv = random_features(10, 2, rng, FeatureKind::kLfv);
  const FeatureMatrix short_lfv = random_features(9, 2, rng, FeatureKind::kLfv);
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message([&] { m.forward(bad, &lfv); }).find("input layer"), std::string::npos);
  EXPECT_NE(message([&] { m.forward(f); }).find("lfv"), std::string::npos);
  EXPECT_NE(message([&] { m.forward(f, &short_lfv); }).find("lfv"), std::string::npos);
  AcousticModel no_lfv(small_config(0), 0);
  EXPECT_NE(message([&] { no_lfv.forward(f, &lfv); }).find("lfv"), std::string::npos);
}

TEST(Forward, Deterministic) {
  std::mt19937_64 rng(5);
  AcousticModel m(small_config(), 9);
  const FeatureMatrix f = random_features(15, 8, rng);
  const Matrix a = m.forward(f);
  const Matrix b = m.forward(f);
  EXPECT_TRUE((a.array() == b.array()).all());
  AcousticModel m2(small_config(), 9);
  EXPECT_TRUE((m2.forward(f).array() == a.array()).all());
}

TEST(Forward, ZeroLfvMatchesAbsentLfvWithZeroedWeights) {
  std::mt19937_64 rng(6);
  const ModelConfig with = small_config(3);
  const ModelConfig without = small_config(0);
  AcousticModel a(with, 1);
  AcousticModel b(without, 1);
  // Copy every parameter; the LFV columns of the first recurrent input
  // weights are zeroed in `a`.
  const int conv_dim = with.conv_output_dim();
  for (auto& p : a.parameters().trainable) {
    Matrix& dst = b.parameters().trainable.get(p.name);
    if (p.name.starts_with("lstm0.") && p.name.ends_with(".w_input")) {
      p.value.rightCols(3).setZero();
      p.value.leftCols(conv_dim) = test::random_matrix(p.value.rows(), conv_dim, rng, 0.3);
      dst = p.value.leftCols(conv_dim);
    } else {
      dst = p.value;
    }
  }
  const FeatureMatrix f = random_features(13, 8, rng);
  FeatureMatrix zero_lfv;
  zero_lfv.kind = FeatureKind::kLfv;
  zero_lfv.data = Matrix::Zero(13, 3);
  const Matrix la = a.forward(f, &zero_lfv);
  const Matrix lb = b.forward(f);
  EXPECT_TRUE((la.array() == lb.array()).all());
}

TEST(Forward, LfvDoesNotReachConvOutputs) {
  std::mt19937_64 rng(7);
  AcousticModel m(small_config(2), 2);
  const FeatureMatrix f = random_features(11, 8, rng);
  const FeatureMatrix l1 = random_features(11, 2, rng, FeatureKind::kLfv);
  const FeatureMatrix l2 = random_features(11, 2, rng, FeatureKind::kLfv);
  for (Mode mode : {Mode::kTrain, Mode::kInference}) {
    const auto a = m.forward_batch({{&f.data, &l1.data}}, mode);
    const auto b = m.forward_batch({{&f.data, &l2.data}}, mode);
    EXPECT_TRUE((a.conv_features(0).array() == b.conv_features(0).array()).all());
    EXPECT_FALSE((a.logits[0].array() == b.logits[0].array()).all());
  }
}

TEST(Forward, InferenceOutputIndependentOfBatch) {
  std::mt19937_64 rng(8);
  AcousticModel m(small_config(), 4);
  m.parameters().running.get("bn1.running_mean").setConstant(0.1);
  m.parameters().running.get("bn2.running_var").setConstant(2.0);
  const FeatureMatrix a = random_features(9, 8, rng);
  const FeatureMatrix b = random_features(14, 8, rng);
  const FeatureMatrix c = random_features(6, 8, rng);
  const auto alone = m.forward_batch({{&a.data, nullptr}}, Mode::kInference);
  const auto mixed = m.forward_batch({{&b.data, nullptr}, {&a.data, nullptr}, {&c.data, nullptr}},
                                     Mode::kInference);
  EXPECT_TRUE((alone.logits[0].array() == mixed.logits[1].array()).all());
  // Training-mode statistics do depend on the batch.
  const auto t_alone = m.forward_batch({{&a.data, nullptr}}, Mode::kTrain);
  const auto t_mixed = m.forward_batch({{&b.data, nullptr}, {&a.data, nullptr}}, Mode::kTrain);
  EXPECT_GT((t_alone.logits[0] - t_mixed.logits[1]).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomTinyConfigs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelConfig cfg = test::random_tiny_config(rng, trial % 2 == 1);
    AcousticModel model(cfg, static_cast<std::uint64_t>(trial));
    ASSERT_LE(model.parameters().trainable.count(), 5000u);
    std::vector<TrainingUtterance> batch;
    for (int b = 0; b < 2; ++b) {
      batch.push_back(test::random_utterance(cfg, std::uniform_int_distribution<int>(5, 9)(rng), rng));
    }
    const auto r = test::check_model_gradient(model, batch);
    EXPECT_LT(r.max_rel_error, 1e-4) << "trial " << trial << " worst " << r.worst;
    EXPECT_EQ(r.checked, model.parameters().trainable.count());
  }
}

TEST(Backward, ZeroAndDoubledUpstreamGradients) {
  std::mt19937_64 rng(9);
  AcousticModel m(small_config(2), 5);
  const FeatureMatrix f = random_features(10, 8, rng);
  const FeatureMatrix l = random_features(10, 2, rng, FeatureKind::kLfv);
  const auto fwd = m.forward_batch({{&f.data, &l.data}}, Mode::kTrain);
  const Matrix d = test::random_matrix(fwd.logits[0].rows(), fwd.logits[0].cols(), rng);
  const ParamSet zero = m.backward(fwd, {Matrix::Zero(d.rows(), d.cols())});
  EXPECT_EQ(zero.squared_norm(), 0.0);
  const ParamSet g1 = m.backward(fwd, {d});
  const ParamSet g2 = m.backward(fwd, {2.0 * d});
  for (std::size_t i = 0; i < g1.size(); ++i) {
    EXPECT_LE((g2[i].value - 2.0 * g1[i].value).cwiseAbs().maxCoeff(),
              1e-12 * (1.0 + g1[i].value.cwiseAbs().maxCoeff()))
        << g1[i].name;
  }
}

TEST(Backward, RequiresForwardCache) {
  AcousticModel m(small_config(), 0);
  BatchForward empty;
  EXPECT_THROW(m.backward(empty, {Matrix::Zero(2, 5)}), Error);
  std::mt19937_64 rng(1);
  const FeatureMatrix f = random_features(6, 8, rng);
  const auto fwd = m.forward_batch({{&f.data, nullptr}}, Mode::kTrain);
  EXPECT_THROW(m.backward(fwd, {Matrix::Zero(2, 4)}), Error);  // wrong shape
}

TEST(Nesterov, HandIteratedQuadratic) {
  // loss p^2/2, so g = p.
  ParamSet p;
  p.add("p", Matrix::Constant(1, 1, 1.0));
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  NesterovSgd opt;
  ParamSet g = p;
  opt.step(p, g, cfg);
  EXPECT_NEAR(opt.velocity()[0].value(0, 0), -0.1, 1e-15);
  EXPECT_NEAR(p[0].value(0, 0), 0.81, 1e-15);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Nesterov, ZeroMomentumIsPlainSgd) {
  std::mt19937_64 rng(3);
  ParamSet p;
  p.add("w", test::random_matrix(3, 2, rng));
  const Matrix before = p[0].value;
  ParamSet g;
  g.add("w", test::random_matrix(3, 2, rng));
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.0;
  NesterovSgd opt;
  opt.step(p, g, cfg);
  EXPECT_LT((p[0].value - (before - 0.05 * g[0].value)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Nesterov, CoastsOnMomentumWithZeroGradient) {
  ParamSet p;
  p.add("p", Matrix::Constant(1, 1, 1.0));
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  NesterovSgd opt;
  opt.step(p, p, cfg);  // v = -0.1, p = 0.81
  ParamSet zero = p.zeros_like();
  opt.step(p, zero, cfg);  // v = -0.09, p moves by 0.9 * -0.09
  EXPECT_NEAR(p[0].value(0, 0), 0.81 - 0.081, 1e-14);
  opt.step(p, zero, cfg);  // v = -0.081
  EXPECT_NEAR(p[0].value(0, 0), 0.81 - 0.081 - 0.0729, 1e-14);
}

TEST(Nesterov, RejectsNonFiniteGradient) {
  ParamSet p;
  p.add("p", Matrix::Constant(2, 1, 1.0));
  ParamSet g = p;
  g[0].value(1, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  NesterovSgd opt;
  EXPECT_THROW(opt.step(p, g, cfg), Error);
  EXPECT_EQ(p[0].value(0, 0), 1.0);
  EXPECT_EQ(opt.steps(), 0);
  g[0].value(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(opt.step(p, g, cfg), Error);
}

TEST(TrainConfig, PaperDefaultsAccepted) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 20);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.0003);
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(10);
  AcousticModel m(small_config(2), 3);
  m.parameters().running.get("bn2.running_mean") = test::random_matrix(2, 1, rng);
  m.parameters().step = 17;
  const auto dir = test::temp_dir("ckpt_roundtrip");
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(m, path);
  const AcousticModel r = load_checkpoint(path);
  EXPECT_EQ(r.config(), m.config());
  EXPECT_EQ(r.parameters().step, 17);
  for (int i = 0; i < 5; ++i) {
    const FeatureMatrix f = random_features(7 + 3 * i, 8, rng);
    const FeatureMatrix l = random_features(7 + 3 * i, 2, rng, FeatureKind::kLfv);
    EXPECT_TRUE((m.forward(f, &l).array() == r.forward(f, &l).array()).all());
  }
}

TEST(Checkpoint, TruncatedFileFails) {
  AcousticModel m(small_config(), 3);
  const auto dir = test::temp_dir("ckpt_trunc");
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(m, path);
  const auto size = std::filesystem::file_size(path);
  for (auto keep : {std::uintmax_t{0}, std::uintmax_t{3}, size / 2, size - 1}) {
    std::filesystem::resize_file(path, keep);
    EXPECT_THROW(load_checkpoint(path), Error) << keep;
    save_checkpoint(m, path);
  }
}

TEST(Checkpoint, ConfigMismatchReportsShapes) {
  AcousticModel m(small_config(), 3);
  const auto dir = test::temp_dir("ckpt_mismatch");
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(m, path);
  ModelConfig other = small_config();
  other.recurrent_width = 6;
  try {
    load_checkpoint(path, other);
    FAIL() << "expected a shape mismatch";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("shape mismatch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("expected"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, BadMagicAndVersion) {
  const auto dir = test::temp_dir("ckpt_magic");
  const std::string path = (dir / "m.ckpt").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  AcousticModel m(small_config(), 3);
  save_checkpoint(m, path);
  {
    std::fstream fs(path, std::ios::in | std::ios::out | std::ios::binary);
    fs.seekp(4);
    const char v[4] = {9, 0, 0, 0};
    fs.write(v, 4);
  }
  EXPECT_THROW(load_checkpoint(path), Error);
}

}  // namespace
}  // namespace ctcpoly
