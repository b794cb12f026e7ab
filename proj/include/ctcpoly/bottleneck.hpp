// ctcpoly/bottleneck.hpp
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

// Feed-forward classifiers with a narrow hidden layer, used twice: a unit
// classifier over short context whose bottleneck yields BNFs, and a language
// classifier over long strided context of BNFs whose bottleneck yields LFVs.
// Hidden layers are shared; the output layer may be split into blocks, one per
// language, with each sample scored only by its own block.

#ifndef CTCPOLY_BOTTLENECK_HPP_
#define CTCPOLY_BOTTLENECK_HPP_

#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/features.hpp"
#include "ctcpoly/params.hpp"

namespace ctcpoly {

struct BottleneckNetConfig {
  int input_dim = 40;            // per-frame dimension before context stacking
  int n_layers = 5;              // hidden layers, bottleneck included
  int layer_width = 1000;
  int bottleneck_dim = 42;
  int bottleneck_position = 4;   // 1-based index among hidden layers
  int context_left = 6;
  int context_right = 6;
  int context_stride = 1;
  int n_targets = 6000;
  int n_output_blocks = 1;

  /// Unit classifier for BNF extraction: 5 x 1000, 42-d bottleneck as the
  /// second-to-last layer, +/-6 frames of context.
  static BottleneckNetConfig paper_bnf(int input_dim, int n_targets, int n_blocks) {
    BottleneckNetConfig c;
    c.input_dim = input_dim;
    c.n_targets = n_targets;
    c.n_output_blocks = n_blocks;
    return c;
  }

  /// Language classifier for LFV extraction: 6 x 1600 with a 42-d bottleneck,
  /// +/-33 frames taking every third.
  static BottleneckNetConfig paper_lfv(int input_dim, int n_languages) {
    BottleneckNetConfig c;
    c.input_dim = input_dim;
    c.n_layers = 6;
    c.layer_width = 1600;
    c.bottleneck_dim = 42;
    c.bottleneck_position = 5;
    c.context_left = c.context_right = 33;
    c.context_stride = 3;
    c.n_targets = n_languages;
    return c;
  }

  static BottleneckNetConfig desk_bnf(int input_dim, int n_targets, int n_blocks) {
    BottleneckNetConfig c = paper_bnf(input_dim, n_targets, n_blocks);
    c.n_layers = 3;
    c.layer_width = 64;
    c.bottleneck_dim = 8;
    c.bottleneck_position = 2;
    return c;
  }

  static BottleneckNetConfig desk_lfv(int input_dim, int n_languages) {
    BottleneckNetConfig c = paper_lfv(input_dim, n_languages);
    c.n_layers = 3;
    c.layer_width = 32;
    c.bottleneck_dim = 4;
    c.bottleneck_position = 2;
    return c;
  }

  int context_positions() const {
    return context_left / context_stride + context_right / context_stride + 1;
  }
  int stacked_dim() const { return input_dim * context_positions(); }

  /// Width of hidden layer `i` (1-based).
  int layer_dim(int i) const { return i == bottleneck_position ? bottleneck_dim : layer_width; }

  void validate() const {
    if (input_dim < 1) throw Error("bottleneck net: input_dim must be >= 1");
    if (n_layers < 1) throw Error("bottleneck net: n_layers must be >= 1");
    if (bottleneck_position < 1 || bottleneck_position > n_layers) {
      throw Error("bottleneck net: bottleneck_position must be in [1, n_layers]");
    }
    if (!(bottleneck_dim >= 1 && bottleneck_dim < layer_width)) {
      throw Error("bottleneck net: need 1 <= bottleneck_dim < layer_width");
    }
    if (context_stride < 1 || context_left < 0 || context_right < 0 ||
        context_left % context_stride || context_right % context_stride) {
      throw Error("bottleneck net: context must be non-negative multiples of the stride");
    }
    if (n_targets < 1 || n_output_blocks < 1) {
      throw Error("bottleneck net: need n_targets >= 1 and n_output_blocks >= 1");
    }
  }

  std::vector<std::pair<std::string, std::int64_t>> fields() const {
    return {{"input_dim", input_dim},         {"n_layers", n_layers},
            {"layer_width", layer_width},     {"bottleneck_dim", bottleneck_dim},
            {"bottleneck_position", bottleneck_position},
            {"context_left", context_left},   {"context_right", context_right},
            {"context_stride", context_stride}, {"n_targets", n_targets},
            {"n_output_blocks", n_output_blocks}};
  }

  static BottleneckNetConfig from_checkpoint(const Checkpoint& ck) {
    BottleneckNetConfig c;
    auto get = [&](const char* k) { return static_cast<int>(ck.config_value(k)); };
    c.input_dim = get("input_dim");
    c.n_layers = get("n_layers");
    c.layer_width = get("layer_width");
    c.bottleneck_dim = get("bottleneck_dim");
    c.bottleneck_position = get("bottleneck_position");
    c.context_left = get("context_left");
    c.context_right = get("context_right");
    c.context_stride = get("context_stride");
    c.n_targets = get("n_targets");
    c.n_output_blocks = get("n_output_blocks");
    return c;
  }

  bool operator==(const BottleneckNetConfig&) const = default;
};

class BottleneckNet {
 public:
  BottleneckNet() = default;

  BottleneckNet(const BottleneckNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    int in = cfg_.stacked_dim();
    for (int i = 1; i <= cfg_.n_layers; ++i) {
      const int out = cfg_.layer_dim(i);
      params_.add("layer" + std::to_string(i) + ".weight", glorot_uniform(out, in, in, out, rng));
      params_.add("layer" + std::to_string(i) + ".bias", Matrix::Zero(out, 1));
      in = out;
    }
    for (int b = 0; b < cfg_.n_output_blocks; ++b) {
      params_.add("output" + std::to_string(b) + ".weight",
                  glorot_uniform(cfg_.n_targets, in, in, cfg_.n_targets, rng));
      params_.add("output" + std::to_string(b) + ".bias", Matrix::Zero(cfg_.n_targets, 1));
    }
    norm_.add("norm.mean", Matrix::Zero(cfg_.bottleneck_dim, 1));
    norm_.add("norm.inv_std", Matrix::Ones(cfg_.bottleneck_dim, 1));
  }

  const BottleneckNetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  const Matrix& weight(int layer) const { return params_[static_cast<std::size_t>(2 * (layer - 1))].value; }
  const Matrix& bias(int layer) const { return params_[static_cast<std::size_t>(2 * (layer - 1) + 1)].value; }
  std::size_t output_index(int block) const {
    return static_cast<std::size_t>(2 * cfg_.n_layers + 2 * block);
  }

  FeatureMatrix stack(const FeatureMatrix& feat) const {
    if (feat.dim() != cfg_.input_dim) {
      throw Error("bottleneck net: feature dim " + std::to_string(feat.dim()) + " != expected " +
                  std::to_string(cfg_.input_dim));
    }
    return stack_context(feat, cfg_.context_left, cfg_.context_right, cfg_.context_stride);
  }

  /// Pre-nonlinearity bottleneck activations for stacked rows. Layers past the
  /// bottleneck are never touched.
  Matrix bottleneck_rows(const Matrix& stacked) const {
    if (stacked.cols() != cfg_.stacked_dim()) throw Error("bottleneck net: stacked dim mismatch");
    Matrix a = stacked;
    for (int i = 1; i <= cfg_.bottleneck_position; ++i) {
      Matrix z = a * weight(i).transpose();
      z.rowwise() += bias(i).col(0).transpose();
      if (i == cfg_.bottleneck_position) return z;
      a = z.array().tanh().matrix();
    }
    return a;  // unreachable
  }

  /// Bottleneck activations standardized with the statistics from
  /// fit_output_norm (identity until fitted).
  Matrix features(const Matrix& stacked) const {
    Matrix z = bottleneck_rows(stacked);
    z.rowwise() -= norm_[0].value.col(0).transpose();
    return (z.array().rowwise() * norm_[1].value.col(0).transpose().array()).matrix();
  }

  /// Global mean/variance of the bottleneck over `stacked` rows, applied by
  /// features(). Linear bottlenecks grow well past unit scale in training,
  /// which saturates whatever consumes them.
  void fit_output_norm(const Matrix& stacked) {
    if (stacked.rows() == 0) throw Error("bottleneck net: no frames for output normalization");
    const Matrix z = bottleneck_rows(stacked);
    const RowVector mean = z.colwise().mean();
    const RowVector var = (z.rowwise() - mean).array().square().colwise().mean();
    norm_[0].value = mean.transpose();
    norm_[1].value = (var.array() + 1e-8).rsqrt().matrix().transpose();
  }

  /// Per-row log-posteriors of output block `block`.
  Matrix log_posteriors(const Matrix& stacked, int block = 0) const {
    check_block(block);
    Matrix a = stacked;
    for (int i = 1; i <= cfg_.n_layers; ++i) {
      Matrix z = a * weight(i).transpose();
      z.rowwise() += bias(i).col(0).transpose();
      a = z.array().tanh().matrix();
    }
    const std::size_t o = output_index(block);
    Matrix logits = a * params_[o].value.transpose();
    logits.rowwise() += params_[o + 1].value.col(0).transpose();
    return log_softmax_rows(logits);
  }

  /// Mean cross-entropy over rows; fills `grad` (same layout as params) when
  /// non-null.
  double loss_and_grad(const Matrix& stacked, std::span<const int> targets,
                       std::span<const int> blocks, ParamSet* grad) const {
    const Eigen::Index n = stacked.rows();
    if (n == 0) throw Error("bottleneck net: empty batch");
    if (static_cast<Eigen::Index>(targets.size()) != n ||
        static_cast<Eigen::Index>(blocks.size()) != n) {
      throw Error("bottleneck net: targets/blocks length mismatch");
    }
    if (stacked.cols() != cfg_.stacked_dim()) throw Error("bottleneck net: stacked dim mismatch");
    for (Eigen::Index r = 0; r < n; ++r) {
      check_block(blocks[static_cast<std::size_t>(r)]);
      const int y = targets[static_cast<std::size_t>(r)];
      if (y < 0 || y >= cfg_.n_targets) {
        throw Error("bottleneck net: target " + std::to_string(y) + " >= n_targets");
      }
    }
    std::vector<Matrix> acts;  // acts[0] = input, acts[i] = tanh output of layer i
    acts.reserve(static_cast<std::size_t>(cfg_.n_layers + 1));
    acts.push_back(stacked);
    for (int i = 1; i <= cfg_.n_layers; ++i) {
      Matrix z = acts.back() * weight(i).transpose();
      z.rowwise() += bias(i).col(0).transpose();
      acts.push_back(z.array().tanh().matrix());
    }
    const Matrix& top = acts.back();
    Matrix dtop = Matrix::Zero(top.rows(), top.cols());
    if (grad) *grad = params_.zeros_like();
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int b = 0; b < cfg_.n_output_blocks; ++b) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (blocks[static_cast<std::size_t>(r)] == b) rows.push_back(r);
      }
      if (rows.empty()) continue;
      Matrix h(static_cast<Eigen::Index>(rows.size()), top.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) h.row(static_cast<Eigen::Index>(k)) = top.row(rows[k]);
      const std::size_t o = output_index(b);
      Matrix logits = h * params_[o].value.transpose();
      logits.rowwise() += params_[o + 1].value.col(0).transpose();
      const Matrix lp = log_softmax_rows(logits);
      Matrix dlogits = lp.array().exp().matrix();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const int y = targets[static_cast<std::size_t>(rows[k])];
        loss -= lp(static_cast<Eigen::Index>(k), y);
        dlogits(static_cast<Eigen::Index>(k), y) -= 1.0;
      }
      dlogits *= inv_n;
      if (grad) {
        (*grad)[o].value += dlogits.transpose() * h;
        (*grad)[o + 1].value += dlogits.colwise().sum().transpose();
        const Matrix dh = dlogits * params_[o].value;
        for (std::size_t k = 0; k < rows.size(); ++k) dtop.row(rows[k]) += dh.row(static_cast<Eigen::Index>(k));
      }
    }
    if (grad) {
      Matrix da = std::move(dtop);
      for (int i = cfg_.n_layers; i >= 1; --i) {
        const Matrix& a = acts[static_cast<std::size_t>(i)];
        const Matrix dz = (da.array() * (1.0 - a.array().square())).matrix();
        (*grad)[static_cast<std::size_t>(2 * (i - 1))].value += dz.transpose() * acts[static_cast<std::size_t>(i - 1)];
        (*grad)[static_cast<std::size_t>(2 * (i - 1) + 1)].value += dz.colwise().sum().transpose();
        if (i > 1) da = dz * weight(i);
      }
    }
    return loss * inv_n;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = ModelKind::kBottleneck;
    ck.config = cfg_.fields();
    for (const auto& p : params_) ck.blobs.push_back(p);
    for (const auto& p : norm_) ck.blobs.push_back(p);
    return ck;
  }

  static BottleneckNet from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != ModelKind::kBottleneck) throw Error("checkpoint does not hold a bottleneck net");
    BottleneckNet net(BottleneckNetConfig::from_checkpoint(ck), 0);
    assign_blobs(net.params_, ck.blobs);
    assign_blobs(net.norm_, ck.blobs);
    return net;
  }

  void save(const std::string& path) const { save_checkpoint_file(to_checkpoint(), path); }
  static BottleneckNet load(const std::string& path) {
    return from_checkpoint(load_checkpoint_file(path));
  }

 private:
  void check_block(int block) const {
    if (block < 0 || block >= cfg_.n_output_blocks) {
      throw Error("bottleneck net: output block " + std::to_string(block) + " out of range");
    }
  }

  BottleneckNetConfig cfg_;
  ParamSet params_;
  ParamSet norm_;  // output standardization, not trained by SGD
};

// ---------------------------------------------------------------------------
// Training.

struct FrameLabeledUtterance {
  FeatureMatrix features;
  std::vector<int> frame_targets;  // one per frame
  int block = 0;                   // output block (language) of this utterance
};

struct FrameTrainReport {
  std::vector<double> epoch_loss;
};

namespace detail {

struct FrameSet {
  Matrix inputs;
  std::vector<int> targets;
  std::vector<int> blocks;
};

inline FrameSet gather_frames(const BottleneckNet& net,
                              const std::vector<FrameLabeledUtterance>& corpus) {
  Eigen::Index total = 0;
  for (const auto& u : corpus) {
    if (u.features.dim() != net.config().input_dim) {
      throw Error("bottleneck training: feature dim " + std::to_string(u.features.dim()) +
                  " != config input_dim " + std::to_string(net.config().input_dim));
    }
    if (static_cast<Eigen::Index>(u.frame_targets.size()) != u.features.frames()) {
      throw Error("bottleneck training: frame target count != frame count");
    }
    for (int y : u.frame_targets) {
      if (y < 0 || y >= net.config().n_targets) {
        throw Error("bottleneck training: target id " + std::to_string(y) + " >= n_targets " +
                    std::to_string(net.config().n_targets));
      }
    }
    if (u.block < 0 || u.block >= net.config().n_output_blocks) {
      throw Error("bottleneck training: output block out of range");
    }
    total += u.features.frames();
  }
  if (total == 0) throw Error("bottleneck training: empty corpus");
  FrameSet fs;
  fs.inputs.resize(total, net.config().stacked_dim());
  Eigen::Index row = 0;
  for (const auto& u : corpus) {
    const FeatureMatrix s = net.stack(u.features);
    fs.inputs.middleRows(row, s.frames()) = s.data;
    row += s.frames();
    fs.targets.insert(fs.targets.end(), u.frame_targets.begin(), u.frame_targets.end());
    fs.blocks.insert(fs.blocks.end(), static_cast<std::size_t>(s.frames()), u.block);
  }
  return fs;
}

inline FrameTrainReport sgd_frames(BottleneckNet& net, const FrameSet& fs, const TrainConfig& tc) {
  tc.validate();
  FrameTrainReport report;
  NesterovSgd opt;
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(fs.targets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  ParamSet grad;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      Matrix x(static_cast<Eigen::Index>(n), fs.inputs.cols());
      std::vector<int> y(n), b(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r = order[start + k];
        x.row(static_cast<Eigen::Index>(k)) = fs.inputs.row(static_cast<Eigen::Index>(r));
        y[k] = fs.targets[r];
        b[k] = fs.blocks[r];
      }
      const double loss = net.loss_and_grad(x, y, b, &grad);
      opt.step(net.params(), grad, tc);
      sum += loss * static_cast<double>(n);
      seen += n;
    }
    report.epoch_loss.push_back(sum / static_cast<double>(seen));
  }
  return report;
}

}  // namespace detail

/// Unit classifier producing BNFs; the output block of each utterance is its
/// language.
struct BnfNet {
  BottleneckNet net;
};

/// Language classifier producing LFVs over stacked BNF context.
struct LfvNet {
  BottleneckNet net;
};

/// Frame-level cross-entropy training of the unit classifier on stacked
/// context input.
inline BnfNet train_bottleneck_net(const std::vector<FrameLabeledUtterance>& corpus,
                                   const BottleneckNetConfig& cfg, const TrainConfig& tc,
                                   FrameTrainReport* report = nullptr) {
  cfg.validate();
  BnfNet out{BottleneckNet(cfg, tc.seed)};
  const detail::FrameSet fs = detail::gather_frames(out.net, corpus);
  FrameTrainReport r = detail::sgd_frames(out.net, fs, tc);
  out.net.fit_output_norm(fs.inputs);
  if (report) *report = std::move(r);
  return out;
}

struct LanguageLabeledUtterance {
  FeatureMatrix bnf;
  int language = 0;
};

/// Language classifier over BNF context; needs at least two languages.
inline LfvNet train_lfv_net(const std::vector<LanguageLabeledUtterance>& corpus,
                            const BottleneckNetConfig& cfg, const TrainConfig& tc,
                            FrameTrainReport* report = nullptr) {
  std::set<int> langs;
  for (const auto& u : corpus) langs.insert(u.language);
  if (langs.size() < 2) throw Error("LFV training requires >=2 languages");
  cfg.validate();
  if (cfg.n_output_blocks != 1) throw Error("LFV net uses a single output block");
  std::vector<FrameLabeledUtterance> frames;
  frames.reserve(corpus.size());
  for (const auto& u : corpus) {
    if (u.bnf.kind != FeatureKind::kBnf) throw Error("LFV training expects BNF input");
    frames.push_back({u.bnf, std::vector<int>(static_cast<std::size_t>(u.bnf.frames()), u.language), 0});
  }
  LfvNet out{BottleneckNet(cfg, tc.seed)};
  const detail::FrameSet fs = detail::gather_frames(out.net, frames);
  FrameTrainReport r = detail::sgd_frames(out.net, fs, tc);
  out.net.fit_output_norm(fs.inputs);
  if (report) *report = std::move(r);
  return out;
}

/// Standardized bottleneck activations of the unit classifier, one row per
/// input frame.
inline FeatureMatrix extract_bnf(const BnfNet& bnf, const FeatureMatrix& feat) {
  feat.validate();
  FeatureMatrix out;
  out.kind = FeatureKind::kBnf;
  out.frame_shift_ms = feat.frame_shift_ms;
  out.data = bnf.net.features(bnf.net.stack(feat).data);
  return out;
}

inline FeatureMatrix extract_lfv(const LfvNet& lfv, const FeatureMatrix& bnf) {
  if (bnf.kind != FeatureKind::kBnf) {
    throw Error("extract_lfv: expected BNF input, got " + std::string(to_string(bnf.kind)));
  }
  bnf.validate();
  FeatureMatrix out;
  out.kind = FeatureKind::kLfv;
  out.frame_shift_ms = bnf.frame_shift_ms;
  out.data = lfv.net.features(lfv.net.stack(bnf).data);
  return out;
}

/// Fraction of frames whose argmax class in `block` equals the label.
inline double frame_accuracy(const BottleneckNet& net, const FeatureMatrix& feat,
                             std::span<const int> labels, int block = 0) {
  const Matrix lp = net.log_posteriors(net.stack(feat).data, block);
  if (static_cast<Eigen::Index>(labels.size()) != lp.rows()) {
    throw Error("frame_accuracy: label count mismatch");
  }
  int correct = 0;
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    Eigen::Index best = 0;
    lp.row(t).maxCoeff(&best);
    correct += static_cast<int>(best) == labels[static_cast<std::size_t>(t)];
  }
  return static_cast<double>(correct) / static_cast<double>(lp.rows());
}

}  // namespace ctcpoly

#endif  // CTCPOLY_BOTTLENECK_HPP_
