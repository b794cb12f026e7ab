// ctcpoly/network.hpp
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

// CTC acoustic model:
//
//   features (T x F) -> conv1 -> BN -> tanh -> conv2 -> BN -> tanh
//     -> [conv features | LFV] -> bidirectional LSTM x N -> affine -> logits
//
// Convolutions run over time x frequency with "same" padding, so each layer
// maps T -> ceil(T / stride). Batch normalization uses batch statistics in
// training mode and running statistics in inference mode.
//
// Activation tensors are stored as (T * F) x C matrices, row t * F + f.

#ifndef CTCPOLY_NETWORK_HPP_
#define CTCPOLY_NETWORK_HPP_

#include <array>
#include <random>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/features.hpp"
#include "ctcpoly/params.hpp"

namespace ctcpoly {

struct ConvSpec {
  int kernel_time = 11;
  int kernel_freq = 11;
  int stride_time = 2;
  int stride_freq = 2;
  int channels = 8;

  bool operator==(const ConvSpec&) const = default;
};

struct ModelConfig {
  int input_dim = 40;
  std::array<ConvSpec, 2> conv{{{11, 11, 2, 2, 8}, {11, 11, 1, 2, 8}}};
  int recurrent_layers = 2;
  int recurrent_width = 32;  // units per direction
  int lfv_dim = 0;
  int output_dim = 2;

  /// Four bidirectional recurrent layers as drawn in the reference layout.
  static ModelConfig paper_shaped(int input_dim, int output_dim, int lfv_dim) {
    ModelConfig c;
    c.input_dim = input_dim;
    c.output_dim = output_dim;
    c.lfv_dim = lfv_dim;
    c.conv = {{{11, 11, 2, 2, 32}, {11, 11, 1, 2, 32}}};
    c.recurrent_layers = 4;
    c.recurrent_width = 256;
    return c;
  }

  int freq_after(int layer) const {
    int f = input_dim;
    for (int i = 0; i < layer; ++i) f = (f + conv[static_cast<std::size_t>(i)].stride_freq - 1) / conv[static_cast<std::size_t>(i)].stride_freq;
    return f;
  }
  int conv_output_dim() const { return freq_after(2) * conv[1].channels; }
  int recurrent_input_dim(int layer) const {
    return layer == 0 ? conv_output_dim() + lfv_dim : 2 * recurrent_width;
  }
  /// Frames leaving the conv stack for a T-frame input.
  int output_frames(int T) const {
    int t = T;
    for (const auto& c : conv) t = (t + c.stride_time - 1) / c.stride_time;
    return t;
  }
  int time_stride() const { return conv[0].stride_time * conv[1].stride_time; }

  void validate() const {
    if (input_dim < 1) throw Error("model config: input_dim must be >= 1");
    for (const auto& c : conv) {
      if (c.kernel_time < 1 || c.kernel_freq < 1 || c.stride_time < 1 || c.stride_freq < 1 ||
          c.channels < 1) {
        throw Error("model config: conv kernel, stride and channels must be >= 1");
      }
    }
    if (recurrent_layers < 1 || recurrent_width < 1) {
      throw Error("model config: need >= 1 recurrent layer of width >= 1");
    }
    if (lfv_dim < 0) throw Error("model config: lfv_dim must be >= 0");
    if (output_dim < 2) throw Error("model config: output_dim must be >= 2 (blank + 1 unit)");
  }

  std::vector<std::pair<std::string, std::int64_t>> fields() const {
    std::vector<std::pair<std::string, std::int64_t>> f{{"input_dim", input_dim}};
    for (int i = 0; i < 2; ++i) {
      const auto& c = conv[static_cast<std::size_t>(i)];
      const std::string p = "conv" + std::to_string(i + 1) + ".";
      f.emplace_back(p + "kernel_time", c.kernel_time);
      f.emplace_back(p + "kernel_freq", c.kernel_freq);
      f.emplace_back(p + "stride_time", c.stride_time);
      f.emplace_back(p + "stride_freq", c.stride_freq);
      f.emplace_back(p + "channels", c.channels);
    }
    f.emplace_back("recurrent_layers", recurrent_layers);
    f.emplace_back("recurrent_width", recurrent_width);
    f.emplace_back("lfv_dim", lfv_dim);
    f.emplace_back("output_dim", output_dim);
    return f;
  }

  static ModelConfig from_checkpoint(const Checkpoint& ck) {
    ModelConfig c;
    auto get = [&](const std::string& k) { return static_cast<int>(ck.config_value(k)); };
    c.input_dim = get("input_dim");
    for (int i = 0; i < 2; ++i) {
      auto& cs = c.conv[static_cast<std::size_t>(i)];
      const std::string p = "conv" + std::to_string(i + 1) + ".";
      cs.kernel_time = get(p + "kernel_time");
      cs.kernel_freq = get(p + "kernel_freq");
      cs.stride_time = get(p + "stride_time");
      cs.stride_freq = get(p + "stride_freq");
      cs.channels = get(p + "channels");
    }
    c.recurrent_layers = get("recurrent_layers");
    c.recurrent_width = get("recurrent_width");
    c.lfv_dim = get("lfv_dim");
    c.output_dim = get("output_dim");
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Trainable weights, batch-norm running statistics and the update counter.
struct Parameters {
  ParamSet trainable;
  ParamSet running;
  std::int64_t step = 0;
};

enum class Mode { kTrain, kInference };

/// One utterance of model input. `lfv` must be set iff the model has
/// lfv_dim > 0, with one row per feature frame.
struct ModelInput {
  const Matrix* features = nullptr;
  const Matrix* lfv = nullptr;
};

namespace detail {

struct ConvGeometry {
  int t_in, f_in, c_in, t_out, f_out;
  ConvSpec spec;
};

inline ConvGeometry conv_geometry(const ConvSpec& s, int t_in, int f_in, int c_in) {
  return {t_in, f_in, c_in, (t_in + s.stride_time - 1) / s.stride_time,
          (f_in + s.stride_freq - 1) / s.stride_freq, s};
}

/// im2col: one row per output position, columns (c_in, dt, df).
inline Matrix conv_patches(const Matrix& x, const ConvGeometry& g) {
  const int kt = g.spec.kernel_time, kf = g.spec.kernel_freq;
  const int pt = kt / 2, pf = kf / 2;
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(g.t_out) * g.f_out,
                          static_cast<Eigen::Index>(g.c_in) * kt * kf);
  for (int to = 0; to < g.t_out; ++to) {
    for (int fo = 0; fo < g.f_out; ++fo) {
      const Eigen::Index row = static_cast<Eigen::Index>(to) * g.f_out + fo;
      for (int dt = 0; dt < kt; ++dt) {
        const int t = to * g.spec.stride_time + dt - pt;
        if (t < 0 || t >= g.t_in) continue;
        for (int df = 0; df < kf; ++df) {
          const int f = fo * g.spec.stride_freq + df - pf;
          if (f < 0 || f >= g.f_in) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(t) * g.f_in + f;
          for (int c = 0; c < g.c_in; ++c) {
            p(row, (static_cast<Eigen::Index>(c) * kt + dt) * kf + df) = x(src, c);
          }
        }
      }
    }
  }
  return p;
}

/// Adjoint of conv_patches.
inline Matrix conv_patches_adjoint(const Matrix& dp, const ConvGeometry& g) {
  const int kt = g.spec.kernel_time, kf = g.spec.kernel_freq;
  const int pt = kt / 2, pf = kf / 2;
  Matrix dx = Matrix::Zero(static_cast<Eigen::Index>(g.t_in) * g.f_in, g.c_in);
  for (int to = 0; to < g.t_out; ++to) {
    for (int fo = 0; fo < g.f_out; ++fo) {
      const Eigen::Index row = static_cast<Eigen::Index>(to) * g.f_out + fo;
      for (int dt = 0; dt < kt; ++dt) {
        const int t = to * g.spec.stride_time + dt - pt;
        if (t < 0 || t >= g.t_in) continue;
        for (int df = 0; df < kf; ++df) {
          const int f = fo * g.spec.stride_freq + df - pf;
          if (f < 0 || f >= g.f_in) continue;
          const Eigen::Index dst = static_cast<Eigen::Index>(t) * g.f_in + f;
          for (int c = 0; c < g.c_in; ++c) {
            dx(dst, c) += dp(row, (static_cast<Eigen::Index>(c) * kt + dt) * kf + df);
          }
        }
      }
    }
  }
  return dx;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmDirCache {
  Matrix gates;  // T x 4H activated [i, f, g, o]
  Matrix cell;   // T x H
  Matrix tanh_cell;
  Matrix hidden;  // T x H
};

struct ConvLayerCache {
  ConvGeometry geom;
  Matrix patches;
  Matrix zhat;   // normalized pre-activation
  Matrix act;    // tanh output
};

struct UtteranceCache {
  int frames_in = 0;
  std::array<ConvLayerCache, 2> conv;
  Matrix conv_features;  // T' x conv_output_dim
  std::vector<Matrix> layer_inputs;  // per recurrent layer, T' x in
  std::vector<std::array<LstmDirCache, 2>> lstm;
  Matrix top;  // T' x 2H, input of the output layer
};

}  // namespace detail

/// Result of a batch forward pass; holds what backward needs.
struct BatchForward {
  Mode mode = Mode::kInference;
  std::vector<Matrix> logits;
  std::vector<detail::UtteranceCache> cache;
  std::array<RowVector, 2> bn_mean;     // statistics used by each BN layer
  std::array<RowVector, 2> bn_inv_std;
  std::array<double, 2> bn_count{0.0, 0.0};

  /// Conv-stack output of utterance i (before LFV concatenation).
  const Matrix& conv_features(std::size_t i) const { return cache.at(i).conv_features; }
};

class AcousticModel {
 public:
  static constexpr double kBnEpsilon = 1e-5;
  static constexpr double kBnMomentum = 0.1;

  AcousticModel() = default;

  AcousticModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    auto& P = params_.trainable;
    int c_in = 1;
    for (int i = 0; i < 2; ++i) {
      const auto& s = cfg_.conv[static_cast<std::size_t>(i)];
      const std::string n = std::to_string(i + 1);
      const int k = s.kernel_time * s.kernel_freq;
      P.add("conv" + n + ".weight",
            glorot_uniform(s.channels, c_in * k, c_in * k, s.channels * k, rng));
      P.add("bn" + n + ".gamma", Matrix::Ones(s.channels, 1));
      P.add("bn" + n + ".beta", Matrix::Zero(s.channels, 1));
      params_.running.add("bn" + n + ".running_mean", Matrix::Zero(s.channels, 1));
      params_.running.add("bn" + n + ".running_var", Matrix::Ones(s.channels, 1));
      c_in = s.channels;
    }
    const int H = cfg_.recurrent_width;
    for (int l = 0; l < cfg_.recurrent_layers; ++l) {
      const int in = cfg_.recurrent_input_dim(l);
      for (const char* dir : {"fw", "bw"}) {
        const std::string p = "lstm" + std::to_string(l) + "." + dir + ".";
        P.add(p + "w_input", glorot_uniform(4 * H, in, in, H, rng));
        P.add(p + "w_recurrent", glorot_uniform(4 * H, H, H, H, rng));
        Matrix b = Matrix::Zero(4 * H, 1);
        b.block(H, 0, H, 1).setOnes();  // forget gate
        P.add(p + "bias", std::move(b));
      }
    }
    P.add("output.weight",
          glorot_uniform(cfg_.output_dim, 2 * H, 2 * H, cfg_.output_dim, rng));
    P.add("output.bias", Matrix::Zero(cfg_.output_dim, 1));
    index_params();
  }

  const ModelConfig& config() const { return cfg_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  /// Inference-mode logits for one utterance.
  Matrix forward(const FeatureMatrix& feat, const FeatureMatrix* lfv = nullptr) const {
    ModelInput in{&feat.data, lfv ? &lfv->data : nullptr};
    return forward_batch({in}, Mode::kInference).logits.front();
  }

  BatchForward forward_batch(const std::vector<ModelInput>& batch, Mode mode) const {
    if (batch.empty()) throw Error("forward: empty batch");
    BatchForward out;
    out.mode = mode;
    out.cache.resize(batch.size());
    std::vector<Matrix> x(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const ModelInput& in = batch[b];
      if (in.features == nullptr) throw Error("forward: missing features");
      const Matrix& f = *in.features;
      if (f.cols() != cfg_.input_dim) {
        throw Error("forward: input layer expects dim " + std::to_string(cfg_.input_dim) +
                    ", got " + std::to_string(f.cols()));
      }
      if (f.rows() < 1) throw Error("forward: input layer needs at least one frame");
      if (cfg_.lfv_dim > 0) {
        if (in.lfv == nullptr) throw Error("forward: lfv layer requires an LFV input");
        if (in.lfv->cols() != cfg_.lfv_dim) {
          throw Error("forward: lfv layer expects dim " + std::to_string(cfg_.lfv_dim) +
                      ", got " + std::to_string(in.lfv->cols()));
        }
        if (in.lfv->rows() != f.rows()) {
          throw Error("forward: lfv layer frame count " + std::to_string(in.lfv->rows()) +
                      " != feature frame count " + std::to_string(f.rows()));
        }
      } else if (in.lfv != nullptr) {
        throw Error("forward: lfv layer absent (lfv_dim = 0) but an LFV input was given");
      }
      out.cache[b].frames_in = static_cast<int>(f.rows());
      // Row t * F + f, single channel.
      Matrix img(f.rows() * f.cols(), 1);
      for (Eigen::Index t = 0; t < f.rows(); ++t)
        for (Eigen::Index d = 0; d < f.cols(); ++d) img(t * f.cols() + d, 0) = f(t, d);
      x[b] = std::move(img);
    }

    // Convolution + batch norm, layer-major so statistics span the batch.
    int c_in = 1;
    for (int layer = 0; layer < 2; ++layer) {
      const ConvSpec& spec = cfg_.conv[static_cast<std::size_t>(layer)];
      const Matrix& w = P(conv_w_[layer]);
      std::vector<Matrix> z(batch.size());
      RowVector sum = RowVector::Zero(spec.channels);
      double count = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto& lc = out.cache[b].conv[static_cast<std::size_t>(layer)];
        const int t_in = layer == 0 ? out.cache[b].frames_in : out.cache[b].conv[0].geom.t_out;
        const int f_in = cfg_.freq_after(layer);
        lc.geom = detail::conv_geometry(spec, t_in, f_in, c_in);
        lc.patches = detail::conv_patches(x[b], lc.geom);
        z[b] = lc.patches * w.transpose();
        sum += z[b].colwise().sum();
        count += static_cast<double>(z[b].rows());
      }
      RowVector mean, inv_std;
      if (mode == Mode::kTrain) {
        mean = sum / count;
        RowVector var = RowVector::Zero(spec.channels);
        for (const auto& zb : z) var += (zb.rowwise() - mean).array().square().matrix().colwise().sum();
        var /= count;
        inv_std = (var.array() + kBnEpsilon).rsqrt().matrix();
      } else {
        mean = params_.running[static_cast<std::size_t>(2 * layer)].value.col(0).transpose();
        inv_std = (params_.running[static_cast<std::size_t>(2 * layer + 1)].value.col(0).transpose().array() +
                   kBnEpsilon).rsqrt().matrix();
      }
      out.bn_mean[static_cast<std::size_t>(layer)] = mean;
      out.bn_inv_std[static_cast<std::size_t>(layer)] = inv_std;
      out.bn_count[static_cast<std::size_t>(layer)] = count;
      const RowVector gamma = P(bn_gamma_[layer]).col(0).transpose();
      const RowVector beta = P(bn_beta_[layer]).col(0).transpose();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto& lc = out.cache[b].conv[static_cast<std::size_t>(layer)];
        lc.zhat = ((z[b].rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
        Matrix y = (lc.zhat.array().rowwise() * gamma.array()).matrix();
        y.rowwise() += beta;
        lc.act = y.array().tanh().matrix();
        x[b] = lc.act;
      }
      c_in = spec.channels;
    }

    const int H = cfg_.recurrent_width;
    const int f2 = cfg_.freq_after(2);
    const int c2 = cfg_.conv[1].channels;
    const int stride = cfg_.time_stride();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& uc = out.cache[b];
      const auto& act = uc.conv[1].act;
      const int T2 = uc.conv[1].geom.t_out;
      uc.conv_features.resize(T2, static_cast<Eigen::Index>(f2) * c2);
      for (int t = 0; t < T2; ++t)
        for (int f = 0; f < f2; ++f)
          uc.conv_features.block(t, static_cast<Eigen::Index>(f) * c2, 1, c2) =
              act.row(static_cast<Eigen::Index>(t) * f2 + f);
      Matrix rin(T2, cfg_.recurrent_input_dim(0));
      rin.leftCols(uc.conv_features.cols()) = uc.conv_features;
      if (cfg_.lfv_dim > 0) {
        // LFV frame at the centre of each conv output's receptive field.
        const Matrix& lfv = *batch[b].lfv;
        for (int t = 0; t < T2; ++t) {
          const Eigen::Index src = std::min<Eigen::Index>(static_cast<Eigen::Index>(t) * stride, lfv.rows() - 1);
          rin.block(t, uc.conv_features.cols(), 1, cfg_.lfv_dim) = lfv.row(src);
        }
      }
      uc.layer_inputs.clear();
      uc.lstm.clear();
      Matrix layer_in = std::move(rin);
      for (int l = 0; l < cfg_.recurrent_layers; ++l) {
        std::array<detail::LstmDirCache, 2> dirs;
        for (int d = 0; d < 2; ++d) {
          lstm_forward(layer_in, l, d, dirs[static_cast<std::size_t>(d)]);
        }
        Matrix next(T2, 2 * H);
        next.leftCols(H) = dirs[0].hidden;
        next.rightCols(H) = dirs[1].hidden;
        uc.layer_inputs.push_back(std::move(layer_in));
        uc.lstm.push_back(std::move(dirs));
        layer_in = std::move(next);
      }
      uc.top = std::move(layer_in);
      Matrix logits = uc.top * P(out_w_).transpose();
      logits.rowwise() += P(out_b_).col(0).transpose();
      out.logits.push_back(std::move(logits));
    }
    return out;
  }

  /// Parameter gradients for upstream gradients `dlogits` (one per utterance).
  ParamSet backward(const BatchForward& fwd, const std::vector<Matrix>& dlogits) const {
    if (fwd.cache.empty() || fwd.cache.size() != fwd.logits.size()) {
      throw Error("backward: missing forward cache");
    }
    if (dlogits.size() != fwd.logits.size()) {
      throw Error("backward: expected " + std::to_string(fwd.logits.size()) + " dlogits, got " +
                  std::to_string(dlogits.size()));
    }
    ParamSet grad = params_.trainable.zeros_like();
    const int H = cfg_.recurrent_width;
    const int f2 = cfg_.freq_after(2);
    const int c2 = cfg_.conv[1].channels;
    std::vector<Matrix> dact(fwd.cache.size());  // gradient w.r.t. conv2 activations

    for (std::size_t b = 0; b < fwd.cache.size(); ++b) {
      const auto& uc = fwd.cache[b];
      const Matrix& dl = dlogits[b];
      if (dl.rows() != fwd.logits[b].rows() || dl.cols() != fwd.logits[b].cols()) {
        throw Error("backward: dlogits shape mismatch for utterance " + std::to_string(b));
      }
      G(grad, out_w_) += dl.transpose() * uc.top;
      G(grad, out_b_) += dl.colwise().sum().transpose();
      Matrix dtop = dl * P(out_w_);
      for (int l = cfg_.recurrent_layers - 1; l >= 0; --l) {
        const Matrix& xin = uc.layer_inputs[static_cast<std::size_t>(l)];
        Matrix dx = Matrix::Zero(xin.rows(), xin.cols());
        for (int d = 0; d < 2; ++d) {
          const Matrix dh = d == 0 ? Matrix(dtop.leftCols(H)) : Matrix(dtop.rightCols(H));
          lstm_backward(xin, uc.lstm[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)], dh, l, d,
                        grad, dx);
        }
        dtop = std::move(dx);
      }
      // dtop is now d(recurrent input of layer 0); drop the LFV columns.
      const int T2 = static_cast<int>(dtop.rows());
      Matrix da = Matrix::Zero(static_cast<Eigen::Index>(T2) * f2, c2);
      for (int t = 0; t < T2; ++t)
        for (int f = 0; f < f2; ++f)
          da.row(static_cast<Eigen::Index>(t) * f2 + f) = dtop.block(t, static_cast<Eigen::Index>(f) * c2, 1, c2);
      dact[b] = std::move(da);
    }

    for (int layer = 1; layer >= 0; --layer) {
      const auto L = static_cast<std::size_t>(layer);
      const ConvSpec& spec = cfg_.conv[L];
      const RowVector gamma = P(bn_gamma_[layer]).col(0).transpose();
      std::vector<Matrix> dzhat(fwd.cache.size());
      RowVector sum_dzhat = RowVector::Zero(spec.channels);
      RowVector sum_dzhat_zhat = RowVector::Zero(spec.channels);
      for (std::size_t b = 0; b < fwd.cache.size(); ++b) {
        const auto& lc = fwd.cache[b].conv[L];
        const Matrix dy = (dact[b].array() * (1.0 - lc.act.array().square())).matrix();
        G(grad, bn_gamma_[layer]) += (dy.array() * lc.zhat.array()).matrix().colwise().sum().transpose();
        G(grad, bn_beta_[layer]) += dy.colwise().sum().transpose();
        dzhat[b] = (dy.array().rowwise() * gamma.array()).matrix();
        sum_dzhat += dzhat[b].colwise().sum();
        sum_dzhat_zhat += (dzhat[b].array() * lc.zhat.array()).matrix().colwise().sum();
      }
      const RowVector& inv_std = fwd.bn_inv_std[L];
      const double n = fwd.bn_count[L];
      for (std::size_t b = 0; b < fwd.cache.size(); ++b) {
        const auto& lc = fwd.cache[b].conv[L];
        Matrix dz;
        if (fwd.mode == Mode::kTrain) {
          Matrix centered = dzhat[b];
          centered.rowwise() -= sum_dzhat / n;
          centered -= (lc.zhat.array().rowwise() * (sum_dzhat_zhat / n).array()).matrix();
          dz = (centered.array().rowwise() * inv_std.array()).matrix();
        } else {
          dz = (dzhat[b].array().rowwise() * inv_std.array()).matrix();
        }
        G(grad, conv_w_[layer]) += dz.transpose() * lc.patches;
        if (layer == 1) {
          const Matrix dp = dz * P(conv_w_[layer]);
          dact[b] = detail::conv_patches_adjoint(dp, lc.geom);
        }
      }
    }
    return grad;
  }

  /// Exponential moving update of BN running statistics from a training batch.
  void update_running_stats(const BatchForward& fwd) {
    if (fwd.mode != Mode::kTrain) return;
    for (std::size_t layer = 0; layer < 2; ++layer) {
      Matrix& rm = params_.running[2 * layer].value;
      Matrix& rv = params_.running[2 * layer + 1].value;
      const Vector mean = fwd.bn_mean[layer].transpose();
      const Vector var = (fwd.bn_inv_std[layer].array().square().inverse() - kBnEpsilon).matrix().transpose();
      rm = (1.0 - kBnMomentum) * rm + kBnMomentum * mean;
      rv = (1.0 - kBnMomentum) * rv + kBnMomentum * var.cwiseMax(0.0);
    }
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = ModelKind::kAcoustic;
    ck.config = cfg_.fields();
    ck.step = params_.step;
    for (const auto& p : params_.trainable) ck.blobs.push_back(p);
    for (const auto& p : params_.running) ck.blobs.push_back(p);
    return ck;
  }

  static AcousticModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != ModelKind::kAcoustic) throw Error("checkpoint does not hold an acoustic model");
    AcousticModel m(ModelConfig::from_checkpoint(ck), 0);
    assign_blobs(m.params_.trainable, ck.blobs);
    assign_blobs(m.params_.running, ck.blobs);
    m.params_.step = ck.step;
    return m;
  }

 private:
  void index_params() {
    const auto& P = params_.trainable;
    for (int i = 0; i < 2; ++i) {
      const std::string n = std::to_string(i + 1);
      conv_w_[i] = P.index("conv" + n + ".weight");
      bn_gamma_[i] = P.index("bn" + n + ".gamma");
      bn_beta_[i] = P.index("bn" + n + ".beta");
    }
    lstm_idx_.clear();
    for (int l = 0; l < cfg_.recurrent_layers; ++l) {
      for (const char* dir : {"fw", "bw"}) {
        const std::string p = "lstm" + std::to_string(l) + "." + dir + ".";
        lstm_idx_.push_back({P.index(p + "w_input"), P.index(p + "w_recurrent"), P.index(p + "bias")});
      }
    }
    out_w_ = P.index("output.weight");
    out_b_ = P.index("output.bias");
  }

  const Matrix& P(int idx) const { return params_.trainable[static_cast<std::size_t>(idx)].value; }
  static Matrix& G(ParamSet& g, int idx) { return g[static_cast<std::size_t>(idx)].value; }

  const std::array<int, 3>& lstm_index(int layer, int dir) const {
    return lstm_idx_[static_cast<std::size_t>(2 * layer + dir)];
  }

  void lstm_forward(const Matrix& x, int layer, int dir, detail::LstmDirCache& c) const {
    const auto& idx = lstm_index(layer, dir);
    const Matrix& wx = P(idx[0]);
    const Matrix& wh = P(idx[1]);
    const Eigen::Index H = cfg_.recurrent_width;
    const Eigen::Index T = x.rows();
    Matrix pre = x * wx.transpose();
    pre.rowwise() += P(idx[2]).col(0).transpose();
    c.gates.resize(T, 4 * H);
    c.cell.resize(T, H);
    c.tanh_cell.resize(T, H);
    c.hidden.resize(T, H);
    RowVector h = RowVector::Zero(H);
    RowVector cell = RowVector::Zero(H);
    for (Eigen::Index k = 0; k < T; ++k) {
      const Eigen::Index t = dir == 0 ? k : T - 1 - k;
      RowVector g = pre.row(t) + h * wh.transpose();
      for (Eigen::Index j = 0; j < H; ++j) {
        g(j) = detail::sigmoid(g(j));
        g(H + j) = detail::sigmoid(g(H + j));
        g(2 * H + j) = std::tanh(g(2 * H + j));
        g(3 * H + j) = detail::sigmoid(g(3 * H + j));
      }
      cell = g.segment(H, H).cwiseProduct(cell) + g.segment(0, H).cwiseProduct(g.segment(2 * H, H));
      const RowVector tc = cell.array().tanh().matrix();
      h = g.segment(3 * H, H).cwiseProduct(tc);
      c.gates.row(t) = g;
      c.cell.row(t) = cell;
      c.tanh_cell.row(t) = tc;
      c.hidden.row(t) = h;
    }
  }

  void lstm_backward(const Matrix& x, const detail::LstmDirCache& c, const Matrix& dh_out, int layer,
                     int dir, ParamSet& grad, Matrix& dx) const {
    const auto& idx = lstm_index(layer, dir);
    const Matrix& wh = P(idx[1]);
    const Eigen::Index H = cfg_.recurrent_width;
    const Eigen::Index T = x.rows();
    Matrix dpre(T, 4 * H);
    RowVector dh_next = RowVector::Zero(H);
    RowVector dc_next = RowVector::Zero(H);
    for (Eigen::Index k = T - 1; k >= 0; --k) {
      const Eigen::Index t = dir == 0 ? k : T - 1 - k;
      const Eigen::Index prev = dir == 0 ? t - 1 : t + 1;
      const bool has_prev = k > 0;
      const auto g = c.gates.row(t);
      const RowVector dh = dh_out.row(t) + dh_next;
      const auto i = g.segment(0, H).array();
      const auto f = g.segment(H, H).array();
      const auto cc = g.segment(2 * H, H).array();
      const auto o = g.segment(3 * H, H).array();
      const auto tc = c.tanh_cell.row(t).array();
      const RowVector dc = (dh.array() * o * (1.0 - tc.square()) + dc_next.array()).matrix();
      RowVector d(4 * H);
      d.segment(0, H) = (dc.array() * cc * i * (1.0 - i)).matrix();
      if (has_prev) {
        d.segment(H, H) = (dc.array() * c.cell.row(prev).array() * f * (1.0 - f)).matrix();
      } else {
        d.segment(H, H).setZero();
      }
      d.segment(2 * H, H) = (dc.array() * i * (1.0 - cc.square())).matrix();
      d.segment(3 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
      dpre.row(t) = d;
      dc_next = (dc.array() * f).matrix();
      dh_next = d * wh;
    }
    if (T > 1) {
      // Step t reads the hidden state of its predecessor in scan order.
      if (dir == 0) {
        G(grad, idx[1]).noalias() += dpre.bottomRows(T - 1).transpose() * c.hidden.topRows(T - 1);
      } else {
        G(grad, idx[1]).noalias() += dpre.topRows(T - 1).transpose() * c.hidden.bottomRows(T - 1);
      }
    }
    G(grad, idx[0]) += dpre.transpose() * x;
    G(grad, idx[2]) += dpre.colwise().sum().transpose();
    dx += dpre * P(idx[0]);
  }

  ModelConfig cfg_;
  Parameters params_;
  std::array<int, 2> conv_w_{}, bn_gamma_{}, bn_beta_{};
  std::vector<std::array<int, 3>> lstm_idx_;
  int out_w_ = 0, out_b_ = 0;
};

inline void save_checkpoint(const AcousticModel& model, const std::string& path) {
  save_checkpoint_file(model.to_checkpoint(), path);
}

inline AcousticModel load_checkpoint(const std::string& path) {
  return AcousticModel::from_checkpoint(load_checkpoint_file(path));
}

/// Loads a checkpoint that must match `expected`; reports the first differing
/// parameter shape otherwise.
inline AcousticModel load_checkpoint(const std::string& path, const ModelConfig& expected) {
  const Checkpoint ck = load_checkpoint_file(path);
  if (ck.kind != ModelKind::kAcoustic) throw Error("checkpoint does not hold an acoustic model");
  AcousticModel m(expected, 0);
  assign_blobs(m.parameters().trainable, ck.blobs);
  assign_blobs(m.parameters().running, ck.blobs);
  if (!(ModelConfig::from_checkpoint(ck) == expected)) {
    throw Error("checkpoint model config differs from the expected config");
  }
  m.parameters().step = ck.step;
  return m;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_NETWORK_HPP_
