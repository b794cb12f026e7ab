// ctcpoly/params.hpp
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

// Named parameter storage, the SGD/Nesterov update and the binary checkpoint
// container shared by the acoustic model and the bottleneck extractors.

#ifndef CTCPOLY_PARAMS_HPP_
#define CTCPOLY_PARAMS_HPP_

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctcpoly/common.hpp"

namespace ctcpoly {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

/// Ordered list of named matrices. Order is canonical and fixed by the
/// owning model's configuration.
class ParamSet {
 public:
  int add(std::string name, Matrix value) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    index_.emplace(name, static_cast<int>(items_.size()));
    items_.push_back({std::move(name), std::move(value)});
    return static_cast<int>(items_.size()) - 1;
  }

  std::size_t size() const { return items_.size(); }
  NamedMatrix& operator[](std::size_t i) { return items_[i]; }
  const NamedMatrix& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("no parameter named '" + name + "'");
    return it->second;
  }
  Matrix& get(const std::string& name) { return items_[static_cast<std::size_t>(index(name))].value; }
  const Matrix& get(const std::string& name) const {
    return items_[static_cast<std::size_t>(index(name))].value;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& p : items_) out.add(p.name, Matrix::Zero(p.value.rows(), p.value.cols()));
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& p : items_) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& p : items_) s += p.value.squaredNorm();
    return s;
  }

  void scale(double factor) {
    for (auto& p : items_) p.value *= factor;
  }

  void add_scaled(const ParamSet& other, double factor) {
    for (std::size_t i = 0; i < items_.size(); ++i) items_[i].value += factor * other.items_[i].value;
  }

 private:
  std::vector<NamedMatrix> items_;
  std::unordered_map<std::string, int> index_;
};

/// Optimizer and schedule settings shared by every trainer.
struct TrainConfig {
  double learning_rate = 3e-4;
  double momentum = 0.9;
  int batch_size = 20;
  int epochs = 20;
  bool sort_first_epoch = true;
  std::uint64_t seed = 0;
  double max_grad_norm = 0.0;  // 0 disables clipping

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must be in [0, 1)");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (max_grad_norm < 0.0) throw Error("max_grad_norm must be >= 0");
  }
};

/// SGD with Nesterov momentum:
///   v <- mu v - lr g
///   p <- p + mu v - lr g
class NesterovSgd {
 public:
  /// Applies one update; throws and leaves `params` untouched if any gradient
  /// is non-finite or the result would be non-finite.
  void step(ParamSet& params, const ParamSet& grads, const TrainConfig& cfg) {
    if (grads.size() != params.size()) throw Error("gradient/parameter count mismatch");
    if (!grads.all_finite()) throw Error("non-finite gradient; update rejected");
    if (velocity_.size() != params.size()) velocity_ = params.zeros_like();
    double clip = 1.0;
    if (cfg.max_grad_norm > 0.0) {
      const double norm = std::sqrt(grads.squared_norm());
      if (norm > cfg.max_grad_norm) clip = cfg.max_grad_norm / norm;
    }
    const double mu = cfg.momentum;
    const double lr = cfg.learning_rate * clip;
    std::vector<Matrix> new_v(params.size());
    std::vector<Matrix> new_p(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      new_v[i] = mu * velocity_[i].value - lr * grads[i].value;
      new_p[i] = params[i].value + mu * new_v[i] - lr * grads[i].value;
      if (!new_p[i].allFinite()) throw Error("non-finite parameter after update; rejected");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i].value = std::move(new_v[i]);
      params[i].value = std::move(new_p[i]);
    }
    ++steps_;
  }

  std::int64_t steps() const { return steps_; }
  const ParamSet& velocity() const { return velocity_; }

 private:
  ParamSet velocity_;
  std::int64_t steps_ = 0;
};

/// Glorot-style uniform fill scaled by fan-in + fan-out.
inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in,
                             double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic "CTCM", u32 version, u32 model kind, the model
// configuration as a list of (name, i64) fields, i64 step counter, then the
// parameter blobs (name, rows, cols, dtype, data) in canonical order.

enum class ModelKind : std::uint32_t { kAcoustic = 1, kBottleneck = 2 };
enum class BlobType : std::uint32_t { kF32 = 0, kF64 = 1 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelKind kind = ModelKind::kAcoustic;
  std::vector<std::pair<std::string, std::int64_t>> config;
  std::int64_t step = 0;
  std::vector<NamedMatrix> blobs;

  std::int64_t config_value(const std::string& name) const {
    for (const auto& [k, v] : config) {
      if (k == name) return v;
    }
    throw Error("checkpoint config is missing field '" + name + "'");
  }
};

inline void write_checkpoint(const Checkpoint& ck, std::ostream& os,
                             BlobType dtype = BlobType::kF64) {
  os.write("CTCM", 4);
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.kind));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.config.size()));
  for (const auto& [k, v] : ck.config) {
    io::write_string(os, k);
    io::write_le<std::int64_t>(os, v);
  }
  io::write_le<std::int64_t>(os, ck.step);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.blobs.size()));
  for (const auto& b : ck.blobs) {
    io::write_string(os, b.name);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.value.rows()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.value.cols()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dtype));
    // Row-major element order.
    for (Eigen::Index i = 0; i < b.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.value.cols(); ++j) {
        if (dtype == BlobType::kF32) {
          io::write_le<float>(os, static_cast<float>(b.value(i, j)));
        } else {
          io::write_le<double>(os, b.value(i, j));
        }
      }
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  io::expect_magic(is, "CTCM", "checkpoint");
  const auto version = io::read_le<std::uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.kind = static_cast<ModelKind>(io::read_le<std::uint32_t>(is, "model kind"));
  const auto n_cfg = io::read_le<std::uint32_t>(is, "config size");
  if (n_cfg > 4096) throw Error("corrupt checkpoint config size");
  for (std::uint32_t i = 0; i < n_cfg; ++i) {
    std::string k = io::read_string(is, "config name");
    ck.config.emplace_back(std::move(k), io::read_le<std::int64_t>(is, "config value"));
  }
  ck.step = io::read_le<std::int64_t>(is, "step counter");
  const auto n_blobs = io::read_le<std::uint32_t>(is, "blob count");
  if (n_blobs > 100000) throw Error("corrupt checkpoint blob count");
  for (std::uint32_t b = 0; b < n_blobs; ++b) {
    NamedMatrix blob;
    blob.name = io::read_string(is, "blob name");
    const auto rows = io::read_le<std::uint32_t>(is, "blob rows");
    const auto cols = io::read_le<std::uint32_t>(is, "blob cols");
    const auto dtype = static_cast<BlobType>(io::read_le<std::uint32_t>(is, "blob dtype"));
    if (dtype != BlobType::kF32 && dtype != BlobType::kF64) {
      throw Error("unknown blob dtype in '" + blob.name + "'");
    }
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) {
      throw Error("corrupt shape for blob '" + blob.name + "'");
    }
    blob.value.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        blob.value(i, j) = dtype == BlobType::kF32
                               ? static_cast<double>(io::read_le<float>(is, blob.name))
                               : io::read_le<double>(is, blob.name);
      }
    }
    ck.blobs.push_back(std::move(blob));
  }
  return ck;
}

inline void save_checkpoint_file(const Checkpoint& ck, const std::string& path) {
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(ck, buf);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path);
  const std::string bytes = buf.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read checkpoint " + path);
  return read_checkpoint(is);
}

/// Copies blobs into `dst` by name, checking every shape first so that a
/// mismatch leaves `dst` unmodified.
inline void assign_blobs(ParamSet& dst, const std::vector<NamedMatrix>& blobs) {
  std::unordered_map<std::string, const Matrix*> by_name;
  for (const auto& b : blobs) by_name[b.name] = &b.value;
  for (const auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error("checkpoint is missing parameter '" + p.name + "'");
    const Matrix& m = *it->second;
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw Error("shape mismatch for '" + p.name + "': expected " +
                  std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()) +
                  ", found " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
  }
  for (auto& p : dst) p.value = *by_name.at(p.name);
}

}  // namespace ctcpoly

#endif  // CTCPOLY_PARAMS_HPP_
