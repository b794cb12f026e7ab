// ctcpoly/features.hpp
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

#ifndef CTCPOLY_FEATURES_HPP_
#define CTCPOLY_FEATURES_HPP_

#include <unsupported/Eigen/FFT>

#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"

namespace ctcpoly {

enum class FeatureKind : std::uint32_t { kLogMel = 0, kBnf = 1, kLfv = 2, kStacked = 3 };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kLogMel: return "logmel";
    case FeatureKind::kBnf: return "bnf";
    case FeatureKind::kLfv: return "lfv";
    case FeatureKind::kStacked: return "stacked";
  }
  return "?";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  for (auto k : {FeatureKind::kLogMel, FeatureKind::kBnf, FeatureKind::kLfv,
                 FeatureKind::kStacked}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown feature kind '" + std::string(s) + "'");
}

/// T frames x D dimensions with frame-shift metadata.
struct FeatureMatrix {
  Matrix data;
  float frame_shift_ms = 10.0f;
  FeatureKind kind = FeatureKind::kLogMel;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }

  void validate() const {
    if (data.rows() < 1 || data.cols() < 1) {
      throw Error("feature matrix must have T >= 1 and D >= 1");
    }
    if (!data.allFinite()) throw Error("feature matrix contains non-finite values");
  }
};

// ---------------------------------------------------------------------------
// Log-Mel filterbank.

struct LogMelOptions {
  int n_mels = 40;
  double window_ms = 32.0;
  double shift_ms = 10.0;
  double energy_floor = 1e-10;
  bool normalize = true;  // per-utterance mean/variance normalization
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters (peak 1) evenly spaced on the Mel scale from 0 Hz to
/// Nyquist. Rows are filters, columns FFT bins 0..n_fft/2.
inline Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
  }
  Matrix fb = Matrix::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > lo && f < mid) {
        fb(m, k) = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fb(m, k) = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

/// 32 ms Hamming windows every 10 ms; power spectrum through the Mel
/// filterbank, floored, log-compressed, then mean/variance normalized.
inline FeatureMatrix log_mel(std::span<const double> samples, int sample_rate,
                             const LogMelOptions& opts = {}) {
  if (sample_rate != 8000 && sample_rate != 16000) {
    throw Error("log_mel: sample rate must be 8000 or 16000 Hz");
  }
  if (opts.n_mels < 1) throw Error("log_mel: n_mels must be >= 1");
  const int win = static_cast<int>(std::lround(opts.window_ms * sample_rate / 1000.0));
  const int shift = static_cast<int>(std::lround(opts.shift_ms * sample_rate / 1000.0));
  if (static_cast<int>(samples.size()) < win) throw Error("log_mel: signal below one window");
  int n_fft = 1;
  while (n_fft < win) n_fft *= 2;
  const int T = (static_cast<int>(samples.size()) - win) / shift + 1;
  const Matrix fb = mel_filterbank(opts.n_mels, n_fft, sample_rate);

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec;
  Vector power(n_fft / 2 + 1);
  FeatureMatrix out;
  out.kind = FeatureKind::kLogMel;
  out.frame_shift_ms = static_cast<float>(opts.shift_ms);
  out.data.resize(T, opts.n_mels);
  for (int t = 0; t < T; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < win; ++i) {
      frame[static_cast<std::size_t>(i)] =
          samples[static_cast<std::size_t>(t * shift + i)] * window[static_cast<std::size_t>(i)];
    }
    fft.fwd(spec, frame);
    for (int k = 0; k <= n_fft / 2; ++k) power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    Vector energies = fb * power;
    for (int m = 0; m < opts.n_mels; ++m) {
      out.data(t, m) = std::log(std::max(energies(m), opts.energy_floor));
    }
  }
  if (opts.normalize) {
    const RowVector mean = out.data.colwise().mean();
    out.data.rowwise() -= mean;
    RowVector sd = (out.data.array().square().colwise().sum() / T).sqrt().matrix();
    for (Eigen::Index d = 0; d < sd.size(); ++d) {
      if (sd(d) > 1e-8) out.data.col(d) /= sd(d);
    }
  }
  return out;
}

/// Concatenates each frame with its neighbours at offsets
/// -left, -left+stride, ..., right. Edges repeat the first/last frame.
inline FeatureMatrix stack_context(const FeatureMatrix& feat, int left, int right, int stride) {
  if (stride < 1) throw Error("stack_context: stride must be >= 1");
  if (left < 0 || right < 0) throw Error("stack_context: negative context");
  if (left % stride != 0 || right % stride != 0) {
    throw Error("stack_context: context must be a multiple of the stride");
  }
  const Eigen::Index T = feat.frames();
  const Eigen::Index D = feat.dim();
  const int positions = left / stride + right / stride + 1;
  FeatureMatrix out;
  out.kind = left == 0 && right == 0 ? feat.kind : FeatureKind::kStacked;
  out.frame_shift_ms = feat.frame_shift_ms;
  out.data.resize(T, D * positions);
  for (Eigen::Index t = 0; t < T; ++t) {
    int p = 0;
    for (int off = -left; off <= right; off += stride, ++p) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + off, 0, T - 1);
      out.data.block(t, p * D, 1, D) = feat.data.row(src);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature file: "FEAT", u32 version, u32 T, u32 D, u32 kind, f32 frame shift,
// then T x D f32 row-major. Little-endian.

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline void write_features(const FeatureMatrix& feat, std::ostream& os) {
  feat.validate();
  os.write("FEAT", 4);
  io::write_le<std::uint32_t>(os, kFeatureFileVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feat.frames()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feat.dim()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feat.kind));
  io::write_le<float>(os, feat.frame_shift_ms);
  for (Eigen::Index t = 0; t < feat.frames(); ++t) {
    for (Eigen::Index d = 0; d < feat.dim(); ++d) {
      io::write_le<float>(os, static_cast<float>(feat.data(t, d)));
    }
  }
}

inline FeatureMatrix read_features(std::istream& is) {
  io::expect_magic(is, "FEAT", "feature file");
  const auto version = io::read_le<std::uint32_t>(is, "feature version");
  if (version != kFeatureFileVersion) {
    throw Error("unsupported feature file version " + std::to_string(version));
  }
  const auto T = io::read_le<std::uint32_t>(is, "frame count");
  const auto D = io::read_le<std::uint32_t>(is, "dimension");
  const auto kind = io::read_le<std::uint32_t>(is, "kind tag");
  if (kind > 3) throw Error("unknown feature kind tag " + std::to_string(kind));
  if (static_cast<std::uint64_t>(T) * D > (1ULL << 30)) throw Error("corrupt feature header");
  FeatureMatrix feat;
  feat.kind = static_cast<FeatureKind>(kind);
  feat.frame_shift_ms = io::read_le<float>(is, "frame shift");
  feat.data.resize(T, D);
  for (std::uint32_t t = 0; t < T; ++t) {
    for (std::uint32_t d = 0; d < D; ++d) feat.data(t, d) = io::read_le<float>(is, "feature body");
  }
  feat.validate();
  return feat;
}

inline void save_features(const FeatureMatrix& feat, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write feature file " + path);
  write_features(feat, os);
}

inline FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read feature file " + path);
  return read_features(is);
}

// ---------------------------------------------------------------------------
// 16-bit PCM mono RIFF/WAVE input.

struct Waveform {
  std::vector<double> samples;  // scaled to [-1, 1)
  int sample_rate = 0;
};

inline Waveform read_wav(std::istream& is) {
  io::expect_magic(is, "RIFF", "wav file");
  io::read_le<std::uint32_t>(is, "wav riff size");
  io::expect_magic(is, "WAVE", "wav file");
  Waveform w;
  bool have_format = false;
  while (true) {
    char id[4];
    if (!is.read(id, 4)) throw Error("wav file has no data chunk");
    const auto size = io::read_le<std::uint32_t>(is, "wav chunk size");
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      if (size < 16) throw Error("wav fmt chunk too short");
      const auto format = io::read_le<std::uint16_t>(is, "wav format");
      const auto channels = io::read_le<std::uint16_t>(is, "wav channels");
      w.sample_rate = static_cast<int>(io::read_le<std::uint32_t>(is, "wav sample rate"));
      io::read_le<std::uint32_t>(is, "wav byte rate");
      io::read_le<std::uint16_t>(is, "wav block align");
      const auto bits = io::read_le<std::uint16_t>(is, "wav bits per sample");
      if (format != 1 || channels != 1 || bits != 16) {
        throw Error("wav: only 16-bit PCM mono is supported");
      }
      is.ignore(size - 16 + (size & 1));
      have_format = true;
    } else if (chunk == "data") {
      if (!have_format) throw Error("wav data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (auto& x : w.samples) x = io::read_le<std::int16_t>(is, "wav samples") / 32768.0;
      return w;
    } else {
      is.ignore(size + (size & 1));
    }
  }
}

inline void write_wav(const Waveform& w, std::ostream& os) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  os.write("RIFF", 4);
  io::write_le<std::uint32_t>(os, 36 + 2 * n);
  os.write("WAVEfmt ", 8);
  io::write_le<std::uint32_t>(os, 16);
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  io::write_le<std::uint16_t>(os, 2);
  io::write_le<std::uint16_t>(os, 16);
  os.write("data", 4);
  io::write_le<std::uint32_t>(os, 2 * n);
  for (double x : w.samples) {
    const double c = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    io::write_le<std::int16_t>(os, static_cast<std::int16_t>(c));
  }
}

inline Waveform load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read wav file " + path);
  return read_wav(is);
}

}  // namespace ctcpoly

#endif  // CTCPOLY_FEATURES_HPP_
