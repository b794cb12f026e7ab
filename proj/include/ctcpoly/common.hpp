// ctcpoly/common.hpp
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

#ifndef CTCPOLY_COMMON_HPP_
#define CTCPOLY_COMMON_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctcpoly {

/// Every recoverable failure in the library surfaces as this exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), exact for -inf operands.
inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> values) {
  double max = kLogZero;
  for (double v : values) max = std::max(max, v);
  if (max == kLogZero) return kLogZero;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

template <typename Derived>
double log_sum_exp_row(const Eigen::MatrixBase<Derived>& row) {
  const double max = row.maxCoeff();
  if (max == kLogZero) return kLogZero;
  return max + std::log((row.array() - max).exp().sum());
}

/// Row-wise log-softmax of a T x V matrix.
inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double norm = log_sum_exp_row(logits.row(t));
    out.row(t) = logits.row(t).array() - norm;
  }
  return out;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Stable 64-bit FNV-1a, used for content hashes written into file headers.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Little-endian binary helpers shared by the feature and checkpoint formats.
namespace io {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, std::string_view what) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw Error("truncated file while reading " + std::string(what));
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(T));
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_string(std::ostream& os, std::string_view s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::string_view what) {
  const auto n = read_le<std::uint32_t>(is, what);
  if (n > (1u << 20)) throw Error("corrupt string length in " + std::string(what));
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) {
    throw Error("truncated file while reading " + std::string(what));
  }
  return s;
}

inline void expect_magic(std::istream& is, std::string_view magic,
                         std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(magic.size())) ||
      got != magic) {
    throw Error("bad magic in " + std::string(what) + ": expected '" +
                std::string(magic) + "'");
  }
}

}  // namespace io

}  // namespace ctcpoly

#endif  // CTCPOLY_COMMON_HPP_
