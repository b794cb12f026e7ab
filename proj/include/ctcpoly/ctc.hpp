// ctcpoly/ctc.hpp
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

// Connectionist temporal classification: exact loss and gradient by the
// forward-backward recursion over the blank-extended label sequence, and a
// path-enumerating reference for tiny instances.

#ifndef CTCPOLY_CTC_HPP_
#define CTCPOLY_CTC_HPP_

#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/unitset.hpp"

namespace ctcpoly {

/// Forward/backward variables in natural-log space. alpha(t, s) covers frames
/// 0..t including the emission at t; beta(t, s) covers frames t+1..T-1 given
/// state s at t, so alpha + beta sums to log P at every frame.
struct CtcLattice {
  Matrix log_probs;            // T x V
  std::vector<int> extended;   // 2L+1 blank-interleaved labels
  Matrix alpha;                // T x (2L+1)
  Matrix beta;                 // T x (2L+1)
  double loss = 0.0;           // -log P(targets | logits)
};

/// Merge adjacent repeats, then drop blanks.
inline std::vector<int> collapse(std::span<const int> path) {
  std::vector<int> out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != kBlankId) out.push_back(id);
    prev = id;
  }
  return out;
}

/// Frames needed by the shortest valid alignment: one per label plus a
/// separating blank for each adjacent repeat.
inline int ctc_min_frames(std::span<const int> targets) {
  int need = static_cast<int>(targets.size());
  for (std::size_t i = 1; i < targets.size(); ++i) need += targets[i] == targets[i - 1];
  return need;
}

inline std::vector<int> ctc_extend(std::span<const int> targets) {
  std::vector<int> ext(2 * targets.size() + 1, kBlankId);
  for (std::size_t i = 0; i < targets.size(); ++i) ext[2 * i + 1] = targets[i];
  return ext;
}

namespace detail {

inline void check_ctc_inputs(const Matrix& m, std::span<const int> targets) {
  if (m.rows() < 1 || m.cols() < 2) {
    throw Error("ctc: need at least one frame and two units (blank + label)");
  }
  if (targets.empty()) throw Error("ctc: empty target sequence");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == kBlankId) {
      throw Error("ctc: blank id in targets at position " + std::to_string(i));
    }
    if (targets[i] < 0 || targets[i] >= m.cols()) {
      throw Error("ctc: target id " + std::to_string(targets[i]) + " outside [1," +
                  std::to_string(m.cols()) + ")");
    }
  }
  if (!m.allFinite()) throw Error("ctc: non-finite input");
  if (ctc_min_frames(targets) > m.rows()) {
    throw Error("ctc: no valid alignment (" + std::to_string(m.rows()) +
                " frames for a target needing " + std::to_string(ctc_min_frames(targets)) +
                ")");
  }
}

}  // namespace detail

/// Loss and lattice for one utterance. `logits` are unnormalized scores; a
/// per-frame log-softmax is applied first.
inline CtcLattice ctc_loss(const Matrix& logits, std::span<const int> targets) {
  detail::check_ctc_inputs(logits, targets);
  CtcLattice lat;
  lat.log_probs = log_softmax_rows(logits);
  lat.extended = ctc_extend(targets);
  const Matrix& lp = lat.log_probs;
  const auto& ext = lat.extended;
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());

  // A skip from s-2 to s is legal only onto a label that differs from the
  // label two positions back.
  auto can_skip = [&](Eigen::Index s) {
    return s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2];
  };

  lat.alpha = Matrix::Constant(T, S, kLogZero);
  lat.alpha(0, 0) = lp(0, ext[0]);
  if (S > 1) lat.alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = lat.alpha(t - 1, s);
      if (s >= 1) a = log_add(a, lat.alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = a == kLogZero ? kLogZero : a + lp(t, ext[s]);
    }
  }

  lat.beta = Matrix::Constant(T, S, kLogZero);
  lat.beta(T - 1, S - 1) = 0.0;
  if (S > 1) lat.beta(T - 1, S - 2) = 0.0;
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = lat.beta(t + 1, s) + lp(t + 1, ext[s]);
      if (s + 1 < S) b = log_add(b, lat.beta(t + 1, s + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < S && can_skip(s + 2)) {
        b = log_add(b, lat.beta(t + 1, s + 2) + lp(t + 1, ext[s + 2]));
      }
      lat.beta(t, s) = b;
    }
  }

  const double log_p = log_add(lat.alpha(T - 1, S - 1), S > 1 ? lat.alpha(T - 1, S - 2) : kLogZero);
  if (!std::isfinite(log_p)) throw Error("ctc: no valid alignment");
  lat.loss = -log_p;
  return lat;
}

/// d loss / d logits from a computed lattice: softmax minus label occupancy.
inline Matrix ctc_grad(const CtcLattice& lat) {
  const Matrix& lp = lat.log_probs;
  Matrix grad = lp.array().exp().matrix();
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    for (std::size_t s = 0; s < lat.extended.size(); ++s) {
      const double occ = lat.alpha(t, static_cast<Eigen::Index>(s)) +
                         lat.beta(t, static_cast<Eigen::Index>(s)) + lat.loss;
      if (occ != kLogZero) grad(t, lat.extended[s]) -= std::exp(occ);
    }
  }
  return grad;
}

inline Matrix ctc_grad(const Matrix& logits, std::span<const int> targets) {
  return ctc_grad(ctc_loss(logits, targets));
}

/// Reference loss by enumerating all V^T paths. `log_probs` must already be
/// normalized per frame.
inline double brute_force_ctc(const Matrix& log_probs, std::span<const int> targets) {
  const Eigen::Index T = log_probs.rows();
  const Eigen::Index V = log_probs.cols();
  double n_paths = std::pow(static_cast<double>(V), static_cast<double>(T));
  if (n_paths > 1e7) throw Error("brute_force_ctc: instance too large (V^T > 1e7)");
  if (T < 1 || V < 2) throw Error("brute_force_ctc: need T >= 1 and V >= 2");
  if (targets.empty()) throw Error("ctc: empty target sequence");
  for (int id : targets) {
    if (id == kBlankId) throw Error("ctc: blank id in targets");
    if (id < 0 || id >= V) throw Error("ctc: target id out of range");
  }
  const std::vector<int> want(targets.begin(), targets.end());
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  std::vector<double> matching;
  while (true) {
    if (collapse(path) == want) {
      double lp = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) lp += log_probs(t, path[static_cast<std::size_t>(t)]);
      matching.push_back(lp);
    }
    Eigen::Index pos = 0;
    while (pos < T && ++path[static_cast<std::size_t>(pos)] == V) {
      path[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == T) break;
  }
  const double total = log_sum_exp(matching);
  if (!std::isfinite(total)) throw Error("ctc: no valid alignment");
  return -total;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_CTC_HPP_
