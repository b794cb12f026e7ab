// ctcpoly/trainer.hpp
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

#ifndef CTCPOLY_TRAINER_HPP_
#define CTCPOLY_TRAINER_HPP_

#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctcpoly/ctc.hpp"
#include "ctcpoly/network.hpp"

namespace ctcpoly {

struct TrainingUtterance {
  std::string id;
  FeatureMatrix features;
  std::optional<FeatureMatrix> lfv;
  std::vector<int> targets;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<std::vector<std::size_t>> first_epoch_batches;  // corpus indices
  int skipped = 0;            // CTC-infeasible utterances
  int rejected_updates = 0;   // non-finite gradients
  int best_epoch = -1;        // epoch whose parameters were retained
};

/// Mean CTC loss over a batch and, when `grad` is set, its parameter
/// gradient. Training-mode batch norm.
inline double batch_loss_and_grad(const AcousticModel& model,
                                  const std::vector<const TrainingUtterance*>& batch,
                                  ParamSet* grad, BatchForward* fwd_out = nullptr,
                                  Mode mode = Mode::kTrain) {
  std::vector<ModelInput> inputs;
  inputs.reserve(batch.size());
  for (const auto* u : batch) {
    inputs.push_back({&u->features.data, u->lfv ? &u->lfv->data : nullptr});
  }
  BatchForward fwd = model.forward_batch(inputs, mode);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<Matrix> dlogits;
  dlogits.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const CtcLattice lat = ctc_loss(fwd.logits[b], batch[b]->targets);
    loss += lat.loss * scale;
    if (grad) dlogits.push_back(ctc_grad(lat) * scale);
  }
  if (grad) *grad = model.backward(fwd, dlogits);
  if (fwd_out) *fwd_out = std::move(fwd);
  return loss;
}

inline bool ctc_feasible(const ModelConfig& cfg, const TrainingUtterance& u) {
  return !u.targets.empty() &&
         ctc_min_frames(u.targets) <= cfg.output_frames(static_cast<int>(u.features.frames()));
}

/// Mini-batch SGD with Nesterov momentum on the mean per-utterance CTC loss.
/// The first epoch visits utterances in ascending frame count when
/// `sort_first_epoch` is set; later epochs shuffle with the seeded RNG. The
/// parameters of the lowest-loss epoch are retained.
inline TrainReport train(AcousticModel& model, const std::vector<TrainingUtterance>& corpus,
                         const TrainConfig& cfg, std::ostream* log = &std::clog) {
  cfg.validate();
  TrainReport report;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (ctc_feasible(model.config(), corpus[i])) {
      usable.push_back(i);
    } else {
      ++report.skipped;
      if (log) *log << "warning: skipping utterance '" << corpus[i].id << "' (no valid CTC alignment)\n";
    }
  }
  if (usable.empty()) {
    if (cfg.epochs > 0) throw Error("train: no trainable utterances");
    return report;
  }
  std::mt19937_64 rng(cfg.seed);
  NesterovSgd opt;
  Parameters best = model.parameters();
  double best_loss = std::numeric_limits<double>::infinity();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  ParamSet grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    if (epoch == 0 && cfg.sort_first_epoch) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return corpus[a].features.frames() < corpus[b].features.frames();
      });
    } else {
      std::shuffle(order.begin(), order.end(), rng);
    }
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<const TrainingUtterance*> batch;
      std::vector<std::size_t> ids;
      for (std::size_t k = 0; k < n; ++k) {
        batch.push_back(&corpus[order[start + k]]);
        ids.push_back(order[start + k]);
      }
      if (epoch == 0) report.first_epoch_batches.push_back(ids);
      BatchForward fwd;
      const double loss = batch_loss_and_grad(model, batch, &grad, &fwd);
      try {
        opt.step(model.parameters().trainable, grad, cfg);
        model.update_running_stats(fwd);
        ++model.parameters().step;
      } catch (const Error& e) {
        ++report.rejected_updates;
        if (log) *log << "warning: " << e.what() << '\n';
      }
      sum += loss * static_cast<double>(n);
      seen += n;
    }
    const double epoch_loss = sum / static_cast<double>(seen);
    report.epoch_loss.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best = model.parameters();
      report.best_epoch = epoch;
    }
  }
  if (report.best_epoch >= 0) model.parameters() = std::move(best);
  return report;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_TRAINER_HPP_
