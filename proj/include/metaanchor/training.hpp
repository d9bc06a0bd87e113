// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "metaanchor/boxes.hpp"
#include "metaanchor/detector.hpp"
#include "metaanchor/losses.hpp"
#include "metaanchor/matching.hpp"
#include "metaanchor/param_store.hpp"
#include "metaanchor/tensor.hpp"

namespace metaanchor {

struct Sample {
  Tensor image;  // [3,H,W], values in [0,1]
  std::vector<GroundTruthBox> boxes;
};

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  // Half-width of the uniform log-space jitter applied to every training
  // anchor encoding; only used by generated (MetaAnchor) heads.
  double augment_delta = kDefaultAugmentDelta;
  std::size_t batch_size = 4;
  FocalParams focal;
  double smooth_l1_beta = 0.1;
  AssignOptions assign;
  // Linear warm-up length in steps.
  std::size_t warmup_steps = 100;
  // The learning rate is multiplied by 0.1 at each of these fractions of
  // `steps`.
  std::vector<double> lr_decay_at = {2.0 / 3.0, 8.0 / 9.0};
  // Rescale the global gradient to at most this L2 norm; 0 disables.
  double clip_grad_norm = 10.0;

  void validate() const;
  double lr_at(std::size_t step) const;
};

struct StepStats {
  std::size_t step = 0;
  double loss = 0.0;
  double cls_loss = 0.0;
  double reg_loss = 0.0;
  double lr = 0.0;
  std::size_t positives = 0;          // non-dropped positives in the batch
  std::size_t dropped_positives = 0;  // positives whose ground truth is masked
  std::size_t masked_gts = 0;         // ground truths inside the drop band
};

// Loss of one batch against `encs`, unnormalized terms plus counts. Builds
// the autograd graph; the caller runs backward.
struct BatchLoss {
  Tensor total;  // (cls + reg) / max(1, positives)
  double cls_sum = 0.0;
  double reg_sum = 0.0;
  std::size_t positives = 0;
  std::size_t dropped_positives = 0;
  std::size_t masked_gts = 0;
};
BatchLoss batch_loss(const Detector& model, std::span<const Sample> batch,
                     std::span<const AnchorEncoding> encs, const TrainConfig& config);

// The anchor encodings one step trains with: the model's configured set,
// jittered by augment_delta in MetaAnchor mode.
std::vector<AnchorEncoding> training_anchors(const Detector& model, const TrainConfig& config,
                                             std::mt19937_64& rng);

// One SGD update on `batch`. Throws NumericError when the loss or a gradient
// is not finite.
StepStats training_step(Detector& model, Sgd& opt, std::span<const Sample> batch,
                        const TrainConfig& config, std::mt19937_64& rng, std::size_t step = 0);

class Trainer {
 public:
  Trainer(Detector& model, const TrainConfig& config);

  // Runs config.steps updates over `data`, shuffling every epoch.
  std::vector<StepStats> fit(std::span<const Sample> data,
                             const std::function<void(const StepStats&)>& on_step = {});

 private:
  Detector& model_;
  TrainConfig config_;
  Sgd opt_;
  std::mt19937_64 rng_;
};

}  // namespace metaanchor
