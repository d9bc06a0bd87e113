// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "metaanchor/matching.hpp"
#include "metaanchor/tensor.hpp"

namespace metaanchor {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

// Focal term of one sigmoid logit against a binary label:
//   -alpha_t (1 - p_t)^gamma ln(p_t)
double focal_term(double logit, bool positive, const FocalParams& fp);

// Elementwise Huber: 0.5 d^2 / beta if |d| < beta, else |d| - 0.5 beta.
double smooth_l1_term(double diff, double beta);

// Sum over anchors that count toward the loss (negatives and non-dropped
// positives) and over every class of the focal term. `logits` is the
// stacked [A*C,H,W] classification map of one level.
Tensor focal_loss_sum(const Tensor& logits, const LevelTargets& targets, const FocalParams& fp);

// Number of anchors focal_loss_sum includes.
std::size_t focal_anchor_count(const LevelTargets& targets);

// Mean over contributing anchors of the per-anchor focal sum. Zero (with a
// warning on stderr) when no anchor contributes.
Tensor focal_loss(const Tensor& logits, const LevelTargets& targets, const FocalParams& fp = {});

// Smooth-L1 summed over the 4 deltas of every non-dropped positive anchor.
// `deltas` is the stacked [A*4,H,W] regression map of one level.
Tensor smooth_l1_sum(const Tensor& deltas, const LevelTargets& targets, double beta = 1.0);

// Smooth-L1 of one prediction vector against its target, summed over entries.
Tensor smooth_l1(const Tensor& pred, std::span<const double> target, double beta = 1.0);

}  // namespace metaanchor
