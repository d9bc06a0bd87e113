// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "metaanchor/error.hpp"
#include "metaanchor/ops.hpp"

namespace metaanchor {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValueError("train.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("train.momentum must lie in [0,1)");
  if (steps == 0) throw ValueError("train.steps must be positive");
  if (!(augment_delta >= 0.0)) throw ValueError("train.augment_delta must be >= 0");
  if (batch_size == 0) throw ValueError("train.batch_size must be positive");
  if (!(focal.alpha >= 0.0 && focal.alpha <= 1.0)) throw ValueError("focal alpha must lie in [0,1]");
  if (!(focal.gamma >= 0.0)) throw ValueError("focal gamma must be >= 0");
  if (!(smooth_l1_beta > 0.0)) throw ValueError("smooth-L1 beta must be positive");
  if (!(clip_grad_norm >= 0.0)) throw ValueError("clip_grad_norm must be >= 0");
  for (double f : lr_decay_at) {
    if (!(f > 0.0 && f < 1.0)) throw ValueError("lr_decay_at entries must lie in (0,1)");
  }
  assign.thresholds.validate();
}

double TrainConfig::lr_at(std::size_t step) const {
  double r = lr;
  if (warmup_steps > 0 && step < warmup_steps) {
    r *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  for (double f : lr_decay_at) {
    if (static_cast<double>(step) >= f * static_cast<double>(steps)) r *= 0.1;
  }
  return r;
}

std::vector<AnchorEncoding> training_anchors(const Detector& model, const TrainConfig& config,
                                             std::mt19937_64& rng) {
  std::vector<AnchorEncoding> encs = model.config().anchors.encodings();
  if (model.config().mode == HeadMode::kMetaAnchor && config.augment_delta > 0.0) {
    for (auto& e : encs) e = augment(e, rng, config.augment_delta);
  }
  return encs;
}

BatchLoss batch_loss(const Detector& model, std::span<const Sample> batch,
                     std::span<const AnchorEncoding> encs, const TrainConfig& config) {
  if (batch.empty()) throw ValueError("empty training batch");
  BatchLoss out;
  std::vector<Tensor> terms;
  const StandardBox& standard = model.config().anchors.standard;
  for (const Sample& s : batch) {
    const auto extents = model.level_extents(s.image.dim(1), s.image.dim(2));
    const auto grids = place_anchors(encs, standard, model.config().first_level, extents);
    const TargetMap targets = assign_targets(grids, s.boxes, config.assign);
    const auto levels = model.forward(s.image, encs);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const LevelTargets& lt = targets.levels[i];
      Tensor cls = focal_loss_sum(levels[i].cls_logits, lt, config.focal);
      Tensor reg = smooth_l1_sum(levels[i].reg_deltas, lt, config.smooth_l1_beta);
      out.cls_sum += cls.item();
      out.reg_sum += reg.item();
      terms.push_back(cls);
      terms.push_back(reg);
    }
    out.positives += targets.count(AnchorLabel::kPositive) - targets.dropped_positives();
    out.dropped_positives += targets.dropped_positives();
    if (config.assign.drop) {
      for (const auto& gt : s.boxes) out.masked_gts += drop_mask(gt, *config.assign.drop);
    }
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, out.positives));
  out.total = ops::scale(ops::add_n(terms), 1.0 / norm);
  return out;
}

namespace {

void clip_gradients(ParamStore& store, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& [name, p] : store) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm) || norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto& [name, p] : store) {
    for (double& g : p.mutable_grad()) g *= f;
  }
}

}  // namespace

StepStats training_step(Detector& model, Sgd& opt, std::span<const Sample> batch,
                        const TrainConfig& config, std::mt19937_64& rng, std::size_t step) {
  const auto encs = training_anchors(model, config, rng);
  model.params().zero_grad();
  BatchLoss bl = batch_loss(model, batch, encs, config);
  StepStats st;
  st.step = step;
  st.loss = bl.total.item();
  st.cls_loss = bl.cls_sum;
  st.reg_loss = bl.reg_sum;
  st.positives = bl.positives;
  st.dropped_positives = bl.dropped_positives;
  st.masked_gts = bl.masked_gts;
  if (!std::isfinite(st.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << " (classification sum " << bl.cls_sum
        << ", regression sum " << bl.reg_sum << ", positives " << bl.positives << ")";
    throw NumericError(msg.str());
  }
  backward(bl.total);
  clip_gradients(model.params(), config.clip_grad_norm);
  st.lr = config.lr_at(step);
  opt.set_lr(st.lr);
  opt.step(model.params());
  return st;
}

Trainer::Trainer(Detector& model, const TrainConfig& config)
    : model_(model), config_(config), opt_(config.lr, config.momentum), rng_(config.seed) {
  config_.validate();
}

std::vector<StepStats> Trainer::fit(std::span<const Sample> data,
                                    const std::function<void(const StepStats&)>& on_step) {
  if (data.empty()) throw ValueError("empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<StepStats> log;
  std::vector<Sample> batch;
  for (std::size_t step = 0; step < config_.steps; ++step) {
    batch.clear();
    while (batch.size() < std::min(config_.batch_size, data.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng_);
        cursor = 0;
      }
      batch.push_back(data[order[cursor++]]);
    }
    StepStats st = training_step(model_, opt_, batch, config_, rng_, step);
    if (on_step) on_step(st);
    log.push_back(st);
  }
  return log;
}

}  // namespace metaanchor
