// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/losses.hpp"

#include <cmath>
#include <iostream>

#include "metaanchor/error.hpp"

namespace metaanchor {

namespace {

// ln(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// d/dx of focal_term.
double focal_grad(double x, bool positive, const FocalParams& fp) {
  const double p = sigmoid(x);
  if (positive) {
    const double q = 1.0 - p;
    const double log_p = -softplus(-x);
    return fp.alpha * std::pow(q, fp.gamma) * (fp.gamma * p * log_p - q);
  }
  const double log_q = -softplus(x);
  return -(1.0 - fp.alpha) * std::pow(p, fp.gamma) * (fp.gamma * (1.0 - p) * log_q - p);
}

bool contributes(const AnchorTarget& t) {
  return t.label == AnchorLabel::kNegative || (t.label == AnchorLabel::kPositive && !t.dropped);
}

void check_map(const Tensor& map, const LevelTargets& targets, std::size_t per_anchor,
               const char* what) {
  if (map.rank() != 3 || map.dim(0) != targets.num_anchors * per_anchor ||
      map.dim(1) != targets.height || map.dim(2) != targets.width) {
    throw ShapeError(std::string(what) + " map " + shape_str(map.shape()) +
                     " does not match targets [" + std::to_string(targets.num_anchors) + "x" +
                     std::to_string(per_anchor) + "," + std::to_string(targets.height) + "," +
                     std::to_string(targets.width) + "]");
  }
}

}  // namespace

double focal_term(double logit, bool positive, const FocalParams& fp) {
  if (positive) {
    const double q = 1.0 - sigmoid(logit);
    return fp.alpha * std::pow(q, fp.gamma) * softplus(-logit);
  }
  const double p = sigmoid(logit);
  return (1.0 - fp.alpha) * std::pow(p, fp.gamma) * softplus(logit);
}

double smooth_l1_term(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

std::size_t focal_anchor_count(const LevelTargets& targets) {
  std::size_t n = 0;
  for (const auto& t : targets.cells) n += contributes(t);
  return n;
}

Tensor focal_loss_sum(const Tensor& logits, const LevelTargets& targets, const FocalParams& fp) {
  const std::size_t c = targets.num_anchors == 0 ? 0 : logits.dim(0) / targets.num_anchors;
  check_map(logits, targets, c, "classification");
  const std::size_t plane = targets.height * targets.width;
  auto x = logits.data();
  double total = 0.0;
  for (std::size_t a = 0; a < targets.num_anchors; ++a) {
    for (std::size_t p = 0; p < plane; ++p) {
      const AnchorTarget& t = targets.cells[a * plane + p];
      if (!contributes(t)) continue;
      for (std::size_t k = 0; k < c; ++k) {
        const bool pos = t.label == AnchorLabel::kPositive && t.class_id == static_cast<int>(k);
        total += focal_term(x[(a * c + k) * plane + p], pos, fp);
      }
    }
  }
  return Tensor::make_result({}, {total}, {logits}, [logits, fp, c, plane,
                                                     cells = targets.cells](const detail::Node& self) {
    auto gx = detail::grad_sink(logits);
    auto x = logits.data();
    const double g = self.upstream()[0];
    const std::size_t anchors = cells.size() / plane;
    for (std::size_t a = 0; a < anchors; ++a) {
      for (std::size_t p = 0; p < plane; ++p) {
        const AnchorTarget& t = cells[a * plane + p];
        if (!contributes(t)) continue;
        for (std::size_t k = 0; k < c; ++k) {
          const bool pos = t.label == AnchorLabel::kPositive && t.class_id == static_cast<int>(k);
          const std::size_t i = (a * c + k) * plane + p;
          gx[i] += g * focal_grad(x[i], pos, fp);
        }
      }
    }
  });
}

Tensor focal_loss(const Tensor& logits, const LevelTargets& targets, const FocalParams& fp) {
  const std::size_t n = focal_anchor_count(targets);
  if (n == 0) {
    std::cerr << "warning: focal loss over an empty set of anchors, returning 0\n";
    return Tensor::scalar(0.0);
  }
  const Tensor s = focal_loss_sum(logits, targets, fp);
  return Tensor::make_result({}, {s.item() / static_cast<double>(n)}, {s},
                             [s, n](const detail::Node& self) {
                               auto gs = detail::grad_sink(s);
                               gs[0] += self.upstream()[0] / static_cast<double>(n);
                             });
}

Tensor smooth_l1_sum(const Tensor& deltas, const LevelTargets& targets, double beta) {
  if (!(beta > 0.0)) throw ValueError("smooth-L1 beta must be positive");
  check_map(deltas, targets, 4, "regression");
  const std::size_t plane = targets.height * targets.width;
  auto x = deltas.data();
  double total = 0.0;
  for (std::size_t a = 0; a < targets.num_anchors; ++a) {
    for (std::size_t p = 0; p < plane; ++p) {
      const AnchorTarget& t = targets.cells[a * plane + p];
      if (t.label != AnchorLabel::kPositive || t.dropped) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        total += smooth_l1_term(x[(a * 4 + k) * plane + p] - t.reg[k], beta);
      }
    }
  }
  return Tensor::make_result(
      {}, {total}, {deltas}, [deltas, beta, plane, cells = targets.cells](const detail::Node& self) {
        auto gx = detail::grad_sink(deltas);
        auto x = deltas.data();
        const double g = self.upstream()[0];
        const std::size_t anchors = cells.size() / plane;
        for (std::size_t a = 0; a < anchors; ++a) {
          for (std::size_t p = 0; p < plane; ++p) {
            const AnchorTarget& t = cells[a * plane + p];
            if (t.label != AnchorLabel::kPositive || t.dropped) continue;
            for (std::size_t k = 0; k < 4; ++k) {
              const std::size_t i = (a * 4 + k) * plane + p;
              const double d = x[i] - t.reg[k];
              const double dd = std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0);
              gx[i] += g * dd;
            }
          }
        }
      });
}

Tensor smooth_l1(const Tensor& pred, std::span<const double> target, double beta) {
  if (!(beta > 0.0)) throw ValueError("smooth-L1 beta must be positive");
  if (pred.numel() != target.size()) {
    throw ShapeError("smooth_l1: prediction has " + std::to_string(pred.numel()) +
                     " entries, target " + std::to_string(target.size()));
  }
  std::vector<double> t(target.begin(), target.end());
  double total = 0.0;
  auto x = pred.data();
  for (std::size_t i = 0; i < t.size(); ++i) total += smooth_l1_term(x[i] - t[i], beta);
  return Tensor::make_result({}, {total}, {pred}, [pred, t, beta](const detail::Node& self) {
    auto gx = detail::grad_sink(pred);
    auto x = pred.data();
    const double g = self.upstream()[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = x[i] - t[i];
      gx[i] += g * (std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0));
    }
  });
}

}  // namespace metaanchor
