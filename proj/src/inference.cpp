// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metaanchor/error.hpp"
#include "metaanchor/matching.hpp"

namespace metaanchor {

namespace {

bool nms_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box.x1 < b.box.x1;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Detection> predict(const Detector& model, const Tensor& image,
                               std::span<const AnchorEncoding> anchors,
                               const PredictOptions& options) {
  if (anchors.empty()) throw ValueError("predict needs at least one anchor");
  NoGradGuard no_grad;
  const ModelConfig& cfg = model.config();
  const auto extents = model.level_extents(image.dim(1), image.dim(2));
  const auto grids = place_anchors(anchors, cfg.anchors.standard, cfg.first_level, extents);
  const auto levels = model.forward(image, anchors);
  const std::size_t nc = cfg.num_classes;
  // A logit clears the threshold iff sigmoid(logit) > score_thresh.
  const double t = options.score_thresh;
  const double logit_thresh =
      t <= 0.0 ? -INFINITY : (t >= 1.0 ? INFINITY : std::log(t / (1.0 - t)));

  std::vector<Detection> out;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const LevelGrid& g = grids[li];
    const std::size_t plane = g.height * g.width;
    auto logits = levels[li].cls_logits.data();
    auto deltas = levels[li].reg_deltas.data();
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      std::vector<Detection> found;
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t y = p / g.width, x = p % g.width;
        for (std::size_t c = 0; c < nc; ++c) {
          const double z = logits[(a * nc + c) * plane + p];
          if (!(z > logit_thresh)) continue;
          const double s = sigmoid(z);
          if (!(s > t)) continue;
          const Deltas d{deltas[(a * 4 + 0) * plane + p], deltas[(a * 4 + 1) * plane + p],
                         deltas[(a * 4 + 2) * plane + p], deltas[(a * 4 + 3) * plane + p]};
          Detection det;
          det.box = to_corner(decode_reg(g.box(a, y, x), d));
          det.score = s;
          det.class_id = static_cast<int>(c);
          det.source_anchor = anchors[a];
          det.anchor_index = a;
          det.level = g.level;
          found.push_back(det);
        }
      }
      if (options.pre_nms_topk > 0 && found.size() > options.pre_nms_topk) {
        std::stable_sort(found.begin(), found.end(), nms_order);
        found.resize(options.pre_nms_topk);
      }
      out.insert(out.end(), found.begin(), found.end());
    }
  }
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh, bool class_aware) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return nms_order(dets[a], dets[b]); });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const Detection& d = dets[i];
    if (!std::isfinite(d.score)) throw ValueError("nms: non-finite score");
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (class_aware && k.class_id != d.class_id) continue;
      if (iou(k.box, d.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> postprocess(std::span<const Detection> raw, const DetectOptions& options) {
  std::vector<Detection> kept = nms(raw, options.nms_iou, true);
  if (options.max_dets > 0 && kept.size() > options.max_dets) kept.resize(options.max_dets);
  return kept;
}

std::vector<Detection> detect(const Detector& model, const Tensor& image,
                              std::span<const AnchorEncoding> anchors, const DetectOptions& options) {
  const auto raw = predict(model, image, anchors, options.predict);
  return postprocess(raw, options);
}

std::vector<double> search_pool_scales(bool inclusive) {
  std::vector<double> out;
  const int lo = inclusive ? -2 : -1;
  const int hi = inclusive ? 6 : 5;
  for (int k = lo; k <= hi; ++k) out.push_back(std::exp2(static_cast<double>(k) / 5.0));
  return out;
}

std::vector<double> search_pool_ratios() {
  std::vector<double> r = {1.0 / 3.0, 3.0};
  for (int k = 11; k <= 20; ++k) {
    const double t = k / 10.0;
    r.push_back(1.0 / t);
    r.push_back(1.0);
    r.push_back(t);
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end(),
                      [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); }),
          r.end());
  return r;
}

std::vector<AnchorEncoding> default_search_pool(double base_size, const StandardBox& standard,
                                                bool inclusive) {
  std::vector<AnchorEncoding> out;
  for (double s : search_pool_scales(inclusive)) {
    for (double r : search_pool_ratios()) {
      out.push_back(encode(make_anchor_box(base_size, s, r), standard));
    }
  }
  return out;
}

}  // namespace metaanchor
