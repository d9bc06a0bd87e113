// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "metaanchor/detection.hpp"
#include "metaanchor/detector.hpp"
#include "metaanchor/tensor.hpp"

namespace metaanchor {

struct PredictOptions {
  double score_thresh = 0.05;
  // Per anchor and level, keep at most this many candidates by score; 0 keeps all.
  std::size_t pre_nms_topk = 0;
};

// Raw detections of `model` on one [3,H,W] image for each anchor encoding,
// before NMS. Encodings are relative to the model's standard box.
std::vector<Detection> predict(const Detector& model, const Tensor& image,
                               std::span<const AnchorEncoding> anchors,
                               const PredictOptions& options = {});

// Greedy suppression in (score desc, x-min asc) order. With class_aware,
// boxes only suppress boxes of their own class.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh = 0.5,
                           bool class_aware = true);

struct DetectOptions {
  PredictOptions predict;
  double nms_iou = 0.5;
  // Keep at most this many detections per image after NMS; 0 keeps all.
  std::size_t max_dets = 0;
};

// NMS plus the max_dets cap, output sorted in NMS order.
std::vector<Detection> postprocess(std::span<const Detection> raw, const DetectOptions& options);

std::vector<Detection> detect(const Detector& model, const Tensor& image,
                              std::span<const AnchorEncoding> anchors, const DetectOptions& options);

// Scales 2^(k/5) for integer k strictly between -2 and 6, or with both ends
// included when `inclusive`.
std::vector<double> search_pool_scales(bool inclusive = false);
// {1/3, 3} together with {1/t, 1, t} for t = 1.1, 1.2, ..., 2.0, ascending,
// duplicates removed.
std::vector<double> search_pool_ratios();
// Every (scale, ratio) box at `base_size`, encoded against `standard`.
std::vector<AnchorEncoding> default_search_pool(double base_size, const StandardBox& standard,
                                                bool inclusive = false);

}  // namespace metaanchor
