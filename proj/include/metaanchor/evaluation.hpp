// SPDX-License-Identifier: Apache-2.0
//
// COCO-style average precision: greedy score-ordered matching and
// 101-point interpolated precision, averaged over IoU 0.50:0.05:0.95.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "metaanchor/boxes.hpp"
#include "metaanchor/detection.hpp"

namespace metaanchor {

inline constexpr std::size_t kNumIouThresholds = 10;
inline constexpr std::array<double, kNumIouThresholds> kIouThresholds = {
    0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
inline constexpr std::size_t kRecallPoints = 101;

struct ScoredBox {
  Box box;
  double score = 0.0;
};

// Detections and ground truths of a single class, indexed by image. Returns
// nullopt when there is no ground truth in any image.
std::optional<double> average_precision(std::span<const std::vector<ScoredBox>> dets,
                                        std::span<const std::vector<Box>> gts, double iou_thresh);

struct EvalOptions {
  // Per image and class, keep only the highest-scoring detections; 0 keeps all.
  std::size_t max_dets = 0;
};

struct EvalResult {
  // Only classes with at least one ground truth appear.
  std::map<int, std::array<double, kNumIouThresholds>> per_class;
  double mmap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::size_t num_images = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// `dets[i]` and `gts[i]` belong to image i.
EvalResult compute_mmap(std::span<const std::vector<Detection>> dets,
                        std::span<const std::vector<GroundTruthBox>> gts,
                        const EvalOptions& options = {});

}  // namespace metaanchor
