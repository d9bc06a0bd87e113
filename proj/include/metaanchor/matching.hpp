// SPDX-License-Identifier: Apache-2.0
//
// Anchor/ground-truth assignment, box-delta coding, and the training-time drop
// band used to simulate a box-distribution gap.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "metaanchor/anchors.hpp"
#include "metaanchor/boxes.hpp"

namespace metaanchor {

struct MatchThresholds {
  double t_pos = 0.5;
  double t_neg = 0.4;

  void validate() const;
};

// Ground truths with 50 < sqrt(hw) < 100 and -1 < ln(w/h) < 1 by default.
struct DropBand {
  double min_sqrt_hw = 50.0;
  double max_sqrt_hw = 100.0;
  double log_ratio_bound = 1.0;
};

// True when the box lies strictly inside the band; its losses are zeroed.
bool drop_mask(const GroundTruthBox& gt, const DropBand& band = {});

using Deltas = std::array<double, 4>;

// Upper clamp for decoded log-size deltas: ln(1000).
inline constexpr double kMaxLogDelta = 6.907755278982137;

// (tx, ty, tw, th) = ((gx-ax)/aw, (gy-ay)/ah, ln(gw/aw), ln(gh/ah))
Deltas encode_reg(const CenterBox& anchor, const CenterBox& gt);
CenterBox decode_reg(const CenterBox& anchor, const Deltas& deltas);

// Anchors of one pyramid level: every anchor size at every cell center
// (stride*(x+0.5), stride*(y+0.5)).
struct LevelGrid {
  int level = 0;
  double stride = 1.0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<AnchorBox> anchors;

  std::size_t cells() const { return anchors.size() * height * width; }
  // Flat index, anchor-major: (a*H + y)*W + x.
  std::size_t index(std::size_t a, std::size_t y, std::size_t x) const {
    return (a * height + y) * width + x;
  }
  CenterBox box(std::size_t a, std::size_t y, std::size_t x) const;
};

// Pixel anchors for `encodings` on every level; level l uses the standard
// box doubled (l - base.level) times.
std::vector<LevelGrid> place_anchors(std::span<const AnchorEncoding> encodings,
                                     const StandardBox& base, int first_level,
                                     std::span<const std::pair<std::size_t, std::size_t>> extents);

enum class AnchorLabel : std::uint8_t { kNegative, kPositive, kIgnored };

struct AnchorTarget {
  AnchorLabel label = AnchorLabel::kNegative;
  int class_id = -1;
  int gt_index = -1;
  bool dropped = false;  // positive, but its ground truth carries zero loss
  Deltas reg{};          // meaningful only when positive
};

struct LevelTargets {
  int level = 0;
  std::size_t num_anchors = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<AnchorTarget> cells;  // same indexing as LevelGrid
};

struct TargetMap {
  std::vector<LevelTargets> levels;

  std::size_t count(AnchorLabel label) const;
  std::size_t dropped_positives() const;
};

struct AssignOptions {
  MatchThresholds thresholds;
  bool force_match = true;
  std::optional<DropBand> drop;
};

// Positive if the best IoU >= t_pos, negative if < t_neg, ignored otherwise.
// With force_match, each ground truth's highest-IoU anchor is made positive
// for that ground truth (when the IoU is nonzero).
TargetMap assign_targets(std::span<const LevelGrid> grids, std::span<const GroundTruthBox> gts,
                         const AssignOptions& options);

}  // namespace metaanchor
