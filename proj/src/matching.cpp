// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metaanchor/error.hpp"

namespace metaanchor {

void MatchThresholds::validate() const {
  if (!(t_pos > 0.0 && t_pos <= 1.0)) throw ValueError("t_pos must lie in (0,1]");
  if (!(t_neg >= 0.0 && t_neg < t_pos)) throw ValueError("t_neg must lie in [0, t_pos)");
}

bool drop_mask(const GroundTruthBox& gt, const DropBand& band) {
  if (!(gt.w > 0.0 && gt.h > 0.0)) throw ValueError("drop_mask of a degenerate box");
  const double size = std::sqrt(gt.h * gt.w);
  const double log_ratio = std::log(gt.w / gt.h);
  return size > band.min_sqrt_hw && size < band.max_sqrt_hw && log_ratio > -band.log_ratio_bound &&
         log_ratio < band.log_ratio_bound;
}

Deltas encode_reg(const CenterBox& anchor, const CenterBox& gt) {
  if (!(anchor.w > 0.0 && anchor.h > 0.0)) throw ValueError("encode_reg: nonpositive anchor size");
  if (!(gt.w > 0.0 && gt.h > 0.0)) throw ValueError("encode_reg: nonpositive ground-truth size");
  return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

CenterBox decode_reg(const CenterBox& anchor, const Deltas& d) {
  for (double v : d) {
    if (!std::isfinite(v)) throw ValueError("decode_reg: non-finite delta");
  }
  const double tw = std::min(d[2], kMaxLogDelta);
  const double th = std::min(d[3], kMaxLogDelta);
  return {anchor.cx + d[0] * anchor.w, anchor.cy + d[1] * anchor.h, anchor.w * std::exp(tw),
          anchor.h * std::exp(th)};
}

CenterBox LevelGrid::box(std::size_t a, std::size_t y, std::size_t x) const {
  const AnchorBox& ab = anchors[a];
  return {stride * (static_cast<double>(x) + 0.5), stride * (static_cast<double>(y) + 0.5),
          ab.width, ab.height};
}

std::vector<LevelGrid> place_anchors(std::span<const AnchorEncoding> encodings,
                                     const StandardBox& base, int first_level,
                                     std::span<const std::pair<std::size_t, std::size_t>> extents) {
  if (encodings.empty()) throw ValueError("no anchors to place");
  std::vector<LevelGrid> grids;
  for (std::size_t i = 0; i < extents.size(); ++i) {
    LevelGrid g;
    g.level = first_level + static_cast<int>(i);
    g.stride = std::exp2(static_cast<double>(g.level));
    g.height = extents[i].first;
    g.width = extents[i].second;
    const StandardBox s = level_standard(base, g.level);
    for (const auto& e : encodings) g.anchors.push_back(decode_encoding(e, s));
    grids.push_back(std::move(g));
  }
  return grids;
}

std::size_t TargetMap::count(AnchorLabel label) const {
  std::size_t n = 0;
  for (const auto& lv : levels) {
    for (const auto& c : lv.cells) n += c.label == label;
  }
  return n;
}

std::size_t TargetMap::dropped_positives() const {
  std::size_t n = 0;
  for (const auto& lv : levels) {
    for (const auto& c : lv.cells) n += (c.label == AnchorLabel::kPositive && c.dropped);
  }
  return n;
}

TargetMap assign_targets(std::span<const LevelGrid> grids, std::span<const GroundTruthBox> gts,
                         const AssignOptions& options) {
  options.thresholds.validate();
  std::size_t total = 0;
  for (const auto& g : grids) total += g.cells();
  if (total == 0) throw ValueError("assign_targets: empty anchor grid");

  std::vector<Box> gt_corners;
  std::vector<bool> gt_dropped;
  for (const auto& gt : gts) {
    if (!(gt.w > 0.0 && gt.h > 0.0)) throw ValueError("assign_targets: degenerate ground truth");
    gt_corners.push_back(to_corner(gt.geometry()));
    gt_dropped.push_back(options.drop.has_value() && drop_mask(gt, *options.drop));
  }

  TargetMap map;
  // Best anchor per ground truth, as (level, flat index, iou).
  struct Best {
    std::size_t level = 0;
    std::size_t index = 0;
    double iou = 0.0;
  };
  std::vector<Best> best(gts.size());

  for (std::size_t li = 0; li < grids.size(); ++li) {
    const LevelGrid& g = grids[li];
    LevelTargets lt;
    lt.level = g.level;
    lt.num_anchors = g.anchors.size();
    lt.height = g.height;
    lt.width = g.width;
    lt.cells.resize(g.cells());
    for (std::size_t a = 0; a < g.anchors.size(); ++a) {
      for (std::size_t y = 0; y < g.height; ++y) {
        for (std::size_t x = 0; x < g.width; ++x) {
          const std::size_t idx = g.index(a, y, x);
          const Box anchor = to_corner(g.box(a, y, x));
          double max_iou = 0.0;
          int arg = -1;
          for (std::size_t j = 0; j < gt_corners.size(); ++j) {
            const double v = iou(anchor, gt_corners[j]);
            if (v > max_iou) {
              max_iou = v;
              arg = static_cast<int>(j);
            }
            if (v > best[j].iou) best[j] = {li, idx, v};
          }
          AnchorTarget& t = lt.cells[idx];
          if (arg >= 0 && max_iou >= options.thresholds.t_pos) {
            t.label = AnchorLabel::kPositive;
            t.gt_index = arg;
          } else if (max_iou < options.thresholds.t_neg) {
            t.label = AnchorLabel::kNegative;
          } else {
            t.label = AnchorLabel::kIgnored;
          }
        }
      }
    }
    map.levels.push_back(std::move(lt));
  }

  if (options.force_match) {
    for (std::size_t j = 0; j < best.size(); ++j) {
      if (best[j].iou <= 0.0) continue;
      AnchorTarget& t = map.levels[best[j].level].cells[best[j].index];
      t.label = AnchorLabel::kPositive;
      t.gt_index = static_cast<int>(j);
    }
  }

  for (std::size_t li = 0; li < grids.size(); ++li) {
    const LevelGrid& g = grids[li];
    auto& cells = map.levels[li].cells;
    for (std::size_t a = 0; a < g.anchors.size(); ++a) {
      for (std::size_t y = 0; y < g.height; ++y) {
        for (std::size_t x = 0; x < g.width; ++x) {
          AnchorTarget& t = cells[g.index(a, y, x)];
          if (t.label != AnchorLabel::kPositive) continue;
          const auto j = static_cast<std::size_t>(t.gt_index);
          t.class_id = gts[j].class_id;
          t.dropped = gt_dropped[j];
          t.reg = encode_reg(g.box(a, y, x), gts[j].geometry());
        }
      }
    }
  }
  return map;
}

}  // namespace metaanchor
