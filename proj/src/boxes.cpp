// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/boxes.hpp"

#include <algorithm>
#include <cmath>

#include "metaanchor/error.hpp"

namespace metaanchor {

Box to_corner(const CenterBox& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

CenterBox to_center(const Box& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

GroundTruthBox ground_truth_from_corners(const Box& b, int class_id) {
  const CenterBox c = to_center(b);
  return {c.cx, c.cy, c.w, c.h, class_id};
}

double iou(const Box& a, const Box& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(a.width() > 0.0 && a.height() > 0.0 && std::isfinite(area_a)) ||
      !(b.width() > 0.0 && b.height() > 0.0 && std::isfinite(area_b))) {
    throw ValueError("iou of a degenerate box");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

double iou(const CenterBox& a, const CenterBox& b) { return iou(to_corner(a), to_corner(b)); }

}  // namespace metaanchor
