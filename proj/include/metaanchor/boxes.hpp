// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

namespace metaanchor {

// Corner form, continuous pixel coordinates: [x1,x2) x [y1,y2).
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const CenterBox&, const CenterBox&) = default;
};

struct GroundTruthBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_id = 0;

  CenterBox geometry() const { return {cx, cy, w, h}; }
  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

Box to_corner(const CenterBox& b);
CenterBox to_center(const Box& b);
GroundTruthBox ground_truth_from_corners(const Box& b, int class_id);

// Throws ValueError for boxes with nonpositive or non-finite area.
double iou(const Box& a, const Box& b);
double iou(const CenterBox& a, const CenterBox& b);

}  // namespace metaanchor
