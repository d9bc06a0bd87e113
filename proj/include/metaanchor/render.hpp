// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metaanchor/detection.hpp"
#include "metaanchor/image.hpp"

namespace metaanchor {

// Copy of `image` with each detection's box outlined (1 px, class color) and
// its score printed above the top-left corner.
Image draw_detections(const Image& image, std::span<const Detection> dets);

// Draws `text` (digits and '.') in a 3x5 pixel font with its top-left at (x, y).
void draw_text(Image& image, long x, long y, const std::string& text,
               const std::array<std::uint8_t, 3>& color);

struct RenderOptions {
  bool group_by_anchor = false;
  // Panels to produce when grouping, in order; empty means every distinct
  // source anchor among the detections, by anchor_index.
  std::vector<std::size_t> anchor_indices;
};

// Ungrouped: writes one overlay to `out` (a file path). Grouped: `out` is a
// directory receiving anchor_<index>.ppm per anchor. Returns written paths.
std::vector<std::filesystem::path> render_overlay(const Image& image, std::span<const Detection> dets,
                                                  const RenderOptions& options,
                                                  const std::filesystem::path& out);

}  // namespace metaanchor
