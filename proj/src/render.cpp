// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "metaanchor/data.hpp"
#include "metaanchor/error.hpp"

namespace metaanchor {

namespace {

// Rows of a 3x5 glyph, high bit = leftmost column.
constexpr std::uint8_t kDigits[10][5] = {
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
};
constexpr std::uint8_t kDot[5] = {0, 0, 0, 0, 2};
constexpr long kGlyphHeight = 5;
constexpr long kGlyphAdvance = 4;

void put(Image& img, long x, long y, const std::array<std::uint8_t, 3>& color) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
    return;
  }
  std::uint8_t* p = img.pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  p[0] = color[0];
  p[1] = color[1];
  p[2] = color[2];
}

}  // namespace

void draw_text(Image& image, long x, long y, const std::string& text,
               const std::array<std::uint8_t, 3>& color) {
  for (char ch : text) {
    const std::uint8_t* rows = nullptr;
    if (ch >= '0' && ch <= '9') rows = kDigits[ch - '0'];
    if (ch == '.') rows = kDot;
    if (rows != nullptr) {
      for (long r = 0; r < kGlyphHeight; ++r) {
        for (long c = 0; c < 3; ++c) {
          if (rows[r] & (4 >> c)) put(image, x + c, y + r, color);
        }
      }
    }
    x += kGlyphAdvance;
  }
}

Image draw_detections(const Image& image, std::span<const Detection> dets) {
  Image out = image;
  for (const Detection& d : dets) {
    const auto color = class_color(d.class_id);
    const long x1 = std::lround(std::floor(d.box.x1));
    const long y1 = std::lround(std::floor(d.box.y1));
    const long x2 = std::lround(std::ceil(d.box.x2)) - 1;
    const long y2 = std::lround(std::ceil(d.box.y2)) - 1;
    for (long x = x1; x <= x2; ++x) {
      put(out, x, y1, color);
      put(out, x, y2, color);
    }
    for (long y = y1; y <= y2; ++y) {
      put(out, x1, y, color);
      put(out, x2, y, color);
    }
    char label[16];
    std::snprintf(label, sizeof label, "%.2f", d.score);
    const long ty = y1 - kGlyphHeight - 1 >= 0 ? y1 - kGlyphHeight - 1 : y1 + 2;
    draw_text(out, x1 + 1, ty, label, color);
  }
  return out;
}

std::vector<std::filesystem::path> render_overlay(const Image& image, std::span<const Detection> dets,
                                                  const RenderOptions& options,
                                                  const std::filesystem::path& out) {
  std::vector<std::filesystem::path> written;
  if (!options.group_by_anchor) {
    write_ppm(out, draw_detections(image, dets));
    written.push_back(out);
    return written;
  }
  std::vector<std::size_t> panels = options.anchor_indices;
  if (panels.empty()) {
    std::set<std::size_t> seen;
    for (const auto& d : dets) seen.insert(d.anchor_index);
    panels.assign(seen.begin(), seen.end());
  }
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  for (std::size_t a : panels) {
    std::vector<Detection> mine;
    for (const auto& d : dets) {
      if (d.anchor_index == a) mine.push_back(d);
    }
    char name[32];
    std::snprintf(name, sizeof name, "anchor_%03zu.ppm", a);
    write_ppm(out / name, draw_detections(image, mine));
    written.push_back(out / name);
  }
  return written;
}

}  // namespace metaanchor
