// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "metaanchor/tensor.hpp"

namespace metaanchor {

// 8-bit RGB, row-major, interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  static Image blank(std::size_t width, std::size_t height);
  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// [3,H,W] tensor with values in [0,1].
Tensor image_to_tensor(const Image& image);

}  // namespace metaanchor
