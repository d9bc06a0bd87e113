// SPDX-License-Identifier: Apache-2.0
//
// Anchor boxes and their log-ratio encoding against a per-level standard box.
//
//   encode:  (eh, ew) = (ln(ah / AH), ln(aw / AW))
//   decode:  (ah, aw) = (AH * exp(eh), AW * exp(ew))
//
// Natural log throughout. The standard box doubles with each coarser pyramid
// level, so one encoding names the same relative shape at every level.
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace metaanchor {

struct AnchorBox {
  double height = 0.0;
  double width = 0.0;
};

struct StandardBox {
  double height = 0.0;
  double width = 0.0;
  int level = 0;
};

struct AnchorEncoding {
  double log_h = 0.0;
  double log_w = 0.0;

  friend bool operator==(const AnchorEncoding&, const AnchorEncoding&) = default;
};

struct AnchorConfiguration {
  std::vector<double> scales;
  std::vector<double> ratios;  // height / width
  double base_size = 32.0;
  StandardBox standard;

  // All (scale, ratio) boxes at the finest level, scale-major order.
  std::vector<AnchorBox> boxes() const;
  std::vector<AnchorEncoding> encodings() const;
  std::size_t size() const { return scales.size() * ratios.size(); }
};

inline constexpr double kDefaultBaseSize = 32.0;
inline constexpr double kDefaultAugmentDelta = 0.5;

// Box for one (scale, ratio) pair: ah = base*scale*sqrt(ratio), aw = base*scale/sqrt(ratio).
AnchorBox make_anchor_box(double base_size, double scale, double ratio);

// scales = {2^(k/n) : k = 0..n-1}; standard box = mean over the generated boxes.
AnchorConfiguration build_configuration(int n_scales, std::span<const double> ratios,
                                        double base_size = kDefaultBaseSize, int level = 0);

// The ratio sets of the 3x3 .. 9x9 rows of the reference anchor table.
std::vector<double> table_ratios(int n);

// Arithmetic mean of heights and widths.
StandardBox standard_box(std::span<const AnchorBox> boxes, int level);

AnchorEncoding encode(const AnchorBox& box, const StandardBox& standard);
AnchorBox decode_encoding(const AnchorEncoding& enc, const StandardBox& standard);

// Standard box at a coarser level: (AH, AW) * 2^(target - base.level).
StandardBox level_standard(const StandardBox& base, int target_level);

// Adds independent U[-delta, delta] noise to each encoded component.
AnchorEncoding augment(const AnchorEncoding& enc, std::mt19937_64& rng,
                       double delta = kDefaultAugmentDelta);

}  // namespace metaanchor
