// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/anchors.hpp"

#include <cmath>
#include <string>

#include "metaanchor/error.hpp"

namespace metaanchor {

namespace {

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValueError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
  }
}

}  // namespace

AnchorBox make_anchor_box(double base_size, double scale, double ratio) {
  check_positive(base_size, "base size");
  check_positive(scale, "anchor scale");
  check_positive(ratio, "aspect ratio");
  const double root = std::sqrt(ratio);
  return {base_size * scale * root, base_size * scale / root};
}

std::vector<AnchorBox> AnchorConfiguration::boxes() const {
  std::vector<AnchorBox> out;
  out.reserve(size());
  for (double s : scales) {
    for (double r : ratios) out.push_back(make_anchor_box(base_size, s, r));
  }
  return out;
}

std::vector<AnchorEncoding> AnchorConfiguration::encodings() const {
  std::vector<AnchorEncoding> out;
  for (const auto& b : boxes()) out.push_back(encode(b, standard));
  return out;
}

AnchorConfiguration build_configuration(int n_scales, std::span<const double> ratios,
                                        double base_size, int level) {
  if (n_scales < 1) throw ValueError("anchor configuration needs at least one scale");
  if (ratios.empty()) throw ValueError("anchor configuration needs at least one aspect ratio");
  check_positive(base_size, "base size");
  AnchorConfiguration cfg;
  cfg.base_size = base_size;
  for (int k = 0; k < n_scales; ++k) {
    cfg.scales.push_back(std::exp2(static_cast<double>(k) / n_scales));
  }
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    check_positive(ratios[i], "aspect ratio");
    if (i > 0 && !(ratios[i] > ratios[i - 1])) {
      throw ValueError("aspect ratios must be strictly increasing");
    }
    cfg.ratios.push_back(ratios[i]);
  }
  const auto boxes = cfg.boxes();
  cfg.standard = standard_box(boxes, level);
  return cfg;
}

std::vector<double> table_ratios(int n) {
  switch (n) {
    case 3: return {1.0 / 2, 1.0, 2.0};
    case 5: return {1.0 / 3, 1.0 / 2, 1.0, 2.0, 3.0};
    case 7: return {1.0 / 4, 1.0 / 3, 1.0 / 2, 1.0, 2.0, 3.0, 4.0};
    case 9: return {1.0 / 5, 1.0 / 4, 1.0 / 3, 1.0 / 2, 1.0, 2.0, 3.0, 4.0, 5.0};
    default: throw ValueError("no tabulated ratio set for " + std::to_string(n) + " anchors");
  }
}

StandardBox standard_box(std::span<const AnchorBox> boxes, int level) {
  if (boxes.empty()) throw ValueError("standard box of an empty anchor set");
  double h = 0.0, w = 0.0;
  for (const auto& b : boxes) {
    check_positive(b.height, "anchor height");
    check_positive(b.width, "anchor width");
    h += b.height;
    w += b.width;
  }
  const double n = static_cast<double>(boxes.size());
  return {h / n, w / n, level};
}

AnchorEncoding encode(const AnchorBox& box, const StandardBox& standard) {
  check_positive(box.height, "anchor height");
  check_positive(box.width, "anchor width");
  check_positive(standard.height, "standard box height");
  check_positive(standard.width, "standard box width");
  return {std::log(box.height / standard.height), std::log(box.width / standard.width)};
}

AnchorBox decode_encoding(const AnchorEncoding& enc, const StandardBox& standard) {
  if (!std::isfinite(enc.log_h) || !std::isfinite(enc.log_w)) {
    throw ValueError("cannot decode a non-finite anchor encoding");
  }
  check_positive(standard.height, "standard box height");
  check_positive(standard.width, "standard box width");
  return {standard.height * std::exp(enc.log_h), standard.width * std::exp(enc.log_w)};
}

StandardBox level_standard(const StandardBox& base, int target_level) {
  if (target_level < base.level) {
    throw ValueError("target level " + std::to_string(target_level) + " is below base level " +
                     std::to_string(base.level));
  }
  const double f = std::exp2(static_cast<double>(target_level - base.level));
  return {base.height * f, base.width * f, target_level};
}

AnchorEncoding augment(const AnchorEncoding& enc, std::mt19937_64& rng, double delta) {
  if (!(delta >= 0.0)) throw ValueError("augmentation delta must be nonnegative");
  if (delta == 0.0) return enc;
  std::uniform_real_distribution<double> u(-delta, delta);
  const double dh = u(rng);
  const double dw = u(rng);
  return {enc.log_h + dh, enc.log_w + dw};
}

}  // namespace metaanchor
