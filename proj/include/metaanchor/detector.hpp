// SPDX-License-Identifier: Apache-2.0
//
// Single-stage detector: a small conv/avg-pool backbone emitting a feature
// pyramid, classification and regression towers shared across levels, and
// anchor functions whose 3x3 filters either come from the anchor function
// generators (MetaAnchor mode) or are learned per predefined anchor
// (baseline mode). Both modes share every other code path.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metaanchor/anchors.hpp"
#include "metaanchor/generator.hpp"
#include "metaanchor/param_store.hpp"
#include "metaanchor/tensor.hpp"

namespace metaanchor {

enum class HeadMode { kMetaAnchor, kBaseline };

const char* to_string(HeadMode m);
HeadMode parse_head_mode(const std::string& s);

struct ModelConfig {
  HeadMode mode = HeadMode::kMetaAnchor;
  std::size_t num_classes = 3;
  std::size_t feat_channels = 32;
  std::size_t num_levels = 3;
  std::size_t tower_depth = 2;
  // log2 of the finest level's stride.
  int first_level = 2;
  GeneratorVariant variant = GeneratorVariant::kDataIndependent;
  std::size_t hidden = kDefaultHidden;
  // Training anchors; the standard box here is the normalization for every
  // encoding the model sees. Baseline mode owns exactly these anchors.
  AnchorConfiguration anchors;

  HeadGeometry geometry() const { return {num_classes, feat_channels}; }
  int last_level() const { return first_level + static_cast<int>(num_levels) - 1; }
  // Input sides must be multiples of this.
  std::size_t input_multiple() const { return std::size_t{1} << last_level(); }
  void validate() const;
};

struct FeaturePyramid {
  int first_level = 0;
  std::vector<Tensor> levels;  // [Cf, H_l, W_l], finest first
};

// Outputs for one anchor on one level.
struct HeadOutput {
  Tensor cls_logits;  // [C,H,W]
  Tensor reg_deltas;  // [4,H,W]
  AnchorEncoding anchor;
  int level = 0;
};

// Outputs for a stacked anchor set on one level, channel a*C+c / a*4+k.
struct LevelOutput {
  int level = 0;
  Tensor cls_logits;  // [A*C,H,W]
  Tensor reg_deltas;  // [A*4,H,W]
};

HeadOutput head_forward(const Tensor& cls_feature, const Tensor& reg_feature,
                        const FilterBank& bank);
inline HeadOutput head_forward(const Tensor& feature, const FilterBank& bank) {
  return head_forward(feature, feature, bank);
}
LevelOutput stacked_head_forward(const Tensor& cls_feature, const Tensor& reg_feature,
                                 const StackedBank& bank);

class Detector {
 public:
  // Fresh parameters drawn from `seed`.
  static Detector create(const ModelConfig& config, std::uint64_t seed);
  // Wraps previously saved parameters; names and shapes must match `config`.
  static Detector from_params(const ModelConfig& config, const ParamStore& stored);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const GeneratorParams& cls_generator() const { return cls_gen_; }
  const GeneratorParams& reg_generator() const { return reg_gen_; }

  // Baseline mode: the fixed anchor encodings, row i of the weight tables.
  const std::vector<AnchorEncoding>& fixed_anchors() const { return fixed_anchors_; }

  FeaturePyramid backbone_forward(const Tensor& image) const;

  struct TowerFeatures {
    Tensor cls;
    Tensor reg;
  };
  TowerFeatures towers(const Tensor& level_feature) const;

  // Stacked filters for `encs`. The data-dependent generators pool the map
  // their filters are applied to: `cls_feature` for classification,
  // `reg_feature` for regression. Both are ignored otherwise.
  StackedBank bank(std::span<const AnchorEncoding> encs, const Tensor& cls_feature = {},
                   const Tensor& reg_feature = {}) const;

  // One level-shared bank for data-independent generators and baseline mode.
  bool bank_is_level_shared() const;

  std::vector<LevelOutput> forward(const Tensor& image, std::span<const AnchorEncoding> encs) const;

  // Per-level grid extents for an image of the given size.
  std::vector<std::pair<std::size_t, std::size_t>> level_extents(std::size_t height,
                                                                 std::size_t width) const;

 private:
  Detector() = default;
  void bind();
  std::vector<std::size_t> baseline_rows(std::span<const AnchorEncoding> encs) const;

  ModelConfig config_;
  ParamStore params_;
  GeneratorParams cls_gen_;
  GeneratorParams reg_gen_;
  std::vector<AnchorEncoding> fixed_anchors_;
};

}  // namespace metaanchor
