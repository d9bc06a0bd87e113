// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/detector.hpp"

#include <cmath>
#include <random>

#include "metaanchor/error.hpp"
#include "metaanchor/ops.hpp"

namespace metaanchor {

namespace {

std::string backbone_name(std::size_t stage, const char* what) {
  return "backbone.conv" + std::to_string(stage) + "." + what;
}

std::string tower_name(const char* tower, std::size_t layer, const char* what) {
  return std::string("head.") + tower + "_tower." + std::to_string(layer) + "." + what;
}

// He-uniform for conv layers feeding a ReLU.
Tensor conv_weight(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(out * in * 9);
  for (double& x : v) x = u(rng);
  return Tensor::from({out, in, 3, 3}, std::move(v));
}

constexpr double kEncodingMatchTolerance = 1e-9;

}  // namespace

const char* to_string(HeadMode m) { return m == HeadMode::kMetaAnchor ? "metaanchor" : "baseline"; }

HeadMode parse_head_mode(const std::string& s) {
  if (s == "metaanchor") return HeadMode::kMetaAnchor;
  if (s == "baseline") return HeadMode::kBaseline;
  throw ValueError("unknown model mode '" + s + "' (expected metaanchor or baseline)");
}

void ModelConfig::validate() const {
  if (num_classes < 1) throw ValueError("model needs at least one class");
  if (feat_channels < 1) throw ValueError("model needs at least one feature channel");
  if (num_levels < 1) throw ValueError("model needs at least one pyramid level");
  if (first_level < 1) throw ValueError("finest pyramid level must have stride >= 2");
  if (hidden < 1) throw ValueError("generator hidden width must be >= 1");
  if (anchors.size() == 0) throw ValueError("model needs a nonempty anchor configuration");
}

HeadOutput head_forward(const Tensor& cls_feature, const Tensor& reg_feature,
                        const FilterBank& bank) {
  if (cls_feature.rank() != 3 || bank.cls_filters.rank() != 4 ||
      cls_feature.dim(0) != bank.cls_filters.dim(1)) {
    throw ShapeError("head_forward: feature channels do not match classification filters");
  }
  if (reg_feature.rank() != 3 || bank.reg_filters.rank() != 4 ||
      reg_feature.dim(0) != bank.reg_filters.dim(1)) {
    throw ShapeError("head_forward: feature channels do not match regression filters");
  }
  HeadOutput out;
  out.cls_logits = ops::conv2d_3x3(cls_feature, bank.cls_filters, bank.cls_bias);
  out.reg_deltas = ops::conv2d_3x3(reg_feature, bank.reg_filters, bank.reg_bias);
  return out;
}

LevelOutput stacked_head_forward(const Tensor& cls_feature, const Tensor& reg_feature,
                                 const StackedBank& bank) {
  LevelOutput out;
  out.cls_logits = ops::conv2d_3x3(cls_feature, bank.cls_filters, bank.cls_bias);
  out.reg_deltas = ops::conv2d_3x3(reg_feature, bank.reg_filters, bank.reg_bias);
  return out;
}

Detector Detector::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Detector d;
  d.config_ = config;
  std::mt19937_64 rng(seed);
  const std::size_t f = config.feat_channels;
  const std::size_t stages = static_cast<std::size_t>(config.last_level());
  for (std::size_t s = 0; s < stages; ++s) {
    d.params_.add(backbone_name(s, "weight"), conv_weight(f, s == 0 ? 3 : f, rng));
    d.params_.add(backbone_name(s, "bias"), Tensor::zeros({f}));
  }
  for (const char* tower : {"cls", "reg"}) {
    for (std::size_t i = 0; i < config.tower_depth; ++i) {
      d.params_.add(tower_name(tower, i, "weight"), conv_weight(f, f, rng));
      d.params_.add(tower_name(tower, i, "bias"), Tensor::zeros({f}));
    }
  }
  const HeadGeometry g = config.geometry();
  if (config.mode == HeadMode::kMetaAnchor) {
    init_generator(config.variant, g, HeadBlock::kClassification, config.hidden, rng)
        .register_into(d.params_, "gen.cls.");
    init_generator(config.variant, g, HeadBlock::kRegression, config.hidden, rng)
        .register_into(d.params_, "gen.reg.");
  } else {
    const std::size_t a = config.anchors.size();
    std::vector<double> cls, reg;
    for (std::size_t i = 0; i < a; ++i) {
      auto c = init_head_block(g, HeadBlock::kClassification, rng);
      auto r = init_head_block(g, HeadBlock::kRegression, rng);
      cls.insert(cls.end(), c.begin(), c.end());
      reg.insert(reg.end(), r.begin(), r.end());
    }
    d.params_.add("baseline.cls", Tensor::from({a, g.cls_block()}, std::move(cls)));
    d.params_.add("baseline.reg", Tensor::from({a, g.reg_block()}, std::move(reg)));
  }
  d.bind();
  return d;
}

Detector Detector::from_params(const ModelConfig& config, const ParamStore& stored) {
  Detector d = create(config, 0);
  d.params_.assign_values(stored);
  return d;
}

void Detector::bind() {
  if (config_.mode == HeadMode::kMetaAnchor) {
    cls_gen_ = GeneratorParams::bind(params_, "gen.cls.", config_.variant);
    reg_gen_ = GeneratorParams::bind(params_, "gen.reg.", config_.variant);
  } else {
    fixed_anchors_ = config_.anchors.encodings();
  }
}

std::vector<std::pair<std::size_t, std::size_t>> Detector::level_extents(std::size_t height,
                                                                         std::size_t width) const {
  const std::size_t mult = config_.input_multiple();
  if (height == 0 || width == 0 || height % mult != 0 || width % mult != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by " + std::to_string(mult));
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (int l = config_.first_level; l <= config_.last_level(); ++l) {
    const std::size_t s = std::size_t{1} << l;
    out.emplace_back(height / s, width / s);
  }
  return out;
}

FeaturePyramid Detector::backbone_forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("backbone expects a [3,H,W] image, got " + shape_str(image.shape()));
  }
  level_extents(image.dim(1), image.dim(2));
  FeaturePyramid pyr;
  pyr.first_level = config_.first_level;
  Tensor x = image;
  const std::size_t stages = static_cast<std::size_t>(config_.last_level());
  for (std::size_t s = 0; s < stages; ++s) {
    x = ops::conv2d_3x3(x, params_.get(backbone_name(s, "weight")),
                        params_.get(backbone_name(s, "bias")));
    x = ops::avg_pool2x2(ops::relu(x));
    // stage s output has stride 2^(s+1)
    if (static_cast<int>(s) + 1 >= config_.first_level) pyr.levels.push_back(x);
  }
  return pyr;
}

Detector::TowerFeatures Detector::towers(const Tensor& level_feature) const {
  TowerFeatures t{level_feature, level_feature};
  for (std::size_t i = 0; i < config_.tower_depth; ++i) {
    t.cls = ops::relu(ops::conv2d_3x3(t.cls, params_.get(tower_name("cls", i, "weight")),
                                      params_.get(tower_name("cls", i, "bias"))));
    t.reg = ops::relu(ops::conv2d_3x3(t.reg, params_.get(tower_name("reg", i, "weight")),
                                      params_.get(tower_name("reg", i, "bias"))));
  }
  return t;
}

bool Detector::bank_is_level_shared() const {
  return config_.mode == HeadMode::kBaseline ||
         config_.variant == GeneratorVariant::kDataIndependent;
}

std::vector<std::size_t> Detector::baseline_rows(std::span<const AnchorEncoding> encs) const {
  std::vector<std::size_t> rows;
  for (const auto& e : encs) {
    std::size_t found = fixed_anchors_.size();
    for (std::size_t i = 0; i < fixed_anchors_.size(); ++i) {
      if (std::abs(fixed_anchors_[i].log_h - e.log_h) <= kEncodingMatchTolerance &&
          std::abs(fixed_anchors_[i].log_w - e.log_w) <= kEncodingMatchTolerance) {
        found = i;
        break;
      }
    }
    if (found == fixed_anchors_.size()) {
      throw ValueError("baseline model has no predefined anchor with encoding (" +
                       std::to_string(e.log_h) + ", " + std::to_string(e.log_w) + ")");
    }
    rows.push_back(found);
  }
  return rows;
}

StackedBank Detector::bank(std::span<const AnchorEncoding> encs, const Tensor& cls_feature,
                           const Tensor& reg_feature) const {
  if (encs.empty()) throw ValueError("no anchors requested");
  const HeadGeometry g = config_.geometry();
  if (config_.mode == HeadMode::kBaseline) {
    const auto rows = baseline_rows(encs);
    const Tensor& cls = params_.get("baseline.cls");
    const Tensor& reg = params_.get("baseline.reg");
    bool identity = rows.size() == fixed_anchors_.size();
    for (std::size_t i = 0; identity && i < rows.size(); ++i) identity = rows[i] == i;
    if (identity) return stack_bank(cls, reg, g);
    std::vector<Tensor> cls_rows, reg_rows;
    for (auto r : rows) {
      cls_rows.push_back(ops::reshape(ops::slice_flat(cls, r * g.cls_block(), (r + 1) * g.cls_block()),
                                      {1, g.cls_block()}));
      reg_rows.push_back(ops::reshape(ops::slice_flat(reg, r * g.reg_block(), (r + 1) * g.reg_block()),
                                      {1, g.reg_block()}));
    }
    return stack_bank(ops::concat_rows(cls_rows), ops::concat_rows(reg_rows), g);
  }
  Tensor cls_pooled, reg_pooled;
  if (config_.variant == GeneratorVariant::kDataDependent) {
    if (!cls_feature.defined() || !reg_feature.defined()) {
      throw ValueError("data-dependent generator needs the head feature maps");
    }
    cls_pooled = ops::global_avg_pool(cls_feature);
    reg_pooled = ops::global_avg_pool(reg_feature);
  }
  return stack_bank(generate_thetas(cls_gen_, encs, cls_pooled),
                    generate_thetas(reg_gen_, encs, reg_pooled), g);
}

std::vector<LevelOutput> Detector::forward(const Tensor& image,
                                           std::span<const AnchorEncoding> encs) const {
  const FeaturePyramid pyr = backbone_forward(image);
  std::vector<LevelOutput> out;
  StackedBank shared;
  if (bank_is_level_shared()) shared = bank(encs);
  for (std::size_t i = 0; i < pyr.levels.size(); ++i) {
    const Tensor& feat = pyr.levels[i];
    const TowerFeatures t = towers(feat);
    LevelOutput lo = stacked_head_forward(
        t.cls, t.reg, bank_is_level_shared() ? shared : bank(encs, t.cls, t.reg));
    lo.level = pyr.first_level + static_cast<int>(i);
    out.push_back(std::move(lo));
  }
  return out;
}

}  // namespace metaanchor
