// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/generator.hpp"

#include <cmath>

#include "metaanchor/error.hpp"
#include "metaanchor/ops.hpp"

namespace metaanchor {

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

void check_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (!t.defined() || t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw ShapeError(std::string("generator ") + what + " must be [" + std::to_string(rows) + "," +
                     std::to_string(cols) + "], got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

}  // namespace

const char* to_string(GeneratorVariant v) {
  return v == GeneratorVariant::kDataIndependent ? "data-independent" : "data-dependent";
}

GeneratorVariant parse_generator_variant(const std::string& s) {
  if (s == "data-independent") return GeneratorVariant::kDataIndependent;
  if (s == "data-dependent") return GeneratorVariant::kDataDependent;
  throw ValueError("unknown generator variant '" + s + "'");
}

std::size_t theta_dim(std::size_t num_classes, std::size_t feat_channels) {
  return HeadGeometry{num_classes, feat_channels}.theta_dim();
}

std::size_t block_dim(const HeadGeometry& g, HeadBlock block) {
  switch (block) {
    case HeadBlock::kFull: return g.theta_dim();
    case HeadBlock::kClassification: return g.cls_block();
    case HeadBlock::kRegression: return g.reg_block();
  }
  return 0;
}

void GeneratorParams::validate() const {
  if (!theta_star.defined() || theta_star.rank() != 1 || theta_star.numel() == 0) {
    throw ShapeError("generator theta* must be a nonempty vector");
  }
  if (!w2.defined() || w2.rank() != 2 || w2.dim(1) == 0) {
    throw ShapeError("generator W2 must be [D,m] with m >= 1");
  }
  const std::size_t d = output_dim();
  const std::size_t m = hidden();
  check_matrix(w2, d, m, "W2");
  if (variant == GeneratorVariant::kDataIndependent) {
    check_matrix(w1, m, 2, "W1");
    if (w11.defined() || w12.defined()) {
      throw ValueError("data-independent generator must not carry W11/W12");
    }
  } else {
    check_matrix(w11, m, 2, "W11");
    if (!w12.defined() || w12.rank() != 2) throw ShapeError("generator W12 must be a matrix");
    check_matrix(w12, m, w12.dim(1), "W12");
    if (w1.defined()) throw ValueError("data-dependent generator uses W11, not W1");
  }
}

void GeneratorParams::register_into(ParamStore& store, const std::string& prefix) const {
  validate();
  store.add(prefix + "theta_star", theta_star);
  store.add(prefix + "w2", w2);
  if (variant == GeneratorVariant::kDataIndependent) {
    store.add(prefix + "w1", w1);
  } else {
    store.add(prefix + "w11", w11);
    store.add(prefix + "w12", w12);
  }
}

GeneratorParams GeneratorParams::bind(const ParamStore& store, const std::string& prefix,
                                      GeneratorVariant variant) {
  GeneratorParams p;
  p.variant = variant;
  p.theta_star = store.get(prefix + "theta_star");
  p.w2 = store.get(prefix + "w2");
  if (variant == GeneratorVariant::kDataIndependent) {
    p.w1 = store.get(prefix + "w1");
  } else {
    p.w11 = store.get(prefix + "w11");
    p.w12 = store.get(prefix + "w12");
  }
  p.validate();
  return p;
}

std::vector<double> init_head_block(const HeadGeometry& g, HeadBlock block, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(g.feat_channels * 9));
  const double prior_bias = -std::log((1.0 - kPriorProbability) / kPriorProbability);
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v;
  v.reserve(block_dim(g, block));
  if (block != HeadBlock::kRegression) {
    for (std::size_t i = 0; i < g.cls_filter_size(); ++i) v.push_back(u(rng));
    for (std::size_t i = 0; i < g.num_classes; ++i) v.push_back(prior_bias);
  }
  if (block != HeadBlock::kClassification) {
    for (std::size_t i = 0; i < g.reg_block(); ++i) v.push_back(u(rng));
  }
  return v;
}

GeneratorParams init_generator(GeneratorVariant variant, const HeadGeometry& geometry,
                               HeadBlock block, std::size_t hidden, std::mt19937_64& rng) {
  if (hidden < 1) throw ValueError("generator hidden width must be >= 1");
  if (geometry.num_classes < 1 || geometry.feat_channels < 1) {
    throw ValueError("head geometry needs at least one class and one feature channel");
  }
  GeneratorParams p;
  p.variant = variant;
  const std::size_t d = block_dim(geometry, block);
  auto theta = init_head_block(geometry, block, rng);
  p.theta_star = Tensor::from({d}, std::move(theta));
  const double in_bound = 1.0 / std::sqrt(2.0);
  if (variant == GeneratorVariant::kDataIndependent) {
    p.w1 = uniform_tensor({hidden, 2}, in_bound, rng);
  } else {
    p.w11 = uniform_tensor({hidden, 2}, in_bound, rng);
    const std::size_t f = geometry.feat_channels;
    p.w12 = uniform_tensor({hidden, f}, 1.0 / std::sqrt(static_cast<double>(f)), rng);
  }
  p.w2 = uniform_tensor({d, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  return p;
}

Tensor encodings_tensor(std::span<const AnchorEncoding> encs) {
  std::vector<double> v;
  v.reserve(encs.size() * 2);
  for (const auto& e : encs) {
    v.push_back(e.log_h);
    v.push_back(e.log_w);
  }
  return Tensor::from({encs.size(), 2}, std::move(v));
}

Tensor generate_thetas(const GeneratorParams& params, std::span<const AnchorEncoding> encs,
                       const Tensor& pooled_feature) {
  params.validate();
  if (encs.empty()) throw ValueError("generate: no anchor encodings given");
  const Tensor b = encodings_tensor(encs);
  Tensor pre;
  if (params.variant == GeneratorVariant::kDataIndependent) {
    if (pooled_feature.defined()) {
      throw ValueError("data-independent generator was given a feature input");
    }
    pre = ops::matmul_nt(b, params.w1);
  } else {
    if (!pooled_feature.defined()) {
      throw ValueError("data-dependent generator requires a pooled feature");
    }
    if (pooled_feature.rank() != 1 || pooled_feature.dim(0) != params.feature_dim()) {
      throw ShapeError("pooled feature has shape " + shape_str(pooled_feature.shape()) +
                       ", W12 expects " + std::to_string(params.feature_dim()) + " channels");
    }
    const Tensor shared = ops::linear(pooled_feature, params.w12);
    pre = ops::add_row_broadcast(ops::matmul_nt(b, params.w11), shared);
  }
  const Tensor hidden = ops::relu(pre);
  return ops::add_row_broadcast(ops::matmul_nt(hidden, params.w2), params.theta_star);
}

Tensor generate_theta(const GeneratorParams& params, const AnchorEncoding& enc) {
  if (params.variant != GeneratorVariant::kDataIndependent) {
    throw ValueError("generate called on a data-dependent generator; use generate_dd");
  }
  const Tensor rows = generate_thetas(params, std::span(&enc, 1));
  return ops::reshape(rows, {params.output_dim()});
}

Tensor generate_theta_dd(const GeneratorParams& params, const AnchorEncoding& enc,
                         const Tensor& feature) {
  if (params.variant != GeneratorVariant::kDataDependent) {
    throw ValueError("generate_dd called on a data-independent generator");
  }
  if (!feature.defined() || feature.rank() != 3) {
    throw ShapeError("generate_dd expects a [C,H,W] feature map");
  }
  if (feature.dim(0) != params.feature_dim()) {
    throw ShapeError("feature has " + std::to_string(feature.dim(0)) + " channels, W12 expects " +
                     std::to_string(params.feature_dim()));
  }
  const Tensor rows = generate_thetas(params, std::span(&enc, 1), ops::global_avg_pool(feature));
  return ops::reshape(rows, {params.output_dim()});
}

FilterBank unflatten_bank(const Tensor& theta, const HeadGeometry& g) {
  if (theta.numel() != g.theta_dim()) {
    throw ShapeError("flat head weights have " + std::to_string(theta.numel()) +
                     " entries, geometry needs " + std::to_string(g.theta_dim()));
  }
  const std::size_t c = g.num_classes, f = g.feat_channels;
  std::size_t at = 0;
  FilterBank bank;
  bank.cls_filters = ops::reshape(ops::slice_flat(theta, at, at + g.cls_filter_size()), {c, f, 3, 3});
  at += g.cls_filter_size();
  bank.cls_bias = ops::slice_flat(theta, at, at + c);
  at += c;
  bank.reg_filters =
      ops::reshape(ops::slice_flat(theta, at, at + g.reg_filter_size()), {kRegOutputs, f, 3, 3});
  at += g.reg_filter_size();
  bank.reg_bias = ops::slice_flat(theta, at, at + kRegOutputs);
  return bank;
}

Tensor flatten_bank(const FilterBank& bank) {
  return ops::concat_rows({ops::reshape(bank.cls_filters, {bank.cls_filters.numel()}),
                           bank.cls_bias,
                           ops::reshape(bank.reg_filters, {bank.reg_filters.numel()}),
                           bank.reg_bias});
}

FilterBank generate(const GeneratorParams& params, const AnchorEncoding& enc,
                    const HeadGeometry& geometry) {
  return unflatten_bank(generate_theta(params, enc), geometry);
}

FilterBank generate_dd(const GeneratorParams& params, const AnchorEncoding& enc,
                       const Tensor& feature, const HeadGeometry& geometry) {
  return unflatten_bank(generate_theta_dd(params, enc, feature), geometry);
}

FilterBank two_head_generate(const GeneratorParams& cls_params, const GeneratorParams& reg_params,
                             const AnchorEncoding& enc, const HeadGeometry& geometry,
                             const Tensor& feature) {
  if (cls_params.output_dim() != geometry.cls_block()) {
    throw ShapeError("classification generator emits " + std::to_string(cls_params.output_dim()) +
                     " weights, the classification block holds " +
                     std::to_string(geometry.cls_block()));
  }
  if (reg_params.output_dim() != geometry.reg_block()) {
    throw ShapeError("regression generator emits " + std::to_string(reg_params.output_dim()) +
                     " weights, the regression block holds " + std::to_string(geometry.reg_block()));
  }
  auto run = [&](const GeneratorParams& p) {
    return p.variant == GeneratorVariant::kDataIndependent ? generate_theta(p, enc)
                                                           : generate_theta_dd(p, enc, feature);
  };
  return unflatten_bank(ops::concat_rows({run(cls_params), run(reg_params)}), geometry);
}

StackedBank stack_bank(const Tensor& cls_rows, const Tensor& reg_rows, const HeadGeometry& g) {
  if (cls_rows.rank() != 2 || cls_rows.dim(1) != g.cls_block()) {
    throw ShapeError("classification rows must be [A," + std::to_string(g.cls_block()) + "], got " +
                     shape_str(cls_rows.shape()));
  }
  if (reg_rows.rank() != 2 || reg_rows.dim(1) != g.reg_block()) {
    throw ShapeError("regression rows must be [A," + std::to_string(g.reg_block()) + "], got " +
                     shape_str(reg_rows.shape()));
  }
  if (cls_rows.dim(0) != reg_rows.dim(0)) {
    throw ShapeError("classification and regression rows disagree on the anchor count");
  }
  const std::size_t a = cls_rows.dim(0), c = g.num_classes, f = g.feat_channels;
  StackedBank s;
  s.num_anchors = a;
  s.cls_filters = ops::reshape(ops::slice_cols(cls_rows, 0, g.cls_filter_size()), {a * c, f, 3, 3});
  s.cls_bias = ops::reshape(ops::slice_cols(cls_rows, g.cls_filter_size(), g.cls_block()), {a * c});
  s.reg_filters =
      ops::reshape(ops::slice_cols(reg_rows, 0, g.reg_filter_size()), {a * kRegOutputs, f, 3, 3});
  s.reg_bias =
      ops::reshape(ops::slice_cols(reg_rows, g.reg_filter_size(), g.reg_block()), {a * kRegOutputs});
  return s;
}

}  // namespace metaanchor
