// SPDX-License-Identifier: Apache-2.0
//
// Anchor function generator: maps an anchor encoding b to the weights of a
// detection head.
//
//   data-independent:  theta_b = theta* + W2 relu(W1 b)
//   data-dependent:    theta_b = theta* + W2 relu(W11 b + W12 gap(x))
//
// R has no bias terms, so the standard box (b = 0) maps to theta* exactly.
//
// Flat layout of a full head (theta_dim entries):
//   [ cls filters C*Cf*9 | cls bias C | reg filters 4*Cf*9 | reg bias 4 ]
// Filters are row-major [out, in, 3, 3]. A classification-only generator
// covers the first two blocks, a regression-only generator the last two.
#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metaanchor/anchors.hpp"
#include "metaanchor/param_store.hpp"
#include "metaanchor/tensor.hpp"

namespace metaanchor {

enum class GeneratorVariant { kDataIndependent, kDataDependent };

const char* to_string(GeneratorVariant v);
GeneratorVariant parse_generator_variant(const std::string& s);

inline constexpr std::size_t kRegOutputs = 4;
inline constexpr std::size_t kDefaultHidden = 128;
inline constexpr double kPriorProbability = 0.01;

struct HeadGeometry {
  std::size_t num_classes = 0;
  std::size_t feat_channels = 0;

  std::size_t cls_filter_size() const { return num_classes * feat_channels * 9; }
  std::size_t cls_block() const { return cls_filter_size() + num_classes; }
  std::size_t reg_filter_size() const { return kRegOutputs * feat_channels * 9; }
  std::size_t reg_block() const { return reg_filter_size() + kRegOutputs; }
  std::size_t theta_dim() const { return cls_block() + reg_block(); }
};

std::size_t theta_dim(std::size_t num_classes, std::size_t feat_channels);

// Which part of the flat layout a generator produces.
enum class HeadBlock { kFull, kClassification, kRegression };

std::size_t block_dim(const HeadGeometry& g, HeadBlock block);

struct GeneratorParams {
  GeneratorVariant variant = GeneratorVariant::kDataIndependent;
  Tensor theta_star;  // [D]
  Tensor w1;          // [m,2], data-independent only
  Tensor w2;          // [D,m]
  Tensor w11;         // [m,2], data-dependent only
  Tensor w12;         // [m,d_feat], data-dependent only

  std::size_t output_dim() const { return theta_star.numel(); }
  std::size_t hidden() const { return w2.dim(1); }
  std::size_t feature_dim() const { return w12.defined() ? w12.dim(1) : 0; }

  // Throws if the tensors do not form a consistent generator.
  void validate() const;

  // Adds the tensors under `prefix` ("gen.cls." etc.) to the store.
  void register_into(ParamStore& store, const std::string& prefix) const;
  // Rebinds to tensors already held by a store.
  static GeneratorParams bind(const ParamStore& store, const std::string& prefix,
                              GeneratorVariant variant);
};

// W1, W2 (and W11, W12) ~ U(+-1/sqrt(fan_in)). theta* filter and regression
// bias entries ~ U(+-1/sqrt(Cf*9)); classification bias entries are set to
// -ln((1-pi)/pi) with pi = 0.01.
GeneratorParams init_generator(GeneratorVariant variant, const HeadGeometry& geometry,
                               HeadBlock block, std::size_t hidden, std::mt19937_64& rng);

// Initial flat weights of one head block, as used for theta* and for the
// per-anchor weights of the fixed-anchor baseline.
std::vector<double> init_head_block(const HeadGeometry& geometry, HeadBlock block,
                                    std::mt19937_64& rng);

// [A,2] tensor of encodings, row i = (log_h, log_w).
Tensor encodings_tensor(std::span<const AnchorEncoding> encs);

// Rows of theta for every encoding: [A, D]. `pooled_feature` ([d_feat]) is
// required for the data-dependent variant and rejected otherwise.
Tensor generate_thetas(const GeneratorParams& params, std::span<const AnchorEncoding> encs,
                       const Tensor& pooled_feature = {});

// Single-anchor flat weights [D].
Tensor generate_theta(const GeneratorParams& params, const AnchorEncoding& enc);
Tensor generate_theta_dd(const GeneratorParams& params, const AnchorEncoding& enc,
                         const Tensor& feature);

struct FilterBank {
  Tensor cls_filters;  // [C, Cf, 3, 3]
  Tensor cls_bias;     // [C]
  Tensor reg_filters;  // [4, Cf, 3, 3]
  Tensor reg_bias;     // [4]
};

FilterBank unflatten_bank(const Tensor& theta, const HeadGeometry& geometry);
Tensor flatten_bank(const FilterBank& bank);

FilterBank generate(const GeneratorParams& params, const AnchorEncoding& enc,
                    const HeadGeometry& geometry);
FilterBank generate_dd(const GeneratorParams& params, const AnchorEncoding& enc,
                       const Tensor& feature, const HeadGeometry& geometry);

// Classification weights from one generator, regression from another.
// `feature` is only consulted by data-dependent generators.
FilterBank two_head_generate(const GeneratorParams& cls_params, const GeneratorParams& reg_params,
                             const AnchorEncoding& enc, const HeadGeometry& geometry,
                             const Tensor& feature = {});

// Filters for A anchors stacked along the output channel, anchor-major:
// classification channel a*C + c, regression channel a*4 + k.
struct StackedBank {
  std::size_t num_anchors = 0;
  Tensor cls_filters;  // [A*C, Cf, 3, 3]
  Tensor cls_bias;     // [A*C]
  Tensor reg_filters;  // [A*4, Cf, 3, 3]
  Tensor reg_bias;     // [A*4]
};

// From per-anchor rows: cls_rows [A, cls_block], reg_rows [A, reg_block].
StackedBank stack_bank(const Tensor& cls_rows, const Tensor& reg_rows,
                       const HeadGeometry& geometry);

}  // namespace metaanchor
