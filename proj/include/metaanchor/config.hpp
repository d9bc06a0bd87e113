// SPDX-License-Identifier: Apache-2.0
//
// JSON experiment configuration. Every section and key is optional and
// defaults as below; unknown keys are rejected with ConfigError.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaanchor/data.hpp"
#include "metaanchor/detector.hpp"
#include "metaanchor/inference.hpp"
#include "metaanchor/search.hpp"
#include "metaanchor/training.hpp"

namespace metaanchor {

struct AnchorSpec {
  int n_scales = 3;
  std::vector<double> ratios = {0.5, 1.0, 2.0};
  double base_size = kDefaultBaseSize;
};

struct DropSpec {
  bool enabled = false;
  DropBand band;
};

struct DataSpec {
  std::string manifest;
  std::string train_split = "train";
  std::string val_split = "val";
  std::string search_split = "search_subset";
};

struct EvalSpec {
  double score_thresh = 0.05;
  double nms_iou = 0.5;
  std::size_t pre_nms_topk = 1000;
  std::size_t max_dets = 0;
};

struct SearchSpec {
  std::size_t subset_size = 200;
  std::size_t passes = 1;
  SearchInit init = SearchInit::kBestSingleton;
  bool inclusive_scale_bounds = false;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  AnchorSpec anchors;
  MatchThresholds thresholds;
  GeneratorVariant variant = GeneratorVariant::kDataIndependent;
  std::size_t hidden = kDefaultHidden;
  HeadMode mode = HeadMode::kMetaAnchor;
  std::size_t num_classes = 3;
  std::size_t feat_channels = 32;
  std::size_t num_levels = 3;
  std::size_t tower_depth = 2;
  int first_level = 2;
  TrainConfig train;  // train.assign is derived from thresholds and drop_boxes
  DropSpec drop_boxes;
  DataSpec data;
  EvalSpec eval;
  SearchSpec search;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  DetectOptions detect_options() const;
  SearchOptions search_options() const;
  void validate() const;  // throws ConfigError
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

// Anchor files hold either {"encodings": [[log_h, log_w], ...]} (other keys
// ignored, so search output can be fed back) or {"n_scales", "ratios",
// "base_size"}, whose boxes are encoded against `standard`.
std::vector<AnchorEncoding> parse_anchor_file(const nlohmann::json& j, const StandardBox& standard);
std::vector<AnchorEncoding> load_anchor_file(const std::filesystem::path& path,
                                             const StandardBox& standard);

struct GenDataSpec {
  SceneSpec scene;
  DatasetLayout layout;
};
GenDataSpec parse_gen_data_spec(const nlohmann::json& j);
nlohmann::json gen_data_spec_to_json(const GenDataSpec& s);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace metaanchor
