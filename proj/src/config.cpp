// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/config.hpp"

#include <fstream>
#include <set>

#include "metaanchor/error.hpp"

namespace metaanchor {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and rejects any it was not asked about.
class Section {
 public:
  Section(const json& parent, const std::string& name) : name_(name) {
    if (!parent.contains(name)) return;
    node_ = &parent.at(name);
    if (!node_->is_object()) throw ConfigError("'" + name + "' must be an object");
  }
  explicit Section(const json& root) : name_(""), node_(&root) {
    if (!root.is_object()) throw ConfigError("configuration must be a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + path(key) + "': " + e.what());
    }
  }

  void allow(const char* key) { seen_.insert(key); }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [k, v] : node_->items()) {
      if (!seen_.count(k)) throw ConfigError("unknown configuration key '" + path(k) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

template <class F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.mode = mode;
  m.num_classes = num_classes;
  m.feat_channels = feat_channels;
  m.num_levels = num_levels;
  m.tower_depth = tower_depth;
  m.first_level = first_level;
  m.variant = variant;
  m.hidden = hidden;
  m.anchors = build_configuration(anchors.n_scales, anchors.ratios, anchors.base_size, first_level);
  return m;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = train;
  t.assign.thresholds = thresholds;
  t.assign.drop.reset();
  if (drop_boxes.enabled) t.assign.drop = drop_boxes.band;
  return t;
}

DetectOptions ExperimentConfig::detect_options() const {
  DetectOptions d;
  d.predict.score_thresh = eval.score_thresh;
  d.predict.pre_nms_topk = eval.pre_nms_topk;
  d.nms_iou = eval.nms_iou;
  d.max_dets = eval.max_dets;
  return d;
}

SearchOptions ExperimentConfig::search_options() const {
  SearchOptions s;
  s.passes = search.passes;
  s.seed = search.seed;
  s.init = search.init;
  return s;
}

void ExperimentConfig::validate() const {
  as_config_error([&] {
    model_config().validate();
    train_config().validate();
    if (drop_boxes.enabled &&
        !(drop_boxes.band.min_sqrt_hw < drop_boxes.band.max_sqrt_hw &&
          drop_boxes.band.log_ratio_bound > 0.0)) {
      throw ConfigError("drop_boxes band must satisfy min_sqrt_hw < max_sqrt_hw and a positive "
                        "log_ratio_bound");
    }
    if (!(eval.score_thresh >= 0.0 && eval.score_thresh < 1.0)) {
      throw ConfigError("eval.score_thresh must lie in [0,1)");
    }
    if (!(eval.nms_iou > 0.0 && eval.nms_iou <= 1.0)) throw ConfigError("eval.nms_iou must lie in (0,1]");
    if (search.passes == 0) throw ConfigError("search.passes must be positive");
    if (search.subset_size == 0) throw ConfigError("search.subset_size must be positive");
    return 0;
  });
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Section root(j);
  for (const char* s : {"anchors", "thresholds", "generator", "model", "train", "drop_boxes", "data",
                        "eval", "search"}) {
    root.allow(s);
  }
  root.finish();

  Section anchors(j, "anchors");
  anchors.read("n_scales", c.anchors.n_scales);
  anchors.read("ratios", c.anchors.ratios);
  anchors.read("base_size", c.anchors.base_size);
  anchors.finish();

  Section th(j, "thresholds");
  th.read("t_pos", c.thresholds.t_pos);
  th.read("t_neg", c.thresholds.t_neg);
  th.finish();

  Section gen(j, "generator");
  std::string variant = to_string(c.variant);
  gen.read("variant", variant);
  gen.read("m", c.hidden);
  gen.finish();
  c.variant = as_config_error([&] { return parse_generator_variant(variant); });

  Section model(j, "model");
  std::string mode = to_string(c.mode);
  model.read("mode", mode);
  model.read("num_classes", c.num_classes);
  model.read("feat_channels", c.feat_channels);
  model.read("num_levels", c.num_levels);
  model.read("tower_depth", c.tower_depth);
  model.read("first_level", c.first_level);
  model.finish();
  c.mode = as_config_error([&] { return parse_head_mode(mode); });

  Section train(j, "train");
  train.read("lr", c.train.lr);
  train.read("momentum", c.train.momentum);
  train.read("steps", c.train.steps);
  train.read("seed", c.train.seed);
  train.read("augment_delta", c.train.augment_delta);
  train.read("batch_size", c.train.batch_size);
  train.read("focal_alpha", c.train.focal.alpha);
  train.read("focal_gamma", c.train.focal.gamma);
  train.read("smooth_l1_beta", c.train.smooth_l1_beta);
  train.read("force_match", c.train.assign.force_match);
  train.read("warmup_steps", c.train.warmup_steps);
  train.read("lr_decay_at", c.train.lr_decay_at);
  train.read("clip_grad_norm", c.train.clip_grad_norm);
  train.finish();

  Section drop(j, "drop_boxes");
  drop.read("enabled", c.drop_boxes.enabled);
  drop.read("min_sqrt_hw", c.drop_boxes.band.min_sqrt_hw);
  drop.read("max_sqrt_hw", c.drop_boxes.band.max_sqrt_hw);
  drop.read("log_ratio_bound", c.drop_boxes.band.log_ratio_bound);
  drop.finish();

  Section data(j, "data");
  data.read("manifest", c.data.manifest);
  data.read("train_split", c.data.train_split);
  data.read("val_split", c.data.val_split);
  data.read("search_split", c.data.search_split);
  data.finish();

  Section ev(j, "eval");
  ev.read("score_thresh", c.eval.score_thresh);
  ev.read("nms_iou", c.eval.nms_iou);
  ev.read("pre_nms_topk", c.eval.pre_nms_topk);
  ev.read("max_dets", c.eval.max_dets);
  ev.finish();

  Section search(j, "search");
  std::string init = to_string(c.search.init);
  search.read("subset_size", c.search.subset_size);
  search.read("passes", c.search.passes);
  search.read("init", init);
  search.read("inclusive_scale_bounds", c.search.inclusive_scale_bounds);
  search.read("seed", c.search.seed);
  search.finish();
  c.search.init = as_config_error([&] { return parse_search_init(init); });

  c.validate();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return parse_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["anchors"] = {{"n_scales", c.anchors.n_scales},
                  {"ratios", c.anchors.ratios},
                  {"base_size", c.anchors.base_size}};
  j["thresholds"] = {{"t_pos", c.thresholds.t_pos}, {"t_neg", c.thresholds.t_neg}};
  j["generator"] = {{"variant", to_string(c.variant)}, {"m", c.hidden}};
  j["model"] = {{"mode", to_string(c.mode)},
                {"num_classes", c.num_classes},
                {"feat_channels", c.feat_channels},
                {"num_levels", c.num_levels},
                {"tower_depth", c.tower_depth},
                {"first_level", c.first_level}};
  j["train"] = {{"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"steps", c.train.steps},
                {"seed", c.train.seed},
                {"augment_delta", c.train.augment_delta},
                {"batch_size", c.train.batch_size},
                {"focal_alpha", c.train.focal.alpha},
                {"focal_gamma", c.train.focal.gamma},
                {"smooth_l1_beta", c.train.smooth_l1_beta},
                {"force_match", c.train.assign.force_match},
                {"warmup_steps", c.train.warmup_steps},
                {"lr_decay_at", c.train.lr_decay_at},
                {"clip_grad_norm", c.train.clip_grad_norm}};
  j["drop_boxes"] = {{"enabled", c.drop_boxes.enabled},
                     {"min_sqrt_hw", c.drop_boxes.band.min_sqrt_hw},
                     {"max_sqrt_hw", c.drop_boxes.band.max_sqrt_hw},
                     {"log_ratio_bound", c.drop_boxes.band.log_ratio_bound}};
  j["data"] = {{"manifest", c.data.manifest},
               {"train_split", c.data.train_split},
               {"val_split", c.data.val_split},
               {"search_split", c.data.search_split}};
  j["eval"] = {{"score_thresh", c.eval.score_thresh},
               {"nms_iou", c.eval.nms_iou},
               {"pre_nms_topk", c.eval.pre_nms_topk},
               {"max_dets", c.eval.max_dets}};
  j["search"] = {{"subset_size", c.search.subset_size},
                 {"passes", c.search.passes},
                 {"init", to_string(c.search.init)},
                 {"inclusive_scale_bounds", c.search.inclusive_scale_bounds},
                 {"seed", c.search.seed}};
  return j;
}

std::vector<AnchorEncoding> parse_anchor_file(const json& j, const StandardBox& standard) {
  if (!j.is_object()) throw ConfigError("anchor file must be a JSON object");
  std::vector<AnchorEncoding> out;
  if (j.contains("encodings")) {
    try {
      for (const auto& e : j.at("encodings")) {
        const auto v = e.get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("anchor encodings must be [log_h, log_w] pairs");
        out.push_back({v[0], v[1]});
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed anchor encodings: ") + e.what());
    }
  } else {
    AnchorSpec spec;
    Section s(j);
    s.read("n_scales", spec.n_scales);
    s.read("ratios", spec.ratios);
    s.read("base_size", spec.base_size);
    s.finish();
    out = as_config_error([&] {
      const auto cfg = build_configuration(spec.n_scales, spec.ratios, spec.base_size);
      std::vector<AnchorEncoding> encs;
      for (const auto& b : cfg.boxes()) encs.push_back(encode(b, standard));
      return encs;
    });
  }
  if (out.empty()) throw ConfigError("anchor file lists no anchors");
  return out;
}

std::vector<AnchorEncoding> load_anchor_file(const std::filesystem::path& path,
                                             const StandardBox& standard) {
  try {
    return parse_anchor_file(read_json_file(path), standard);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

GenDataSpec parse_gen_data_spec(const json& j) {
  GenDataSpec g;
  Section s(j);
  s.read("image_width", g.scene.image_width);
  s.read("image_height", g.scene.image_height);
  s.read("num_classes", g.scene.num_classes);
  s.read("min_objects", g.scene.min_objects);
  s.read("max_objects", g.scene.max_objects);
  s.read("min_sqrt_hw", g.scene.min_sqrt_hw);
  s.read("max_sqrt_hw", g.scene.max_sqrt_hw);
  s.read("max_abs_log_aspect", g.scene.max_abs_log_aspect);
  s.read("max_overlap_iou", g.scene.max_overlap_iou);
  s.read("noise_amplitude", g.scene.noise_amplitude);
  s.read("seed", g.scene.seed);
  s.read("val_images", g.layout.val_images);
  s.read("search_subset", g.layout.search_subset);
  s.finish();
  as_config_error([&] {
    g.scene.validate();
    return 0;
  });
  return g;
}

json gen_data_spec_to_json(const GenDataSpec& g) {
  return {{"image_width", g.scene.image_width},
          {"image_height", g.scene.image_height},
          {"num_classes", g.scene.num_classes},
          {"min_objects", g.scene.min_objects},
          {"max_objects", g.scene.max_objects},
          {"min_sqrt_hw", g.scene.min_sqrt_hw},
          {"max_sqrt_hw", g.scene.max_sqrt_hw},
          {"max_abs_log_aspect", g.scene.max_abs_log_aspect},
          {"max_overlap_iou", g.scene.max_overlap_iou},
          {"noise_amplitude", g.scene.noise_amplitude},
          {"seed", g.scene.seed},
          {"val_images", g.layout.val_images},
          {"search_subset", g.layout.search_subset}};
}

}  // namespace metaanchor
