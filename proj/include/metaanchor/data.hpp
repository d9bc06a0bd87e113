// SPDX-License-Identifier: Apache-2.0
//
// Synthetic shapes scenes: filled rectangles, ellipses and triangles on a
// noisy background, one shape family and fill color per class. Images are
// binary PPM, annotations JSON lines, splits listed in manifest.json.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaanchor/boxes.hpp"
#include "metaanchor/image.hpp"
#include "metaanchor/training.hpp"

namespace metaanchor {

struct SceneSpec {
  std::size_t image_width = 256;
  std::size_t image_height = 256;
  std::size_t num_classes = 3;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  // sqrt(w*h) is log-uniform on [min_sqrt_hw, max_sqrt_hw].
  double min_sqrt_hw = 20.0;
  double max_sqrt_hw = 160.0;
  // ln(w/h) is uniform on [-max_abs_log_aspect, max_abs_log_aspect].
  double max_abs_log_aspect = 0.8;
  // An object is re-positioned while its IoU with an earlier object exceeds
  // this, and left out after kPlacementTries attempts.
  double max_overlap_iou = 0.3;
  // Background is mid gray plus uniform noise of this amplitude (0..255).
  double noise_amplitude = 24.0;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kPlacementTries = 100;

struct DatasetLayout {
  std::size_t val_images = 0;     // the last val_images images form the val split
  std::size_t search_subset = 200;  // first images of the train split
};

struct Manifest {
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::size_t num_classes = 0;
  std::map<std::string, std::string> splits;  // name -> annotation file, relative
  std::filesystem::path root;                  // directory holding manifest.json

  nlohmann::json to_json() const;
};

struct Annotation {
  std::string image;  // relative to the manifest directory
  std::vector<GroundTruthBox> boxes;
};

// Objects of one scene with `index` inside a generated dataset; the scene's
// generator is seeded with spec.seed XOR index.
std::vector<GroundTruthBox> sample_scene_boxes(const SceneSpec& spec, std::uint64_t index);
Image render_scene(const SceneSpec& spec, std::uint64_t index,
                   const std::vector<GroundTruthBox>& boxes);

// Writes images/, train.jsonl, val.jsonl, search_subset.jsonl and
// manifest.json under out_dir.
Manifest generate_dataset(const SceneSpec& spec, std::size_t n_images,
                          const std::filesystem::path& out_dir, const DatasetLayout& layout = {});

Manifest load_manifest(const std::filesystem::path& path);

// One JSON object per nonblank line; errors name `source` and the line.
std::vector<Annotation> parse_annotations(std::istream& in, const std::string& source,
                                          const Manifest& info);
std::vector<Annotation> load_annotations(const std::filesystem::path& path, const Manifest& info);

struct Dataset {
  Manifest manifest;
  std::vector<Annotation> annotations;
  std::vector<Sample> samples;  // images in [0,1], same order as annotations
};

// Loads `split` of the dataset whose manifest is `manifest_path` (a file, or
// a directory containing manifest.json). `limit` > 0 keeps the first images.
Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split,
                     std::size_t limit = 0);

nlohmann::json annotation_to_json(const Annotation& a);

// Fill color of a class.
std::array<std::uint8_t, 3> class_color(int class_id);

}  // namespace metaanchor
