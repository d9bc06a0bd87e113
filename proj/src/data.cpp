// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "metaanchor/error.hpp"

namespace metaanchor {

using nlohmann::json;

void SceneSpec::validate() const {
  if (image_width == 0 || image_height == 0) throw ValueError("scene image size must be positive");
  if (num_classes == 0) throw ValueError("scene needs at least one class");
  if (min_objects > max_objects) throw ValueError("min_objects exceeds max_objects");
  if (!(min_sqrt_hw > 0.0 && min_sqrt_hw <= max_sqrt_hw)) {
    throw ValueError("object size range must satisfy 0 < min_sqrt_hw <= max_sqrt_hw");
  }
  if (!(max_abs_log_aspect >= 0.0)) throw ValueError("max_abs_log_aspect must be >= 0");
  // A square of the minimum size must fit, or rejection sampling may never end.
  if (min_sqrt_hw > static_cast<double>(std::min(image_width, image_height))) {
    throw ValueError("objects of the minimum size do not fit in the image");
  }
  if (!(max_overlap_iou >= 0.0 && max_overlap_iou <= 1.0)) {
    throw ValueError("max_overlap_iou must lie in [0,1]");
  }
  if (!(noise_amplitude >= 0.0 && noise_amplitude <= 127.0)) {
    throw ValueError("noise_amplitude must lie in [0,127]");
  }
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette = {{
      {230, 60, 50},
      {50, 200, 70},
      {60, 90, 235},
      {235, 215, 40},
      {200, 60, 210},
      {40, 210, 215},
  }};
  const auto n = static_cast<int>(kPalette.size());
  return kPalette[static_cast<std::size_t>(((class_id % n) + n) % n)];
}

std::vector<GroundTruthBox> sample_scene_boxes(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ index);
  const double W = static_cast<double>(spec.image_width);
  const double H = static_cast<double>(spec.image_height);
  std::uniform_int_distribution<std::size_t> count(spec.min_objects, spec.max_objects);
  std::uniform_real_distribution<double> log_size(std::log(spec.min_sqrt_hw),
                                                  std::log(spec.max_sqrt_hw));
  std::uniform_real_distribution<double> log_aspect(-spec.max_abs_log_aspect,
                                                    spec.max_abs_log_aspect);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(spec.num_classes) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = count(rng);
  std::vector<GroundTruthBox> boxes;
  for (std::size_t k = 0; k < n; ++k) {
    double w = 0.0, h = 0.0;
    do {
      const double s = std::exp(log_size(rng));
      const double a = log_aspect(rng);
      w = s * std::exp(0.5 * a);
      h = s * std::exp(-0.5 * a);
    } while (w > W || h > H);
    const int c = cls(rng);
    for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
      GroundTruthBox g{0.5 * w + unit(rng) * (W - w), 0.5 * h + unit(rng) * (H - h), w, h, c};
      bool ok = true;
      for (const auto& prev : boxes) {
        if (iou(prev.geometry(), g.geometry()) > spec.max_overlap_iou) {
          ok = false;
          break;
        }
      }
      if (ok) {
        boxes.push_back(g);
        break;
      }
    }
  }
  return boxes;
}

namespace {

bool inside_shape(int class_id, const Box& b, double px, double py) {
  if (px < b.x1 || px > b.x2 || py < b.y1 || py > b.y2) return false;
  const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
  const double hw = 0.5 * b.width(), hh = 0.5 * b.height();
  switch (class_id % 3) {
    case 0:
      return true;
    case 1: {
      const double u = (px - cx) / hw, v = (py - cy) / hh;
      return u * u + v * v <= 1.0;
    }
    default:
      // apex at top center, base along the bottom edge
      return std::abs(px - cx) <= hw * (py - b.y1) / b.height();
  }
}

}  // namespace

Image render_scene(const SceneSpec& spec, std::uint64_t index,
                   const std::vector<GroundTruthBox>& boxes) {
  Image img = Image::blank(spec.image_width, spec.image_height);
  // Separate stream from the layout draws so pixels never perturb boxes.
  std::mt19937_64 rng((spec.seed ^ index) + 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> noise(-spec.noise_amplitude, spec.noise_amplitude);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(std::lround(110.0 + noise(rng)));
  for (const auto& g : boxes) {
    const Box b = to_corner(g.geometry());
    const auto color = class_color(g.class_id);
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.x1)));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.y1)));
    const auto x1 = std::min(img.width, static_cast<std::size_t>(std::ceil(b.x2)));
    const auto y1 = std::min(img.height, static_cast<std::size_t>(std::ceil(b.y2)));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        if (!inside_shape(g.class_id, b, x + 0.5, y + 0.5)) continue;
        std::uint8_t* p = img.pixel(x, y);
        for (int c = 0; c < 3; ++c) p[c] = color[static_cast<std::size_t>(c)];
      }
    }
  }
  return img;
}

json annotation_to_json(const Annotation& a) {
  json boxes = json::array();
  for (const auto& g : a.boxes) {
    boxes.push_back({{"cx", g.cx}, {"cy", g.cy}, {"w", g.w}, {"h", g.h}, {"class", g.class_id}});
  }
  return {{"image", a.image}, {"boxes", boxes}};
}

json Manifest::to_json() const {
  return {{"image_width", image_width},
          {"image_height", image_height},
          {"num_classes", num_classes},
          {"splits", splits}};
}

namespace {

void write_jsonl(const std::filesystem::path& path, const std::vector<Annotation>& anns) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& a : anns) out << annotation_to_json(a).dump() << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

Manifest generate_dataset(const SceneSpec& spec, std::size_t n_images,
                          const std::filesystem::path& out_dir, const DatasetLayout& layout) {
  spec.validate();
  if (n_images == 0) throw ValueError("empty dataset requested");
  if (layout.val_images >= n_images) {
    throw ValueError("val split (" + std::to_string(layout.val_images) +
                     " images) leaves no training images out of " + std::to_string(n_images));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<Annotation> anns(n_images);
  // Scenes are independent given their derived seeds.
  std::vector<std::string> errors(n_images);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n_images; ++i) {
    try {
      char name[32];
      std::snprintf(name, sizeof name, "images/%06zu.ppm", i);
      anns[i].image = name;
      anns[i].boxes = sample_scene_boxes(spec, i);
      write_ppm(out_dir / name, render_scene(spec, i, anns[i].boxes));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }

  const std::size_t n_train = n_images - layout.val_images;
  const std::vector<Annotation> train(anns.begin(), anns.begin() + static_cast<long>(n_train));
  const std::vector<Annotation> val(anns.begin() + static_cast<long>(n_train), anns.end());
  const std::vector<Annotation> subset(
      train.begin(), train.begin() + static_cast<long>(std::min(layout.search_subset, n_train)));
  write_jsonl(out_dir / "train.jsonl", train);
  write_jsonl(out_dir / "val.jsonl", val);
  write_jsonl(out_dir / "search_subset.jsonl", subset);

  Manifest m;
  m.image_width = spec.image_width;
  m.image_height = spec.image_height;
  m.num_classes = spec.num_classes;
  m.splits = {{"train", "train.jsonl"}, {"val", "val.jsonl"}, {"search_subset", "search_subset.jsonl"}};
  m.root = out_dir;
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << m.to_json().dump(2) << "\n";
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(file)) file /= "manifest.json";
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  Manifest m;
  try {
    const json j = json::parse(in);
    m.image_width = j.at("image_width").get<std::size_t>();
    m.image_height = j.at("image_height").get<std::size_t>();
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.splits = j.at("splits").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": malformed manifest: " + e.what());
  }
  if (m.image_width == 0 || m.image_height == 0 || m.num_classes == 0) {
    throw IoError(file.string() + ": manifest sizes must be positive");
  }
  m.root = file.parent_path();
  return m;
}

std::vector<Annotation> parse_annotations(std::istream& in, const std::string& source,
                                          const Manifest& info) {
  std::vector<Annotation> out;
  std::string line;
  std::size_t lineno = 0;
  const double W = static_cast<double>(info.image_width);
  const double H = static_cast<double>(info.image_height);
  constexpr double kSlack = 1e-9;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    Annotation a;
    try {
      const json j = json::parse(line);
      a.image = j.at("image").get<std::string>();
      for (const auto& b : j.at("boxes")) {
        GroundTruthBox g;
        g.cx = b.at("cx").get<double>();
        g.cy = b.at("cy").get<double>();
        g.w = b.at("w").get<double>();
        g.h = b.at("h").get<double>();
        g.class_id = b.at("class").get<int>();
        a.boxes.push_back(g);
      }
    } catch (const json::exception& e) {
      throw IoError(where + ": malformed annotation record: " + e.what());
    }
    for (const auto& g : a.boxes) {
      if (!(g.w > 0.0 && g.h > 0.0)) {
        throw IoError(where + ": box with nonpositive size in " + a.image);
      }
      if (g.class_id < 0 || static_cast<std::size_t>(g.class_id) >= info.num_classes) {
        throw IoError(where + ": class " + std::to_string(g.class_id) + " out of range in " +
                      a.image);
      }
      const Box c = to_corner(g.geometry());
      if (c.x1 < -kSlack || c.y1 < -kSlack || c.x2 > W + kSlack || c.y2 > H + kSlack) {
        throw IoError(where + ": box outside the image bounds in " + a.image);
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path, const Manifest& info) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path.string());
  return parse_annotations(in, path.string(), info);
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split,
                     std::size_t limit) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const auto it = ds.manifest.splits.find(split);
  if (it == ds.manifest.splits.end()) throw IoError("dataset has no split '" + split + "'");
  ds.annotations = load_annotations(ds.manifest.root / it->second, ds.manifest);
  if (limit > 0 && ds.annotations.size() > limit) ds.annotations.resize(limit);
  for (const auto& a : ds.annotations) {
    const auto path = ds.manifest.root / a.image;
    const Image img = read_ppm(path);
    if (img.width != ds.manifest.image_width || img.height != ds.manifest.image_height) {
      throw IoError(path.string() + ": size does not match the manifest");
    }
    ds.samples.push_back({image_to_tensor(img), a.boxes});
  }
  return ds;
}

}  // namespace metaanchor
