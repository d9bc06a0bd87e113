// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "metaanchor/data.hpp"
#include "metaanchor/error.hpp"
#include "metaanchor/render.hpp"
#include "support.hpp"

using namespace metaanchor;
using testing_support::read_file;
using testing_support::TempDir;

namespace fs = std::filesystem;

namespace {

const fs::path kData = METAANCHOR_TEST_DATA;

SceneSpec small_spec(std::uint64_t seed = 5) {
  SceneSpec s;
  s.image_width = 64;
  s.image_height = 48;
  s.min_objects = 1;
  s.max_objects = 3;
  s.min_sqrt_hw = 8.0;
  s.max_sqrt_hw = 30.0;
  s.seed = seed;
  return s;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

Detection det(Box b, double score, int cls, std::size_t anchor) {
  Detection d;
  d.box = b;
  d.score = score;
  d.class_id = cls;
  d.anchor_index = anchor;
  return d;
}

}  // namespace

TEST_CASE("a single forced object gives one record with one box") {
  TempDir dir("gen1");
  SceneSpec s = small_spec();
  s.min_objects = s.max_objects = 1;
  auto m = generate_dataset(s, 1, dir.path());
  auto anns = load_annotations(dir.path() / "train.jsonl", m);
  REQUIRE(anns.size() == 1);
  CHECK(anns[0].boxes.size() == 1);
  CHECK(fs::exists(dir.path() / anns[0].image));
  CHECK(load_annotations(dir.path() / "val.jsonl", m).empty());
}

TEST_CASE("generation is byte-identical under a fixed seed") {
  TempDir a("gen_a"), b("gen_b"), c("gen_c");
  DatasetLayout layout{3, 4};
  generate_dataset(small_spec(9), 12, a.path(), layout);
  generate_dataset(small_spec(9), 12, b.path(), layout);
  generate_dataset(small_spec(10), 12, c.path(), layout);
  const auto fa = files_under(a.path());
  REQUIRE(fa == files_under(b.path()));
  CHECK(fa.size() == 12 + 4);
  bool differs = false;
  for (const auto& f : fa) {
    CHECK(read_file(a.path() / f) == read_file(b.path() / f));
    if (f.extension() == ".ppm") differs |= read_file(a.path() / f) != read_file(c.path() / f);
  }
  CHECK(differs);
}

TEST_CASE("splits partition the generated images") {
  TempDir dir("splits");
  auto m = generate_dataset(small_spec(), 10, dir.path(), {3, 4});
  auto train = load_annotations(dir.path() / "train.jsonl", m);
  auto val = load_annotations(dir.path() / "val.jsonl", m);
  auto sub = load_annotations(dir.path() / "search_subset.jsonl", m);
  CHECK(train.size() == 7);
  CHECK(val.size() == 3);
  REQUIRE(sub.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sub[i].image == train[i].image);
  auto loaded = load_manifest(dir.path());
  CHECK(loaded.image_width == 64);
  CHECK(loaded.splits.size() == 3);
}

TEST_CASE("generate then load preserves every box exactly") {
  TempDir dir("roundtrip");
  const SceneSpec s = small_spec(11);
  generate_dataset(s, 8, dir.path(), {2, 200});
  auto ds = load_dataset(dir.path() / "manifest.json", "val");
  REQUIRE(ds.samples.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto expect = sample_scene_boxes(s, 6 + k);
    CHECK(ds.annotations[k].boxes == expect);
    CHECK(ds.samples[k].boxes == expect);
    CHECK(ds.samples[k].image.shape() == Shape{3, 48, 64});
    const Image img = render_scene(s, 6 + k, expect);
    CHECK(ds.samples[k].image.at(5 * 64 + 7) == doctest::Approx(img.pixel(7, 5)[0] / 255.0));
  }
  CHECK(load_dataset(dir.path(), "train", 3).samples.size() == 3);
  CHECK_THROWS_AS(load_dataset(dir.path(), "nope"), IoError);
}

TEST_CASE("generated scenes respect their SceneSpec") {
  const SceneSpec s = small_spec(12);
  for (std::uint64_t i = 0; i < 300; ++i) {
    const auto boxes = sample_scene_boxes(s, i);
    CHECK(boxes.size() >= 1);
    CHECK(boxes.size() <= 3);
    for (std::size_t a = 0; a < boxes.size(); ++a) {
      const Box c = to_corner(boxes[a].geometry());
      CHECK(c.x1 >= 0.0);
      CHECK(c.y1 >= 0.0);
      CHECK(c.x2 <= 64.0 + 1e-9);
      CHECK(c.y2 <= 48.0 + 1e-9);
      CHECK(std::abs(std::log(boxes[a].w / boxes[a].h)) <= 0.8 + 1e-12);
      CHECK((boxes[a].class_id >= 0 && boxes[a].class_id < 3));
      for (std::size_t b = a + 1; b < boxes.size(); ++b)
        CHECK(iou(boxes[a].geometry(), boxes[b].geometry()) <= 0.3);
    }
  }
  SceneSpec bad = s;
  bad.min_objects = 4;
  CHECK_THROWS_AS(sample_scene_boxes(bad, 0), ValueError);
}

TEST_CASE("size and aspect marginals pass KS at 1%") {
  const SceneSpec s;  // default 256x256, sqrt(hw) log-uniform on [20,160]
  std::vector<double> sizes, aspects;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto boxes = sample_scene_boxes(s, i);
    REQUIRE(!boxes.empty());
    // The first object of a scene is never subject to overlap rejection.
    sizes.push_back(std::sqrt(boxes[0].w * boxes[0].h));
    aspects.push_back(std::log(boxes[0].w / boxes[0].h));
  }
  const double la = std::log(20.0), lb = std::log(160.0);
  auto size_cdf = [&](double x) { return std::clamp((std::log(x) - la) / (lb - la), 0.0, 1.0); };
  auto aspect_cdf = [](double x) { return std::clamp((x + 0.8) / 1.6, 0.0, 1.0); };
  CHECK(testing_support::ks_statistic(sizes, size_cdf) < testing_support::ks_critical_01(1000));
  CHECK(testing_support::ks_statistic(aspects, aspect_cdf) < testing_support::ks_critical_01(1000));
  // Roughly a third of objects land in the [50,100] band.
  const auto in_band = std::count_if(sizes.begin(), sizes.end(), [](double v) { return v > 50 && v < 100; });
  CHECK(in_band > 250);
  CHECK(in_band < 420);
}

TEST_CASE("malformed annotation lines name the line") {
  Manifest info;
  info.image_width = 32;
  info.image_height = 32;
  info.num_classes = 2;
  std::istringstream in(
      "{\"image\": \"a.ppm\", \"boxes\": []}\n"
      "\n"
      "{\"image\": \"b.ppm\", \"boxes\": [{\"cx\": 3, \"cy\"\n");
  try {
    parse_annotations(in, "train.jsonl", info);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("train.jsonl:3") != std::string::npos);
  }
  std::istringstream oob("{\"image\": \"c.ppm\", \"boxes\": [{\"cx\": 30, \"cy\": 5, \"w\": 10, \"h\": 4, \"class\": 0}]}\n");
  try {
    parse_annotations(oob, "val.jsonl", info);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("val.jsonl:1") != std::string::npos);
    CHECK(msg.find("c.ppm") != std::string::npos);
  }
  std::istringstream bad_class("{\"image\": \"d.ppm\", \"boxes\": [{\"cx\": 5, \"cy\": 5, \"w\": 2, \"h\": 2, \"class\": 2}]}\n");
  CHECK_THROWS_AS(parse_annotations(bad_class, "x", info), IoError);
}

TEST_CASE("independently written two-box fixture loads to the expected values") {
  auto ds = load_dataset(kData / "fixture", "train");
  REQUIRE(ds.samples.size() == 1);
  const auto& boxes = ds.samples[0].boxes;
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0] == GroundTruthBox{8.5, 6.25, 10.0, 7.5, 0});
  CHECK(boxes[1] == GroundTruthBox{24.0, 16.0, 15.5, 14.0, 1});
  const Tensor& img = ds.samples[0].image;
  CHECK(img.shape() == Shape{3, 24, 32});
  // Pixel (x, y) holds (8x, 10y, 200) clipped to 255.
  const std::size_t plane = 24 * 32;
  CHECK(img.at(0 * plane + 5 * 32 + 3) == 24.0 / 255.0);
  CHECK(img.at(1 * plane + 5 * 32 + 3) == 50.0 / 255.0);
  CHECK(img.at(2 * plane + 5 * 32 + 3) == 200.0 / 255.0);
  CHECK(img.at(0 * plane + 0 * 32 + 31) == 248.0 / 255.0);
  CHECK(img.at(1 * plane + 23 * 32 + 0) == 230.0 / 255.0);
}

TEST_CASE("PPM round trip and errors") {
  TempDir dir("ppm");
  Image im = Image::blank(5, 3);
  for (std::size_t i = 0; i < im.rgb.size(); ++i) im.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(dir.path() / "a.ppm", im);
  CHECK(read_ppm(dir.path() / "a.ppm") == im);
  const std::string bytes = read_file(dir.path() / "a.ppm");
  std::ofstream(dir.path() / "short.ppm", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  CHECK_THROWS_AS(read_ppm(dir.path() / "short.ppm"), IoError);
  std::ofstream(dir.path() / "p3.ppm", std::ios::binary) << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm(dir.path() / "p3.ppm"), IoError);
  CHECK_THROWS_AS(read_ppm(dir.path() / "missing.ppm"), IoError);
}

TEST_CASE("render_overlay") {
  TempDir dir("render");
  const SceneSpec s = small_spec(13);
  const auto boxes = sample_scene_boxes(s, 0);
  const Image scene = render_scene(s, 0, boxes);

  SUBCASE("no detections copies the image") {
    auto written = render_overlay(scene, {}, {}, dir.path() / "plain.ppm");
    REQUIRE(written.size() == 1);
    CHECK(read_ppm(written[0]) == scene);
  }
  SUBCASE("grouping writes one file per anchor") {
    const std::vector<Detection> dets = {det({2, 12, 20, 30}, 0.91, 0, 0), det({30, 8, 50, 20}, 0.5, 1, 1),
                                         det({4, 14, 22, 32}, 0.7, 0, 1)};
    RenderOptions opt;
    opt.group_by_anchor = true;
    auto written = render_overlay(scene, dets, opt, dir.path() / "panels");
    REQUIRE(written.size() == 2);
    CHECK(written[0].filename() == "anchor_000.ppm");
    CHECK(written[1].filename() == "anchor_001.ppm");
    CHECK(read_ppm(written[0]) != read_ppm(written[1]));
  }
  SUBCASE("outline pixels carry the class color") {
    const std::vector<Detection> dets = {det({10, 10, 30, 30}, 0.5, 1, 0)};
    const Image out = draw_detections(scene, dets);
    const auto col = class_color(1);
    CHECK(std::equal(col.begin(), col.end(), out.pixel(10, 20)));
    CHECK(std::equal(col.begin(), col.end(), out.pixel(20, 10)));
    CHECK(std::equal(scene.pixel(20, 20), scene.pixel(20, 20) + 3, out.pixel(20, 20)));
  }
}

TEST_CASE("render matches the golden fixture") {
  const SceneSpec s = small_spec(21);
  const auto boxes = sample_scene_boxes(s, 0);
  const Image scene = render_scene(s, 0, boxes);
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    dets.push_back(det(to_corner(boxes[i].geometry()), 0.95 - 0.1 * double(i), boxes[i].class_id, 0));
  dets.push_back(det({3, 30, 20, 46}, 0.07, 2, 0));
  const Image out = draw_detections(scene, dets);
  const fs::path golden = kData / "golden_render.ppm";
  if (std::getenv("METAANCHOR_REGENERATE_GOLDEN")) write_ppm(golden, out);
  CHECK(read_ppm(golden) == out);
}
