// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"
#include "metaanchor/cli.hpp"
#include "metaanchor/image.hpp"
#include "support.hpp"

using namespace metaanchor;
using nlohmann::json;
using testing_support::read_file;
using testing_support::TempDir;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "metaanchor");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// A dataset, a config and one trained checkpoint shared by the cases below.
struct Workspace {
  TempDir dir{"cli"};
  fs::path root = dir.path();
  fs::path data = root / "data";
  fs::path config = root / "exp.json";
  fs::path ckpt = root / "ck";
  int train_code = -1;

  Workspace() {
    write(root / "scene.json", R"({"image_width": 64, "image_height": 64, "num_classes": 2,
      "min_objects": 1, "max_objects": 2, "min_sqrt_hw": 10, "max_sqrt_hw": 30,
      "seed": 3, "val_images": 4, "search_subset": 6})");
    REQUIRE(cli({"gen-data", "--config", (root / "scene.json").string(), "--out", data.string(), "--n", "16"}).code == 0);
    write(config, R"({
      "anchors": {"n_scales": 1, "ratios": [0.5, 1, 2], "base_size": 14},
      "generator": {"m": 4},
      "model": {"num_classes": 2, "feat_channels": 4, "tower_depth": 1},
      "train": {"steps": 100, "batch_size": 2, "warmup_steps": 5, "seed": 1},
      "eval": {"score_thresh": 0.02},
      "search": {"subset_size": 6},
      "data": {"manifest": "data"}})");
    train_code = cli({"train", "--config", config.string(), "--out", ckpt.string(), "--quiet"}).code;
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("gen-data exit codes") {
  TempDir dir("gen");
  write(dir.path() / "s.json", R"({"image_width": 32, "image_height": 32})");
  auto r = cli({"gen-data", "--config", (dir.path() / "s.json").string(), "--out", (dir.path() / "d").string(), "--n", "3"});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path() / "d" / "manifest.json"));
  CHECK(fs::exists(dir.path() / "d" / "scene_spec.json"));

  r = cli({"gen-data", "--config", (dir.path() / "absent.json").string(), "--out", (dir.path() / "e").string(), "--n", "3"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--config") != std::string::npos);

  r = cli({"gen-data", "--config", (dir.path() / "s.json").string(), "--out", (dir.path() / "f").string(), "--n", "0"});
  CHECK(r.code != 0);
  CHECK(r.err.find("empty dataset requested") != std::string::npos);

  write(dir.path() / "bad.json", R"({"image_width": 32, "colour": 1})");
  r = cli({"gen-data", "--config", (dir.path() / "bad.json").string(), "--out", (dir.path() / "g").string(), "--n", "3"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("colour") != std::string::npos);

  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"gen-data", "--out", "x"}).code == kExitUsage);
}

TEST_CASE("the installed binary reports exit codes to the shell") {
  TempDir dir("bin");
  const std::string bin = METAANCHOR_CLI;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status(bin + " --help") == 0);
  CHECK(status(bin + " gen-data --config " + (dir.path() / "none.json").string() + " --out x --n 2") == 2);
  write(dir.path() / "c.json", R"({"anchors": {"n_scales": 0}})");
  CHECK(status(bin + " train --config " + (dir.path() / "c.json").string() + " --out " + (dir.path() / "o").string()) == 3);
}

TEST_CASE("train writes a checkpoint and a falling loss log") {
  auto& w = ws();
  REQUIRE(w.train_code == 0);
  CHECK(fs::exists(w.ckpt / "checkpoint.manc"));
  CHECK(fs::exists(w.ckpt / "config.json"));
  const auto rows = csv_rows(read_file(w.ckpt / "loss_log.csv"));
  REQUIRE(rows.size() == 101);
  CHECK(rows[0][0] == "step");
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += std::stod(rows[1 + i][1]);
    last += std::stod(rows[rows.size() - 1 - i][1]);
  }
  CHECK(last < first);
  // The effective config is echoed with an absolute manifest path.
  const json eff = json::parse(read_file(w.ckpt / "config.json"));
  CHECK(fs::path(eff.at("data").at("manifest").get<std::string>()).is_absolute());
  CHECK(eff.at("train").at("steps") == 100);
}

TEST_CASE("train config errors and overrides") {
  auto& w = ws();
  write(w.root / "unknown.json", R"({"train": {"stepz": 3}, "data": {"manifest": "data"}})");
  auto r = cli({"train", "--config", (w.root / "unknown.json").string(), "--out", (w.root / "u").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("stepz") != std::string::npos);

  // --seed and --steps override the file; identical runs are byte-identical.
  auto a = cli({"train", "--config", w.config.string(), "--out", (w.root / "s1").string(), "--seed", "8", "--steps", "6", "--quiet"});
  auto b = cli({"train", "--config", w.config.string(), "--out", (w.root / "s2").string(), "--seed", "8", "--steps", "6", "--quiet"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(read_file(w.root / "s1" / "checkpoint.manc") == read_file(w.root / "s2" / "checkpoint.manc"));
  CHECK(read_file(w.root / "s1" / "loss_log.csv") == read_file(w.root / "s2" / "loss_log.csv"));
  const json eff = json::parse(read_file(w.root / "s1" / "config.json"));
  CHECK(eff.at("train").at("seed") == 8);
  CHECK(csv_rows(read_file(w.root / "s1" / "loss_log.csv")).size() == 7);
}

TEST_CASE("drop band is recorded in the loss log") {
  auto& w = ws();
  json cfg = json::parse(read_file(w.config));
  cfg["train"]["steps"] = 5;
  cfg["drop_boxes"] = {{"enabled", true}, {"min_sqrt_hw", 5.0}, {"max_sqrt_hw", 40.0}};
  write(w.root / "drop.json", cfg.dump());
  REQUIRE(cli({"train", "--config", (w.root / "drop.json").string(), "--out", (w.root / "dk").string(), "--quiet"}).code == 0);
  const auto rows = csv_rows(read_file(w.root / "dk" / "loss_log.csv"));
  REQUIRE(rows[0].back() == "masked_gts");
  std::size_t masked = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) masked += std::stoul(rows[i].back());
  CHECK(masked > 0);
}

TEST_CASE("eval results are deterministic and anchor files change them") {
  auto& w = ws();
  REQUIRE(w.train_code == 0);
  auto a = cli({"eval", "--checkpoint", w.ckpt.string(), "--out", (w.root / "e1.json").string()});
  auto b = cli({"eval", "--checkpoint", w.ckpt.string(), "--out", (w.root / "e2.json").string()});
  REQUIRE(a.code == 0);
  CHECK(b.code == 0);
  CHECK(read_file(w.root / "e1.json") == read_file(w.root / "e2.json"));
  CHECK(fs::exists(w.root / "e1.txt"));
  const json res = json::parse(read_file(w.root / "e1.json"));
  CHECK(res.at("num_images") == 4);

  write(w.root / "a3.json", R"({"n_scales": 3, "ratios": [0.5, 1, 2], "base_size": 14})");
  write(w.root / "a9.json", R"({"n_scales": 9, "ratios": [0.2, 0.25, 0.333, 0.5, 1, 2, 3, 4, 5], "base_size": 14})");
  CHECK(cli({"eval", "--checkpoint", w.ckpt.string(), "--anchors", (w.root / "a3.json").string(), "--out", (w.root / "r3.json").string()}).code == 0);
  CHECK(cli({"eval", "--checkpoint", w.ckpt.string(), "--anchors", (w.root / "a9.json").string(), "--out", (w.root / "r9.json").string()}).code == 0);
  CHECK(fs::exists(w.root / "r3.json"));
  CHECK(fs::exists(w.root / "r9.json"));

  CHECK(cli({"eval", "--checkpoint", (w.root / "nothing").string()}).code != 0);
  write(w.root / "empty.json", R"({"encodings": []})");
  CHECK(cli({"eval", "--checkpoint", w.ckpt.string(), "--anchors", (w.root / "empty.json").string()}).code == kExitConfig);
}

TEST_CASE("search emits a reusable anchor file with a rising trace") {
  auto& w = ws();
  REQUIRE(w.train_code == 0);
  auto r = cli({"search", "--checkpoint", w.ckpt.string(), "--out", (w.root / "sel.json").string(), "--seed", "4"});
  REQUIRE(r.code == 0);
  const json sel = json::parse(read_file(w.root / "sel.json"));
  const auto trace = sel.at("trace").get<std::vector<double>>();
  CHECK(trace.size() == 161);  // best singleton, then the other 160 candidates
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1]);
  CHECK(sel.at("singleton_scores").size() == 161);
  CHECK(!sel.at("encodings").empty());
  // The output is itself an anchor file.
  CHECK(cli({"eval", "--checkpoint", w.ckpt.string(), "--anchors", (w.root / "sel.json").string()}).code == 0);

  auto again = cli({"search", "--checkpoint", w.ckpt.string(), "--out", (w.root / "sel2.json").string(), "--seed", "4"});
  CHECK(read_file(w.root / "sel.json") == read_file(w.root / "sel2.json"));

  write(w.root / "pool.json", R"({"encodings": [[0, 0], [0.3, -0.3], [-0.3, 0.3]]})");
  r = cli({"search", "--checkpoint", w.ckpt.string(), "--pool", (w.root / "pool.json").string()});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out).at("trace").size() == 3);
  write(w.root / "nopool.json", R"({"encodings": []})");
  CHECK(cli({"search", "--checkpoint", w.ckpt.string(), "--pool", (w.root / "nopool.json").string()}).code != 0);
}

TEST_CASE("render writes one panel per anchor") {
  auto& w = ws();
  REQUIRE(w.train_code == 0);
  const std::string img = (w.data / "images" / "000000.ppm").string();
  write(w.root / "five.json", R"({"n_scales": 1, "ratios": [0.333, 0.5, 1, 2, 3], "base_size": 14})");
  auto r = cli({"render", "--checkpoint", w.ckpt.string(), "--image", img, "--anchors", (w.root / "five.json").string(),
                "--out", (w.root / "panels").string()});
  REQUIRE(r.code == 0);
  std::size_t ppm = 0;
  for (const auto& e : fs::directory_iterator(w.root / "panels")) ppm += e.path().extension() == ".ppm";
  CHECK(ppm == 5);
  CHECK(json::parse(read_file(w.root / "panels" / "panels.json")).size() == 5);
  CHECK(read_ppm(w.root / "panels" / "anchor_000.ppm").width == 64);

  r = cli({"render", "--checkpoint", w.ckpt.string(), "--image", img, "--out", (w.root / "flat").string(), "--single"});
  CHECK(r.code == 0);
  CHECK(fs::exists(w.root / "flat" / "overlay.ppm"));

  write(w.root / "notppm.ppm", "hello");
  CHECK(cli({"render", "--checkpoint", w.ckpt.string(), "--image", (w.root / "notppm.ppm").string(), "--out",
             (w.root / "bad").string()}).code != 0);
  write(w.root / "noanchors.json", R"({"encodings": []})");
  CHECK(cli({"render", "--checkpoint", w.ckpt.string(), "--image", img, "--anchors", (w.root / "noanchors.json").string(),
             "--out", (w.root / "bad2").string()}).code != 0);
}
