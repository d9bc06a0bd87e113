// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/cli.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "metaanchor/data.hpp"
#include "metaanchor/error.hpp"
#include "metaanchor/evaluation.hpp"
#include "metaanchor/image.hpp"
#include "metaanchor/inference.hpp"
#include "metaanchor/render.hpp"
#include "metaanchor/search.hpp"

namespace metaanchor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(p)) throw UsageError(std::string(what) + " '" + p.string() + "' does not exist");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path resolve_manifest(const fs::path& data_arg, const ExperimentConfig& cfg) {
  const fs::path p = data_arg.empty() ? fs::path(cfg.data.manifest) : data_arg;
  if (p.empty()) throw UsageError("no dataset given (--data or data.manifest)");
  return p;
}

}  // namespace

std::string loss_log_csv(const std::vector<StepStats>& log) {
  std::ostringstream os;
  os << "step,loss,cls_loss,reg_loss,lr,positives,dropped_positives,masked_gts\n";
  for (const auto& s : log) {
    os << s.step << "," << fmt(s.loss) << "," << fmt(s.cls_loss) << "," << fmt(s.reg_loss) << ","
       << fmt(s.lr) << "," << s.positives << "," << s.dropped_positives << "," << s.masked_gts
       << "\n";
  }
  return os.str();
}

void save_checkpoint(const fs::path& dir, const Detector& model, const ExperimentConfig& config,
                     const std::vector<StepStats>& log) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  model.params().save(dir / kCheckpointParams);
  write_text(dir / kCheckpointConfig, config_to_json(config).dump(2) + "\n");
  if (!log.empty()) write_text(dir / kLossLog, loss_log_csv(log));
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory '" + dir.string() + "' not found");
  ExperimentConfig cfg = load_config(dir / kCheckpointConfig);
  const ParamStore stored = ParamStore::load(dir / kCheckpointParams);
  return {cfg, Detector::from_params(cfg.model_config(), stored)};
}

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(args.spec, "scene spec file");
    if (args.out.empty()) throw UsageError("missing output directory");
    if (args.n == 0) throw ValueError("empty dataset requested");
    GenDataSpec spec = parse_gen_data_spec(read_json_file(args.spec));
    if (args.seed) spec.scene.seed = *args.seed;
    const Manifest m = generate_dataset(spec.scene, args.n, args.out, spec.layout);
    write_text(args.out / "scene_spec.json", gen_data_spec_to_json(spec).dump(2) + "\n");
    out << "wrote " << args.n << " images to " << m.root.string() << "\n";
    return kExitOk;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(args.config, "config file");
    if (args.out.empty()) throw UsageError("missing output directory");
    ExperimentConfig cfg = load_config(args.config);
    if (args.seed) cfg.train.seed = *args.seed;
    if (args.steps) cfg.train.steps = *args.steps;
    cfg.validate();
    fs::path manifest = resolve_manifest({}, cfg);
    if (manifest.is_relative()) manifest = args.config.parent_path() / manifest;
    cfg.data.manifest = fs::weakly_canonical(manifest).string();

    const Dataset ds = load_dataset(cfg.data.manifest, cfg.data.train_split);
    if (ds.manifest.num_classes != cfg.num_classes) {
      throw ConfigError("model.num_classes (" + std::to_string(cfg.num_classes) +
                        ") differs from the dataset's " + std::to_string(ds.manifest.num_classes));
    }
    Detector model = Detector::create(cfg.model_config(), cfg.train.seed);
    Trainer trainer(model, cfg.train_config());
    const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 20);
    const auto log = trainer.fit(ds.samples, [&](const StepStats& s) {
      if (!args.quiet && (s.step % every == 0 || s.step + 1 == cfg.train.steps)) {
        out << "step " << s.step << " loss " << s.loss << " positives " << s.positives
            << " masked " << s.masked_gts << "\n";
      }
    });
    save_checkpoint(args.out, model, cfg, log);
    out << "checkpoint written to " << args.out.string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(args.checkpoint, "checkpoint directory");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const Dataset ds = load_dataset(resolve_manifest(args.data, ck.config),
                                    args.split.empty() ? ck.config.data.val_split : args.split);
    if (ds.samples.empty()) throw ValueError("evaluation split is empty");
    const auto& standard = ck.model.config().anchors.standard;
    const auto anchors = args.anchors.empty() ? ck.model.config().anchors.encodings()
                                              : load_anchor_file(args.anchors, standard);
    const DetectOptions opts = ck.config.detect_options();
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<GroundTruthBox>> gts;
    for (const auto& s : ds.samples) {
      dets.push_back(detect(ck.model, s.image, anchors, opts));
      gts.push_back(s.boxes);
    }
    const EvalResult res = compute_mmap(dets, gts, {ck.config.eval.max_dets});
    const std::string table = res.to_table();
    out << table;
    if (!args.out.empty()) {
      write_text(args.out, res.to_json().dump(2) + "\n");
      fs::path txt = args.out;
      txt.replace_extension(".txt");
      write_text(txt, table);
    } else {
      out << res.to_json().dump(2) << "\n";
    }
    return kExitOk;
  });
}

int cmd_search(const SearchArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(args.checkpoint, "checkpoint directory");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const ModelConfig& mc = ck.model.config();
    const auto pool = args.pool.empty()
                          ? default_search_pool(ck.config.anchors.base_size, mc.anchors.standard,
                                                ck.config.search.inclusive_scale_bounds)
                          : load_anchor_file(args.pool, mc.anchors.standard);
    const Dataset ds = load_dataset(resolve_manifest(args.data, ck.config),
                                    args.split.empty() ? ck.config.data.search_split : args.split,
                                    ck.config.search.subset_size);
    SearchOptions so = ck.config.search_options();
    if (args.seed) so.seed = *args.seed;
    const AnchorSearchResult res = greedy_search(ck.model, pool, ds.samples, ck.config.detect_options(), so);
    const std::string doc = res.to_json().dump(2) + "\n";
    if (args.out.empty()) {
      out << doc;
    } else {
      write_text(args.out, doc);
      out << "selected " << res.encodings.size() << " of " << pool.size() << " anchors, mmAP "
          << res.trace.score() << "\n";
    }
    return kExitOk;
  });
}

int cmd_render(const RenderArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(args.checkpoint, "checkpoint directory");
    require_file(args.image, "image");
    if (args.out.empty()) throw UsageError("missing output directory");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const auto anchors = args.anchors.empty()
                             ? ck.model.config().anchors.encodings()
                             : load_anchor_file(args.anchors, ck.model.config().anchors.standard);
    const Image img = read_ppm(args.image);
    const DetectOptions opts = ck.config.detect_options();
    const auto raw = predict(ck.model, image_to_tensor(img), anchors, opts.predict);
    std::vector<Detection> shown;
    RenderOptions ro;
    ro.group_by_anchor = args.group_by_anchor;
    if (args.group_by_anchor) {
      // Each panel shows one anchor's own post-NMS detections.
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        std::vector<Detection> mine;
        for (const auto& d : raw) {
          if (d.anchor_index == a) mine.push_back(d);
        }
        const auto kept = postprocess(mine, opts);
        shown.insert(shown.end(), kept.begin(), kept.end());
        ro.anchor_indices.push_back(a);
      }
    } else {
      shown = postprocess(raw, opts);
    }
    const fs::path target = args.group_by_anchor ? args.out : args.out / "overlay.ppm";
    if (!args.group_by_anchor) fs::create_directories(args.out);
    const auto files = render_overlay(img, shown, ro, target);
    json index = json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      json entry = {{"file", files[i].filename().string()}};
      if (args.group_by_anchor) {
        entry["encoding"] = {anchors[i].log_h, anchors[i].log_w};
      }
      index.push_back(entry);
    }
    write_text(args.out / "panels.json", index.dump(2) + "\n");
    out << "wrote " << files.size() << " overlay(s) to " << args.out.string() << "\n";
    return kExitOk;
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MetaAnchor detector toolkit: synthetic data, training, evaluation, anchor search"};
  app.require_subcommand(1);

  GenDataArgs gen;
  std::uint64_t seed = 0;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  g->add_option("--config", gen.spec, "scene spec JSON")->required();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--n", gen.n, "number of images")->required();
  auto* g_seed = g->add_option("--seed", seed, "override the scene seed");

  TrainArgs train;
  std::size_t steps = 0;
  auto* t = app.add_subcommand("train", "train a detector");
  t->add_option("--config", train.config, "experiment config JSON")->required();
  t->add_option("--out", train.out, "checkpoint directory")->required();
  auto* t_seed = t->add_option("--seed", seed, "override train.seed");
  auto* t_steps = t->add_option("--steps", steps, "override train.steps");
  t->add_flag("--quiet", train.quiet, "no progress output");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint (mmAP)");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  e->add_option("--data", ev.data, "dataset manifest");
  e->add_option("--split", ev.split, "dataset split");
  e->add_option("--anchors", ev.anchors, "inference anchor file");
  e->add_option("--out", ev.out, "result JSON path");
  auto* e_seed = e->add_option("--seed", seed, "accepted for uniformity; evaluation draws no randomness");

  SearchArgs se;
  auto* s = app.add_subcommand("search", "greedy inference-time anchor search");
  s->add_option("--checkpoint", se.checkpoint, "checkpoint directory")->required();
  s->add_option("--data", se.data, "dataset manifest");
  s->add_option("--split", se.split, "dataset split");
  s->add_option("--pool", se.pool, "candidate anchor file");
  s->add_option("--out", se.out, "output JSON path");
  auto* s_seed = s->add_option("--seed", seed, "override search.seed");

  RenderArgs re;
  bool flat = false;
  auto* r = app.add_subcommand("render", "draw detections, one panel per anchor");
  r->add_option("--checkpoint", re.checkpoint, "checkpoint directory")->required();
  r->add_option("--image", re.image, "PPM image")->required();
  r->add_option("--anchors", re.anchors, "anchor file");
  r->add_option("--out", re.out, "output directory")->required();
  r->add_flag("--single", flat, "one overlay with all anchors instead of per-anchor panels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << ex.what() << "\n" << app.help();
    return kExitUsage;
  }
  (void)e_seed;
  if (g->parsed()) {
    if (g_seed->count()) gen.seed = seed;
    const int rc = cmd_gen_data(gen, out, err);
    if (rc == kExitUsage) err << g->help();
    return rc;
  }
  if (t->parsed()) {
    if (t_seed->count()) train.seed = seed;
    if (t_steps->count()) train.steps = steps;
    const int rc = cmd_train(train, out, err);
    if (rc == kExitUsage) err << t->help();
    return rc;
  }
  if (e->parsed()) {
    const int rc = cmd_eval(ev, out, err);
    if (rc == kExitUsage) err << e->help();
    return rc;
  }
  if (s->parsed()) {
    if (s_seed->count()) se.seed = seed;
    const int rc = cmd_search(se, out, err);
    if (rc == kExitUsage) err << s->help();
    return rc;
  }
  re.group_by_anchor = !flat;
  const int rc = cmd_render(re, out, err);
  if (rc == kExitUsage) err << r->help();
  return rc;
}

}  // namespace metaanchor
