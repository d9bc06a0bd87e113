// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the metaanchor tool as plain functions. Each returns a
// process exit status and reports problems on `err`.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "metaanchor/config.hpp"
#include "metaanchor/detector.hpp"
#include "metaanchor/training.hpp"

namespace metaanchor {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitRuntime = 4,
};

inline constexpr const char* kCheckpointParams = "checkpoint.manc";
inline constexpr const char* kCheckpointConfig = "config.json";
inline constexpr const char* kLossLog = "loss_log.csv";

struct Checkpoint {
  ExperimentConfig config;
  Detector model;
};

// `dir` receives checkpoint.manc, config.json and, when `log` is nonempty,
// loss_log.csv.
void save_checkpoint(const std::filesystem::path& dir, const Detector& model,
                     const ExperimentConfig& config, const std::vector<StepStats>& log = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string loss_log_csv(const std::vector<StepStats>& log);

struct GenDataArgs {
  std::filesystem::path spec;
  std::filesystem::path out;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool quiet = false;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;  // manifest; empty uses the checkpoint's config
  std::string split;           // empty uses data.val_split
  std::filesystem::path anchors;  // empty evaluates the training anchors
  std::filesystem::path out;      // JSON result; the table goes next to it as .txt
};

struct SearchArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split;
  std::filesystem::path pool;  // empty uses the default search pool
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct RenderArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path anchors;
  std::filesystem::path out;
  bool group_by_anchor = true;
};

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_search(const SearchArgs& args, std::ostream& out, std::ostream& err);
int cmd_render(const RenderArgs& args, std::ostream& out, std::ostream& err);

// Parses argv (CLI11) and dispatches.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace metaanchor
