// SPDX-License-Identifier: Apache-2.0
//
// Greedy inference-time anchor search: visit candidates in random order and
// keep one only if the evaluation score of the combined set strictly rises.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metaanchor/detector.hpp"
#include "metaanchor/evaluation.hpp"
#include "metaanchor/inference.hpp"
#include "metaanchor/training.hpp"

namespace metaanchor {

enum class SearchInit {
  kEmpty,          // start from the empty set
  kBestSingleton,  // score every candidate alone, start from the best
};

const char* to_string(SearchInit s);
SearchInit parse_search_init(const std::string& s);

struct SearchOptions {
  std::size_t passes = 1;
  std::uint64_t seed = 0;
  SearchInit init = SearchInit::kBestSingleton;
};

struct SearchTrace {
  std::vector<std::size_t> selected;  // pool indices, in acceptance order
  // Score after initialization, then after every visited candidate.
  std::vector<double> trace;
  // Filled when init is kBestSingleton.
  std::vector<double> singleton_scores;
  double score() const { return trace.empty() ? 0.0 : trace.back(); }
};

using SubsetScore = std::function<double(const std::vector<std::size_t>&)>;

SearchTrace greedy_select(std::size_t pool_size, const SubsetScore& score,
                          const SearchOptions& options = {});

struct AnchorSearchResult {
  std::vector<AnchorEncoding> encodings;
  SearchTrace trace;
  nlohmann::json to_json() const;
};

// Detections are computed once per candidate; each step only redoes NMS on
// the union and the metric (mmAP).
AnchorSearchResult greedy_search(const Detector& model, std::span<const AnchorEncoding> pool,
                                 std::span<const Sample> eval_set, const DetectOptions& detect,
                                 const SearchOptions& options = {});

// Raw (pre-NMS) detections for every candidate: result[c][i] for image i.
std::vector<std::vector<std::vector<Detection>>> candidate_detections(
    const Detector& model, std::span<const AnchorEncoding> pool, std::span<const Sample> images,
    const PredictOptions& options);

// mmAP of the union of the given candidates' cached detections.
double subset_mmap(const std::vector<std::vector<std::vector<Detection>>>& cache,
                   const std::vector<std::size_t>& subset,
                   std::span<const std::vector<GroundTruthBox>> gts, const DetectOptions& detect);

}  // namespace metaanchor
