// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/search.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "metaanchor/error.hpp"

namespace metaanchor {

const char* to_string(SearchInit s) { return s == SearchInit::kEmpty ? "empty" : "best-singleton"; }

SearchInit parse_search_init(const std::string& s) {
  if (s == "empty") return SearchInit::kEmpty;
  if (s == "best-singleton") return SearchInit::kBestSingleton;
  throw ValueError("unknown search init '" + s + "' (expected empty or best-singleton)");
}

SearchTrace greedy_select(std::size_t pool_size, const SubsetScore& score,
                          const SearchOptions& options) {
  if (pool_size == 0) throw ValueError("empty candidate pool");
  if (options.passes == 0) throw ValueError("search needs at least one pass");
  SearchTrace st;
  std::vector<bool> in_set(pool_size, false);
  double current = 0.0;
  if (options.init == SearchInit::kBestSingleton) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < pool_size; ++c) {
      st.singleton_scores.push_back(score({c}));
      if (st.singleton_scores[c] > st.singleton_scores[best]) best = c;
    }
    st.selected.push_back(best);
    in_set[best] = true;
    current = st.singleton_scores[best];
  } else {
    current = score({});
  }
  st.trace.push_back(current);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t pass = 0; pass < options.passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t c : order) {
      if (in_set[c]) continue;
      auto trial = st.selected;
      trial.push_back(c);
      const double s = score(trial);
      if (s > current) {
        current = s;
        st.selected = std::move(trial);
        in_set[c] = true;
      }
      st.trace.push_back(current);
    }
  }
  return st;
}

std::vector<std::vector<std::vector<Detection>>> candidate_detections(
    const Detector& model, std::span<const AnchorEncoding> pool, std::span<const Sample> images,
    const PredictOptions& options) {
  std::vector<std::vector<std::vector<Detection>>> cache(
      pool.size(), std::vector<std::vector<Detection>>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    // One stacked forward over the whole pool; detections carry their pool index.
    for (const Detection& d : predict(model, images[i].image, pool, options)) {
      cache[d.anchor_index][i].push_back(d);
    }
  }
  return cache;
}

double subset_mmap(const std::vector<std::vector<std::vector<Detection>>>& cache,
                   const std::vector<std::size_t>& subset,
                   std::span<const std::vector<GroundTruthBox>> gts, const DetectOptions& detect) {
  std::vector<std::vector<Detection>> dets(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    std::vector<Detection> all;
    for (std::size_t c : subset) all.insert(all.end(), cache[c][i].begin(), cache[c][i].end());
    dets[i] = postprocess(all, detect);
  }
  return compute_mmap(dets, gts).mmap;
}

AnchorSearchResult greedy_search(const Detector& model, std::span<const AnchorEncoding> pool,
                                 std::span<const Sample> eval_set, const DetectOptions& detect,
                                 const SearchOptions& options) {
  if (pool.empty()) throw ValueError("empty candidate pool");
  if (eval_set.empty()) throw ValueError("empty search evaluation set");
  const auto cache = candidate_detections(model, pool, eval_set, detect.predict);
  std::vector<std::vector<GroundTruthBox>> gts;
  for (const auto& s : eval_set) gts.push_back(s.boxes);
  AnchorSearchResult res;
  res.trace = greedy_select(
      pool.size(), [&](const std::vector<std::size_t>& subset) {
        return subset_mmap(cache, subset, gts, detect);
      },
      options);
  for (std::size_t c : res.trace.selected) res.encodings.push_back(pool[c]);
  return res;
}

nlohmann::json AnchorSearchResult::to_json() const {
  nlohmann::json j;
  nlohmann::json encs = nlohmann::json::array();
  for (const auto& e : encodings) encs.push_back({e.log_h, e.log_w});
  j["encodings"] = encs;
  j["selected_indices"] = trace.selected;
  j["trace"] = trace.trace;
  j["score"] = trace.score();
  if (!trace.singleton_scores.empty()) j["singleton_scores"] = trace.singleton_scores;
  return j;
}

}  // namespace metaanchor
