// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <tuple>

#include "metaanchor/error.hpp"

namespace metaanchor {

namespace {

struct Ranked {
  const ScoredBox* det;
  std::size_t image;
};

bool ranks_before(const Ranked& a, const Ranked& b) {
  if (a.det->score != b.det->score) return a.det->score > b.det->score;
  const Box& x = a.det->box;
  const Box& y = b.det->box;
  return std::tie(x.x1, x.y1, x.x2, x.y2, a.image) < std::tie(y.x1, y.y1, y.x2, y.y2, b.image);
}

}  // namespace

std::optional<double> average_precision(std::span<const std::vector<ScoredBox>> dets,
                                        std::span<const std::vector<Box>> gts, double iou_thresh) {
  if (dets.size() != gts.size()) {
    throw ShapeError("average_precision: " + std::to_string(dets.size()) + " detection lists for " +
                     std::to_string(gts.size()) + " images");
  }
  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.size();
  if (total_gt == 0) return std::nullopt;

  std::vector<Ranked> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) order.push_back({&d, i});
  }
  std::sort(order.begin(), order.end(), ranks_before);

  std::vector<std::vector<bool>> taken(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& img_gts = gts[order[k].image];
    auto& used = taken[order[k].image];
    double best = iou_thresh;
    int match = -1;
    for (std::size_t j = 0; j < img_gts.size(); ++j) {
      if (used[j]) continue;
      const double v = iou(order[k].det->box, img_gts[j]);
      if (v >= best && (match < 0 || v > best)) {
        best = v;
        match = static_cast<int>(j);
      }
    }
    if (match >= 0) {
      used[static_cast<std::size_t>(match)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  // Precision envelope: best precision at any later rank.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double sum = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < kRecallPoints; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    while (k < recall.size() && recall[k] < r) ++k;
    if (k < recall.size()) sum += precision[k];
  }
  return sum / static_cast<double>(kRecallPoints);
}

EvalResult compute_mmap(std::span<const std::vector<Detection>> dets,
                        std::span<const std::vector<GroundTruthBox>> gts, const EvalOptions& options) {
  if (gts.empty()) throw ValueError("evaluation over an empty dataset");
  if (dets.size() != gts.size()) {
    throw ShapeError("compute_mmap: " + std::to_string(dets.size()) + " detection lists for " +
                     std::to_string(gts.size()) + " images");
  }
  std::map<int, std::pair<std::vector<std::vector<ScoredBox>>, std::vector<std::vector<Box>>>> by_class;
  auto slot = [&](int c) -> auto& {
    auto it = by_class.find(c);
    if (it == by_class.end()) {
      it = by_class
               .emplace(c, std::make_pair(std::vector<std::vector<ScoredBox>>(gts.size()),
                                          std::vector<std::vector<Box>>(gts.size())))
               .first;
    }
    return it->second;
  };
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (const auto& g : gts[i]) slot(g.class_id).second[i].push_back(to_corner(g.geometry()));
    for (const auto& d : dets[i]) slot(d.class_id).first[i].push_back({d.box, d.score});
  }
  if (options.max_dets > 0) {
    for (auto& [c, entry] : by_class) {
      for (auto& list : entry.first) {
        if (list.size() <= options.max_dets) continue;
        std::stable_sort(list.begin(), list.end(),
                         [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
        list.resize(options.max_dets);
      }
    }
  }

  EvalResult res;
  res.num_images = gts.size();
  for (const auto& [c, entry] : by_class) {
    std::array<double, kNumIouThresholds> aps{};
    bool has_gt = true;
    for (std::size_t t = 0; t < kNumIouThresholds; ++t) {
      const auto ap = average_precision(entry.first, entry.second, kIouThresholds[t]);
      if (!ap) {
        has_gt = false;
        break;
      }
      aps[t] = *ap;
    }
    if (has_gt) res.per_class[c] = aps;
  }
  if (res.per_class.empty()) throw ValueError("evaluation set contains no ground truth");
  double total = 0.0, ap50 = 0.0, ap75 = 0.0;
  for (const auto& [c, aps] : res.per_class) {
    total += std::accumulate(aps.begin(), aps.end(), 0.0);
    ap50 += aps[0];
    ap75 += aps[5];
  }
  const double nc = static_cast<double>(res.per_class.size());
  res.mmap = total / (nc * kNumIouThresholds);
  res.ap50 = ap50 / nc;
  res.ap75 = ap75 / nc;
  return res;
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json j;
  j["mmAP"] = mmap;
  j["AP50"] = ap50;
  j["AP75"] = ap75;
  j["num_images"] = num_images;
  j["iou_thresholds"] = kIouThresholds;
  nlohmann::json pc = nlohmann::json::object();
  for (const auto& [c, aps] : per_class) pc[std::to_string(c)] = aps;
  j["per_class"] = pc;
  return j;
}

std::string EvalResult::to_table() const {
  std::ostringstream os;
  char buf[64];
  os << "class ";
  for (double t : kIouThresholds) {
    std::snprintf(buf, sizeof buf, " AP@%.2f", t);
    os << buf;
  }
  os << "\n";
  for (const auto& [c, aps] : per_class) {
    std::snprintf(buf, sizeof buf, "%-6d", c);
    os << buf;
    for (double v : aps) {
      std::snprintf(buf, sizeof buf, " %7.4f", v);
      os << buf;
    }
    os << "\n";
  }
  std::snprintf(buf, sizeof buf, "mmAP %7.4f  AP50 %7.4f  AP75 %7.4f\n", mmap, ap50, ap75);
  os << buf;
  return os.str();
}

}  // namespace metaanchor
