#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxal/detection.hpp"
#include "boxal/error.hpp"
#include "boxal/geometry.hpp"
#include "boxal/grouping.hpp"

namespace boxal {

/// One prediction per instance set: mean box, mean probability vector, argmax category.
/// Output is in descending-score order, ties by canonical box order.
inline std::vector<FinalPrediction> consolidate(std::span<const InstanceSet> sets) {
  std::vector<FinalPrediction> out;
  out.reserve(sets.size());
  for (const auto& set : sets) {
    if (set.members.empty()) continue;
    const BoundingBox box = mean_box(
        set.members, [](const InstanceMember& m) -> const BoundingBox& { return m.detection.box; });
    std::vector<double> mean(set.members.front().detection.scores.size(), 0.0);
    for (const auto& m : set.members) {
      if (m.detection.scores.size() != mean.size()) {
        throw ContractError("consolidate: members disagree on the category count");
      }
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += m.detection.scores[k];
    }
    for (double& v : mean) v /= static_cast<double>(set.members.size());
    const auto best = std::max_element(mean.begin(), mean.end());
    out.push_back(FinalPrediction{box, static_cast<std::size_t>(best - mean.begin()),
                                  std::clamp(*best, 0.0, 1.0)});
  }
  std::vector<FinalPrediction> sorted;
  sorted.reserve(out.size());
  for (std::size_t idx : score_order(out, &FinalPrediction::box, &FinalPrediction::score)) {
    sorted.push_back(out[idx]);
  }
  return sorted;
}

struct MatchCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    true_positives += o.true_positives;
    false_positives += o.false_positives;
    false_negatives += o.false_negatives;
    return *this;
  }
};

namespace detail {

// Greedy matching of score-sorted predictions to ground-truth objects of the same
// category. Returns, per prediction (in the given order), whether it matched.
inline std::vector<bool> greedy_match(std::span<const FinalPrediction> preds,
                                      std::span<const std::size_t> order,
                                      std::span<const GroundTruthObject> gt, double iou_threshold) {
  std::vector<bool> gt_taken(gt.size(), false);
  std::vector<bool> matched(order.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const FinalPrediction& p = preds[order[i]];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_taken[g] || gt[g].category != p.category) continue;
      const double v = iou(p.box, gt[g].box);
      if (v >= iou_threshold && v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best) {
      gt_taken[*best] = true;
      matched[i] = true;
    }
  }
  return matched;
}

}  // namespace detail

inline MatchCounts match_image(std::span<const FinalPrediction> preds, const GroundTruthImage& gt,
                               double iou_threshold = 0.5) {
  const auto order = score_order(preds, &FinalPrediction::box, &FinalPrediction::score);
  const auto matched = detail::greedy_match(preds, order, gt.objects, iou_threshold);
  MatchCounts c;
  c.true_positives = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), true));
  c.false_positives = preds.size() - c.true_positives;
  c.false_negatives = gt.objects.size() - c.true_positives;
  return c;
}

/// F1 from match counts. Both prediction and ground truth empty reads as a perfect 1.
inline double f1_score(const MatchCounts& c) {
  const std::size_t predicted = c.true_positives + c.false_positives;
  const std::size_t actual = c.true_positives + c.false_negatives;
  if (predicted == 0 && actual == 0) return 1.0;
  if (c.true_positives == 0) return 0.0;
  const double precision = static_cast<double>(c.true_positives) / static_cast<double>(predicted);
  const double recall = static_cast<double>(c.true_positives) / static_cast<double>(actual);
  return 2.0 * precision * recall / (precision + recall);
}

/// Per-image F1 with greedy score-descending matching (same category, IoU >= threshold,
/// highest-IoU unmatched object wins).
inline double f1_image(std::span<const FinalPrediction> preds, const GroundTruthImage& gt,
                       double iou_threshold = 0.5) {
  return f1_score(match_image(preds, gt, iou_threshold));
}

// COCO 2017 defaults: IoU thresholds 0.50:0.05:0.95, 101 recall points, 100 detections.
inline constexpr std::size_t kCocoIouCount = 10;
inline constexpr std::size_t kCocoRecallPoints = 101;
inline constexpr std::size_t kCocoMaxDetections = 100;

// Same values numpy.linspace produces for the reference evaluator.
inline std::array<double, kCocoIouCount> coco_iou_thresholds() {
  std::array<double, kCocoIouCount> t{};
  const double step = (0.95 - 0.5) / 9.0;
  for (std::size_t i = 0; i < kCocoIouCount; ++i) t[i] = 0.5 + static_cast<double>(i) * step;
  t.back() = 0.95;
  return t;
}

inline std::array<double, kCocoRecallPoints> coco_recall_points() {
  std::array<double, kCocoRecallPoints> r{};
  for (std::size_t i = 0; i < kCocoRecallPoints; ++i) r[i] = static_cast<double>(i) * 0.01;
  r.back() = 1.0;
  return r;
}

/// 101-point interpolated AP from detections already sorted by descending score.
/// `is_tp[i]` flags detection i; `gt_count` is the number of ground-truth objects.
inline double interpolated_average_precision(const std::vector<bool>& is_tp, std::size_t gt_count) {
  if (gt_count == 0) throw ContractError("average precision needs at least one ground-truth object");
  const std::size_t n = is_tp.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (is_tp[i] ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(gt_count);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (double r : coco_recall_points()) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / static_cast<double>(kCocoRecallPoints);
}

struct EvalResult {
  // One entry per catalog category; nullopt when the category has no ground truth.
  std::vector<std::optional<double>> category_ap;
  double map = 0.0;
  std::map<std::string, double> image_f1;
  MatchCounts counts;  // at the F1 matching threshold, summed over images
};

struct EvalOptions {
  double f1_iou = 0.5;
  std::size_t max_detections = kCocoMaxDetections;
};

/// COCO-style mAP over the images of `gt`. Predictions for images absent from `gt`
/// are ignored; images without predictions count as empty.
inline EvalResult coco_map(const PredictionsByImage& preds, const GroundTruth& gt,
                           std::size_t category_count, const EvalOptions& options = {}) {
  std::vector<std::size_t> gt_per_category(category_count, 0);
  for (const auto& [id, image] : gt) {
    for (const auto& obj : image.objects) {
      if (obj.category >= category_count) throw ValidationError("ground-truth category out of range");
      ++gt_per_category[obj.category];
    }
  }
  if (std::accumulate(gt_per_category.begin(), gt_per_category.end(), std::size_t{0}) == 0) {
    throw ContractError("mAP is undefined without ground-truth objects");
  }

  // Per image: predictions capped at max_detections, in descending-score order.
  static const std::vector<FinalPrediction> kNone;
  std::map<std::string, std::vector<FinalPrediction>> capped;
  EvalResult result;
  for (const auto& [id, image] : gt) {
    auto it = preds.find(id);
    const auto& list = it == preds.end() ? kNone : it->second;
    std::vector<FinalPrediction> sorted;
    for (std::size_t idx : score_order(list, &FinalPrediction::box, &FinalPrediction::score)) {
      if (sorted.size() == options.max_detections) break;
      if (list[idx].category >= category_count) throw ValidationError("prediction category out of range");
      sorted.push_back(list[idx]);
    }
    const MatchCounts c = match_image(sorted, image, options.f1_iou);
    result.counts += c;
    result.image_f1[id] = f1_score(c);
    capped.emplace(id, std::move(sorted));
  }

  const auto thresholds = coco_iou_thresholds();
  result.category_ap.assign(category_count, std::nullopt);
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (std::size_t cat = 0; cat < category_count; ++cat) {
    if (gt_per_category[cat] == 0) continue;
    double category_sum = 0.0;
    for (double threshold : thresholds) {
      struct Scored {
        double score;
        bool tp;
      };
      std::vector<Scored> all;
      for (const auto& [id, image] : gt) {
        const auto& list = capped.at(id);
        std::vector<FinalPrediction> dets;
        for (const auto& p : list) {
          if (p.category == cat) dets.push_back(p);
        }
        std::vector<GroundTruthObject> objs;
        for (const auto& o : image.objects) {
          if (o.category == cat) objs.push_back(o);
        }
        std::vector<std::size_t> order(dets.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto matched = detail::greedy_match(dets, order, objs, threshold);
        for (std::size_t i = 0; i < dets.size(); ++i) all.push_back({dets[i].score, matched[i]});
      }
      std::stable_sort(all.begin(), all.end(),
                       [](const Scored& a, const Scored& b) { return a.score > b.score; });
      std::vector<bool> flags(all.size());
      for (std::size_t i = 0; i < all.size(); ++i) flags[i] = all[i].tp;
      category_sum += interpolated_average_precision(flags, gt_per_category[cat]);
    }
    const double ap = category_sum / static_cast<double>(thresholds.size());
    result.category_ap[cat] = ap;
    ap_sum += ap;
    ++ap_count;
  }
  result.map = ap_sum / static_cast<double>(ap_count);
  return result;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace boxal
