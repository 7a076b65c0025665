#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "boxal/error.hpp"
#include "boxal/geometry.hpp"

namespace boxal {

inline constexpr double kScoreSumTolerance = 1e-6;

/// Ordered, fixed list of foreground category names.
class CategoryCatalog {
 public:
  CategoryCatalog() = default;
  explicit CategoryCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) throw ValidationError("category catalog needs at least 2 categories");
    std::unordered_set<std::string> seen;
    for (const auto& name : names_) {
      if (name.empty()) throw ValidationError("category catalog contains an empty name");
      if (!seen.insert(name).second) {
        throw ValidationError("category catalog contains duplicate name '" + name + "'");
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const CategoryCatalog&, const CategoryCatalog&) = default;

 private:
  std::vector<std::string> names_;
};

/// One predicted box with its probability vector over the foreground categories.
struct Detection {
  BoundingBox box;
  std::vector<double> scores;

  double max_score() const { return *std::max_element(scores.begin(), scores.end()); }

  // First index of the maximum probability.
  std::size_t category() const {
    return static_cast<std::size_t>(
        std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
  }

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Throws ValidationError unless every score is in [0,1] and they sum to 1 (+-1e-6).
/// `expected_size` of 0 skips the length check.
inline void validate_scores(const std::vector<double>& scores, std::size_t expected_size,
                            const std::string& context) {
  if (scores.empty()) throw ValidationError(context + ": empty score vector");
  if (expected_size != 0 && scores.size() != expected_size) {
    throw ValidationError(context + ": score vector has length " + std::to_string(scores.size()) +
                          ", expected " + std::to_string(expected_size));
  }
  double sum = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError(context + ": score outside [0, 1]");
    }
    sum += s;
  }
  if (std::abs(sum - 1.0) > kScoreSumTolerance) {
    throw ValidationError(context + ": scores sum to " + std::to_string(sum) + ", expected 1");
  }
}

/// All forward passes over one image. passes[p] holds the detections of pass p+1.
struct ImagePasses {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<std::vector<Detection>> passes;

  std::size_t detection_count() const {
    std::size_t total = 0;
    for (const auto& pass : passes) total += pass.size();
    return total;
  }

  friend bool operator==(const ImagePasses&, const ImagePasses&) = default;
};

/// Checks image dimensions, box containment and score vectors. `pass_count` and
/// `category_count` of 0 skip the respective check.
inline void validate(const ImagePasses& img, std::size_t pass_count, std::size_t category_count) {
  const std::string ctx = "image '" + img.image_id + "'";
  if (img.image_id.empty()) throw ValidationError("image record with empty image_id");
  if (img.width <= 0 || img.height <= 0) {
    throw ValidationError(ctx + ": width and height must be positive");
  }
  if (pass_count != 0 && img.passes.size() != pass_count) {
    throw ValidationError(ctx + ": passes has " + std::to_string(img.passes.size()) +
                          " entries, expected " + std::to_string(pass_count));
  }
  for (std::size_t p = 0; p < img.passes.size(); ++p) {
    for (std::size_t d = 0; d < img.passes[p].size(); ++d) {
      const Detection& det = img.passes[p][d];
      const std::string where =
          ctx + " pass " + std::to_string(p + 1) + " detection " + std::to_string(d);
      if (det.box.x_min() < 0.0 || det.box.y_min() < 0.0 || det.box.x_max() > img.width ||
          det.box.y_max() > img.height) {
        throw ValidationError(where + ": bbox " + det.box.to_string() + " outside image");
      }
      validate_scores(det.scores, category_count, where + " scores");
    }
  }
}

struct GroundTruthObject {
  BoundingBox box;
  std::size_t category;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct GroundTruthImage {
  std::string image_id;
  std::vector<GroundTruthObject> objects;

  friend bool operator==(const GroundTruthImage&, const GroundTruthImage&) = default;
};

using GroundTruth = std::map<std::string, GroundTruthImage>;

inline void validate(const GroundTruthImage& gt, std::size_t category_count) {
  if (gt.image_id.empty()) throw ValidationError("ground-truth record with empty image_id");
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    if (category_count != 0 && gt.objects[i].category >= category_count) {
      throw ValidationError("ground truth '" + gt.image_id + "' object " + std::to_string(i) +
                            ": category " + std::to_string(gt.objects[i].category) +
                            " out of range (catalog has " + std::to_string(category_count) + ")");
    }
  }
}

/// Category catalog plus the four disjoint image-id partitions of a dataset.
struct DatasetManifest {
  CategoryCatalog catalog;
  std::vector<std::string> initial_training;
  std::vector<std::string> pool;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  std::vector<std::string> all_ids() const {
    std::vector<std::string> ids;
    for (const auto* part : {&initial_training, &pool, &validation, &test}) {
      ids.insert(ids.end(), part->begin(), part->end());
    }
    return ids;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Partitions must be pairwise disjoint. `require_initial` additionally demands a
/// nonempty initial training set; only an empty synthetic world relaxes it.
inline void validate(const DatasetManifest& m, bool require_initial = true) {
  if (m.catalog.size() < 2) throw ValidationError("manifest: category catalog needs >= 2 names");
  if (require_initial && m.initial_training.empty()) {
    throw ValidationError("manifest: initial_training is empty");
  }
  std::map<std::string, const char*> owner;
  const std::pair<const char*, const std::vector<std::string>*> parts[] = {
      {"initial_training", &m.initial_training},
      {"pool", &m.pool},
      {"validation", &m.validation},
      {"test", &m.test}};
  for (const auto& [name, ids] : parts) {
    for (const auto& id : *ids) {
      if (id.empty()) throw ValidationError(std::string("manifest: empty id in ") + name);
      auto [it, inserted] = owner.emplace(id, name);
      if (!inserted) {
        throw ValidationError("manifest: image '" + id + "' appears in both " + it->second +
                              " and " + name);
      }
    }
  }
}

/// The single, consolidated prediction an evaluator consumes.
struct FinalPrediction {
  BoundingBox box;
  std::size_t category;
  double score;

  friend bool operator==(const FinalPrediction&, const FinalPrediction&) = default;
};

inline void validate(const FinalPrediction& p, std::size_t category_count, const std::string& context) {
  if (!(p.score >= 0.0 && p.score <= 1.0)) throw ValidationError(context + ": score outside [0, 1]");
  if (category_count != 0 && p.category >= category_count) {
    throw ValidationError(context + ": category " + std::to_string(p.category) + " out of range");
  }
}

using PredictionsByImage = std::map<std::string, std::vector<FinalPrediction>>;

struct ThresholdConfig {
  double confidence = 0.5;
  double nms_iou = 0.3;
};

/// Per pass: drop detections whose maximum category score is below `confidence`, then
/// greedy NMS keyed on the maximum score. Surviving detections are emitted in
/// descending-score order. The pass count is unchanged.
inline ImagePasses apply_thresholds(const ImagePasses& img, const ThresholdConfig& thresholds = {}) {
  require_unit_interval(thresholds.confidence, "confidence threshold");
  require_unit_interval(thresholds.nms_iou, "nms threshold");
  ImagePasses out{img.image_id, img.width, img.height, {}};
  out.passes.reserve(img.passes.size());
  for (const auto& pass : img.passes) {
    std::vector<Detection> confident;
    for (const auto& det : pass) {
      if (det.max_score() >= thresholds.confidence) confident.push_back(det);
    }
    std::vector<Detection> kept;
    for (std::size_t idx : nms_indices(confident, thresholds.nms_iou, &Detection::box,
                                       [](const Detection& d) { return d.max_score(); })) {
      kept.push_back(confident[idx]);
    }
    out.passes.push_back(std::move(kept));
  }
  return out;
}

}  // namespace boxal
