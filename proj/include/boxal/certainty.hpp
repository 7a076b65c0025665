#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "boxal/detection.hpp"
#include "boxal/error.hpp"
#include "boxal/geometry.hpp"
#include "boxal/grouping.hpp"

namespace boxal {

/// Per-instance-set certainties; combined = semantic * spatial * occurrence.
struct CertaintyTriple {
  double semantic = 1.0;
  double spatial = 1.0;
  double occurrence = 1.0;
  double combined = 1.0;
};

/// Shannon entropy with 0*log(0) := 0, in the given logarithm base (e by default).
inline double entropy(std::span<const double> probabilities, double base = std::numbers::e) {
  double h = 0.0;
  for (double k : probabilities) {
    if (k > 0.0) h -= k * std::log(k);
  }
  return h / std::log(base);
}

/// H(K) / H_max with H_max = log(kappa), the entropy of the uniform vector.
inline double normalized_entropy(std::span<const double> probabilities, double base = std::numbers::e) {
  const std::size_t kappa = probabilities.size();
  if (kappa < 2) throw ContractError("normalized entropy needs at least 2 categories");
  const double h_max = std::log(static_cast<double>(kappa)) / std::log(base);
  return std::clamp(entropy(probabilities, base) / h_max, 0.0, 1.0);
}

/// Mean over members of (1 - normalized entropy of the member's probability vector).
inline double semantic_certainty(const InstanceSet& set, std::size_t category_count) {
  if (category_count < 2) throw ContractError("semantic certainty needs at least 2 categories");
  if (set.members.empty()) throw ContractError("semantic certainty of an empty instance set");
  double sum = 0.0;
  for (const auto& m : set.members) {
    if (m.detection.scores.size() != category_count) {
      throw ContractError("score vector length does not match the category count");
    }
    sum += 1.0 - normalized_entropy(m.detection.scores);
  }
  return sum / static_cast<double>(set.members.size());
}

/// Mean IoU between each member box and the set's mean box.
inline double spatial_certainty(const InstanceSet& set) {
  if (set.members.empty()) throw ContractError("spatial certainty of an empty instance set");
  const BoundingBox mean = mean_box(
      set.members, [](const InstanceMember& m) -> const BoundingBox& { return m.detection.box; });
  double sum = 0.0;
  for (const auto& m : set.members) sum += iou(mean, m.detection.box);
  return sum / static_cast<double>(set.members.size());
}

/// Fraction of the forward passes that contributed a member: r / n.
inline double occurrence_certainty(const InstanceSet& set, std::size_t pass_count) {
  const std::size_t r = set.members.size();
  if (r == 0 || pass_count == 0 || r > pass_count) {
    throw ContractError("occurrence certainty needs 1 <= r <= n (r=" + std::to_string(r) +
                        ", n=" + std::to_string(pass_count) + ")");
  }
  return static_cast<double>(r) / static_cast<double>(pass_count);
}

inline double combined_certainty(double semantic, double spatial, double occurrence) {
  return semantic * spatial * occurrence;
}

inline double combined_certainty(const CertaintyTriple& t) {
  return combined_certainty(t.semantic, t.spatial, t.occurrence);
}

inline CertaintyTriple certainty_triple(const InstanceSet& set, std::size_t category_count,
                                        std::size_t pass_count) {
  CertaintyTriple t;
  t.semantic = semantic_certainty(set, category_count);
  t.spatial = spatial_certainty(set);
  t.occurrence = occurrence_certainty(set, pass_count);
  t.combined = combined_certainty(t);
  return t;
}

struct ImageCertainty {
  std::string image_id;
  std::vector<CertaintyTriple> sets;
  double c_min = 1.0;

  std::size_t set_count() const noexcept { return sets.size(); }

  // Component-wise minima over the sets; 1.0 for an image without sets.
  double min_semantic() const { return min_of(&CertaintyTriple::semantic); }
  double min_spatial() const { return min_of(&CertaintyTriple::spatial); }
  double min_occurrence() const { return min_of(&CertaintyTriple::occurrence); }

 private:
  double min_of(double CertaintyTriple::*field) const {
    double v = 1.0;
    for (const auto& t : sets) v = std::min(v, t.*field);
    return v;
  }
};

/// Minimum combined certainty over the instance sets of an already-grouped image.
/// An image without instance sets gets c_min = 1.0.
inline ImageCertainty image_certainty(std::string image_id, std::span<const InstanceSet> sets,
                                      std::size_t category_count, std::size_t pass_count) {
  ImageCertainty out{std::move(image_id), {}, 1.0};
  out.sets.reserve(sets.size());
  for (const auto& set : sets) {
    out.sets.push_back(certainty_triple(set, category_count, pass_count));
    out.c_min = std::min(out.c_min, out.sets.back().combined);
  }
  return out;
}

/// Groups the passes of a thresholded image and scores it.
inline ImageCertainty image_certainty(const ImagePasses& img, std::size_t category_count,
                                      std::size_t pass_count, double match_iou = 0.5) {
  if (pass_count != 0 && img.passes.size() > pass_count) {
    throw ContractError("image '" + img.image_id + "' has more passes than configured");
  }
  const auto sets = group_passes(img, match_iou);
  return image_certainty(img.image_id, sets, category_count, pass_count);
}

struct RankedImage {
  std::string image_id;
  double c_min;
};

inline void sort_ranking(std::vector<ImageCertainty>& certainties) {
  std::sort(certainties.begin(), certainties.end(),
            [](const ImageCertainty& a, const ImageCertainty& b) {
              if (a.c_min != b.c_min) return a.c_min < b.c_min;
              return a.image_id < b.image_id;
            });
}

/// Certainty of every pool image, ascending by c_min, ties by image_id.
inline std::vector<ImageCertainty> score_pool(std::span<const ImagePasses> pool,
                                              std::size_t category_count, std::size_t pass_count,
                                              double match_iou = 0.5) {
  std::vector<ImageCertainty> out;
  out.reserve(pool.size());
  for (const auto& img : pool) {
    out.push_back(image_certainty(img, category_count, pass_count, match_iou));
  }
  sort_ranking(out);
  return out;
}

inline std::vector<RankedImage> rank_pool(std::span<const ImagePasses> pool,
                                          std::size_t category_count, std::size_t pass_count,
                                          double match_iou = 0.5) {
  std::vector<RankedImage> out;
  for (const auto& c : score_pool(pool, category_count, pass_count, match_iou)) {
    out.push_back(RankedImage{c.image_id, c.c_min});
  }
  return out;
}

}  // namespace boxal
