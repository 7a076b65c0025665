#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "boxal/detection.hpp"
#include "boxal/geometry.hpp"

namespace boxal {

struct InstanceMember {
  std::size_t pass;  // 1-based pass index
  Detection detection;

  friend bool operator==(const InstanceMember&, const InstanceMember&) = default;
};

/// Detections from different forward passes judged to be the same physical object.
/// Holds at most one member per pass, so size() never exceeds the pass count.
struct InstanceSet {
  std::vector<InstanceMember> members;
  std::size_t creation_index = 0;

  std::size_t size() const noexcept { return members.size(); }

  bool has_pass(std::size_t pass) const {
    return std::any_of(members.begin(), members.end(),
                       [&](const InstanceMember& m) { return m.pass == pass; });
  }

  friend bool operator==(const InstanceSet&, const InstanceSet&) = default;
};

/// Detection indices of one pass in canonical processing order: descending maximum
/// score, then lexicographic box.
inline std::vector<std::size_t> canonical_detection_order(const std::vector<Detection>& pass) {
  return score_order(pass, &Detection::box, [](const Detection& d) { return d.max_score(); });
}

/// Groups the detections of all passes into instance sets.
///
/// Pass-1 detections seed sets in canonical order. Each later detection is compared
/// against every set that has no member from its own pass yet; a set's affinity is the
/// largest IoU with any of its member boxes. The detection joins the set with the highest
/// affinity >= `match_iou` (lowest creation index on ties) or seeds a new set.
inline std::vector<InstanceSet> group_passes(const ImagePasses& img, double match_iou = 0.5) {
  require_unit_interval(match_iou, "match iou");
  std::vector<InstanceSet> sets;
  for (std::size_t p = 0; p < img.passes.size(); ++p) {
    const std::size_t pass_index = p + 1;
    const auto& pass = img.passes[p];
    for (std::size_t idx : canonical_detection_order(pass)) {
      const Detection& det = pass[idx];
      InstanceSet* best = nullptr;
      double best_affinity = -1.0;
      for (auto& set : sets) {
        if (set.has_pass(pass_index)) continue;
        double affinity = 0.0;
        for (const auto& m : set.members) affinity = std::max(affinity, iou(det.box, m.detection.box));
        // Sets are visited in creation order, so strict > keeps the lowest index on ties.
        if (affinity >= match_iou && affinity > best_affinity) {
          best = &set;
          best_affinity = affinity;
        }
      }
      if (best != nullptr) {
        best->members.push_back(InstanceMember{pass_index, det});
      } else {
        sets.push_back(InstanceSet{{InstanceMember{pass_index, det}}, sets.size()});
      }
    }
  }
  return sets;
}

}  // namespace boxal
