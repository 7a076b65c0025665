#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "boxal/error.hpp"

namespace boxal {

/// Axis-aligned box in continuous image coordinates, corners [x_min, y_min, x_max, y_max].
///
/// Construction validates: all coordinates finite and strictly positive extent on both
/// axes. A BoundingBox value is therefore always safe to feed into iou().
class BoundingBox {
 public:
  BoundingBox(double x_min, double y_min, double x_max, double y_max)
      : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
        !std::isfinite(y_max)) {
      throw ValidationError("bounding box has non-finite coordinate: " + to_string());
    }
    if (!(x_max > x_min) || !(y_max > y_min)) {
      throw ValidationError("bounding box has non-positive area: " + to_string());
    }
  }

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }
  double diagonal() const noexcept { return std::hypot(width(), height()); }

  // Lexicographic on (x_min, y_min, x_max, y_max): the canonical tie-break order.
  friend auto operator<=>(const BoundingBox&, const BoundingBox&) = default;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << '[' << x_min_ << ", " << y_min_ << ", " << x_max_ << ", " << y_max_ << ']';
    return os.str();
  }

 private:
  double x_min_, y_min_, x_max_, y_max_;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double w = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double h = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Intersection over union by area. Symmetric, in [0, 1], exactly 1 for identical boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Coordinate-wise mean of the corner points.
template <class Range, class Proj = std::identity>
BoundingBox mean_box(const Range& boxes, Proj proj = {}) {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  std::size_t count = 0;
  for (const auto& item : boxes) {
    const BoundingBox& b = std::invoke(proj, item);
    x0 += b.x_min();
    y0 += b.y_min();
    x1 += b.x_max();
    y1 += b.y_max();
    ++count;
  }
  if (count == 0) throw ContractError("mean_box of an empty sequence");
  const auto n = static_cast<double>(count);
  return BoundingBox(x0 / n, y0 / n, x1 / n, y1 / n);
}

inline BoundingBox mean_box(std::span<const BoundingBox> boxes) {
  return mean_box(boxes, std::identity{});
}

inline void require_unit_interval(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ValidationError(std::string(name) + " must lie in [0, 1], got " + std::to_string(value));
  }
}

/// Indices of `items` ordered by descending score, ties by canonical box order, then
/// by input position.
template <class Range, class BoxProj, class ScoreProj>
std::vector<std::size_t> score_order(const Range& items, BoxProj box_of, ScoreProj score_of) {
  std::vector<std::size_t> order(std::size(items));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const double sl = std::invoke(score_of, items[l]);
    const double sr = std::invoke(score_of, items[r]);
    if (sl != sr) return sl > sr;
    return std::invoke(box_of, items[l]) < std::invoke(box_of, items[r]);
  });
  return order;
}

/// Greedy non-maximum suppression. Returns the indices of kept items in descending-score
/// order. An item is kept iff its IoU with every already-kept item is below `iou_threshold`.
template <class Range, class BoxProj, class ScoreProj>
std::vector<std::size_t> nms_indices(const Range& items, double iou_threshold, BoxProj box_of,
                                     ScoreProj score_of) {
  require_unit_interval(iou_threshold, "nms iou threshold");
  for (const auto& item : items) {
    if (!std::isfinite(static_cast<double>(std::invoke(score_of, item)))) {
      throw ValidationError("nms: non-finite score");
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t idx : score_order(items, box_of, score_of)) {
    const BoundingBox& candidate = std::invoke(box_of, items[idx]);
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(candidate, std::invoke(box_of, items[k])) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

struct ScoredBox {
  BoundingBox box;
  double score;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

inline std::vector<ScoredBox> nms(std::span<const ScoredBox> detections, double iou_threshold) {
  std::vector<ScoredBox> out;
  for (std::size_t idx :
       nms_indices(detections, iou_threshold, &ScoredBox::box, &ScoredBox::score)) {
    out.push_back(detections[idx]);
  }
  return out;
}

}  // namespace boxal
