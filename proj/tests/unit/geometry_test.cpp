#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "boxal/geometry.hpp"

using boxal::BoundingBox;

namespace {

// Cell-counting IoU on a grid of `step`-sized cells; exact for boxes on grid lines.
double raster_iou(const BoundingBox& a, const BoundingBox& b, double step) {
  const double x0 = std::min(a.x_min(), b.x_min()), y0 = std::min(a.y_min(), b.y_min());
  const double x1 = std::max(a.x_max(), b.x_max()), y1 = std::max(a.y_max(), b.y_max());
  long inter = 0, uni = 0;
  for (double y = y0 + step / 2; y < y1; y += step) {
    for (double x = x0 + step / 2; x < x1; x += step) {
      const bool in_a = x > a.x_min() && x < a.x_max() && y > a.y_min() && y < a.y_max();
      const bool in_b = x > b.x_min() && x < b.x_max() && y > b.y_min() && y < b.y_max();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BoundingBox random_box(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> pos(-50.0, 50.0), size(0.5, 40.0);
  const double x = pos(gen), y = pos(gen);
  return BoundingBox(x, y, x + size(gen), y + size(gen));
}

}  // namespace

TEST(BoundingBox, RejectsDegenerateAndNonFinite) {
  EXPECT_THROW(BoundingBox(0, 0, 0, 10), boxal::ValidationError);
  EXPECT_THROW(BoundingBox(0, 0, 10, -1), boxal::ValidationError);
  EXPECT_THROW(BoundingBox(0, 0, std::numeric_limits<double>::infinity(), 10), boxal::ValidationError);
  EXPECT_THROW(BoundingBox(std::nan(""), 0, 1, 1), boxal::ValidationError);
  EXPECT_NO_THROW(BoundingBox(0, 0, 1e-3, 1e-3));
}

TEST(Iou, IdentityIsOne) {
  const BoundingBox b(3.5, 1.25, 17.0, 9.0);
  EXPECT_DOUBLE_EQ(boxal::iou(b, b), 1.0);
}

TEST(Iou, DisjointIsZero) {
  EXPECT_DOUBLE_EQ(boxal::iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)), 0.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(boxal::iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10)), 0.0);
}

TEST(Iou, HalfShiftMatchesRasterOracle) {
  const BoundingBox a(0, 0, 10, 10), b(5, 0, 15, 10);
  const double oracle = raster_iou(a, b, 0.05);
  EXPECT_NEAR(oracle, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(boxal::iou(a, b), 1.0 / 3.0, 1e-12);
}

TEST(Iou, RandomGridBoxesMatchRasterOracle) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> coord(0, 20), len(1, 12);
  for (int i = 0; i < 200; ++i) {
    const int ax = coord(gen), ay = coord(gen), bx = coord(gen), by = coord(gen);
    const BoundingBox a(ax, ay, ax + len(gen), ay + len(gen));
    const BoundingBox b(bx, by, bx + len(gen), by + len(gen));
    EXPECT_NEAR(boxal::iou(a, b), raster_iou(a, b, 0.5), 1e-12) << a.to_string() << " " << b.to_string();
  }
}

TEST(IouProperty, SymmetricBoundedAndOneOnlyForIdentical) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 5000; ++i) {
    const BoundingBox a = random_box(gen), b = random_box(gen);
    const double ab = boxal::iou(a, b), ba = boxal::iou(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    if (a != b) {
      EXPECT_LT(ab, 1.0);
    }
  }
}

TEST(MeanBox, SingleElementIsIdentity) {
  const BoundingBox b(1, 2, 3, 4);
  const std::vector<BoundingBox> v{b};
  EXPECT_EQ(boxal::mean_box(std::span<const BoundingBox>(v)), b);
}

TEST(MeanBox, CoordinateWiseAverage) {
  const std::vector<BoundingBox> two{{0, 0, 10, 10}, {2, 2, 12, 12}};
  EXPECT_EQ(boxal::mean_box(std::span<const BoundingBox>(two)), BoundingBox(1, 1, 11, 11));
  const std::vector<BoundingBox> three{{0, 0, 4, 4}, {2, 2, 6, 6}, {4, 4, 8, 8}};
  EXPECT_EQ(boxal::mean_box(std::span<const BoundingBox>(three)), BoundingBox(2, 2, 6, 6));
}

TEST(MeanBox, EmptyIsContractError) {
  const std::vector<BoundingBox> none;
  EXPECT_THROW(boxal::mean_box(std::span<const BoundingBox>(none)), boxal::ContractError);
}

TEST(MeanBoxProperty, CopiesOfOneBox) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox b = random_box(gen);
    const std::vector<BoundingBox> copies(1 + i % 9, b);
    const BoundingBox m = boxal::mean_box(std::span<const BoundingBox>(copies));
    EXPECT_NEAR(m.x_min(), b.x_min(), 1e-12);
    EXPECT_NEAR(m.y_min(), b.y_min(), 1e-12);
    EXPECT_NEAR(m.x_max(), b.x_max(), 1e-12);
    EXPECT_NEAR(m.y_max(), b.y_max(), 1e-12);
  }
}

TEST(Nms, SingleDetectionKept) {
  const std::vector<boxal::ScoredBox> in{{{0, 0, 5, 5}, 0.1}};
  EXPECT_EQ(boxal::nms(in, 0.3).size(), 1u);
}

TEST(Nms, IdenticalBoxesKeepHigherScore) {
  const std::vector<boxal::ScoredBox> in{{{0, 0, 10, 10}, 0.8}, {{0, 0, 10, 10}, 0.9}};
  const auto out = boxal::nms(in, 0.3);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
}

TEST(Nms, ChainKeepsEnds) {
  // A-B and B-C overlap at IoU 1/3, A-C do not overlap.
  const boxal::ScoredBox a{{0, 0, 10, 10}, 0.9}, b{{5, 0, 15, 10}, 0.8}, c{{10, 0, 20, 10}, 0.7};
  ASSERT_GE(boxal::iou(a.box, b.box), 0.3);
  ASSERT_GE(boxal::iou(b.box, c.box), 0.3);
  ASSERT_LT(boxal::iou(a.box, c.box), 0.3);
  const std::vector<boxal::ScoredBox> in{c, a, b};
  const auto out = boxal::nms(in, 0.3);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].box, a.box);
  EXPECT_EQ(out[1].box, c.box);
}

TEST(Nms, TiesBrokenByCanonicalBoxOrder) {
  const std::vector<boxal::ScoredBox> in{{{1, 0, 11, 10}, 0.5}, {{0, 0, 10, 10}, 0.5}};
  const auto out = boxal::nms(in, 0.3);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, BoundingBox(0, 0, 10, 10));
}

TEST(NmsProperty, SubsequenceWithNoSuppressedPairs) {
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> score(0.0, 1.0), thr(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<boxal::ScoredBox> in;
    const int count = 1 + trial % 12;
    for (int i = 0; i < count; ++i) in.push_back({random_box(gen), score(gen)});
    const double t = trial % 10 == 0 ? 1.0 : thr(gen);
    const auto out = boxal::nms(in, t);
    for (const auto& kept : out) {
      EXPECT_TRUE(std::any_of(in.begin(), in.end(), [&](const auto& x) {
        return x.box == kept.box && x.score == kept.score;
      }));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) {
        EXPECT_GE(out[i - 1].score, out[i].score);
      }
      for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_LT(boxal::iou(out[i].box, out[j].box), t);
    }
    if (t == 1.0) {
      EXPECT_EQ(out.size(), in.size());
    }
  }
}

TEST(Nms, ThresholdOutsideUnitIntervalRejected) {
  const std::vector<boxal::ScoredBox> in{{{0, 0, 5, 5}, 0.1}};
  EXPECT_THROW(boxal::nms(in, 1.5), boxal::ValidationError);
}
