#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "boxal/certainty.hpp"
#include "reference_values.hpp"

using namespace boxal;
using reference::kSemanticNinetyTen;

namespace {

InstanceSet make_set(const std::vector<std::pair<BoundingBox, std::vector<double>>>& members) {
  InstanceSet s;
  std::size_t pass = 1;
  for (const auto& [box, scores] : members) s.members.push_back({pass++, Detection{box, scores}});
  return s;
}

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(0.2);
  std::vector<double> v(k);
  double sum = 0;
  for (auto& x : v) sum += (x = zero(gen) ? 0.0 : e(gen));
  if (sum == 0) {
    v[0] = 1;
    sum = 1;
  }
  for (auto& x : v) x /= sum;
  return v;
}

}  // namespace

TEST(SemanticCertainty, OneHotIsOne) {
  for (std::size_t k : {2u, 3u, 10u}) {
    std::vector<double> v(k, 0.0);
    v[k - 1] = 1.0;
    const BoundingBox b(0, 0, 1, 1);
    EXPECT_NEAR(semantic_certainty(make_set({{b, v}, {b, v}}), k), 1.0, 1e-9);
  }
}

TEST(SemanticCertainty, UniformIsZero) {
  for (std::size_t k : {2u, 5u, 10u}) {
    const std::vector<double> v(k, 1.0 / static_cast<double>(k));
    EXPECT_NEAR(semantic_certainty(make_set({{BoundingBox(0, 0, 1, 1), v}}), k), 0.0, 1e-9);
  }
}

TEST(SemanticCertainty, NinetyTenMatchesHighPrecisionValue) {
  const double c = semantic_certainty(make_set({{BoundingBox(0, 0, 1, 1), {0.9, 0.1}}}), 2);
  EXPECT_NEAR(c, kSemanticNinetyTen, 1e-5);
  EXPECT_NEAR(c, kSemanticNinetyTen, 1e-12);
}

TEST(SemanticCertainty, MeanOverMembers) {
  const BoundingBox b(0, 0, 1, 1);
  const double c = semantic_certainty(make_set({{b, {1.0, 0.0}}, {b, {0.5, 0.5}}, {b, {0.9, 0.1}}}), 2);
  EXPECT_NEAR(c, (1.0 + 0.0 + kSemanticNinetyTen) / 3.0, 1e-12);
}

TEST(SemanticCertainty, KappaBelowTwoIsContractError) {
  EXPECT_THROW(normalized_entropy(std::vector<double>{1.0}), ContractError);
}

TEST(Entropy, BaseInvarianceOverRandomVectors) {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 1000; ++i) {
    const auto v = random_simplex(gen, 2 + static_cast<std::size_t>(i % 14));
    EXPECT_NEAR(normalized_entropy(v), normalized_entropy(v, 2.0), 1e-12);
    EXPECT_NEAR(normalized_entropy(v), normalized_entropy(v, 10.0), 1e-12);
  }
}

TEST(SpatialCertainty, IdenticalAndSingle) {
  const BoundingBox b(3, 4, 20, 30);
  EXPECT_NEAR(spatial_certainty(make_set({{b, {1, 0}}, {b, {1, 0}}, {b, {1, 0}}})), 1.0, 1e-9);
  EXPECT_NEAR(spatial_certainty(make_set({{b, {1, 0}}})), 1.0, 1e-9);
}

TEST(SpatialCertainty, ShiftedPair) {
  // Mean box (1,0,11,10) overlaps each member by 9x10 over a union of 11x10.
  const auto s = make_set({{BoundingBox(0, 0, 10, 10), {1, 0}}, {BoundingBox(2, 0, 12, 10), {1, 0}}});
  EXPECT_NEAR(spatial_certainty(s), 90.0 / 110.0, 1e-9);
}

TEST(OccurrenceCertainty, Ratio) {
  InstanceSet s;
  for (std::size_t p = 1; p <= 15; ++p) s.members.push_back({p, Detection{BoundingBox(0, 0, 1, 1), {1, 0}}});
  EXPECT_NEAR(occurrence_certainty(s, 15), 1.0, 1e-9);
  s.members.erase(s.members.begin() + 3, s.members.end());
  EXPECT_NEAR(occurrence_certainty(s, 15), 0.2, 1e-9);
  EXPECT_THROW(occurrence_certainty(s, 2), ContractError);
  s.members.erase(s.members.begin() + 1, s.members.end());
  EXPECT_NEAR(occurrence_certainty(s, 15), 1.0 / 15.0, 1e-9);
  s.members.clear();
  EXPECT_THROW(occurrence_certainty(s, 2), ContractError);
}

TEST(CombinedCertainty, Product) {
  EXPECT_NEAR(combined_certainty(1, 1, 1), 1.0, 1e-9);
  EXPECT_NEAR(combined_certainty(0.5, 0.8, 0.2), 0.08, 1e-9);
}

TEST(ImageCertainty, MinimumOverSets) {
  // Three single-member sets with one-hot scores and n=1 give c_h = 1; build
  // c_h values {0.9, 0.3, 0.6} through the occurrence factor instead: n = 10.
  InstanceSet a, b, c;
  const Detection d{BoundingBox(0, 0, 1, 1), {1, 0}};
  for (std::size_t p = 1; p <= 9; ++p) a.members.push_back({p, d});
  for (std::size_t p = 1; p <= 3; ++p) b.members.push_back({p, d});
  for (std::size_t p = 1; p <= 6; ++p) c.members.push_back({p, d});
  const std::vector<InstanceSet> sets{a, b, c};
  const ImageCertainty ic = image_certainty("x", sets, 2, 10);
  EXPECT_EQ(ic.set_count(), 3u);
  EXPECT_NEAR(ic.c_min, 0.3, 1e-9);
  const std::vector<InstanceSet> single{c};
  EXPECT_NEAR(image_certainty("x", single, 2, 10).c_min, 0.6, 1e-9);
}

TEST(ImageCertainty, NoDetectionsMeansFullCertainty) {
  const ImagePasses img{"empty", 10, 10, {{}, {}, {}}};
  const ImageCertainty ic = image_certainty(img, 3, 3);
  EXPECT_EQ(ic.set_count(), 0u);
  EXPECT_DOUBLE_EQ(ic.c_min, 1.0);
}

TEST(RankPool, OrderingAndTies) {
  auto image = [](const std::string& id, std::size_t detected) {
    ImagePasses img{id, 100, 100, {}};
    for (std::size_t p = 0; p < 10; ++p) {
      std::vector<Detection> pass;
      if (p < detected) pass.push_back({BoundingBox(0, 0, 10, 10), {1, 0}});
      img.passes.push_back(pass);
    }
    return img;
  };
  const std::vector<ImagePasses> one{image("only", 3)};
  EXPECT_EQ(rank_pool(one, 2, 10).front().image_id, "only");

  const std::vector<ImagePasses> pool{image("b", 7), image("a", 2), image("d", 2), image("c", 0)};
  const auto ranked = rank_pool(pool, 2, 10);
  ASSERT_EQ(ranked.size(), 4u);
  EXPECT_EQ(ranked[0].image_id, "a");
  EXPECT_NEAR(ranked[0].c_min, 0.2, 1e-12);
  EXPECT_EQ(ranked[1].image_id, "d");
  EXPECT_EQ(ranked[2].image_id, "b");
  EXPECT_NEAR(ranked[2].c_min, 0.7, 1e-12);
  EXPECT_EQ(ranked[3].image_id, "c");
}

TEST(CertaintyProperty, BoundsPermutationAndMonotonicity) {
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 14, k = 2 + trial % 9;
    const std::size_t r = 1 + static_cast<std::size_t>(u(gen) * static_cast<double>(n - 1));
    std::vector<std::pair<BoundingBox, std::vector<double>>> members;
    for (std::size_t i = 0; i < r; ++i) {
      const double x = u(gen) * 20, y = u(gen) * 20;
      members.push_back({BoundingBox(x, y, x + 5 + u(gen) * 10, y + 5 + u(gen) * 10), random_simplex(gen, k)});
    }
    const InstanceSet s = make_set(members);
    const CertaintyTriple t = certainty_triple(s, k, n);
    for (double v : {t.semantic, t.spatial, t.occurrence, t.combined}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(t.combined, std::min({t.semantic, t.spatial, t.occurrence}) + 1e-15);

    auto shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const CertaintyTriple ts = certainty_triple(make_set(shuffled), k, n);
    EXPECT_NEAR(ts.semantic, t.semantic, 1e-12);
    EXPECT_NEAR(ts.spatial, t.spatial, 1e-12);
    EXPECT_DOUBLE_EQ(ts.occurrence, t.occurrence);

    // Every member replaced by an exact copy of the first: spatial 1, semantic of that vector.
    std::vector<std::pair<BoundingBox, std::vector<double>>> same(r, members.front());
    const CertaintyTriple tc = certainty_triple(make_set(same), k, n);
    EXPECT_NEAR(tc.spatial, 1.0, 1e-12);
    EXPECT_NEAR(tc.semantic, 1.0 - normalized_entropy(members.front().second), 1e-12);

    // Adding a set can only lower (or keep) c_min.
    std::vector<InstanceSet> sets{s};
    const double before = image_certainty("i", sets, k, n).c_min;
    sets.push_back(make_set({members.back()}));
    EXPECT_LE(image_certainty("i", sets, k, n).c_min, before);
  }
}
