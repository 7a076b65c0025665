#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "boxal/detection_io.hpp"

using namespace boxal;

namespace {

Detection det(double x0, double y0, double x1, double y1, std::vector<double> scores) {
  return Detection{BoundingBox(x0, y0, x1, y1), std::move(scores)};
}

ImagePasses random_image(std::mt19937_64& gen, const std::string& id, std::size_t passes, std::size_t kappa) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImagePasses img{id, 200, 100, {}};
  for (std::size_t p = 0; p < passes; ++p) {
    std::vector<Detection> pass;
    const int count = static_cast<int>(u(gen) * 5);
    for (int d = 0; d < count; ++d) {
      const double x = u(gen) * 150, y = u(gen) * 60;
      std::vector<double> s(kappa);
      double sum = 0;
      for (auto& v : s) sum += (v = u(gen) + 1e-3);
      for (auto& v : s) v /= sum;
      pass.push_back(det(x, y, x + 1 + u(gen) * 49, y + 1 + u(gen) * 39, s));
    }
    img.passes.push_back(std::move(pass));
  }
  return img;
}

}  // namespace

TEST(CategoryCatalog, Invariants) {
  EXPECT_THROW(CategoryCatalog({"a"}), ValidationError);
  EXPECT_THROW(CategoryCatalog({"a", "a"}), ValidationError);
  EXPECT_THROW(CategoryCatalog({"a", ""}), ValidationError);
  EXPECT_EQ(CategoryCatalog({"a", "b"}).size(), 2u);
}

TEST(LoadImagePasses, EmptyFileIsEmpty) {
  std::istringstream in("");
  EXPECT_TRUE(read_image_passes(in, "mem").empty());
}

TEST(LoadImagePasses, TwoPassesOneDetectionEach) {
  std::istringstream in(
      R"({"image_id":"a","width":100,"height":50,"passes":[[{"bbox":[1,2,30,40],"scores":[0.7,0.3]}],)"
      R"([{"bbox":[2,2,31,40],"scores":[0.6,0.4]}]]})"
      "\n");
  const auto v = read_image_passes(in, "mem", 2, 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].image_id, "a");
  EXPECT_EQ(v[0].passes.size(), 2u);
  EXPECT_EQ(v[0].passes[1][0].box, BoundingBox(2, 2, 31, 40));
  EXPECT_DOUBLE_EQ(v[0].passes[1][0].scores[1], 0.4);
}

TEST(LoadImagePasses, BadScoreSumNamesImageAndLine) {
  std::istringstream in(
      "\n"
      R"({"image_id":"fish_17","width":100,"height":50,"passes":[[{"bbox":[1,2,30,40],"scores":[0.5,0.3]}]]})");
  try {
    read_image_passes(in, "dets.jsonl", 1, 2);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("fish_17"), std::string::npos) << e.what();
  }
}

TEST(LoadImagePasses, RejectsMalformedInput) {
  auto parse = [](const std::string& text, std::size_t n = 1, std::size_t k = 2) {
    std::istringstream in(text);
    return read_image_passes(in, "mem", n, k);
  };
  EXPECT_THROW(parse("{not json"), ParseError);
  // wrong pass count
  EXPECT_THROW(parse(R"({"image_id":"a","width":10,"height":10,"passes":[[],[]]})"), ParseError);
  // box outside the image
  EXPECT_THROW(parse(R"({"image_id":"a","width":10,"height":10,"passes":[[{"bbox":[0,0,11,5],"scores":[1,0]}]]})"),
               ParseError);
  // wrong score length
  EXPECT_THROW(parse(R"({"image_id":"a","width":10,"height":10,"passes":[[{"bbox":[0,0,5,5],"scores":[1]}]]})"),
               ParseError);
  // negative score
  EXPECT_THROW(
      parse(R"({"image_id":"a","width":10,"height":10,"passes":[[{"bbox":[0,0,5,5],"scores":[1.2,-0.2]}]]})"),
      ParseError);
  // degenerate box
  EXPECT_THROW(parse(R"({"image_id":"a","width":10,"height":10,"passes":[[{"bbox":[3,0,3,5],"scores":[1,0]}]]})"),
               ParseError);
  // duplicate id
  EXPECT_THROW(parse("{\"image_id\":\"a\",\"width\":10,\"height\":10,\"passes\":[[]]}\n"
                     "{\"image_id\":\"a\",\"width\":10,\"height\":10,\"passes\":[[]]}\n"),
               ParseError);
}

TEST(ImagePassesProperty, RoundTrip) {
  std::mt19937_64 gen(5);
  std::vector<ImagePasses> images;
  for (int i = 0; i < 40; ++i) images.push_back(random_image(gen, "img" + std::to_string(i), 3, 4));
  std::ostringstream out;
  write_image_passes(out, images);
  std::istringstream in(out.str());
  const auto back = read_image_passes(in, "mem", 3, 4);
  EXPECT_EQ(back, images);
}

TEST(GroundTruthProperty, RoundTripAndCategoryRange) {
  GroundTruth gt;
  gt["b"] = GroundTruthImage{"b", {{BoundingBox(0.1, 0.2, 5.123456789012, 7), 1}, {BoundingBox(1, 1, 2, 2), 0}}};
  gt["a"] = GroundTruthImage{"a", {}};
  std::ostringstream out;
  write_ground_truth(out, gt);
  std::istringstream in(out.str());
  EXPECT_EQ(read_ground_truth(in, "mem", 2), gt);

  std::istringstream bad(R"({"image_id":"x","objects":[{"bbox":[0,0,1,1],"category":2}]})");
  EXPECT_THROW(read_ground_truth(bad, "mem", 2), ParseError);
}

TEST(PredictionsProperty, RoundTrip) {
  PredictionsByImage preds;
  preds["a"] = {FinalPrediction{BoundingBox(1, 2, 3, 4), 1, 0.3}, FinalPrediction{BoundingBox(0, 0, 9, 9), 0, 1.0}};
  preds["b"] = {};
  std::ostringstream out;
  write_predictions(out, preds);
  std::istringstream in(out.str());
  EXPECT_EQ(read_predictions(in, "mem", 2), preds);
}

TEST(Manifest, OverlapIsRejected) {
  const auto doc = nlohmann::json::parse(
      R"({"categories":["a","b"],"initial_training":["1"],"pool":["2","3"],"validation":[],"test":["3"]})");
  EXPECT_THROW(manifest_from_json(doc), ValidationError);
}

TEST(Manifest, ThreeThousandImageSplitAccepted) {
  nlohmann::json doc;
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back("species_" + std::to_string(i));
  doc["categories"] = names;
  auto ids = [](const char* prefix, int count) {
    std::vector<std::string> v;
    for (int i = 0; i < count; ++i) v.push_back(prefix + std::to_string(i));
    return v;
  };
  doc["initial_training"] = ids("t", 100);
  doc["pool"] = ids("p", 1796);
  doc["validation"] = ids("v", 660);
  doc["test"] = ids("x", 449);
  const DatasetManifest m = manifest_from_json(doc);
  EXPECT_EQ(m.initial_training.size(), 100u);
  EXPECT_EQ(m.validation.size(), 660u);
  EXPECT_EQ(m.test.size(), 449u);
  EXPECT_EQ(m.all_ids().size(), 3005u);
  EXPECT_EQ(manifest_from_json(to_json(m)), m);
}

TEST(Manifest, EmptyInitialTrainingRejectedByDefault) {
  const auto doc = nlohmann::json::parse(
      R"({"categories":["a","b"],"initial_training":[],"pool":["2"],"validation":[],"test":[]})");
  EXPECT_THROW(manifest_from_json(doc), ValidationError);
  EXPECT_NO_THROW(manifest_from_json(doc, false));
}

TEST(ApplyThresholds, NoOverlapsAllConfidentUnchanged) {
  ImagePasses img{"a", 100, 100, {{det(0, 0, 10, 10, {0.9, 0.1}), det(50, 50, 60, 60, {0.3, 0.7})}}};
  const ImagePasses out = apply_thresholds(img, {0.5, 0.3});
  ASSERT_EQ(out.passes.size(), 1u);
  ASSERT_EQ(out.passes[0].size(), 2u);
  EXPECT_EQ(out.passes[0][0], img.passes[0][0]);
  EXPECT_EQ(out.passes[0][1], img.passes[0][1]);
}

TEST(ApplyThresholds, LowConfidenceRemoved) {
  ImagePasses img{"a", 100, 100, {{det(0, 0, 10, 10, {0.4, 0.35, 0.25})}, {}}};
  const ImagePasses out = apply_thresholds(img, {0.5, 0.3});
  EXPECT_EQ(out.passes.size(), 2u);
  EXPECT_TRUE(out.passes[0].empty());
}

TEST(ApplyThresholds, OverlapAboveNmsThresholdSuppressesLowerScore) {
  // Width-16 boxes shifted by 4: intersection 12*10, union 20*10, IoU 0.6.
  const Detection hi = det(0, 0, 16, 10, {0.9, 0.1});
  const Detection lo = det(4, 0, 20, 10, {0.2, 0.8});
  ASSERT_NEAR(iou(hi.box, lo.box), 0.6, 1e-12);
  ImagePasses img{"a", 100, 100, {{lo, hi}}};
  const ImagePasses out = apply_thresholds(img, {0.5, 0.3});
  ASSERT_EQ(out.passes[0].size(), 1u);
  EXPECT_EQ(out.passes[0][0], hi);
}

TEST(ApplyThresholdsProperty, IdempotentAndConfident) {
  std::mt19937_64 gen(23);
  for (int i = 0; i < 200; ++i) {
    const ImagePasses img = random_image(gen, "x", 4, 3);
    const ThresholdConfig cfg{0.2 + 0.5 * (i % 5) / 4.0, 0.1 + 0.2 * (i % 4)};
    const ImagePasses once = apply_thresholds(img, cfg);
    EXPECT_EQ(apply_thresholds(once, cfg), once);
    EXPECT_EQ(once.passes.size(), img.passes.size());
    for (const auto& pass : once.passes) {
      for (const auto& d : pass) EXPECT_GE(d.max_score(), cfg.confidence);
    }
  }
}

TEST(FloatFormat, ShortestRoundTrip) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(gen);
    EXPECT_EQ(parse_double(format_double(v), "v"), v);
  }
}
