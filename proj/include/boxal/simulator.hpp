#pragma once

// Synthetic dataset plus a stochastic multi-pass detector whose skill grows with the
// number of annotated instances it has been trained on.
//
// World: every image gets a difficulty d ~ Uniform(0, difficulty_max) and a uniform number
// of objects in [min_objects, max_objects]. Categories follow a Zipf law with exponent
// `category_skew`, so a few categories dominate, as in real catch data. Object boxes are
// placed uniformly with pairwise IoU at most `max_overlap`.
//
// Detector: for a ground-truth object of category c on an image of difficulty d, let
// q = skill(c) * (1 - d) with skill(c) = e_c / (e_c + k). Each pass
//   - detects it with probability p_lo + (p_hi - p_lo) * q,
//   - jitters each corner by N(0, sigma^2), sigma = (jitter_floor + jitter_sigma*(1-q)) * diagonal,
//   - scores it q * onehot(c) + (1 - q) * u with u uniform on the probability simplex,
// and adds Poisson(fp_rate * (1 - mean skill)) false positives with simplex-uniform
// scores. The run's confidence / NMS thresholds are applied to every pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxal/detection.hpp"
#include "boxal/detection_io.hpp"
#include "boxal/error.hpp"
#include "boxal/geometry.hpp"
#include "boxal/io_util.hpp"
#include "boxal/random.hpp"

namespace boxal {

struct WorldParams {
  std::size_t image_count = 500;
  std::size_t category_count = 10;
  std::size_t min_objects = 0;
  std::size_t max_objects = 10;
  int width = 640;
  int height = 480;
  double min_object_size = 40.0;
  double max_object_size = 140.0;
  double max_overlap = 0.3;
  double category_skew = 1.5;
  // Difficulties are drawn from Uniform(0, difficulty_max).
  double difficulty_max = 0.4;
  // Partition sizes; the pool receives every remaining image.
  std::size_t initial_training = 20;
  std::size_t validation = 0;
  std::size_t test = 50;
  // Pick the initial training images so that every category appears at least once,
  // when the world allows it.
  bool cover_categories = true;
};

struct SyntheticImage {
  std::string image_id;
  int width = 0;
  int height = 0;
  double difficulty = 0.0;

  friend bool operator==(const SyntheticImage&, const SyntheticImage&) = default;
};

struct SyntheticWorld {
  std::uint64_t seed = 0;
  std::vector<SyntheticImage> images;
  GroundTruth ground_truth;
  DatasetManifest manifest;

  const SyntheticImage& image(const std::string& id) const {
    auto it = std::lower_bound(images.begin(), images.end(), id,
                               [](const SyntheticImage& im, const std::string& key) { return im.image_id < key; });
    if (it == images.end() || it->image_id != id) throw ContractError("unknown image '" + id + "'");
    return *it;
  }

  friend bool operator==(const SyntheticWorld&, const SyntheticWorld&) = default;
};

inline std::string synthetic_image_id(std::size_t index) {
  std::string digits = std::to_string(index);
  return "img_" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

inline std::vector<std::string> synthetic_category_names(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < count; ++c) names.push_back("category_" + std::to_string(c));
  return names;
}

namespace detail {

inline std::size_t draw_category(Rng& rng, std::span<const double> cumulative) {
  const double u = rng.uniform01() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

inline std::vector<double> simplex_draw(Rng& rng, std::size_t size) {
  std::vector<double> v(size);
  double sum = 0.0;
  for (double& x : v) {
    x = rng.exponential();
    sum += x;
  }
  if (sum <= 0.0) return std::vector<double>(size, 1.0 / static_cast<double>(size));
  for (double& x : v) x /= sum;
  return v;
}

// Rescales to sum exactly 1 within rounding; clamps tiny negative rounding noise.
inline void renormalize(std::vector<double>& v) {
  double sum = 0.0;
  for (double& x : v) {
    x = std::max(0.0, x);
    sum += x;
  }
  for (double& x : v) x = std::min(1.0, x / sum);
}

}  // namespace detail

/// Deterministic synthetic world for `seed`. Image ids are "img_000000", "img_000001", ...
inline SyntheticWorld generate_world(std::uint64_t seed, const WorldParams& params) {
  if (params.category_count < 2) throw ValidationError("world needs at least 2 categories");
  if (params.min_objects > params.max_objects) throw ValidationError("min_objects > max_objects");
  if (!(params.difficulty_max >= 0.0 && params.difficulty_max <= 1.0)) {
    throw ValidationError("difficulty_max must lie in [0, 1]");
  }
  if (!(params.min_object_size > 0.0) || params.max_object_size < params.min_object_size ||
      params.max_object_size > std::min(params.width, params.height)) {
    throw ValidationError("object size range does not fit the image");
  }
  const std::size_t fixed = params.initial_training + params.validation + params.test;
  if (params.image_count > 0 && (params.initial_training == 0 || fixed > params.image_count)) {
    throw ValidationError("partition sizes do not fit the image count");
  }

  std::vector<double> cumulative(params.category_count);
  double acc = 0.0;
  for (std::size_t c = 0; c < params.category_count; ++c) {
    acc += 1.0 / std::pow(static_cast<double>(c + 1), params.category_skew);
    cumulative[c] = acc;
  }

  SyntheticWorld world;
  world.seed = seed;
  world.manifest.catalog = CategoryCatalog(synthetic_category_names(params.category_count));
  Rng rng(seed);
  for (std::size_t i = 0; i < params.image_count; ++i) {
    SyntheticImage img{synthetic_image_id(i), params.width, params.height, params.difficulty_max * rng.uniform01()};
    GroundTruthImage gt{img.image_id, {}};
    const auto count = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(params.min_objects), static_cast<std::int64_t>(params.max_objects)));
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t category = detail::draw_category(rng, cumulative);
      std::optional<BoundingBox> placed;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const double w = rng.uniform(params.min_object_size, params.max_object_size);
        const double h = rng.uniform(params.min_object_size, params.max_object_size);
        const double x = rng.uniform(0.0, params.width - w);
        const double y = rng.uniform(0.0, params.height - h);
        BoundingBox candidate(x, y, x + w, y + h);
        placed = candidate;
        const bool clash = std::any_of(gt.objects.begin(), gt.objects.end(), [&](const GroundTruthObject& o) {
          return iou(o.box, candidate) > params.max_overlap;
        });
        if (!clash) break;
      }
      gt.objects.push_back(GroundTruthObject{*placed, category});
    }
    world.ground_truth.emplace(img.image_id, std::move(gt));
    world.images.push_back(std::move(img));
  }
  if (params.image_count == 0) return world;

  // Partition: shuffled order; optionally front-load images that cover unseen categories.
  std::vector<std::string> order;
  for (const auto& img : world.images) order.push_back(img.image_id);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  std::vector<std::string> initial;
  if (params.cover_categories) {
    std::vector<bool> covered(params.category_count, false);
    for (std::size_t i = 0; i < order.size() && initial.size() < params.initial_training; ++i) {
      bool adds = false;
      for (const auto& obj : world.ground_truth.at(order[i]).objects) adds = adds || !covered[obj.category];
      if (!adds) continue;
      for (const auto& obj : world.ground_truth.at(order[i]).objects) covered[obj.category] = true;
      initial.push_back(order[i]);
    }
  }
  for (const auto& id : order) {
    if (initial.size() >= params.initial_training) break;
    if (std::find(initial.begin(), initial.end(), id) == initial.end()) initial.push_back(id);
  }
  std::vector<std::string> rest;
  for (const auto& id : order) {
    if (std::find(initial.begin(), initial.end(), id) == initial.end()) rest.push_back(id);
  }
  auto take = [&](std::size_t count, std::size_t& offset) {
    std::vector<std::string> part(rest.begin() + static_cast<std::ptrdiff_t>(offset),
                                  rest.begin() + static_cast<std::ptrdiff_t>(offset + count));
    offset += count;
    std::sort(part.begin(), part.end());
    return part;
  };
  std::size_t offset = 0;
  std::sort(initial.begin(), initial.end());
  world.manifest.initial_training = initial;
  world.manifest.validation = take(params.validation, offset);
  world.manifest.test = take(params.test, offset);
  world.manifest.pool = take(rest.size() - offset, offset);
  validate(world.manifest);
  return world;
}

struct SimulatorParams {
  double half_saturation = 20.0;     // k in e / (e + k)
  double jitter_sigma = 0.08;        // corner jitter at zero skill, fraction of the diagonal
  double jitter_floor = 0.005;       // corner jitter at full skill
  double false_positive_rate = 1.0;  // expected false positives per pass at zero skill
  double miss_floor = 0.02;          // miss probability at full skill: p_hi = 1 - miss_floor
  double miss_ceiling = 0.9;         // miss probability at zero skill: p_lo = 1 - miss_ceiling
  ThresholdConfig thresholds{};
};

/// Per-category exposure counts of the simulated detector.
struct SkillState {
  std::vector<std::uint64_t> exposure;
  SimulatorParams params;

  static SkillState untrained(std::size_t category_count, const SimulatorParams& params = {}) {
    return SkillState{std::vector<std::uint64_t>(category_count, 0), params};
  }

  double skill(std::size_t category) const {
    const auto e = static_cast<double>(exposure.at(category));
    return e / (e + params.half_saturation);
  }

  double mean_skill() const {
    if (exposure.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t c = 0; c < exposure.size(); ++c) sum += skill(c);
    return sum / static_cast<double>(exposure.size());
  }

  friend bool operator==(const SkillState& a, const SkillState& b) { return a.exposure == b.exposure; }
};

/// Adds the category counts of the newly annotated images to the exposure.
inline SkillState train_update(SkillState skill, std::span<const GroundTruthImage> newly_annotated) {
  for (const auto& image : newly_annotated) {
    for (const auto& obj : image.objects) {
      if (obj.category >= skill.exposure.size()) throw ValidationError("category out of range");
      ++skill.exposure[obj.category];
    }
  }
  return skill;
}

/// The random stream of one pass over one image.
inline Rng pass_stream(std::uint64_t pass_seed, const std::string& image_id, std::size_t pass_index) {
  return Rng(mix_seed(mix_seed(pass_seed, stable_hash(image_id)), pass_index));
}

/// `pass_count` thresholded forward passes of the simulated detector over one image.
inline ImagePasses simulate_passes(const SyntheticWorld& world, const SkillState& skill,
                                   const std::string& image_id, std::size_t pass_count,
                                   std::uint64_t pass_seed) {
  const SyntheticImage& img = world.image(image_id);
  const GroundTruthImage& gt = world.ground_truth.at(image_id);
  const std::size_t kappa = skill.exposure.size();
  const SimulatorParams& p = skill.params;
  const double p_lo = 1.0 - p.miss_ceiling;
  const double p_hi = 1.0 - p.miss_floor;
  const double fp_mean = p.false_positive_rate * (1.0 - skill.mean_skill());
  const double w = img.width, h = img.height;

  auto clamp_box = [&](double x0, double y0, double x1, double y1) -> std::optional<BoundingBox> {
    x0 = std::clamp(x0, 0.0, w);
    x1 = std::clamp(x1, 0.0, w);
    y0 = std::clamp(y0, 0.0, h);
    y1 = std::clamp(y1, 0.0, h);
    if (x1 - x0 < 1.0 || y1 - y0 < 1.0) return std::nullopt;
    return BoundingBox(x0, y0, x1, y1);
  };

  ImagePasses raw{image_id, img.width, img.height, {}};
  for (std::size_t pass = 1; pass <= pass_count; ++pass) {
    Rng rng = pass_stream(pass_seed, image_id, pass);
    std::vector<Detection> dets;
    for (const auto& obj : gt.objects) {
      const double q = skill.skill(obj.category) * (1.0 - img.difficulty);
      const double p_det = std::clamp(p_lo + (p_hi - p_lo) * q, 0.0, 1.0);
      // Draw everything unconditionally so the stream layout does not depend on outcomes.
      const bool detected = rng.bernoulli(p_det);
      const double sigma = (p.jitter_floor + p.jitter_sigma * (1.0 - q)) * obj.box.diagonal();
      const double dx0 = rng.normal() * sigma, dy0 = rng.normal() * sigma;
      const double dx1 = rng.normal() * sigma, dy1 = rng.normal() * sigma;
      std::vector<double> scores = detail::simplex_draw(rng, kappa);
      if (!detected) continue;
      for (double& s : scores) s *= (1.0 - q);
      scores[obj.category] += q;
      detail::renormalize(scores);
      auto box = clamp_box(obj.box.x_min() + dx0, obj.box.y_min() + dy0, obj.box.x_max() + dx1,
                           obj.box.y_max() + dy1);
      if (box) dets.push_back(Detection{*box, std::move(scores)});
    }
    const unsigned false_positives = rng.poisson(fp_mean);
    for (unsigned f = 0; f < false_positives; ++f) {
      const double bw = rng.uniform(20.0, std::min(160.0, w));
      const double bh = rng.uniform(20.0, std::min(160.0, h));
      const double x = rng.uniform(0.0, w - bw);
      const double y = rng.uniform(0.0, h - bh);
      std::vector<double> scores = detail::simplex_draw(rng, kappa);
      if (auto box = clamp_box(x, y, x + bw, y + bh)) dets.push_back(Detection{*box, std::move(scores)});
    }
    raw.passes.push_back(std::move(dets));
  }
  return apply_thresholds(raw, p.thresholds);
}

// ---------------------------------------------------------------------------
// World persistence: ground truth and manifest in the detection-io formats plus a
// world.json with the per-image dimensions and difficulties.

inline void save_world(const std::filesystem::path& dir, const SyntheticWorld& world) {
  std::filesystem::create_directories(dir);
  save_ground_truth(dir / "ground_truth.jsonl", world.ground_truth);
  save_manifest(dir / "manifest.json", world.manifest);
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : world.images) {
    images.push_back({{"image_id", img.image_id},
                      {"width", img.width},
                      {"height", img.height},
                      {"difficulty", img.difficulty}});
  }
  nlohmann::json doc{{"seed", world.seed}, {"images", std::move(images)}};
  write_file_atomic(dir / "world.json", doc.dump(1) + "\n");
}

inline SyntheticWorld load_world(const std::filesystem::path& dir) {
  SyntheticWorld world;
  world.manifest = load_manifest(dir / "manifest.json", /*require_initial=*/false);
  world.ground_truth = load_ground_truth(dir / "ground_truth.jsonl", world.manifest.catalog.size());
  const auto doc = nlohmann::json::parse(read_file(dir / "world.json"));
  world.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& rec : doc.at("images")) {
    world.images.push_back(SyntheticImage{rec.at("image_id").get<std::string>(), rec.at("width").get<int>(),
                                          rec.at("height").get<int>(), rec.at("difficulty").get<double>()});
  }
  std::sort(world.images.begin(), world.images.end(),
            [](const SyntheticImage& a, const SyntheticImage& b) { return a.image_id < b.image_id; });
  for (const auto& img : world.images) {
    if (!world.ground_truth.count(img.image_id)) {
      throw ValidationError("world: image '" + img.image_id + "' has no ground truth");
    }
  }
  return world;
}

}  // namespace boxal
