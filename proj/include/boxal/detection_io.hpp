#pragma once

// Line-delimited JSON formats for multi-pass detections, ground truth and consolidated
// predictions, plus the single-document dataset manifest.
//
//   detections:   {"image_id": s, "width": i, "height": i,
//                  "passes": [[{"bbox": [x1,y1,x2,y2], "scores": [f, ...]}, ...], ...]}
//   ground truth: {"image_id": s, "objects": [{"bbox": [...], "category": i}, ...]}
//   predictions:  {"image_id": s, "predictions": [{"bbox": [...], "category": i, "score": f}]}
//   manifest:     {"categories": [...], "initial_training": [...], "pool": [...],
//                  "validation": [...], "test": [...]}
//
// Floats are written in shortest round-trip form, so load(save(x)) == x bit for bit.

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxal/detection.hpp"
#include "boxal/error.hpp"
#include "boxal/io_util.hpp"

namespace boxal {

namespace detail {

using nlohmann::json;

inline const json& require_field(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object()) throw ValidationError(ctx + ": expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(ctx + ": missing field '" + key + "'");
  return *it;
}

inline double to_number(const json& v, const std::string& ctx) {
  if (!v.is_number()) throw ValidationError(ctx + ": expected a number");
  return v.get<double>();
}

inline std::size_t to_index(const json& v, const std::string& ctx) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ValidationError(ctx + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline BoundingBox box_from_json(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 4) throw ValidationError(ctx + ": bbox must be 4 numbers");
  return BoundingBox(to_number(v[0], ctx + ".bbox"), to_number(v[1], ctx + ".bbox"),
                     to_number(v[2], ctx + ".bbox"), to_number(v[3], ctx + ".bbox"));
}

inline json box_to_json(const BoundingBox& b) {
  return json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

inline std::string image_context(const json& record) {
  if (record.is_object()) {
    auto it = record.find("image_id");
    if (it != record.end() && it->is_string()) return "image '" + it->get<std::string>() + "'";
  }
  return "record";
}

// Calls `on_record(json, line_number)` for every non-blank line. JSON syntax errors
// and validation failures are reported as ParseError carrying the line number.
inline void for_each_record(std::istream& in, const std::string& source,
                            const std::function<void(const json&, std::size_t)>& on_record) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      on_record(record, line_no);
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, image_context(record) + ": " + e.what());
    }
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-pass detections

inline ImagePasses image_passes_from_json(const nlohmann::json& rec, std::size_t pass_count,
                                          std::size_t category_count) {
  using detail::require_field;
  const std::string ctx = detail::image_context(rec);
  const auto& id = require_field(rec, "image_id", ctx);
  if (!id.is_string()) throw ValidationError(ctx + ": image_id must be a string");
  ImagePasses img;
  img.image_id = id.get<std::string>();
  const auto& w = require_field(rec, "width", ctx);
  const auto& h = require_field(rec, "height", ctx);
  if (!w.is_number_integer() || !h.is_number_integer()) {
    throw ValidationError(ctx + ": width/height must be integers");
  }
  img.width = w.get<int>();
  img.height = h.get<int>();
  const auto& passes = require_field(rec, "passes", ctx);
  if (!passes.is_array()) throw ValidationError(ctx + ": passes must be an array");
  for (std::size_t p = 0; p < passes.size(); ++p) {
    const std::string pctx = ctx + " passes[" + std::to_string(p) + "]";
    if (!passes[p].is_array()) throw ValidationError(pctx + ": must be an array");
    std::vector<Detection> dets;
    for (std::size_t d = 0; d < passes[p].size(); ++d) {
      const std::string dctx = pctx + "[" + std::to_string(d) + "]";
      const auto& det = passes[p][d];
      BoundingBox box = detail::box_from_json(require_field(det, "bbox", dctx), dctx);
      const auto& scores = require_field(det, "scores", dctx);
      if (!scores.is_array()) throw ValidationError(dctx + ": scores must be an array");
      std::vector<double> values;
      for (const auto& s : scores) values.push_back(detail::to_number(s, dctx + ".scores"));
      dets.push_back(Detection{box, std::move(values)});
    }
    img.passes.push_back(std::move(dets));
  }
  validate(img, pass_count, category_count);
  return img;
}

inline nlohmann::json to_json(const ImagePasses& img) {
  nlohmann::json passes = nlohmann::json::array();
  for (const auto& pass : img.passes) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& det : pass) {
      dets.push_back({{"bbox", detail::box_to_json(det.box)}, {"scores", det.scores}});
    }
    passes.push_back(std::move(dets));
  }
  return {{"image_id", img.image_id},
          {"width", img.width},
          {"height", img.height},
          {"passes", std::move(passes)}};
}

/// `pass_count` / `category_count` of 0 disable the respective length checks.
inline std::vector<ImagePasses> read_image_passes(std::istream& in, const std::string& source,
                                                  std::size_t pass_count = 0,
                                                  std::size_t category_count = 0) {
  std::vector<ImagePasses> out;
  std::set<std::string> seen;
  detail::for_each_record(in, source, [&](const nlohmann::json& rec, std::size_t) {
    ImagePasses img = image_passes_from_json(rec, pass_count, category_count);
    if (!seen.insert(img.image_id).second) {
      throw ValidationError("duplicate image_id '" + img.image_id + "'");
    }
    out.push_back(std::move(img));
  });
  return out;
}

inline std::vector<ImagePasses> load_image_passes(const std::filesystem::path& path,
                                                  std::size_t pass_count = 0,
                                                  std::size_t category_count = 0) {
  auto in = detail::open_input(path);
  return read_image_passes(in, path.string(), pass_count, category_count);
}

inline void write_image_passes(std::ostream& out, std::span<const ImagePasses> images) {
  for (const auto& img : images) out << to_json(img).dump() << '\n';
}

inline void save_image_passes(const std::filesystem::path& path,
                              std::span<const ImagePasses> images) {
  std::ostringstream os;
  write_image_passes(os, images);
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Ground truth

inline GroundTruthImage ground_truth_from_json(const nlohmann::json& rec,
                                               std::size_t category_count) {
  using detail::require_field;
  const std::string ctx = detail::image_context(rec);
  const auto& id = require_field(rec, "image_id", ctx);
  if (!id.is_string()) throw ValidationError(ctx + ": image_id must be a string");
  GroundTruthImage gt{id.get<std::string>(), {}};
  const auto& objects = require_field(rec, "objects", ctx);
  if (!objects.is_array()) throw ValidationError(ctx + ": objects must be an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string octx = ctx + " objects[" + std::to_string(i) + "]";
    BoundingBox box = detail::box_from_json(require_field(objects[i], "bbox", octx), octx);
    std::size_t category =
        detail::to_index(require_field(objects[i], "category", octx), octx + ".category");
    gt.objects.push_back(GroundTruthObject{box, category});
  }
  validate(gt, category_count);
  return gt;
}

inline nlohmann::json to_json(const GroundTruthImage& gt) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& obj : gt.objects) {
    objects.push_back({{"bbox", detail::box_to_json(obj.box)}, {"category", obj.category}});
  }
  return {{"image_id", gt.image_id}, {"objects", std::move(objects)}};
}

inline GroundTruth read_ground_truth(std::istream& in, const std::string& source,
                                     std::size_t category_count = 0) {
  GroundTruth out;
  detail::for_each_record(in, source, [&](const nlohmann::json& rec, std::size_t) {
    GroundTruthImage gt = ground_truth_from_json(rec, category_count);
    const std::string id = gt.image_id;
    if (!out.emplace(id, std::move(gt)).second) {
      throw ValidationError("duplicate image_id '" + id + "'");
    }
  });
  return out;
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path,
                                     std::size_t category_count = 0) {
  auto in = detail::open_input(path);
  return read_ground_truth(in, path.string(), category_count);
}

inline void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
  for (const auto& [id, image] : gt) out << to_json(image).dump() << '\n';
}

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  std::ostringstream os;
  write_ground_truth(os, gt);
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Consolidated predictions

inline PredictionsByImage read_predictions(std::istream& in, const std::string& source,
                                           std::size_t category_count = 0) {
  using detail::require_field;
  PredictionsByImage out;
  detail::for_each_record(in, source, [&](const nlohmann::json& rec, std::size_t) {
    const std::string ctx = detail::image_context(rec);
    const auto& id = require_field(rec, "image_id", ctx);
    if (!id.is_string()) throw ValidationError(ctx + ": image_id must be a string");
    const auto& preds = require_field(rec, "predictions", ctx);
    if (!preds.is_array()) throw ValidationError(ctx + ": predictions must be an array");
    std::vector<FinalPrediction> list;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const std::string pctx = ctx + " predictions[" + std::to_string(i) + "]";
      FinalPrediction p{detail::box_from_json(require_field(preds[i], "bbox", pctx), pctx),
                        detail::to_index(require_field(preds[i], "category", pctx), pctx),
                        detail::to_number(require_field(preds[i], "score", pctx), pctx)};
      validate(p, category_count, pctx);
      list.push_back(p);
    }
    if (!out.emplace(id.get<std::string>(), std::move(list)).second) {
      throw ValidationError("duplicate image_id '" + id.get<std::string>() + "'");
    }
  });
  return out;
}

inline PredictionsByImage load_predictions(const std::filesystem::path& path,
                                           std::size_t category_count = 0) {
  auto in = detail::open_input(path);
  return read_predictions(in, path.string(), category_count);
}

inline void write_predictions(std::ostream& out, const PredictionsByImage& preds) {
  for (const auto& [id, list] : preds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : list) {
      arr.push_back(
          {{"bbox", detail::box_to_json(p.box)}, {"category", p.category}, {"score", p.score}});
    }
    out << nlohmann::json{{"image_id", id}, {"predictions", std::move(arr)}}.dump() << '\n';
  }
}

inline void save_predictions(const std::filesystem::path& path, const PredictionsByImage& preds) {
  std::ostringstream os;
  write_predictions(os, preds);
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Manifest

inline DatasetManifest manifest_from_json(const nlohmann::json& doc, bool require_initial = true) {
  using detail::require_field;
  const std::string ctx = "manifest";
  auto id_list = [&](const char* key) {
    const auto& arr = require_field(doc, key, ctx);
    if (!arr.is_array()) throw ValidationError(ctx + ": '" + key + "' must be an array");
    std::vector<std::string> ids;
    for (const auto& v : arr) {
      if (!v.is_string()) throw ValidationError(ctx + ": '" + key + "' must hold strings");
      ids.push_back(v.get<std::string>());
    }
    return ids;
  };
  DatasetManifest m;
  m.catalog = CategoryCatalog(id_list("categories"));
  m.initial_training = id_list("initial_training");
  m.pool = id_list("pool");
  m.validation = id_list("validation");
  m.test = id_list("test");
  validate(m, require_initial);
  return m;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  return {{"categories", m.catalog.names()},
          {"initial_training", m.initial_training},
          {"pool", m.pool},
          {"validation", m.validation},
          {"test", m.test}};
}

inline DatasetManifest load_manifest(const std::filesystem::path& path, bool require_initial = true) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
  return manifest_from_json(doc, require_initial);
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

}  // namespace boxal
