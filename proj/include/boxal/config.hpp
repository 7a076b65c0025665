#pragma once

// Run configuration stored as a flat "key = value" document. Lines starting with '#'
// are comments. Unknown keys are rejected so that typos do not silently fall back to
// defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "boxal/error.hpp"
#include "boxal/io_util.hpp"
#include "boxal/sampling.hpp"
#include "boxal/simulator.hpp"

namespace boxal {

struct RunConfig {
  std::size_t passes = 15;
  double dropout = 0.75;  // informational; dropout is executed by the detector
  double confidence = 0.5;
  double nms_iou = 0.3;
  double match_iou = 0.5;
  double f1_iou = 0.5;
  std::size_t batch_size = 100;
  std::size_t iterations = 10;
  std::size_t epochs_base = 5;
  std::size_t epochs_increment = 5;
  Strategy strategy = Strategy::min_certainty;
  std::uint64_t seed = 0;
  std::string eval_split = "test";  // test | validation
  std::string manifest;             // paths: relative ones resolve against the run directory
  std::string ground_truth;
  std::string adapter = "file";  // file | simulator
  std::string adapter_command;   // invoked as: <command> <request.json>
  double adapter_timeout_s = 3600.0;
  std::string world;  // simulator world directory
  SimulatorParams simulator{};
  bool save_detections = true;

  /// Epoch budget of the model trained on the training set of `iteration`.
  std::size_t epochs(std::size_t iteration) const { return epochs_base + epochs_increment * iteration; }

  ThresholdConfig thresholds() const { return {confidence, nms_iou}; }

  SimulatorParams simulator_params() const {
    SimulatorParams p = simulator;
    p.thresholds = thresholds();
    return p;
  }
};

inline void validate(const RunConfig& c) {
  require_unit_interval(c.dropout, "dropout");
  require_unit_interval(c.confidence, "confidence");
  require_unit_interval(c.nms_iou, "nms_iou");
  require_unit_interval(c.match_iou, "match_iou");
  require_unit_interval(c.f1_iou, "f1_iou");
  if (c.passes < 2) throw ValidationError("passes must be at least 2");
  if (c.iterations < 1) throw ValidationError("iterations must be at least 1");
  if (c.batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (c.eval_split != "test" && c.eval_split != "validation") {
    throw ValidationError("eval_split must be 'test' or 'validation'");
  }
  if (c.adapter != "file" && c.adapter != "simulator") {
    throw ValidationError("adapter must be 'file' or 'simulator'");
  }
  if (!(c.adapter_timeout_s > 0.0)) throw ValidationError("adapter_timeout_s must be positive");
  if (!(c.simulator.half_saturation > 0.0)) throw ValidationError("sim_half_saturation must be positive");
  require_unit_interval(c.simulator.miss_floor, "sim_miss_floor");
  require_unit_interval(c.simulator.miss_ceiling, "sim_miss_ceiling");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::size_t parse_count(const std::string& v, const std::string& key) {
  const double d = parse_double(v, key);
  if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
    throw ValidationError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(d);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Applies one key/value pair. Throws ValidationError for unknown keys or bad values.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_count;
  if (key == "passes") c.passes = parse_count(value, key);
  else if (key == "dropout") c.dropout = parse_double(value, key);
  else if (key == "confidence") c.confidence = parse_double(value, key);
  else if (key == "nms_iou") c.nms_iou = parse_double(value, key);
  else if (key == "match_iou") c.match_iou = parse_double(value, key);
  else if (key == "f1_iou") c.f1_iou = parse_double(value, key);
  else if (key == "batch_size") c.batch_size = parse_count(value, key);
  else if (key == "iterations") c.iterations = parse_count(value, key);
  else if (key == "epochs_base") c.epochs_base = parse_count(value, key);
  else if (key == "epochs_increment") c.epochs_increment = parse_count(value, key);
  else if (key == "strategy") c.strategy = parse_strategy(value);
  else if (key == "seed") {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(value, &used, 0);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ValidationError("seed: expected an unsigned 64-bit integer, got '" + value + "'");
    }
  }
  else if (key == "eval_split") c.eval_split = value;
  else if (key == "manifest") c.manifest = value;
  else if (key == "ground_truth") c.ground_truth = value;
  else if (key == "adapter") c.adapter = value;
  else if (key == "adapter_command") c.adapter_command = value;
  else if (key == "adapter_timeout_s") c.adapter_timeout_s = parse_double(value, key);
  else if (key == "world") c.world = value;
  else if (key == "save_detections") c.save_detections = parse_bool(value, key);
  else if (key == "sim_half_saturation") c.simulator.half_saturation = parse_double(value, key);
  else if (key == "sim_jitter_sigma") c.simulator.jitter_sigma = parse_double(value, key);
  else if (key == "sim_jitter_floor") c.simulator.jitter_floor = parse_double(value, key);
  else if (key == "sim_false_positive_rate") c.simulator.false_positive_rate = parse_double(value, key);
  else if (key == "sim_miss_floor") c.simulator.miss_floor = parse_double(value, key);
  else if (key == "sim_miss_ceiling") c.simulator.miss_ceiling = parse_double(value, key);
  else throw ValidationError("unknown config key '" + key + "'");
}

/// Parses "key=value" (used for command-line overrides).
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set_config_value(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    try {
      set_config_value(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

inline std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* key, const std::string& value) { os << key << " = " << value << '\n'; };
  kv("passes", std::to_string(c.passes));
  kv("dropout", format_double(c.dropout));
  kv("confidence", format_double(c.confidence));
  kv("nms_iou", format_double(c.nms_iou));
  kv("match_iou", format_double(c.match_iou));
  kv("f1_iou", format_double(c.f1_iou));
  kv("batch_size", std::to_string(c.batch_size));
  kv("iterations", std::to_string(c.iterations));
  kv("epochs_base", std::to_string(c.epochs_base));
  kv("epochs_increment", std::to_string(c.epochs_increment));
  kv("strategy", std::string(to_string(c.strategy)));
  kv("seed", std::to_string(c.seed));
  kv("eval_split", c.eval_split);
  kv("manifest", c.manifest);
  kv("ground_truth", c.ground_truth);
  kv("adapter", c.adapter);
  kv("adapter_command", c.adapter_command);
  kv("adapter_timeout_s", format_double(c.adapter_timeout_s));
  kv("world", c.world);
  kv("save_detections", c.save_detections ? "true" : "false");
  kv("sim_half_saturation", format_double(c.simulator.half_saturation));
  kv("sim_jitter_sigma", format_double(c.simulator.jitter_sigma));
  kv("sim_jitter_floor", format_double(c.simulator.jitter_floor));
  kv("sim_false_positive_rate", format_double(c.simulator.false_positive_rate));
  kv("sim_miss_floor", format_double(c.simulator.miss_floor));
  kv("sim_miss_ceiling", format_double(c.simulator.miss_ceiling));
  return os.str();
}

}  // namespace boxal
