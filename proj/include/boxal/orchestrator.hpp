#pragma once

// The active-learning loop: infer the pool with the current model, rank by certainty,
// move a batch from the pool to the training set, retrain, repeat.
//
// Run directory layout:
//   config                      flat key = value run configuration
//   manifest.json               dataset partitions and category catalog
//   state/iter_N.json           loop state after N sampling iterations (commit point)
//   log.csv                     one row per iteration, regenerated from the latest state
//   events.log                  append-only audit trail
//   samples/iter_N.txt          ids sampled at iteration N
//   detections/iter_N.jsonl     multi-pass detections produced for iteration N
//   adapter/                    file-protocol requests, id lists and completion sentinels
//   lock                        present while a process owns the run

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "boxal/certainty.hpp"
#include "boxal/config.hpp"
#include "boxal/detection.hpp"
#include "boxal/detection_io.hpp"
#include "boxal/error.hpp"
#include "boxal/evaluation.hpp"
#include "boxal/grouping.hpp"
#include "boxal/io_util.hpp"
#include "boxal/sampling.hpp"
#include "boxal/simulator.hpp"
#include "boxal/statistics.hpp"

namespace boxal {

namespace fs = std::filesystem;

struct SampledImage {
  std::string image_id;
  double c_min = 1.0;

  friend bool operator==(const SampledImage&, const SampledImage&) = default;
};

/// What happened at one iteration. A record without sampled images is an
/// evaluation-only record (the final model of a loop).
struct IterationLog {
  std::size_t iteration = 0;
  std::size_t train_size = 0;
  std::size_t epochs = 0;
  std::optional<double> map;
  std::vector<SampledImage> sampled;
  std::optional<double> f1_sampled_mean;
  std::optional<double> f1_remaining_mean;
  std::optional<TTestResult> ttest;
  std::string timestamp;

  bool evaluation_only() const { return sampled.empty(); }

  std::optional<double> sampled_c_min_mean() const {
    if (sampled.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& s : sampled) sum += s.c_min;
    return sum / static_cast<double>(sampled.size());
  }

  // Timestamps are bookkeeping and do not take part in comparisons.
  friend bool operator==(const IterationLog& a, const IterationLog& b) {
    auto same_ttest = [](const std::optional<TTestResult>& x, const std::optional<TTestResult>& y) {
      if (x.has_value() != y.has_value()) return false;
      return !x || (x->t == y->t && x->df == y->df && x->p == y->p);
    };
    return a.iteration == b.iteration && a.train_size == b.train_size && a.epochs == b.epochs &&
           a.map == b.map && a.sampled == b.sampled && a.f1_sampled_mean == b.f1_sampled_mean &&
           a.f1_remaining_mean == b.f1_remaining_mean && same_ttest(a.ttest, b.ttest);
  }
};

/// Persisted loop state: iteration index, training set T_i, unlabeled pool P_i and the
/// per-iteration log. Both id lists are kept sorted.
struct ActiveLearningState {
  std::size_t iteration = 0;
  std::vector<std::string> training;
  std::vector<std::string> pool;
  std::vector<IterationLog> log;

  friend bool operator==(const ActiveLearningState&, const ActiveLearningState&) = default;
};

// ---------------------------------------------------------------------------
// Run directory

struct RunPaths {
  fs::path root;

  static std::string iter(std::size_t i) { return "iter_" + std::to_string(i); }

  fs::path config() const { return root / "config"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path state_dir() const { return root / "state"; }
  fs::path state(std::size_t i) const { return state_dir() / (iter(i) + ".json"); }
  fs::path log_csv() const { return root / "log.csv"; }
  fs::path events() const { return root / "events.log"; }
  fs::path samples(std::size_t i) const { return root / "samples" / (iter(i) + ".txt"); }
  fs::path detections_dir() const { return root / "detections"; }
  fs::path detections(std::size_t i) const { return detections_dir() / (iter(i) + ".jsonl"); }
  fs::path adapter_dir() const { return root / "adapter"; }
  fs::path trainset(std::size_t i) const {
    return adapter_dir() / ("trainset_iter" + std::to_string(i) + ".txt");
  }
  fs::path request_images(std::size_t i) const {
    return adapter_dir() / ("images_iter" + std::to_string(i) + ".txt");
  }
  fs::path request(std::size_t i) const {
    return adapter_dir() / ("request_iter" + std::to_string(i) + ".json");
  }
  fs::path sentinel(std::size_t i) const { return adapter_dir() / ("done_iter" + std::to_string(i)); }
  fs::path lock() const { return root / "lock"; }

  fs::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : root / path;
  }
};

/// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw std::runtime_error("run directory is locked by another process (" + path_.string() +
                               "); remove the file if no run is active");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  RunLock(RunLock&& other) noexcept : path_(std::move(other.path_)) { other.path_.clear(); }
  RunLock& operator=(RunLock&&) = delete;
  ~RunLock() {
    if (!path_.empty()) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
};

struct RunContext {
  RunPaths paths;
  RunConfig config;
  DatasetManifest manifest;
  GroundTruth ground_truth;

  const std::vector<std::string>& eval_ids() const {
    return config.eval_split == "validation" ? manifest.validation : manifest.test;
  }
  std::size_t category_count() const { return manifest.catalog.size(); }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// State serialization

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

inline std::optional<double> read_optional_number(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) return parse_double(v.get<std::string>(), "state");
  return v.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const IterationLog& rec) {
  nlohmann::json sampled = nlohmann::json::array();
  for (const auto& s : rec.sampled) sampled.push_back({{"image_id", s.image_id}, {"c_min", s.c_min}});
  nlohmann::json j{{"iteration", rec.iteration},
                   {"train_size", rec.train_size},
                   {"epochs", rec.epochs},
                   {"map", detail::optional_number(rec.map)},
                   {"f1_sampled_mean", detail::optional_number(rec.f1_sampled_mean)},
                   {"f1_remaining_mean", detail::optional_number(rec.f1_remaining_mean)},
                   {"sampled", std::move(sampled)},
                   {"timestamp", rec.timestamp}};
  if (rec.ttest) {
    j["ttest"] = {{"t", detail::optional_number(rec.ttest->t)},
                  {"df", rec.ttest->df},
                  {"p", rec.ttest->p}};
  } else {
    j["ttest"] = nullptr;
  }
  return j;
}

inline IterationLog iteration_log_from_json(const nlohmann::json& j) {
  IterationLog rec;
  rec.iteration = j.at("iteration").get<std::size_t>();
  rec.train_size = j.at("train_size").get<std::size_t>();
  rec.epochs = j.at("epochs").get<std::size_t>();
  rec.map = detail::read_optional_number(j.at("map"));
  rec.f1_sampled_mean = detail::read_optional_number(j.at("f1_sampled_mean"));
  rec.f1_remaining_mean = detail::read_optional_number(j.at("f1_remaining_mean"));
  for (const auto& s : j.at("sampled")) {
    rec.sampled.push_back({s.at("image_id").get<std::string>(), s.at("c_min").get<double>()});
  }
  if (!j.at("ttest").is_null()) {
    const auto& t = j.at("ttest");
    rec.ttest = TTestResult{*detail::read_optional_number(t.at("t")), t.at("df").get<double>(),
                            t.at("p").get<double>()};
  }
  rec.timestamp = j.value("timestamp", "");
  return rec;
}

inline nlohmann::json to_json(const ActiveLearningState& s) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& rec : s.log) log.push_back(to_json(rec));
  return {{"iteration", s.iteration}, {"training", s.training}, {"pool", s.pool}, {"log", std::move(log)}};
}

inline ActiveLearningState state_from_json(const nlohmann::json& j) {
  ActiveLearningState s;
  s.iteration = j.at("iteration").get<std::size_t>();
  s.training = j.at("training").get<std::vector<std::string>>();
  s.pool = j.at("pool").get<std::vector<std::string>>();
  for (const auto& rec : j.at("log")) s.log.push_back(iteration_log_from_json(rec));
  return s;
}

inline ActiveLearningState load_state(const fs::path& path) {
  try {
    return state_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

/// The state with the highest iteration index in the run directory.
inline ActiveLearningState load_latest_state(const RunPaths& paths) {
  std::optional<std::size_t> latest;
  if (fs::exists(paths.state_dir())) {
    for (const auto& entry : fs::directory_iterator(paths.state_dir())) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 10 && name.starts_with("iter_") && name.ends_with(".json")) {
        const std::string digits = name.substr(5, name.size() - 10);
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
          const std::size_t i = std::stoul(digits);
          latest = latest ? std::max(*latest, i) : i;
        }
      }
    }
  }
  if (!latest) throw std::runtime_error("no persisted state in " + paths.root.string());
  return load_state(paths.state(*latest));
}

inline std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

/// Per-iteration report; the data behind learning curves and sampled-vs-remaining plots.
inline std::string log_csv(const ActiveLearningState& state) {
  std::string out =
      "iteration,train_size,epochs,map,mean_f1_sampled,mean_f1_remaining,t,df,p,sampled,mean_c_min_sampled\n";
  for (const auto& r : state.log) {
    out += std::to_string(r.iteration) + ',' + std::to_string(r.train_size) + ',' +
           std::to_string(r.epochs) + ',' + optional_field(r.map) + ',' +
           optional_field(r.f1_sampled_mean) + ',' + optional_field(r.f1_remaining_mean) + ',';
    if (r.ttest) {
      out += format_double(r.ttest->t) + ',' + format_double(r.ttest->df) + ',' + format_double(r.ttest->p);
    } else {
      out += ",,";
    }
    out += ',' + std::to_string(r.sampled.size()) + ',' + optional_field(r.sampled_c_min_mean()) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Invariants

/// T_i, P_i, validation and test partition the manifest's images, pairwise disjoint.
inline void check_conservation(const ActiveLearningState& state, const DatasetManifest& manifest) {
  std::map<std::string, int> seen;
  for (const auto* part : {&state.training, &state.pool, &manifest.validation, &manifest.test}) {
    for (const auto& id : *part) {
      if (++seen[id] > 1) throw ContractError("ledger conservation: '" + id + "' is in two partitions");
    }
  }
  const auto all = manifest.all_ids();
  if (seen.size() != all.size()) throw ContractError("ledger conservation: image count changed");
  for (const auto& id : all) {
    if (!seen.count(id)) throw ContractError("ledger conservation: '" + id + "' went missing");
  }
}

// ---------------------------------------------------------------------------
// Detector adapters

/// What the orchestrator asks of a detector: a model trained on `training` with an
/// epoch budget of `epochs` (warm or cold start is the adapter's choice), then
/// `passes` stochastic forward passes over every id in `images`.
struct AdapterRequest {
  std::size_t iteration = 0;
  std::size_t epochs = 0;
  std::vector<std::string> training;
  std::vector<std::string> images;
};

class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;
  virtual std::vector<ImagePasses> infer(const AdapterRequest& request) = 0;
};

/// In-process stand-in detector backed by a synthetic world. Skill is derived from the
/// ground truth of the requested training set, which makes requests idempotent.
class SimulatorAdapter : public DetectorAdapter {
 public:
  SimulatorAdapter(std::shared_ptr<const SyntheticWorld> world, SimulatorParams params, std::size_t passes,
                   std::uint64_t seed, std::optional<RunPaths> dump = std::nullopt)
      : world_(std::move(world)), params_(params), passes_(passes), seed_(seed), dump_(std::move(dump)) {}

  std::vector<ImagePasses> infer(const AdapterRequest& request) override {
    std::vector<GroundTruthImage> annotated;
    for (const auto& id : request.training) annotated.push_back(world_->ground_truth.at(id));
    skill_ = train_update(SkillState::untrained(world_->manifest.catalog.size(), params_), annotated);
    const std::uint64_t pass_seed = mix_seed(seed_, request.iteration);
    std::vector<ImagePasses> out;
    out.reserve(request.images.size());
    for (const auto& id : request.images) {
      out.push_back(simulate_passes(*world_, skill_, id, passes_, pass_seed));
    }
    if (dump_) save_image_passes(dump_->detections(request.iteration), out);
    return out;
  }

  const SkillState& skill() const { return skill_; }

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  SimulatorParams params_;
  std::size_t passes_;
  std::uint64_t seed_;
  std::optional<RunPaths> dump_;
  SkillState skill_;
};

/// File-protocol adapter for external trainers.
///
/// For iteration i the orchestrator writes adapter/trainset_iter<i>.txt,
/// adapter/images_iter<i>.txt and adapter/request_iter<i>.json, then (optionally) runs
/// `adapter_command <request.json>`. The adapter must write the detections file named in
/// the request and finally create the sentinel file; the orchestrator polls for the
/// sentinel until `adapter_timeout_s` elapses. A sentinel left by an earlier attempt is
/// reused, so an interrupted iteration resumes without retraining.
class FileDetectorAdapter : public DetectorAdapter {
 public:
  FileDetectorAdapter(RunPaths paths, RunConfig config, CategoryCatalog catalog)
      : paths_(std::move(paths)), config_(std::move(config)), catalog_(std::move(catalog)) {}

  std::vector<ImagePasses> infer(const AdapterRequest& request) override {
    const std::size_t i = request.iteration;
    const fs::path sentinel = paths_.sentinel(i);
    if (!fs::exists(sentinel)) {
      write_request(request);
      if (!config_.adapter_command.empty()) {
        const std::string cmd = config_.adapter_command + " '" + paths_.request(i).string() + "'";
        const int rc = std::system(cmd.c_str());
        if (rc != 0) throw AdapterError("adapter command failed (exit " + std::to_string(rc) + "): " + cmd);
      }
      wait_for(sentinel);
    }
    if (!fs::exists(paths_.detections(i))) {
      throw AdapterError("adapter signalled completion but " + paths_.detections(i).string() + " is missing");
    }
    try {
      return load_image_passes(paths_.detections(i), config_.passes, catalog_.size());
    } catch (const std::exception& e) {
      throw AdapterError(std::string("adapter output rejected: ") + e.what());
    }
  }

 private:
  void write_request(const AdapterRequest& r) const {
    const std::size_t i = r.iteration;
    fs::create_directories(paths_.adapter_dir());
    fs::create_directories(paths_.detections_dir());
    write_file_atomic(paths_.trainset(i), join_lines(r.training));
    write_file_atomic(paths_.request_images(i), join_lines(r.images));
    nlohmann::json doc{{"iteration", i},
                       {"epochs", r.epochs},
                       {"warm_start_from", i == 0 ? nlohmann::json(nullptr) : nlohmann::json(i - 1)},
                       {"passes", config_.passes},
                       {"dropout", config_.dropout},
                       {"confidence", config_.confidence},
                       {"nms_iou", config_.nms_iou},
                       {"categories", catalog_.names()},
                       {"trainset", fs::absolute(paths_.trainset(i)).string()},
                       {"images", fs::absolute(paths_.request_images(i)).string()},
                       {"detections", fs::absolute(paths_.detections(i)).string()},
                       {"sentinel", fs::absolute(paths_.sentinel(i)).string()}};
    write_file_atomic(paths_.request(i), doc.dump(2) + "\n");
  }

  void wait_for(const fs::path& sentinel) const {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::duration<double>(config_.adapter_timeout_s);
    while (!fs::exists(sentinel)) {
      if (clock::now() >= deadline) {
        throw AdapterError("timed out waiting for adapter sentinel " + sentinel.string());
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }

  RunPaths paths_;
  RunConfig config_;
  CategoryCatalog catalog_;
};

inline std::unique_ptr<DetectorAdapter> make_adapter(const RunContext& ctx) {
  if (ctx.config.adapter == "simulator") {
    auto world = std::make_shared<const SyntheticWorld>(load_world(ctx.paths.resolve(ctx.config.world)));
    std::optional<RunPaths> dump;
    if (ctx.config.save_detections) dump = ctx.paths;
    return std::make_unique<SimulatorAdapter>(std::move(world), ctx.config.simulator_params(), ctx.config.passes,
                                              ctx.config.seed, dump);
  }
  return std::make_unique<FileDetectorAdapter>(ctx.paths, ctx.config, ctx.manifest.catalog);
}

// ---------------------------------------------------------------------------
// Run lifecycle

inline RunContext load_run_context(const fs::path& root) {
  RunContext ctx;
  ctx.paths = RunPaths{root};
  ctx.config = load_config(ctx.paths.config());
  validate(ctx.config);
  ctx.manifest = load_manifest(ctx.paths.manifest());
  if (!ctx.config.ground_truth.empty()) {
    ctx.ground_truth = load_ground_truth(ctx.paths.resolve(ctx.config.ground_truth), ctx.category_count());
  }
  return ctx;
}

inline void write_log(const RunPaths& paths, const ActiveLearningState& state) {
  write_file_atomic(paths.log_csv(), log_csv(state));
}

/// Creates a run directory: T_0 = initial training set, P_0 = pool, iteration 0.
/// `config` paths must already be absolute or relative to `root`.
inline ActiveLearningState init_run(const DatasetManifest& manifest, const RunConfig& config, const fs::path& root) {
  validate(manifest);
  validate(config);
  const RunPaths paths{root};
  if (fs::exists(paths.state_dir()) && !fs::is_empty(paths.state_dir())) {
    throw ContractError("run directory " + root.string() + " already holds a run");
  }
  fs::create_directories(paths.state_dir());
  write_file_atomic(paths.config(), to_text(config));
  save_manifest(paths.manifest(), manifest);
  ActiveLearningState state;
  state.training = manifest.initial_training;
  state.pool = manifest.pool;
  std::sort(state.training.begin(), state.training.end());
  std::sort(state.pool.begin(), state.pool.end());
  check_conservation(state, manifest);
  write_file_atomic(paths.state(0), to_json(state).dump(1) + "\n");
  write_log(paths, state);
  append_line(paths.events(), utc_timestamp() + " init training=" + std::to_string(state.training.size()) +
                                  " pool=" + std::to_string(state.pool.size()));
  return state;
}

using DetectionsById = std::map<std::string, ImagePasses>;

/// Requests multi-pass detections for the pool and the evaluation images from the model
/// trained on the state's training set. Results are validated and thresholded.
inline DetectionsById request_detections(const RunContext& ctx, const ActiveLearningState& state,
                                         DetectorAdapter& adapter) {
  AdapterRequest req;
  req.iteration = state.iteration;
  req.epochs = ctx.config.epochs(state.iteration);
  req.training = state.training;
  std::set<std::string> wanted(state.pool.begin(), state.pool.end());
  wanted.insert(ctx.eval_ids().begin(), ctx.eval_ids().end());
  req.images.assign(wanted.begin(), wanted.end());

  DetectionsById out;
  for (auto& img : adapter.infer(req)) {
    if (!wanted.count(img.image_id)) continue;
    validate(img, ctx.config.passes, ctx.category_count());
    const std::string id = img.image_id;
    if (!out.emplace(id, apply_thresholds(img, ctx.config.thresholds())).second) {
      throw AdapterError("adapter returned image '" + id + "' twice");
    }
  }
  for (const auto& id : wanted) {
    if (!out.count(id)) throw AdapterError("adapter returned no detections for image '" + id + "'");
  }
  return out;
}

inline std::vector<FinalPrediction> predictions_for(const ImagePasses& img, double match_iou) {
  return consolidate(group_passes(img, match_iou));
}

/// mAP of the current model over the evaluation split; nullopt when that split has no
/// ground-truth objects.
inline std::optional<double> evaluate_map(const RunContext& ctx, const DetectionsById& detections) {
  GroundTruth gt;
  PredictionsByImage preds;
  std::size_t objects = 0;
  for (const auto& id : ctx.eval_ids()) {
    auto it = ctx.ground_truth.find(id);
    if (it == ctx.ground_truth.end()) continue;
    objects += it->second.objects.size();
    gt.emplace(id, it->second);
    preds.emplace(id, predictions_for(detections.at(id), ctx.config.match_iou));
  }
  if (objects == 0) return std::nullopt;
  return coco_map(preds, gt, ctx.category_count(), {ctx.config.f1_iou, kCocoMaxDetections}).map;
}

struct SplitComparison {
  std::vector<double> sampled_f1;
  std::vector<double> remaining_f1;
  std::optional<TTestResult> ttest;  // absent when either side has fewer than 2 images
};

/// Per-image F1 of the current model on the sampled images and on the images left in the
/// pool, compared with a two-sided unpaired Student's t-test.
inline SplitComparison compare_sampled_vs_remaining(const RunContext& ctx, const DetectionsById& detections,
                                                    std::span<const std::string> sampled,
                                                    std::span<const std::string> remaining) {
  auto f1_of = [&](const std::string& id) {
    auto gt = ctx.ground_truth.find(id);
    if (gt == ctx.ground_truth.end()) throw ContractError("no ground truth for image '" + id + "'");
    return f1_image(predictions_for(detections.at(id), ctx.config.match_iou), gt->second, ctx.config.f1_iou);
  };
  SplitComparison out;
  for (const auto& id : sampled) out.sampled_f1.push_back(f1_of(id));
  for (const auto& id : remaining) out.remaining_f1.push_back(f1_of(id));
  if (out.sampled_f1.size() >= 2 && out.remaining_f1.size() >= 2) {
    out.ttest = ttest_two_sided(out.sampled_f1, out.remaining_f1);
  }
  return out;
}

struct IterationHooks {
  // Called with the next state after sampling, before anything is persisted.
  std::function<void(const ActiveLearningState&)> before_persist;
};

namespace detail {

inline void replace_or_append(std::vector<IterationLog>& log, IterationLog rec) {
  std::erase_if(log, [&](const IterationLog& r) { return r.iteration == rec.iteration && r.evaluation_only(); });
  log.push_back(std::move(rec));
}

inline void commit(const RunContext& ctx, const ActiveLearningState& state, const std::string& event) {
  write_file_atomic(ctx.paths.state(state.iteration), to_json(state).dump(1) + "\n");
  write_log(ctx.paths, state);
  append_line(ctx.paths.events(), utc_timestamp() + " " + event);
}

}  // namespace detail

/// One sampling iteration: infer, rank (or draw), move N images from the pool to the
/// training set, log, and persist atomically. The returned state belongs to the next
/// iteration; on any failure the persisted state is left untouched.
inline ActiveLearningState run_iteration(const RunContext& ctx, const ActiveLearningState& state,
                                         DetectorAdapter& adapter, const IterationHooks& hooks = {}) {
  const RunConfig& cfg = ctx.config;
  const std::size_t n_batch = cfg.batch_size;
  if (state.pool.size() < n_batch) {
    throw ContractError("pool has " + std::to_string(state.pool.size()) + " images, fewer than the batch size " +
                        std::to_string(n_batch));
  }
  const DetectionsById detections = request_detections(ctx, state, adapter);

  IterationLog rec;
  rec.iteration = state.iteration;
  rec.train_size = state.training.size();
  rec.epochs = cfg.epochs(state.iteration);
  rec.map = evaluate_map(ctx, detections);

  std::vector<ImagePasses> pool_passes;
  pool_passes.reserve(state.pool.size());
  for (const auto& id : state.pool) pool_passes.push_back(detections.at(id));
  const auto certainties = score_pool(pool_passes, ctx.category_count(), cfg.passes, cfg.match_iou);
  std::map<std::string, double> c_min;
  std::vector<RankedImage> ranking;
  for (const auto& c : certainties) {
    c_min[c.image_id] = c.c_min;
    ranking.push_back({c.image_id, c.c_min});
  }

  const std::vector<std::string> selected = cfg.strategy == Strategy::min_certainty
                                                ? sample_min_certainty(ranking, n_batch)
                                                : sample_random(state.pool, n_batch, cfg.seed, state.iteration);
  for (const auto& id : selected) rec.sampled.push_back({id, c_min.at(id)});

  const std::set<std::string> chosen(selected.begin(), selected.end());
  std::vector<std::string> remaining;
  for (const auto& id : state.pool) {
    if (!chosen.count(id)) remaining.push_back(id);
  }
  const SplitComparison cmp = compare_sampled_vs_remaining(ctx, detections, selected, remaining);
  rec.f1_sampled_mean = mean(cmp.sampled_f1);
  if (!cmp.remaining_f1.empty()) rec.f1_remaining_mean = mean(cmp.remaining_f1);
  rec.ttest = cmp.ttest;
  rec.timestamp = utc_timestamp();

  ActiveLearningState next = state;
  next.iteration = state.iteration + 1;
  next.training.insert(next.training.end(), selected.begin(), selected.end());
  std::sort(next.training.begin(), next.training.end());
  next.pool = std::move(remaining);
  detail::replace_or_append(next.log, rec);
  check_conservation(next, ctx.manifest);

  if (hooks.before_persist) hooks.before_persist(next);

  write_file_atomic(ctx.paths.samples(state.iteration), join_lines(selected));
  std::ostringstream event;
  event << "iteration=" << state.iteration << " strategy=" << to_string(cfg.strategy)
        << " sampled=" << selected.size() << " train_size=" << next.training.size()
        << " pool=" << next.pool.size() << " map=" << optional_field(rec.map);
  detail::commit(ctx, next, event.str());
  return next;
}

/// Evaluation-only record for the model trained on the state's current training set.
inline ActiveLearningState evaluate_current(const RunContext& ctx, const ActiveLearningState& state,
                                            DetectorAdapter& adapter) {
  const DetectionsById detections = request_detections(ctx, state, adapter);
  IterationLog rec;
  rec.iteration = state.iteration;
  rec.train_size = state.training.size();
  rec.epochs = ctx.config.epochs(state.iteration);
  rec.map = evaluate_map(ctx, detections);
  rec.timestamp = utc_timestamp();
  ActiveLearningState next = state;
  detail::replace_or_append(next.log, rec);
  detail::commit(ctx, next, "evaluate iteration=" + std::to_string(state.iteration) +
                                " train_size=" + std::to_string(state.training.size()) +
                                " map=" + optional_field(rec.map));
  return next;
}

/// Runs `iterations` sampling iterations, then evaluates the final model.
inline ActiveLearningState run_loop(const RunContext& ctx, ActiveLearningState state, DetectorAdapter& adapter,
                                    std::size_t iterations, const IterationHooks& hooks = {}) {
  if (state.pool.size() < iterations * ctx.config.batch_size) {
    throw ContractError("pool of " + std::to_string(state.pool.size()) + " images cannot supply " +
                        std::to_string(iterations) + " batches of " + std::to_string(ctx.config.batch_size));
  }
  for (std::size_t k = 0; k < iterations; ++k) state = run_iteration(ctx, state, adapter, hooks);
  return evaluate_current(ctx, state, adapter);
}

}  // namespace boxal
