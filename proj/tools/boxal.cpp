// boxal: command-line front end for the active-learning engine and its module-level tools.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "boxal/boxal.hpp"

namespace fs = std::filesystem;
using namespace boxal;

namespace {

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

std::string resolve_against(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return fs::absolute(path.is_absolute() ? path : base / path).lexically_normal().string();
}

RunConfig load_config_with_overrides(const std::string& file, const std::vector<std::string>& overrides) {
  RunConfig cfg = file.empty() ? RunConfig{} : load_config(file);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool is_number(const std::string& s) {
  try {
    parse_double(s, "");
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

std::string ranking_csv(const std::vector<ImageCertainty>& ranked) {
  std::string out = "image_id,c_min,set_count,min_c_sem,min_c_spa,min_c_occ\n";
  for (const auto& c : ranked) {
    out += c.image_id + ',' + format_double(c.c_min) + ',' + std::to_string(c.set_count()) + ',' +
           format_double(c.min_semantic()) + ',' + format_double(c.min_spatial()) + ',' +
           format_double(c.min_occurrence()) + '\n';
  }
  return out;
}

// Reads either a ranking CSV (header starting with image_id) or a plain id list.
struct SampleInput {
  std::vector<RankedImage> ranking;
  std::vector<std::string> ids;
  bool has_scores = false;
};

SampleInput read_sample_input(const fs::path& path) {
  SampleInput in;
  std::istringstream text(read_file(path));
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (first && line.starts_with("image_id")) {
      in.has_scores = line.find(",c_min") != std::string::npos;
      first = false;
      continue;
    }
    first = false;
    const auto cells = split_csv_line(line);
    in.ids.push_back(cells.at(0));
    if (in.has_scores) {
      if (cells.size() < 2) throw ParseError(path.string(), line_no, "missing c_min column");
      try {
        in.ranking.push_back({cells[0], parse_double(cells[1], "c_min")});
      } catch (const ValidationError& e) {
        throw ParseError(path.string(), line_no, e.what());
      }
    }
  }
  return in;
}

int cmd_init(const std::string& manifest_path, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& out) {
  RunConfig cfg = load_config_with_overrides(config_path, overrides);
  const fs::path config_dir = config_path.empty() ? fs::current_path() : fs::path(config_path).parent_path();
  // Paths in the stored config are made absolute so the run directory is self-describing.
  cfg.manifest = fs::absolute(manifest_path).string();
  cfg.ground_truth = resolve_against(config_dir, cfg.ground_truth);
  cfg.world = resolve_against(config_dir, cfg.world);
  if (cfg.ground_truth.empty()) throw ValidationError("config must name a ground_truth file");
  if (cfg.adapter == "simulator" && cfg.world.empty()) {
    throw ValidationError("adapter = simulator needs a world directory");
  }
  const DatasetManifest manifest = load_manifest(manifest_path);
  fs::create_directories(out);
  RunLock lock(RunPaths{out}.lock());
  const auto state = init_run(manifest, cfg, out);
  std::cout << "initialized " << out << ": training=" << state.training.size() << " pool=" << state.pool.size()
            << "\n";
  return 0;
}

void print_iteration(const IterationLog& r) {
  std::cout << "iteration " << r.iteration << ": train_size=" << r.train_size
            << " map=" << optional_field(r.map) << " sampled=" << r.sampled.size();
  if (r.ttest) std::cout << " t=" << format_double(r.ttest->t) << " p=" << format_double(r.ttest->p);
  std::cout << "\n";
}

int cmd_iterate(const std::string& run) {
  RunLock lock(RunPaths{run}.lock());
  const RunContext ctx = load_run_context(run);
  const auto state = load_latest_state(ctx.paths);
  auto adapter = make_adapter(ctx);
  const auto next = run_iteration(ctx, state, *adapter);
  print_iteration(next.log.back());
  return 0;
}

int cmd_loop(const std::string& run, std::optional<std::size_t> iterations) {
  RunLock lock(RunPaths{run}.lock());
  const RunContext ctx = load_run_context(run);
  const auto state = load_latest_state(ctx.paths);
  auto adapter = make_adapter(ctx);
  const auto final_state = run_loop(ctx, state, *adapter, iterations.value_or(ctx.config.iterations));
  std::cout << log_csv(final_state);
  return 0;
}

int cmd_rank(const std::string& detections, const std::string& config_path,
             const std::vector<std::string>& overrides, std::optional<std::size_t> categories,
             const std::string& manifest_path, const std::string& out) {
  const RunConfig cfg = load_config_with_overrides(config_path, overrides);
  std::size_t kappa = categories.value_or(0);
  if (kappa == 0 && !manifest_path.empty()) kappa = load_manifest(manifest_path, false).catalog.size();
  auto images = load_image_passes(detections, cfg.passes, kappa);
  if (kappa == 0) {
    for (const auto& img : images) {
      for (const auto& pass : img.passes) {
        if (!pass.empty() && kappa == 0) kappa = pass.front().scores.size();
      }
    }
    kappa = std::max<std::size_t>(kappa, 2);
  }
  for (auto& img : images) img = apply_thresholds(img, cfg.thresholds());
  emit(ranking_csv(score_pool(images, kappa, cfg.passes, cfg.match_iou)), out);
  return 0;
}

int cmd_sample(const std::string& input, std::size_t n, const std::string& strategy_name, std::uint64_t seed,
               std::size_t iteration, const std::string& out) {
  const Strategy strategy = parse_strategy(strategy_name);
  const SampleInput in = read_sample_input(input);
  std::vector<std::string> picked;
  if (strategy == Strategy::min_certainty) {
    if (!in.has_scores) throw ValidationError("min_certainty sampling needs a ranking CSV with a c_min column");
    std::vector<ImageCertainty> sorted;
    for (const auto& r : in.ranking) sorted.push_back({r.image_id, {}, r.c_min});
    sort_ranking(sorted);
    std::vector<RankedImage> ranking;
    for (const auto& c : sorted) ranking.push_back({c.image_id, c.c_min});
    picked = sample_min_certainty(ranking, n);
  } else {
    picked = sample_random(in.ids, n, seed, iteration);
  }
  emit(join_lines(picked), out);
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& gt_path, const std::string& manifest_path,
                 const std::string& split, double f1_iou, const std::string& out, const std::string& f1_csv) {
  const DatasetManifest manifest = load_manifest(manifest_path, false);
  const std::size_t kappa = manifest.catalog.size();
  const GroundTruth all_gt = load_ground_truth(gt_path, kappa);
  const PredictionsByImage preds = load_predictions(predictions, kappa);
  std::vector<std::string> ids;
  if (split == "test") ids = manifest.test;
  else if (split == "validation") ids = manifest.validation;
  else if (split == "pool") ids = manifest.pool;
  else if (split == "all") ids = manifest.all_ids();
  else throw ValidationError("split must be test, validation, pool or all");
  GroundTruth gt;
  for (const auto& id : ids) {
    auto it = all_gt.find(id);
    gt.emplace(id, it == all_gt.end() ? GroundTruthImage{id, {}} : it->second);
  }
  const EvalResult r = coco_map(preds, gt, kappa, {f1_iou, kCocoMaxDetections});
  nlohmann::json per_category = nlohmann::json::object();
  for (std::size_t c = 0; c < kappa; ++c) {
    per_category[manifest.catalog.name(c)] = r.category_ap[c] ? nlohmann::json(*r.category_ap[c]) : nullptr;
  }
  std::vector<double> f1s;
  for (const auto& [id, f1] : r.image_f1) f1s.push_back(f1);
  const nlohmann::json report{{"split", split},
                              {"images", gt.size()},
                              {"map", r.map},
                              {"category_ap", per_category},
                              {"f1_iou", f1_iou},
                              {"mean_image_f1", mean(f1s)},
                              {"true_positives", r.counts.true_positives},
                              {"false_positives", r.counts.false_positives},
                              {"false_negatives", r.counts.false_negatives}};
  emit(report.dump(2) + "\n", out);
  if (!f1_csv.empty()) {
    std::string csv = "image_id,f1\n";
    for (const auto& [id, f1] : r.image_f1) csv += id + ',' + format_double(f1) + '\n';
    write_file_atomic(f1_csv, csv);
  }
  return 0;
}

int cmd_ttest(const std::string& input, const std::string& out) {
  std::vector<double> x, y;
  std::istringstream text(read_file(input));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split_csv_line(line);
    if (line_no == 1 && !cells.empty() && !cells[0].empty() && !is_number(cells[0])) continue;  // header
    try {
      if (!cells.empty() && !cells[0].empty()) x.push_back(parse_double(cells[0], "column 1"));
      if (cells.size() > 1 && !cells[1].empty()) y.push_back(parse_double(cells[1], "column 2"));
    } catch (const ValidationError& e) {
      throw ParseError(input, line_no, e.what());
    }
  }
  const TTestResult r = ttest_two_sided(x, y);
  emit("t,df,p\n" + format_double(r.t) + ',' + format_double(r.df) + ',' + format_double(r.p) + '\n', out);
  return 0;
}

struct SimulateOptions {
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> world_seed;
  std::size_t images = 500;
  std::size_t categories = 10;
  std::size_t iterations = 10;
  std::size_t batch = 40;
  std::size_t initial = 20;
  std::size_t test = 50;
  std::size_t passes = 15;
  WorldParams world;
  std::string strategy = "min_certainty";
  std::string out;
  std::vector<std::string> overrides;
};

int cmd_simulate_run(const SimulateOptions& o) {
  WorldParams wp = o.world;
  wp.image_count = o.images;
  wp.category_count = o.categories;
  wp.initial_training = o.initial;
  wp.test = o.test;
  const SyntheticWorld world = generate_world(o.world_seed.value_or(o.seed), wp);

  const fs::path out = o.out;
  if (fs::exists(out / "state") && !fs::is_empty(out / "state")) {
    throw ValidationError("output directory " + out.string() + " already holds a run");
  }
  fs::create_directories(out);
  save_world(out / "world", world);

  RunConfig cfg;
  cfg.passes = o.passes;
  cfg.batch_size = o.batch;
  cfg.iterations = o.iterations;
  cfg.strategy = parse_strategy(o.strategy);
  cfg.seed = o.seed;
  cfg.adapter = "simulator";
  cfg.world = "world";
  cfg.manifest = "world/manifest.json";
  cfg.ground_truth = "world/ground_truth.jsonl";
  for (const auto& ov : o.overrides) apply_override(cfg, ov);
  validate(cfg);

  RunLock lock(RunPaths{out}.lock());
  init_run(world.manifest, cfg, out);
  const RunContext ctx = load_run_context(out);
  auto adapter = make_adapter(ctx);
  const auto final_state = run_loop(ctx, load_latest_state(ctx.paths), *adapter, cfg.iterations);
  std::cout << log_csv(final_state);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certainty-driven active learning for object detection"};
  app.require_subcommand(1);

  std::string manifest, config, out, run, detections, manifest_opt, input, strategy = "min_certainty";
  std::vector<std::string> overrides;
  std::optional<std::size_t> iterations, categories;

  auto* init = app.add_subcommand("init", "create a run directory from a manifest and a config");
  init->add_option("--manifest", manifest, "dataset manifest (JSON)")->required();
  init->add_option("--config", config, "run config (key = value)");
  init->add_option("--set", overrides, "override a config value, key=value");
  init->add_option("--out", out, "run directory")->required();

  auto* iterate = app.add_subcommand("iterate", "run one sampling iteration");
  iterate->add_option("--run", run, "run directory")->required();

  auto* loop = app.add_subcommand("loop", "run iterations, then evaluate the final model");
  loop->add_option("--run", run, "run directory")->required();
  loop->add_option("--iterations", iterations, "iteration count (default: from config)");

  auto* rank = app.add_subcommand("rank", "rank images by c_min from multi-pass detections");
  rank->add_option("--detections", detections, "multi-pass detections (JSONL)")->required();
  rank->add_option("--config", config, "run config");
  rank->add_option("--set", overrides, "override a config value, key=value");
  rank->add_option("--categories", categories, "category count (default: manifest or data)");
  rank->add_option("--manifest", manifest_opt, "manifest supplying the category catalog");
  rank->add_option("--out", out, "output CSV (default: stdout)");

  std::size_t n = 100, sample_iteration = 0;
  std::uint64_t seed = 0;
  auto* sample = app.add_subcommand("sample", "select a batch from a ranking CSV or a pool id list");
  sample->add_option("--input", input, "ranking CSV or id list")->required();
  sample->add_option("-n,--batch", n, "batch size");
  sample->add_option("--strategy", strategy, "min_certainty | random");
  sample->add_option("--seed", seed, "seed for random sampling");
  sample->add_option("--iteration", sample_iteration, "iteration index (selects the random substream)");
  sample->add_option("--out", out, "output list (default: stdout)");

  std::string predictions, ground_truth, split = "test", f1_csv;
  double f1_iou = 0.5;
  auto* evaluate = app.add_subcommand("evaluate", "COCO-style mAP and per-image F1");
  evaluate->add_option("--predictions", predictions, "consolidated predictions (JSONL)")->required();
  evaluate->add_option("--ground-truth", ground_truth, "ground truth (JSONL)")->required();
  evaluate->add_option("--manifest", manifest, "dataset manifest")->required();
  evaluate->add_option("--split", split, "test | validation | pool | all");
  evaluate->add_option("--f1-iou", f1_iou, "IoU threshold for F1 matching");
  evaluate->add_option("--out", out, "report JSON (default: stdout)");
  evaluate->add_option("--f1-csv", f1_csv, "per-image F1 CSV");

  auto* ttest = app.add_subcommand("ttest", "two-sided unpaired Student's t-test on two CSV columns");
  ttest->add_option("--input", input, "CSV with two columns")->required();
  ttest->add_option("--out", out, "output (default: stdout)");

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate-run", "full loop against the built-in detector simulator");
  simulate->add_option("--seed", sim.seed, "run seed (passes and random sampling)");
  simulate->add_option("--world-seed", sim.world_seed, "world generation seed (default: --seed)");
  simulate->add_option("--images", sim.images, "synthetic image count");
  simulate->add_option("--categories", sim.categories, "category count");
  simulate->add_option("--iterations", sim.iterations, "sampling iterations");
  simulate->add_option("--batch", sim.batch, "images sampled per iteration");
  simulate->add_option("--initial", sim.initial, "initial training set size");
  simulate->add_option("--test", sim.test, "test split size");
  simulate->add_option("--passes", sim.passes, "forward passes per image");
  simulate->add_option("--min-objects", sim.world.min_objects, "fewest objects per image");
  simulate->add_option("--max-objects", sim.world.max_objects, "most objects per image");
  simulate->add_option("--category-skew", sim.world.category_skew, "Zipf exponent of category frequencies");
  simulate->add_option("--difficulty-max", sim.world.difficulty_max, "upper bound of image difficulty");
  simulate->add_option("--strategy", sim.strategy, "min_certainty | random");
  simulate->add_option("--set", sim.overrides, "override a config value, key=value");
  simulate->add_option("--out", sim.out, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) return cmd_init(manifest, config, overrides, out);
    if (*iterate) return cmd_iterate(run);
    if (*loop) return cmd_loop(run, iterations);
    if (*rank) return cmd_rank(detections, config, overrides, categories, manifest_opt, out);
    if (*sample) return cmd_sample(input, n, strategy, seed, sample_iteration, out);
    if (*evaluate) return cmd_evaluate(predictions, ground_truth, manifest, split, f1_iou, out, f1_csv);
    if (*ttest) return cmd_ttest(input, out);
    if (*simulate) return cmd_simulate_run(sim);
  } catch (const std::exception& e) {
    std::cerr << "boxal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
