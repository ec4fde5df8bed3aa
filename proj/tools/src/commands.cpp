#include "heightnet_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "heightnet/augment.hpp"
#include "heightnet/error.hpp"
#include "heightnet/gradcheck.hpp"
#include "heightnet/metrics.hpp"
#include "heightnet/parallel.hpp"
#include "heightnet/pointcloud.hpp"
#include "heightnet/raster_io.hpp"
#include "heightnet/scene.hpp"
#include "heightnet/trainer.hpp"
#include "heightnet/weights.hpp"

#ifndef HEIGHTNET_VERSION
#define HEIGHTNET_VERSION "unknown"
#endif

namespace heightnet::cli {

using nlohmann::json;

int exit_code_for(const std::exception& e) noexcept {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::config: return kUsage;
      case ErrorKind::io: return kIo;
      case ErrorKind::shape:
      case ErrorKind::format:
      case ErrorKind::non_finite: return kData;
      case ErrorKind::divergence: return kDivergence;
      case ErrorKind::tolerance: return kTolerance;
    }
  }
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return kIo;
  return kFailure;
}

namespace {

using Clock = std::chrono::steady_clock;

class Manifest {
 public:
  Manifest(std::string subcommand, const Invocation& inv) : start_(Clock::now()) {
    doc_["subcommand"] = std::move(subcommand);
    doc_["toolkit_version"] = HEIGHTNET_VERSION;
    doc_["argv"] = inv.argv;
    doc_["threads"] = num_threads();
    doc_["config"] = json::object();
    doc_["seeds"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }

  json& config() { return doc_["config"]; }
  json& seeds() { return doc_["seeds"]; }
  void input(const std::string& key, const fs::path& p) { doc_["inputs"][key] = p.string(); }
  void output(const std::string& key, const fs::path& p) { doc_["outputs"][key] = p.string(); }
  json& results() { return doc_["results"]; }

  void write(const fs::path& path) {
    doc_["wall_time_s"] = std::chrono::duration<double>(Clock::now() - start_).count();
    doc_["manifest"] = path.string();
    write_text_atomic(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  Clock::time_point start_;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

fs::path sidecar(const fs::path& out) {
  fs::path m = out;
  m += ".manifest.json";
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_synth(const SynthOptions& o, const Invocation& inv, std::ostream& log) {
  require_file(o.spec, "scene spec");
  const KeyValueFile kv = KeyValueFile::load(o.spec);
  kv.require_known("synth", {"count"});
  SceneSpec spec = SceneSpec::from_config(kv);
  if (o.seed) spec.seed = *o.seed;
  const long long count_cfg = kv.get_int("synth", "count", 1);
  if (count_cfg < 1) throw ConfigError("synth: count must be >= 1");
  const std::size_t count = o.count.value_or(static_cast<std::size_t>(count_cfg));

  fs::create_directories(o.out_dir);
  Manifest m("synth", inv);
  m.input("spec", o.spec);
  m.config()["scene"] = spec.to_text();
  m.config()["count"] = count;
  m.seeds()["scene_first"] = spec.seed;

  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = spec.seed + i;
    const Scene scene = generate_scene(s);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    const fs::path base = o.out_dir / stem;
    write_rgb(fs::path(base).replace_extension(".png"), scene.rgb);
    write_height_raster(fs::path(base).replace_extension(".hgt"), HeightRaster{scene.height, scene.meta, true});
    write_pgm16(o.out_dir / (std::string(stem) + "_footprints.pgm"), scene.footprints.labels, s.rows, s.cols);
    log << "synth: " << stem << " buildings=" << scene.buildings.size() << "\n";
  }
  m.output("dir", o.out_dir);
  m.write(o.out_dir / "manifest.json");
}

// ---------------------------------------------------------------------------

std::vector<std::pair<fs::path, fs::path>> find_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
  std::map<std::string, fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".ppm") images[entry.path().stem().string()] = entry.path();
  }
  std::vector<std::pair<fs::path, fs::path>> out;
  for (const auto& [stem, img] : images) {
    const fs::path hgt = dir / (stem + ".hgt");
    if (fs::is_regular_file(hgt)) out.emplace_back(img, hgt);
  }
  return out;
}

namespace {

std::vector<SamplePair> load_pairs(const fs::path& dir, std::size_t patch) {
  std::vector<SamplePair> out;
  for (const auto& [img, hgt] : find_pairs(dir)) {
    Tensor4<float> image = read_rgb(img);
    HeightRaster r = read_height_raster(hgt);
    if (!r.normalized) {
      auto [norm, meta] = normalize_height(r.height, r.meta.ground_spacing_m);
      r.height = std::move(norm);
      r.meta = meta;
    }
    if (image.shape().h != r.height.shape().h || image.shape().w != r.height.shape().w) {
      throw ShapeError(img.string() + " and " + hgt.string() + " differ in size");
    }
    if (patch == 0) {
      SamplePair p{std::move(image), std::move(r.height), {}};
      p.meta.height = r.meta;
      p.meta.source = out.size();
      out.push_back(std::move(p));
    } else {
      for (SamplePair& p : tile(image, r.height, patch, patch, r.meta)) {
        p.meta.source = out.size();
        out.push_back(std::move(p));
      }
    }
  }
  if (out.empty()) throw IoError("no image/height pairs in " + dir.string());
  return out;
}

}  // namespace

void cmd_train(const TrainOptions& o, const Invocation& inv, std::ostream& log) {
  NetworkConfig net_cfg;
  std::optional<KeyValueFile> kv;
  if (o.config) {
    require_file(*o.config, "config");
    kv = KeyValueFile::load(*o.config);
    kv->require_known("train", {"epochs", "patience", "learning_rate", "validation_fraction", "batch_size", "seed",
                                "max_steps", "augment", "patch"});
    net_cfg = kv->has_section("encoder") ? NetworkConfig::parse(*kv) : preset_config(o.preset);
  } else {
    net_cfg = preset_config(o.preset);
  }
  if (o.network_seed) net_cfg.seed = *o.network_seed;

  auto get_size = [&](const char* key, std::size_t fallback) {
    const long long v = kv ? kv->get_int("train", key, static_cast<long long>(fallback)) : static_cast<long long>(fallback);
    if (v < 0) throw ConfigError(std::string("train: ") + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  TrainRunConfig run;
  run.max_epochs = o.epochs.value_or(get_size("epochs", run.max_epochs));
  run.patience = o.patience.value_or(get_size("patience", run.patience));
  run.batch_size = o.batch_size.value_or(get_size("batch_size", run.batch_size));
  run.max_steps = o.max_steps.value_or(get_size("max_steps", run.max_steps));
  run.seed = o.seed.value_or(get_size("seed", static_cast<std::size_t>(run.seed)));
  run.optimizer.learning_rate =
      o.learning_rate.value_or(kv ? kv->get_double("train", "learning_rate", run.optimizer.learning_rate)
                                  : run.optimizer.learning_rate);
  run.validation_fraction = o.validation_fraction.value_or(
      kv ? kv->get_double("train", "validation_fraction", run.validation_fraction) : run.validation_fraction);
  const bool do_augment = o.augment.value_or(kv ? kv->get_bool("train", "augment", true) : true);
  const std::size_t patch = o.patch.value_or(get_size("patch", 0));
  run.validate();

  fs::create_directories(o.out_dir);
  const fs::path weights = o.out_dir / "weights.hnw";
  const fs::path checkpoint = o.out_dir / "checkpoint.hnw";
  const fs::path history_path = o.out_dir / "history.tsv";
  run.checkpoint = checkpoint;
  run.on_epoch = [&log](const EpochRecord& r) {
    log << "epoch " << r.epoch << " train_l1=" << r.train_loss << " val_l1=" << r.val_loss << " steps=" << r.steps
        << " t=" << r.wall_time_s << "s\n";
  };

  Manifest m("train", inv);
  if (o.config) m.input("config", *o.config);
  m.input("data_dir", o.data_dir);
  m.config()["network"] = net_cfg.to_text();
  m.config()["preset"] = o.config && kv->has_section("encoder") ? "" : o.preset;
  m.config()["epochs"] = run.max_epochs;
  m.config()["patience"] = run.patience;
  m.config()["batch_size"] = run.batch_size;
  m.config()["max_steps"] = run.max_steps;
  m.config()["learning_rate"] = run.optimizer.learning_rate;
  m.config()["beta1"] = run.optimizer.beta1;
  m.config()["beta2"] = run.optimizer.beta2;
  m.config()["epsilon"] = run.optimizer.epsilon;
  m.config()["schedule_decay"] = run.optimizer.schedule_decay;
  m.config()["validation_fraction"] = run.validation_fraction;
  m.config()["augment"] = do_augment;
  m.config()["patch"] = patch;
  m.seeds()["network"] = net_cfg.seed;
  m.seeds()["train"] = run.seed;

  std::vector<SamplePair> data = load_pairs(o.data_dir, patch);
  const auto [tr_idx, val_idx] = split_validation(data.size(), run.validation_fraction, run.seed);
  std::vector<SamplePair> train_set, val_set;
  for (std::size_t i : tr_idx) train_set.push_back(data[i]);
  for (std::size_t i : val_idx) val_set.push_back(data[i]);
  if (do_augment) train_set = augment(train_set, run.seed);
  log << "train: " << train_set.size() << " training pairs, " << val_set.size() << " validation pairs\n";

  Network<float> net = Network<float>::build(net_cfg);
  const TrainOutcome outcome = train(net, train_set, val_set, run);
  save_weights(net, weights);
  write_text_atomic(history_path, outcome.history.to_tsv());

  const History& h = outcome.history;
  m.results()["epochs_run"] = h.epochs();
  m.results()["steps"] = h.steps;
  m.results()["best_epoch"] = h.best_epoch;
  m.results()["best_val_l1"] = h.val_loss.empty() ? 0.0 : h.val_loss[h.best_epoch];
  m.results()["stopped_early"] = h.stopped_early;
  m.output("weights", weights);
  m.output("checkpoint", checkpoint);
  m.output("history", history_path);
  m.write(o.out_dir / "manifest.json");
  log << "train: best epoch " << h.best_epoch << ", weights -> " << weights.string() << "\n";
}

// ---------------------------------------------------------------------------

void cmd_predict(const PredictOptions& o, const Invocation& inv, std::ostream& log) {
  require_file(o.weights, "weights");
  require_file(o.image, "image");
  const Network<float> net = load_weights(o.weights);
  const Tensor4<float> image = read_rgb(o.image);
  const Padded<float> padded = pad_for_pools(image, net.config().pool_count());
  const Tensor4<float> height = crop(net.predict(padded.tensor), padded.crop);
  require_finite(height, "predict");

  HeightMeta meta{o.height_min_m, o.height_max_m, o.ground_spacing_m, false};
  write_height_raster(o.out, HeightRaster{height, meta, true});
  Manifest m("predict", inv);
  m.input("weights", o.weights);
  m.input("image", o.image);
  m.config()["height_min_m"] = o.height_min_m;
  m.config()["height_max_m"] = o.height_max_m;
  m.config()["ground_spacing_m"] = o.ground_spacing_m;
  m.config()["padded_rows"] = padded.tensor.shape().h;
  m.config()["padded_cols"] = padded.tensor.shape().w;
  m.output("height", o.out);
  if (o.pointcloud) {
    const std::size_t n = export_pointcloud(image, height, meta, *o.pointcloud);
    m.output("pointcloud", *o.pointcloud);
    log << "predict: " << n << " points -> " << o.pointcloud->string() << "\n";
  }
  m.write(sidecar(o.out));
  log << "predict: " << height.shape().h << "x" << height.shape().w << " -> " << o.out.string() << "\n";
}

// ---------------------------------------------------------------------------

void cmd_eval(const EvalOptions& o, const Invocation& inv, std::ostream& log) {
  require_file(o.pred, "prediction");
  require_file(o.truth, "ground truth");
  const HeightRaster pred = read_height_raster(o.pred);
  const HeightRaster truth = read_height_raster(o.truth);
  const EvalReport r = per_patch_eval(truth.height, pred.height, o.patch);

  fs::create_directories(o.report_dir);
  const fs::path table = o.report_dir / "patches.tsv";
  const fs::path summary = o.report_dir / "summary.txt";
  const fs::path ssim_map = o.report_dir / "ssim_map.pgm";
  write_text_atomic(table, r.patches_tsv());
  write_text_atomic(summary, r.summary());
  const CropRecord covered{r.rows - r.remainder_rows, r.cols - r.remainder_cols};
  const SsimResult map = ssim(crop(truth.height, covered), crop(pred.height, covered));
  write_pgm8(ssim_map, map.map.values(), map.map.shape().h, map.map.shape().w, -1.0, 1.0);

  Manifest m("eval", inv);
  m.input("pred", o.pred);
  m.input("truth", o.truth);
  m.config()["patch"] = o.patch;
  m.config()["ssim_window"] = 11;
  m.config()["ssim_sigma"] = 1.5;
  m.results()["mse"] = r.mse;
  m.results()["mae"] = r.mae;
  m.results()["ssim"] = r.ssim;
  m.results()["patches"] = r.patches.size();
  m.output("patches", table);
  m.output("summary", summary);
  m.output("ssim_map", ssim_map);
  m.write(o.report_dir / "manifest.json");
  log << r.summary();
}

// ---------------------------------------------------------------------------

void cmd_segment(const SegmentOptions& o, const Invocation& inv, std::ostream& log) {
  require_file(o.height, "height raster");
  require_file(o.rgb, "image");
  const HeightRaster h = read_height_raster(o.height);
  const Tensor4<float> rgb = read_rgb(o.rgb);
  const LabelMap labels = segment_buildings(rgb, h.height, o.params);

  fs::create_directories(o.out_dir);
  const fs::path label_path = o.out_dir / "instances.pgm";
  const fs::path table_path = o.out_dir / "instances.tsv";
  write_pgm16(label_path, labels.labels, labels.rows, labels.cols);
  write_text_atomic(table_path, instance_table_tsv(instance_table(labels, h.height)));

  Manifest m("segment", inv);
  m.input("height", o.height);
  m.input("rgb", o.rgb);
  m.config()["height_threshold"] = o.params.height_threshold;
  m.config()["vegetation_threshold"] = o.params.vegetation_threshold;
  m.config()["min_area"] = o.params.min_area;
  m.results()["instances"] = labels.count;
  m.output("labels", label_path);
  m.output("table", table_path);
  m.write(o.out_dir / "manifest.json");
  log << "segment: " << labels.count << " instances -> " << label_path.string() << "\n";
}

// ---------------------------------------------------------------------------

void cmd_gradcheck(const GradcheckOptions& o, const Invocation& inv, std::ostream& log) {
  NetworkConfig cfg = o.config ? NetworkConfig::load(*o.config) : preset_config(o.preset);
  GradCheckOptions opts;
  opts.tolerance = o.tolerance;
  opts.trials = o.trials;
  opts.seed = o.seed;
  opts.max_coordinates_per_tensor = o.max_coordinates;

  const auto start = Clock::now();
  GradCheckSummary all;
  std::ostringstream table;
  table.precision(6);
  table << "check\tmax_rel_error\tchecked\tskipped\tpassed\n";
  auto report = [&](const GradCheckSummary& s) {
    for (const GradCheckResult& r : s.results) {
      table << r.name << '\t' << r.max_relative_error << '\t' << r.checked << '\t' << r.skipped << '\t'
            << (r.passed ? "yes" : "no") << '\n';
      log << (r.passed ? "ok   " : "FAIL ") << r.name << " max_rel=" << r.max_relative_error << " checked=" << r.checked
          << " skipped=" << r.skipped << "\n";
      all.add(r);
    }
  };
  if (o.primitives) report(check_primitives(opts));
  report(check_network(cfg, opts, o.spatial));
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  log << "gradcheck: max relative error " << all.max_relative_error << " (tolerance " << o.tolerance << "), "
      << seconds << "s, " << (all.passed ? "PASS" : "FAIL") << "\n";

  if (o.report) {
    write_text_atomic(*o.report, table.str());
    Manifest m("gradcheck", inv);
    if (o.config) m.input("config", *o.config);
    m.config()["network"] = cfg.to_text();
    m.config()["tolerance"] = o.tolerance;
    m.config()["trials"] = o.trials;
    m.config()["step"] = opts.step;
    m.seeds()["gradcheck"] = o.seed;
    m.results()["max_relative_error"] = all.max_relative_error;
    m.results()["passed"] = all.passed;
    m.output("report", *o.report);
    m.write(sidecar(*o.report));
  }
  if (!all.passed) {
    throw ToleranceError("gradcheck: max relative error " + std::to_string(all.max_relative_error) +
                         " exceeds tolerance " + std::to_string(o.tolerance));
  }
}

// ---------------------------------------------------------------------------

int cmd_replay(const fs::path& manifest, std::ostream& log, std::ostream& err) {
  require_file(manifest, "manifest");
  std::ifstream in(manifest);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (!doc.contains("argv") || !doc["argv"].is_array()) throw FormatError(manifest.string() + ": no argv recorded");
  const auto args = doc["argv"].get<std::vector<std::string>>();
  log << "replay:";
  for (const auto& a : args) log << ' ' << a;
  log << "\n";
  return run(args, log, err);
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  CLI::App app{"Height-map estimation toolkit: synthesize scenes, train, predict, evaluate, segment."};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads for tensor kernels (0 = runtime default)");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic ortho scenes with ground-truth heights");
  s->add_option("--spec", synth.spec, "Scene spec file ([scene], optional [synth] count)")->required();
  s->add_option("--out", synth.out_dir, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of scenes (overrides [synth] count)");
  s->add_option("--seed", synth.seed, "Seed of the first scene (overrides [scene] seed)");

  TrainOptions tr;
  std::string augment_flag;
  auto* t = app.add_subcommand("train", "Train a height regressor on image/height pairs");
  t->add_option("--config", tr.config, "Config file with [network]/[encoder]/[decoder] and [train] sections");
  t->add_option("--preset", tr.preset, "Network preset when the config has no [encoder] (desk, tiny)");
  t->add_option("--data", tr.data_dir, "Directory of <stem>.png|ppm + <stem>.hgt pairs")->required();
  t->add_option("--out", tr.out_dir, "Output directory")->required();
  t->add_option("--epochs", tr.epochs, "Maximum epochs");
  t->add_option("--patience", tr.patience, "Early-stopping patience in epochs");
  t->add_option("--batch-size", tr.batch_size, "Samples per step");
  t->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps (0 = no limit)");
  t->add_option("--patch", tr.patch, "Tile rasters into patches of this size (0 = use whole rasters)");
  t->add_option("--lr", tr.learning_rate, "Learning rate");
  t->add_option("--val-fraction", tr.validation_fraction, "Validation fraction");
  t->add_option("--seed", tr.seed, "Seed for split, shuffling and augmentation");
  t->add_option("--network-seed", tr.network_seed, "Seed for weight initialization");
  t->add_option("--augment", augment_flag, "on|off")->check(CLI::IsMember({"on", "off"}));

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "Predict a height raster for an RGB image of any size");
  p->add_option("--weights", pr.weights, "Weight file")->required();
  p->add_option("--image", pr.image, "RGB image (.png or .ppm)")->required();
  p->add_option("--out", pr.out, "Output height raster (.hgt)")->required();
  p->add_option("--pointcloud", pr.pointcloud, "Also write an XYZRGB point cloud");
  p->add_option("--height-min-m", pr.height_min_m, "Meters at normalized height 0");
  p->add_option("--height-max-m", pr.height_max_m, "Meters at normalized height 1");
  p->add_option("--ground-spacing-m", pr.ground_spacing_m, "Meters per pixel");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Compare a predicted height raster with ground truth");
  e->add_option("--pred", ev.pred, "Predicted height raster")->required();
  e->add_option("--truth", ev.truth, "Ground-truth height raster")->required();
  e->add_option("--report", ev.report_dir, "Report directory")->required();
  e->add_option("--patch", ev.patch, "Patch size of the per-patch sweep");

  SegmentOptions sg;
  auto* g = app.add_subcommand("segment", "Extract building instances from a height raster");
  g->add_option("--height", sg.height, "Height raster (.hgt)")->required();
  g->add_option("--rgb", sg.rgb, "Co-registered RGB image")->required();
  g->add_option("--out", sg.out_dir, "Output directory")->required();
  g->add_option("--height-threshold", sg.params.height_threshold, "Normalized height threshold");
  g->add_option("--vegetation-threshold", sg.params.vegetation_threshold, "Excess-green threshold");
  g->add_option("--min-area", sg.params.min_area, "Minimum component area in pixels");

  GradcheckOptions gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and a small network");
  c->add_option("--config", gc.config, "Network config to check instead of the preset");
  c->add_option("--preset", gc.preset, "Network preset (default gradcheck)");
  c->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  c->add_option("--trials", gc.trials, "Random tensors per primitive");
  c->add_option("--seed", gc.seed, "Seed for random tensors");
  c->add_option("--spatial", gc.spatial, "Input side length for the network check (0 = smallest valid, >= 8)");
  c->add_option("--max-coordinates", gc.max_coordinates, "Sample at most this many coordinates per tensor (0 = all)");
  c->add_flag("!--no-primitives", gc.primitives, "Only check the network");
  c->add_option("--report", gc.report, "Write a TSV report (and manifest) here");

  fs::path replay_manifest;
  auto* r = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  r->add_option("manifest", replay_manifest, "manifest.json")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, log, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    set_num_threads(static_cast<int>(threads));
    Invocation inv{args, threads};
    if (*s) cmd_synth(synth, inv, log);
    if (*t) {
      if (!augment_flag.empty()) tr.augment = augment_flag == "on";
      cmd_train(tr, inv, log);
    }
    if (*p) cmd_predict(pr, inv, log);
    if (*e) cmd_eval(ev, inv, log);
    if (*g) cmd_segment(sg, inv, log);
    if (*c) cmd_gradcheck(gc, inv, log);
    if (*r) return cmd_replay(replay_manifest, log, err);
  } catch (const std::exception& ex) {
    const int code = exit_code_for(ex);
    std::string kind = "error";
    if (const auto* he = dynamic_cast<const Error*>(&ex)) kind = std::string(to_string(he->kind())) + " error";
    err << "heightnet: " << kind << ": " << ex.what() << "\n";
    return code;
  }
  return kOk;
}

}  // namespace heightnet::cli
