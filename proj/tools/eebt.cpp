// Command-line front end: synthetic data, training, calibration, inference,
// evaluation, sweeps, FLOPs tables, and dataset verification.
//
// Exit codes: 0 success, 1 invalid arguments or configuration, 2 I/O or
// format errors.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eebt/calibration.hpp"
#include "eebt/dataset.hpp"
#include "eebt/error.hpp"
#include "eebt/inference.hpp"
#include "eebt/kernels.hpp"
#include "eebt/pipeline.hpp"
#include "eebt/report.hpp"
#include "eebt/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eebt;

namespace {

struct Options {
  std::string data;
  std::string out;
  std::string bundle;
  std::string split = "test";
  std::string spec = "tiny";
  std::string trace;
  std::string verify_path;
  std::uint64_t seed = 42;
  std::size_t levels = 0;
  std::vector<std::size_t> k = {32};
  double margin = 0.0;
  std::vector<double> margins = {-0.02, 0.0, 0.02, 0.05};
  std::vector<std::string> modes = {"absolute"};
  bool boosted = true;
  std::size_t epochs = 200;
  std::size_t batch = 128;
  double lr = 0.01;
  std::string optimizer = "momentum";
  double momentum = 0.9;
  bool allow_tiny = false;
  bool serial = false;
};

Exec exec_of(const Options& o) { return o.serial ? Exec::Serial : Exec::Parallel; }

// A directory holding manifest.json is a split; otherwise `name` inside it.
fs::path split_dir(const std::string& data, const std::string& name) {
  const fs::path root(data);
  if (fs::exists(root / kManifestName)) return root;
  return root / name;
}

bool has_split(const std::string& data, const std::string& name) {
  return fs::exists(fs::path(data) / name / kManifestName);
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig c;
  c.kernels = o.k;
  c.margin = o.margin;
  c.boosted = o.boosted;
  c.levels = o.levels;
  c.train.epochs = o.epochs;
  c.train.batch = o.batch;
  c.train.lr = o.lr;
  c.train.optimizer = parse_optimizer(o.optimizer);
  c.train.momentum = o.momentum;
  c.train.seed = o.seed;
  c.train.label_mode = parse_label_mode(o.modes.front());
  c.train.allow_tiny = o.allow_tiny;
  c.train.exec = exec_of(o);
  return c;
}

json training_json(const Options& o) {
  return {{"seed", o.seed},         {"levels", o.levels},   {"k", o.k},
          {"mode", o.modes},        {"epochs", o.epochs},   {"batch", o.batch},
          {"lr", o.lr},             {"optimizer", o.optimizer},
          {"momentum", o.momentum}, {"allow_tiny", o.allow_tiny}};
}

void print_config(const json& cfg) { std::cout << "resolved config: " << cfg.dump() << "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_sidecar(const fs::path& artifact, const json& cfg) {
  write_text(fs::path(artifact.string() + ".config.json"), cfg.dump(2) + "\n");
}

void warn_fingerprint(const ModelBundle& bundle, const Options& o) {
  if (o.data.empty() || !has_split(o.data, "train") || !has_split(o.data, "validation")) {
    return;
  }
  const auto train = read_dataset(split_dir(o.data, "train"));
  const auto validation = read_dataset(split_dir(o.data, "validation"));
  if (split_fingerprint(train, validation) != bundle.fingerprint) {
    std::cerr << "warning: bundle was trained on different train/validation data than "
              << o.data << "\n";
  }
}

void print_report(const EvalReport& r) {
  std::cout << "samples " << r.samples << "\n"
            << "backbone accuracy " << r.backbone_accuracy << "\n"
            << "selective accuracy " << r.selective_accuracy << "\n"
            << "degradation (pp) " << r.degradation_pp << "\n"
            << "mean FLOPs " << r.mean_flops << " / backbone " << r.backbone_flops << "\n"
            << "FLOPs reduction " << r.reduction << "\n"
            << "exit ratios";
  for (double e : r.exit_ratios) std::cout << ' ' << e;
  std::cout << " (last = final)\n";
}

int cmd_synth(const Options& o) {
  json cfg = {{"command", "synth-data"}, {"spec", o.spec}, {"seed", o.seed}, {"out", o.out}};
  print_config(cfg);
  const auto spec = SynthSpec::named(o.spec);
  auto t = synth_generate(spec, o.seed);
  for (auto* ds : {&t.train, &t.validation, &t.test}) {
    json prov = json::parse(ds->manifest.provenance);
    prov["config"] = cfg;
    ds->manifest.provenance = prov.dump();
  }
  const fs::path out(o.out);
  write_dataset(t.train, out / "train");
  write_dataset(t.validation, out / "validation");
  write_dataset(t.test, out / "test");
  std::cout << "wrote " << t.train.size() << "/" << t.validation.size() << "/"
            << t.test.size() << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  json cfg = training_json(o);
  cfg["command"] = "train";
  cfg["data"] = o.data;
  cfg["out"] = o.out;
  cfg["margin"] = o.margin;
  cfg["boosted"] = o.boosted;
  print_config(cfg);
  const auto pc = pipeline_config(o);
  pc.validate();
  const auto train = read_dataset(split_dir(o.data, "train"));
  const auto validation = read_dataset(split_dir(o.data, "validation"));
  auto bundle = run_pipeline(pc, train, validation);
  bundle.config_echo = cfg.dump();
  save_bundle(bundle, o.out);
  for (const auto& b : bundle.branches) {
    std::size_t enabled = 0;
    for (const auto& t : b.thresholds) enabled += !t.is_disabled();
    std::cout << "branch " << b.heads.level << ": " << b.status << ", train view "
              << b.train_view_size << ", validation view " << b.validation_view_size
              << ", " << enabled << "/" << b.thresholds.size() << " classes enabled\n";
    for (const auto& w : b.warnings) std::cout << "  warning: " << w << "\n";
  }
  return 0;
}

int cmd_calibrate(const Options& o) {
  json cfg = {{"command", "calibrate"}, {"bundle", o.bundle}, {"data", o.data},
              {"margin", o.margin},     {"out", o.out}};
  print_config(cfg);
  validate_margin(o.margin);
  const auto bundle = load_bundle(o.bundle);
  warn_fingerprint(bundle, o);
  const auto validation = read_dataset(split_dir(o.data, "validation"));
  auto out = recalibrate(bundle, validation, o.margin);
  json echo = json::parse(bundle.config_echo);
  echo["calibrate"] = cfg;
  out.config_echo = echo.dump();
  save_bundle(out, o.out);
  std::cout << "recalibrated at margin " << o.margin << " into " << o.out << "\n";
  return 0;
}

std::vector<InferenceResult> run_inference(const Options& o, const json& cfg,
                                           ModelBundle& bundle, Dataset& ds) {
  print_config(cfg);
  bundle = load_bundle(o.bundle);
  warn_fingerprint(bundle, o);
  ds = read_dataset(split_dir(o.data, o.split));
  auto results = infer_all(bundle, ds, exec_of(o));
  if (!o.trace.empty()) {
    std::ostringstream text;
    write_trace(text, results, bundle.num_branches());
    write_text(o.trace, text.str());
    write_sidecar(o.trace, cfg);
  }
  return results;
}

int cmd_infer(const Options& o) {
  json cfg = {{"command", "infer"}, {"bundle", o.bundle}, {"data", o.data},
              {"split", o.split},   {"out", o.out},       {"trace", o.trace}};
  ModelBundle bundle;
  Dataset ds;
  const auto results = run_inference(o, cfg, bundle, ds);
  std::ostringstream text;
  text << "index,prediction,exit_level,flops\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    text << i << ',' << r.prediction << ',';
    if (r.is_final()) {
      text << "FINAL";
    } else {
      text << r.exit_level;
    }
    text << ',' << r.flops << '\n';
  }
  if (o.out.empty()) {
    std::cout << text.str();
  } else {
    write_text(o.out, text.str());
    write_sidecar(o.out, cfg);
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  json cfg = {{"command", "evaluate"}, {"bundle", o.bundle}, {"data", o.data},
              {"split", o.split},      {"out", o.out},       {"trace", o.trace}};
  ModelBundle bundle;
  Dataset ds;
  const auto results = run_inference(o, cfg, bundle, ds);
  const auto rep =
      summarize(ds, results, bundle.num_branches(), ds.manifest.backbone_flops());
  print_report(rep);
  if (!o.out.empty()) {
    json echo = {{"evaluate", cfg}, {"bundle", json::parse(bundle.config_echo)}};
    write_text(o.out, report_json(rep, echo.dump()));
  }
  return 0;
}

int cmd_sweep(const Options& o, bool scheme_given) {
  json cfg = training_json(o);
  cfg["command"] = "sweep";
  cfg["data"] = o.data;
  cfg["out"] = o.out;
  cfg["margins"] = o.margins;
  cfg["schemes"] = scheme_given ? json::array({o.boosted ? "boosted" : "nonboosted"})
                                : json::array({"boosted", "nonboosted"});
  print_config(cfg);
  SweepGrid grid;
  grid.modes.clear();
  for (const auto& m : o.modes) grid.modes.push_back(parse_label_mode(m));
  grid.kernels = o.k;
  grid.margins = o.margins;
  grid.schemes = scheme_given ? std::vector<bool>{o.boosted} : std::vector<bool>{true, false};
  for (double m : o.margins) validate_margin(m);
  PipelineConfig base = pipeline_config(o);
  base.validate();
  const auto train = read_dataset(split_dir(o.data, "train"));
  const auto validation = read_dataset(split_dir(o.data, "validation"));
  const auto test = read_dataset(split_dir(o.data, "test"));
  const auto points = sweep_grid(base, grid, train, validation, test);
  const std::size_t branches = o.levels == 0 ? train.num_levels() : o.levels;
  std::ostringstream text;
  write_curve_csv(text, points, branches);
  if (o.out.empty()) {
    std::cout << text.str();
  } else {
    write_text(o.out, text.str());
    write_sidecar(o.out, cfg);
    for (const auto& p : points) {
      std::cout << p.config_id << " m=" << p.margin << ": degradation "
                << p.degradation_pp << " pp, reduction " << p.reduction << "\n";
    }
  }
  return 0;
}

int cmd_flops(const Options& o) {
  json cfg = {{"command", "flops-report"}, {"data", o.data}, {"split", o.split},
              {"k", o.k},                  {"out", o.out}};
  print_config(cfg);
  const auto m = read_manifest(split_dir(o.data, o.split));
  json levels = json::array();
  for (const auto& l : m.levels) {
    json heads = json::array();
    for (auto k : o.k) {
      const auto f = head_flops(k, l.depth, l.height, l.width, m.num_classes);
      heads.push_back({{"k", k},
                       {"head_params", head_param_count(k, l.depth, m.num_classes)},
                       {"head_flops", f},
                       {"branch_overhead", 2 * f}});
    }
    levels.push_back({{"level", l.level},
                      {"shape", {l.depth, l.height, l.width}},
                      {"cumulative_flops", l.cumulative_flops},
                      {"heads", heads}});
  }
  json rep = {{"num_classes", m.num_classes},
              {"levels", levels},
              {"final_classifier_flops", m.final_classifier_flops},
              {"backbone_flops", m.backbone_flops()},
              {"config", cfg}};
  const std::string text = rep.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
  return 0;
}

int cmd_verify(const Options& o) {
  print_config({{"command", "verify-dataset"}, {"path", o.verify_path}});
  std::vector<fs::path> dirs;
  const fs::path root(o.verify_path);
  if (fs::exists(root / kManifestName)) {
    dirs.push_back(root);
  } else {
    for (const char* s : {"train", "validation", "test"}) {
      if (fs::exists(root / s)) dirs.push_back(root / s);
    }
    if (dirs.empty()) throw IoError("no dataset manifest under " + root.string());
  }
  for (const auto& d : dirs) {
    const auto s = verify_dataset(d);
    std::cout << "ok " << d.string() << ": " << s.num_samples << " samples, "
              << s.num_classes << " classes, " << s.num_levels
              << " levels, backbone accuracy " << s.backbone_accuracy << "\n";
  }
  return 0;
}

void add_serial_flag(CLI::App* sub, Options& o) {
  sub->add_flag("--serial", o.serial, "Use the serial reference kernels");
}

void add_training_flags(CLI::App* sub, Options& o) {
  add_serial_flag(sub, o);
  sub->add_option("--levels", o.levels, "Branches to attach (0 = every stored level)");
  sub->add_option("--k", o.k,
                  "Kernels per head; one value, or one per branch for train "
                  "(a list of alternatives for sweep)")
      ->delimiter(',');
  sub->add_option("--mode", o.modes,
                  "Label source: absolute or distillation (sweep accepts a list)")
      ->delimiter(',');
  sub->add_option("--epochs", o.epochs, "Training epochs per head");
  sub->add_option("--batch", o.batch, "Minibatch size");
  sub->add_option("--lr", o.lr, "Learning rate");
  sub->add_option("--optimizer", o.optimizer, "sgd or momentum");
  sub->add_option("--momentum", o.momentum, "Momentum coefficient");
  sub->add_flag("--allow-tiny", o.allow_tiny,
                "Train full-batch on views smaller than 2 x batch instead of skipping");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Early-exit branch training and selective inference on stored "
               "backbone feature maps"};
  app.set_config("--config", "", "Read options from a key = value file; flags override it");
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic train/validation/test triplet");
  synth->add_option("--spec", o.spec, "Named spec: tiny or micro");
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train and calibrate every branch into a bundle");
  train->add_option("--data", o.data, "Dataset root with train/ and validation/")->required();
  train->add_option("--out", o.out, "Bundle directory to write")->required();
  train->add_option("--seed", o.seed, "Root seed");
  train->add_option("--margin", o.margin, "Class precision margin in (-1, 1]");
  train->add_flag("--boosted,!--no-boosted", o.boosted,
                  "Train each branch on the previous branch's survivors (default)");
  add_training_flags(train, o);

  auto* calib = app.add_subcommand("calibrate", "Recalibrate a bundle's thresholds at a new margin");
  calib->add_option("--bundle", o.bundle, "Bundle directory")->required();
  calib->add_option("--data", o.data, "Dataset root or validation split")->required();
  calib->add_option("--margin", o.margin, "Class precision margin in (-1, 1]");
  calib->add_option("--out", o.out, "Bundle directory to write")->required();
  add_serial_flag(calib, o);

  auto* infer = app.add_subcommand("infer", "Write per-sample selective predictions");
  infer->add_option("--bundle", o.bundle, "Bundle directory")->required();
  infer->add_option("--data", o.data, "Dataset root or split directory")->required();
  infer->add_option("--split", o.split, "Split under the dataset root");
  infer->add_option("--out", o.out, "Predictions CSV (stdout if omitted)");
  infer->add_option("--trace", o.trace, "Per-branch exit trace CSV");
  add_serial_flag(infer, o);

  auto* eval = app.add_subcommand("evaluate", "Accuracy and FLOPs of a bundle on a split");
  eval->add_option("--bundle", o.bundle, "Bundle directory")->required();
  eval->add_option("--data", o.data, "Dataset root or split directory")->required();
  eval->add_option("--split", o.split, "Split under the dataset root");
  eval->add_option("--out", o.out, "Report JSON");
  eval->add_option("--trace", o.trace, "Per-branch exit trace CSV");
  add_serial_flag(eval, o);

  auto* sweep = app.add_subcommand(
      "sweep", "Accuracy-compute curve over modes x K x margins x training schemes");
  sweep->add_option("--data", o.data, "Dataset root with train/, validation/, test/")->required();
  sweep->add_option("--out", o.out, "Curve CSV (stdout if omitted)");
  sweep->add_option("--seed", o.seed, "Root seed");
  sweep->add_option("--margins,--margin", o.margins, "Comma-separated margins")
      ->delimiter(',');
  auto* boosted_flag =
      sweep->add_flag("--boosted,!--no-boosted", o.boosted,
                      "Only the boosted (or only the non-boosted) scheme; both if omitted");
  add_training_flags(sweep, o);

  auto* flops = app.add_subcommand("flops-report", "Backbone and branch FLOPs per level");
  flops->add_option("--data", o.data, "Dataset root or split directory")->required();
  flops->add_option("--split", o.split, "Split under the dataset root");
  flops->add_option("--k", o.k, "Kernel counts to tabulate")->delimiter(',');
  flops->add_option("--out", o.out, "Report JSON (stdout if omitted)");

  auto* verify = app.add_subcommand("verify-dataset", "Check a dataset's on-disk format");
  verify->add_option("path", o.verify_path, "Split directory or dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*calib) return cmd_calibrate(o);
    if (*infer) return cmd_infer(o);
    if (*eval) return cmd_evaluate(o);
    if (*sweep) return cmd_sweep(o, boosted_flag->count() > 0);
    if (*flops) return cmd_flops(o);
    if (*verify) return cmd_verify(o);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
