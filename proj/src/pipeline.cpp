#include "eebt/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "binary_io.hpp"
#include "eebt/error.hpp"
#include "json.hpp"

namespace eebt {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t PipelineConfig::kernels_for(std::size_t level) const {
  if (kernels.size() == 1) return kernels.front();
  return kernels.at(level - 1);
}

void PipelineConfig::validate() const {
  if (kernels.empty()) throw ValidationError("at least one K value is required");
  for (auto k : kernels) {
    if (k < 1) throw ValidationError("K must be >= 1");
  }
  if (kernels.size() > 1 && levels != 0 && kernels.size() != levels) {
    throw ValidationError("per-branch K list must have one entry per branch");
  }
  validate_margin(margin);
  train.validate();
}

std::uint64_t head_seed(std::uint64_t root, std::size_t level, HeadRole role) {
  return derive_seed(root, level, static_cast<std::uint64_t>(role));
}

std::uint64_t split_fingerprint(const Dataset& train, const Dataset& validation) {
  io::Fnv1a h;
  const std::uint64_t parts[2] = {fingerprint(train), fingerprint(validation)};
  h.update(std::span<const std::uint64_t>(parts));
  return h.value();
}

SampleMask filter_survivors(const BranchHeads& heads,
                            std::span<const ExitThreshold> thresholds,
                            const DatasetView& view, Exec exec) {
  const Dataset& ds = view.parent();
  if (thresholds.size() != ds.num_classes()) {
    throw ValidationError("threshold count does not match class count");
  }
  const auto decisions =
      evaluate_branch(heads, level_block(ds, heads.level), view.indices(), exec);
  std::vector<std::uint32_t> keep;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!thresholds[decisions[i].predicted].fires(decisions[i].confidence)) {
      keep.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return SampleMask(std::move(keep), view.size());
}

namespace {

std::size_t branch_count(const PipelineConfig& cfg, const Dataset& train,
                         const Dataset& validation) {
  if (train.num_classes() != validation.num_classes() ||
      train.num_levels() != validation.num_levels()) {
    throw ValidationError("train and validation splits disagree on classes or levels");
  }
  for (std::size_t l = 1; l <= train.num_levels(); ++l) {
    if (train.manifest.level(l).sample_shape() !=
        validation.manifest.level(l).sample_shape()) {
      throw ValidationError("train and validation level " + std::to_string(l) +
                            " shapes differ");
    }
  }
  const std::size_t levels = cfg.levels == 0 ? train.num_levels() : cfg.levels;
  if (levels > train.num_levels()) {
    throw ValidationError("requested " + std::to_string(levels) +
                          " branches but the dataset stores " +
                          std::to_string(train.num_levels()) + " levels");
  }
  if (cfg.kernels.size() > 1 && cfg.kernels.size() != levels) {
    throw ValidationError("per-branch K list must have one entry per branch");
  }
  return levels;
}

BranchRecord skipped_branch(const PipelineConfig& cfg, const Dataset& train,
                            std::size_t level, const std::string& reason) {
  BranchRecord rec;
  const auto& meta = train.manifest.level(level);
  const std::size_t k = cfg.kernels_for(level);
  Rng rc(head_seed(cfg.train.seed, level, HeadRole::Classification));
  Rng rf(head_seed(cfg.train.seed, level, HeadRole::Confidence));
  rec.heads = {level, init_head(k, meta.depth, train.num_classes(), rc),
               init_head(k, meta.depth, train.num_classes(), rf)};
  rec.thresholds.assign(train.num_classes(), ExitThreshold::disabled());
  rec.trained = false;
  rec.status = "skipped: " + reason;
  return rec;
}

}  // namespace

ModelBundle run_pipeline(const PipelineConfig& cfg, const Dataset& train,
                         const Dataset& validation) {
  cfg.validate();
  const std::size_t levels = branch_count(cfg, train, validation);

  ModelBundle bundle;
  bundle.config = cfg;
  bundle.num_classes = train.num_classes();
  bundle.fingerprint = split_fingerprint(train, validation);
  bundle.precision = backbone_class_precision(DatasetView(validation));

  DatasetView train_view(train);
  DatasetView val_view(validation);
  std::string stop_reason;
  for (std::size_t level = 1; level <= levels; ++level) {
    const auto& meta = train.manifest.level(level);
    BranchRecord rec;
    if (stop_reason.empty()) {
      try {
        const std::size_t k = cfg.kernels_for(level);
        TrainConfig tc = cfg.train;
        tc.seed = head_seed(cfg.train.seed, level, HeadRole::Classification);
        auto [classifier, class_report] =
            train_classification_head(train_view, level, k, tc);
        tc.seed = head_seed(cfg.train.seed, level, HeadRole::Confidence);
        auto [confidence, conf_report] =
            train_confidence_head(train_view, level, classifier, k, tc);
        rec.heads = {level, std::move(classifier), std::move(confidence)};
        rec.classifier_final_loss = class_report.epoch_loss.back();
        rec.confidence_final_loss = conf_report.epoch_loss.back();
      } catch (const NoSurvivorsError& e) {
        stop_reason = e.what();
      } catch (const TinyViewError& e) {
        stop_reason = e.what();
      }
    }
    if (!stop_reason.empty()) {
      rec = skipped_branch(cfg, train, level, stop_reason);
    } else {
      auto calib = calibrate_branch(rec.heads, val_view, bundle.precision,
                                    cfg.margin, cfg.train.label_mode, cfg.train.exec);
      rec.thresholds = std::move(calib.thresholds);
      rec.warnings = std::move(calib.warnings);
    }
    rec.depth = meta.depth;
    rec.height = meta.height;
    rec.width = meta.width;
    rec.train_view_size = train_view.size();
    rec.validation_view_size = val_view.size();

    if (cfg.boosted && rec.trained) {
      train_view = apply_mask(train_view, filter_survivors(rec.heads, rec.thresholds,
                                                           train_view, cfg.train.exec));
      val_view = apply_mask(val_view, filter_survivors(rec.heads, rec.thresholds,
                                                       val_view, cfg.train.exec));
    }
    bundle.branches.push_back(std::move(rec));
  }
  return bundle;
}

ModelBundle run_boosted(PipelineConfig cfg, const Dataset& train,
                        const Dataset& validation) {
  cfg.boosted = true;
  return run_pipeline(cfg, train, validation);
}

ModelBundle run_nonboosted(PipelineConfig cfg, const Dataset& train,
                           const Dataset& validation) {
  cfg.boosted = false;
  return run_pipeline(cfg, train, validation);
}

ModelBundle recalibrate(const ModelBundle& bundle, const Dataset& validation,
                        double margin) {
  validate_margin(margin);
  if (validation.num_classes() != bundle.num_classes) {
    throw ValidationError("validation split class count does not match bundle");
  }
  ModelBundle out = bundle;
  out.config.margin = margin;
  out.precision = backbone_class_precision(DatasetView(validation));
  const Exec exec = bundle.config.train.exec;
  DatasetView val_view(validation);
  for (auto& rec : out.branches) {
    rec.validation_view_size = val_view.size();
    rec.warnings.clear();
    if (!rec.trained) continue;
    auto calib = calibrate_branch(rec.heads, val_view, out.precision, margin,
                                  bundle.config.train.label_mode, exec);
    rec.thresholds = std::move(calib.thresholds);
    rec.warnings = std::move(calib.warnings);
    if (bundle.config.boosted) {
      val_view = apply_mask(val_view,
                            filter_survivors(rec.heads, rec.thresholds, val_view, exec));
    }
  }
  return out;
}

namespace {

json optional_array(const std::vector<std::optional<double>>& values) {
  json a = json::array();
  for (const auto& v : values) a.push_back(v ? json(*v) : json(nullptr));
  return a;
}

json thresholds_json(const std::vector<ExitThreshold>& t) {
  json a = json::array();
  for (const auto& v : t) {
    a.push_back(v.is_disabled() ? json(nullptr) : json(static_cast<double>(v.value())));
  }
  return a;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string blob_name(std::size_t level, HeadRole role) {
  return "branch" + std::to_string(level) +
         (role == HeadRole::Classification ? "_classification.bin"
                                           : "_confidence.bin");
}

void write_weights(const HeadParams& p, const fs::path& path) {
  auto out = io::open_out(path);
  out.write(kWeightMagic, 8);
  io::write_values(out, p.kernels.values());
  io::write_values(out, p.linear.values());
  io::finish(out, path);
}

HeadParams read_weights(const fs::path& path, std::size_t k, std::size_t d,
                        std::size_t n) {
  const std::uint64_t count = k * d + n * k;
  io::expect_file_size(path, 8 + 4 * count);
  auto in = io::open_in(path);
  io::expect_magic(in, kWeightMagic, path);
  HeadParams p{Tensor({k, d}), Tensor({n, k})};
  io::read_values(in, p.kernels.values(), path);
  io::read_values(in, p.linear.values(), path);
  if (!p.kernels.all_finite() || !p.linear.all_finite()) {
    throw FormatError("non-finite weights in " + path.string());
  }
  return p;
}

json config_json(const PipelineConfig& c) {
  return {{"kernels", c.kernels},
          {"margin", c.margin},
          {"boosted", c.boosted},
          {"levels", c.levels},
          {"label_mode", to_string(c.train.label_mode)},
          {"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"lr", c.train.lr},
          {"optimizer", to_string(c.train.optimizer)},
          {"momentum", c.train.momentum},
          {"seed", c.train.seed},
          {"allow_tiny", c.train.allow_tiny}};
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  c.kernels = j.at("kernels").get<std::vector<std::size_t>>();
  c.margin = j.at("margin").get<double>();
  c.boosted = j.at("boosted").get<bool>();
  c.levels = j.at("levels").get<std::size_t>();
  c.train.label_mode = parse_label_mode(j.at("label_mode").get<std::string>());
  c.train.epochs = j.at("epochs").get<std::size_t>();
  c.train.batch = j.at("batch").get<std::size_t>();
  c.train.lr = j.at("lr").get<double>();
  c.train.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.train.momentum = j.at("momentum").get<double>();
  c.train.seed = j.at("seed").get<std::uint64_t>();
  c.train.allow_tiny = j.at("allow_tiny").get<bool>();
  return c;
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json j;
  j["format"] = "eebt-bundle";
  j["format_version"] = kBundleVersion;
  j["config"] = config_json(bundle.config);
  j["config_echo"] = json::parse(bundle.config_echo);
  j["num_classes"] = bundle.num_classes;
  j["dataset_fingerprint"] = hex64(bundle.fingerprint);
  j["precision"] = {{"precision", optional_array(bundle.precision.precision)},
                    {"support", bundle.precision.support},
                    {"true_positives", bundle.precision.true_positives}};
  json branches = json::array();
  for (const auto& b : bundle.branches) {
    const std::size_t level = b.heads.level;
    const auto cname = blob_name(level, HeadRole::Classification);
    const auto fname = blob_name(level, HeadRole::Confidence);
    write_weights(b.heads.classification, dir / cname);
    write_weights(b.heads.confidence, dir / fname);
    branches.push_back({{"level", level},
                        {"kernels", b.heads.classification.num_kernels()},
                        {"depth", b.depth},
                        {"height", b.height},
                        {"width", b.width},
                        {"trained", b.trained},
                        {"status", b.status},
                        {"train_view_size", b.train_view_size},
                        {"validation_view_size", b.validation_view_size},
                        {"classifier_final_loss", b.classifier_final_loss},
                        {"confidence_final_loss", b.confidence_final_loss},
                        {"thresholds", thresholds_json(b.thresholds)},
                        {"warnings", b.warnings},
                        {"classification_blob", cname},
                        {"confidence_blob", fname}});
  }
  j["branches"] = std::move(branches);
  const auto path = dir / "bundle.json";
  auto out = io::open_out(path);
  out << j.dump(2) << '\n';
  io::finish(out, path);
}

ModelBundle load_bundle(const fs::path& dir) {
  const auto path = dir / "bundle.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bundle manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed bundle manifest " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kBundleVersion) {
      throw FormatError("unsupported bundle format_version in " + path.string());
    }
    ModelBundle b;
    b.config = config_from_json(j.at("config"));
    b.config_echo = j.at("config_echo").dump();
    b.num_classes = j.at("num_classes").get<std::size_t>();
    b.fingerprint = std::stoull(j.at("dataset_fingerprint").get<std::string>(),
                                nullptr, 16);
    const auto& pj = j.at("precision");
    for (const auto& v : pj.at("precision")) {
      b.precision.precision.push_back(v.is_null() ? std::nullopt
                                                  : std::optional(v.get<double>()));
    }
    b.precision.support = pj.at("support").get<std::vector<std::size_t>>();
    b.precision.true_positives =
        pj.at("true_positives").get<std::vector<std::size_t>>();
    for (const auto& bj : j.at("branches")) {
      BranchRecord r;
      const auto level = bj.at("level").get<std::size_t>();
      const auto k = bj.at("kernels").get<std::size_t>();
      r.depth = bj.at("depth").get<std::size_t>();
      r.height = bj.at("height").get<std::size_t>();
      r.width = bj.at("width").get<std::size_t>();
      r.trained = bj.at("trained").get<bool>();
      r.status = bj.at("status").get<std::string>();
      r.train_view_size = bj.at("train_view_size").get<std::size_t>();
      r.validation_view_size = bj.at("validation_view_size").get<std::size_t>();
      r.classifier_final_loss = bj.at("classifier_final_loss").get<double>();
      r.confidence_final_loss = bj.at("confidence_final_loss").get<double>();
      for (const auto& t : bj.at("thresholds")) {
        r.thresholds.push_back(t.is_null()
                                   ? ExitThreshold::disabled()
                                   : ExitThreshold::at(static_cast<float>(t.get<double>())));
      }
      if (r.thresholds.size() != b.num_classes) {
        throw FormatError("branch " + std::to_string(level) +
                          " threshold count does not match num_classes");
      }
      r.warnings = bj.at("warnings").get<std::vector<std::string>>();
      r.heads.level = level;
      r.heads.classification =
          read_weights(dir / bj.at("classification_blob").get<std::string>(), k,
                       r.depth, b.num_classes);
      r.heads.confidence =
          read_weights(dir / bj.at("confidence_blob").get<std::string>(), k,
                       r.depth, b.num_classes);
      b.branches.push_back(std::move(r));
    }
    return b;
  } catch (const json::exception& e) {
    throw FormatError("malformed bundle manifest " + path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError("invalid bundle " + path.string() + ": " + e.what());
  }
}

}  // namespace eebt
