#include "eebt/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "eebt/error.hpp"
#include "json.hpp"

namespace eebt {

namespace fs = std::filesystem;
using nlohmann::json;

const LevelMeta& DatasetManifest::level(std::size_t l) const {
  if (l < 1 || l > levels.size()) {
    throw ValidationError("level " + std::to_string(l) + " out of range 1.." +
                          std::to_string(levels.size()));
  }
  return levels[l - 1];
}

std::span<const float> Dataset::sample(std::size_t level,
                                       std::size_t index) const {
  const auto& meta = manifest.level(level);
  const std::size_t n = meta.sample_size();
  return std::span<const float>(features[level - 1]).subspan(index * n, n);
}

Tensor Dataset::sample_tensor(std::size_t level, std::size_t index) const {
  auto s = sample(level, index);
  return Tensor(manifest.level(level).sample_shape(),
                std::vector<float>(s.begin(), s.end()));
}

std::uint16_t Dataset::backbone_prediction(std::size_t index) const {
  if (has_logits()) {
    const std::size_t n = manifest.num_classes;
    return static_cast<std::uint16_t>(argmax(
        std::span<const float>(backbone_logits).subspan(index * n, n)));
  }
  return backbone_pred[index];
}

double Dataset::backbone_accuracy() const {
  if (size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    hits += backbone_prediction(i) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(size());
}

void Dataset::validate() const {
  const auto& m = manifest;
  if (m.num_classes == 0 || m.num_classes > 65536) {
    throw ValidationError("num_classes must be in 1..65536");
  }
  if (labels.size() != m.num_samples || backbone_pred.size() != m.num_samples) {
    throw ValidationError("label/prediction arrays must have num_samples entries");
  }
  for (std::size_t i = 0; i < m.num_samples; ++i) {
    if (labels[i] >= m.num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) +
                            " at sample " + std::to_string(i) +
                            " outside [0," + std::to_string(m.num_classes) + ")");
    }
    if (backbone_pred[i] >= m.num_classes) {
      throw ValidationError("backbone prediction " +
                            std::to_string(backbone_pred[i]) + " at sample " +
                            std::to_string(i) + " out of range");
    }
  }
  if (!backbone_logits.empty()) {
    if (backbone_logits.size() != m.num_samples * m.num_classes) {
      throw ValidationError("backbone logits must hold num_samples x N values");
    }
    for (std::size_t i = 0; i < m.num_samples; ++i) {
      if (backbone_prediction(i) != backbone_pred[i]) {
        throw ValidationError("backbone_pred disagrees with logits argmax at sample " +
                              std::to_string(i));
      }
    }
  }
  if (!tiers.empty() && tiers.size() != m.num_samples) {
    throw ValidationError("tier array must have num_samples entries");
  }
  if (m.levels.empty()) throw ValidationError("dataset has no levels");
  if (features.size() != m.levels.size()) {
    throw ValidationError("feature buffers do not match level count");
  }
  for (std::size_t l = 0; l < m.levels.size(); ++l) {
    const auto& meta = m.levels[l];
    if (meta.level != l + 1) {
      throw ValidationError("levels must be numbered 1..L in order");
    }
    if (meta.sample_size() == 0) {
      throw ValidationError("level " + std::to_string(l + 1) + " has an empty shape");
    }
    if (l > 0 && meta.cumulative_flops <= m.levels[l - 1].cumulative_flops) {
      throw ValidationError("cumulative FLOPs must strictly increase with level");
    }
    if (features[l].size() % meta.sample_size() != 0 ||
        features[l].size() / meta.sample_size() != m.num_samples) {
      throw ValidationError(
          "level " + std::to_string(l + 1) + " holds " +
          std::to_string(features[l].size() / meta.sample_size()) +
          " samples, manifest says " + std::to_string(m.num_samples));
    }
  }
}

SampleMask::SampleMask(std::vector<std::uint32_t> indices,
                       std::size_t parent_size)
    : indices_(std::move(indices)) {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= parent_size) {
      throw ValidationError("mask index " + std::to_string(indices_[i]) +
                            " out of range for " + std::to_string(parent_size) +
                            " samples");
    }
    if (i > 0 && indices_[i] <= indices_[i - 1]) {
      throw ValidationError("mask indices must be strictly increasing");
    }
  }
}

SampleMask SampleMask::all(std::size_t parent_size) {
  std::vector<std::uint32_t> idx(parent_size);
  for (std::size_t i = 0; i < parent_size; ++i) idx[i] = static_cast<std::uint32_t>(i);
  return SampleMask(std::move(idx), parent_size);
}

DatasetView::DatasetView(const Dataset& parent) : parent_(&parent) {
  indices_.resize(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    indices_[i] = static_cast<std::uint32_t>(i);
  }
}

DatasetView::DatasetView(const Dataset& parent, std::vector<std::uint32_t> indices)
    : parent_(&parent), indices_(std::move(indices)) {
  for (auto i : indices_) {
    if (i >= parent.size()) {
      throw ValidationError("view index " + std::to_string(i) + " out of range");
    }
  }
}

DatasetView apply_mask(const DatasetView& view, const SampleMask& mask) {
  std::vector<std::uint32_t> selected;
  selected.reserve(mask.size());
  for (auto pos : mask.indices()) {
    if (pos >= view.size()) {
      throw ValidationError("mask index " + std::to_string(pos) +
                            " out of range for a view of " +
                            std::to_string(view.size()) + " samples");
    }
    selected.push_back(view.index(pos));
  }
  return DatasetView(view.parent(), std::move(selected));
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "eebt-features";
  j["format_version"] = m.format_version;
  j["num_samples"] = m.num_samples;
  j["num_classes"] = m.num_classes;
  json levels = json::array();
  for (const auto& l : m.levels) {
    levels.push_back({{"level", l.level},
                      {"depth", l.depth},
                      {"height", l.height},
                      {"width", l.width},
                      {"cumulative_flops", l.cumulative_flops},
                      {"blob", l.blob},
                      {"blob_bytes", l.blob_bytes}});
  }
  j["levels"] = std::move(levels);
  j["final_classifier_flops"] = m.final_classifier_flops;
  j["labels"] = m.labels_file;
  j["backbone_pred"] = m.backbone_pred_file;
  j["backbone_logits"] =
      m.backbone_logits_file ? json(*m.backbone_logits_file) : json(nullptr);
  if (m.tiers_file) j["tiers"] = *m.tiers_file;
  j["provenance"] = json::parse(m.provenance);
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kManifestVersion) {
    throw FormatError("unsupported dataset format_version " +
                      std::to_string(m.format_version));
  }
  m.num_samples = j.at("num_samples").get<std::size_t>();
  m.num_classes = j.at("num_classes").get<std::size_t>();
  for (const auto& lj : j.at("levels")) {
    LevelMeta l;
    l.level = lj.at("level").get<std::size_t>();
    l.depth = lj.at("depth").get<std::size_t>();
    l.height = lj.at("height").get<std::size_t>();
    l.width = lj.at("width").get<std::size_t>();
    l.cumulative_flops = lj.at("cumulative_flops").get<std::uint64_t>();
    l.blob = lj.at("blob").get<std::string>();
    l.blob_bytes = lj.at("blob_bytes").get<std::uint64_t>();
    m.levels.push_back(std::move(l));
  }
  m.final_classifier_flops = j.at("final_classifier_flops").get<std::uint64_t>();
  m.labels_file = j.at("labels").get<std::string>();
  m.backbone_pred_file = j.at("backbone_pred").get<std::string>();
  if (j.contains("backbone_logits") && !j["backbone_logits"].is_null()) {
    m.backbone_logits_file = j["backbone_logits"].get<std::string>();
  }
  if (j.contains("tiers") && !j["tiers"].is_null()) {
    m.tiers_file = j["tiers"].get<std::string>();
  }
  if (j.contains("provenance")) m.provenance = j["provenance"].dump();
  return m;
}

void write_label_file(const fs::path& p, std::span<const std::uint16_t> v) {
  auto out = io::open_out(p);
  out.write(kLabelMagic, 8);
  io::write_values(out, v);
  io::finish(out, p);
}

std::vector<std::uint16_t> read_label_file(const fs::path& p, std::size_t n) {
  io::expect_file_size(p, 8 + 2 * static_cast<std::uint64_t>(n));
  auto in = io::open_in(p);
  io::expect_magic(in, kLabelMagic, p);
  std::vector<std::uint16_t> v(n);
  io::read_values(in, std::span<std::uint16_t>(v), p);
  return v;
}

std::uint64_t feature_blob_bytes(const LevelMeta& l, std::size_t n) {
  return kFeatureHeaderBytes + 4ULL * l.sample_size() * n;
}

void check_feature_header(std::istream& in, const LevelMeta& l,
                          std::size_t n, const fs::path& p) {
  io::expect_file_size(p, feature_blob_bytes(l, n));
  if (l.blob_bytes != feature_blob_bytes(l, n)) {
    throw FormatError("manifest blob_bytes for " + p.string() +
                      " disagrees with level shape");
  }
  io::expect_magic(in, kFeatureMagic, p);
  const auto version = io::read_u32(in, p);
  if (version != kFeatureBlobVersion) {
    throw FormatError("unsupported feature blob version in " + p.string());
  }
  io::read_u32(in, p);  // reserved
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest m = dataset.manifest;
  for (std::size_t l = 0; l < m.levels.size(); ++l) {
    auto& meta = m.levels[l];
    if (meta.blob.empty()) meta.blob = "level" + std::to_string(l + 1) + ".bin";
    meta.blob_bytes = feature_blob_bytes(meta, m.num_samples);
    const auto p = dir / meta.blob;
    auto out = io::open_out(p);
    out.write(kFeatureMagic, 8);
    io::write_u32(out, kFeatureBlobVersion);
    io::write_u32(out, 0);
    io::write_values(out, std::span<const float>(dataset.features[l]));
    io::finish(out, p);
  }
  write_label_file(dir / m.labels_file, dataset.labels);
  write_label_file(dir / m.backbone_pred_file, dataset.backbone_pred);
  if (dataset.has_logits()) {
    if (!m.backbone_logits_file) m.backbone_logits_file = "backbone_logits.bin";
    const auto p = dir / *m.backbone_logits_file;
    auto out = io::open_out(p);
    out.write(kLogitMagic, 8);
    io::write_values(out, std::span<const float>(dataset.backbone_logits));
    io::finish(out, p);
  } else {
    m.backbone_logits_file.reset();
  }
  if (!dataset.tiers.empty()) {
    if (!m.tiers_file) m.tiers_file = "tiers.bin";
    write_label_file(dir / *m.tiers_file, dataset.tiers);
  } else {
    m.tiers_file.reset();
  }
  const auto mp = dir / kManifestName;
  auto out = io::open_out(mp);
  out << manifest_to_json(m).dump(2) << '\n';
  io::finish(out, mp);
}

DatasetManifest read_manifest(const fs::path& dir) {
  const auto p = dir / kManifestName;
  std::ifstream in(p);
  if (!in) throw IoError("cannot open dataset manifest " + p.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + p.string() + ": " + e.what());
  }
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const auto& m = ds.manifest;
  const std::size_t n = m.num_samples;
  for (const auto& meta : m.levels) {
    const auto p = dir / meta.blob;
    auto in = io::open_in(p);
    check_feature_header(in, meta, n, p);
    std::vector<float> buf(meta.sample_size() * n);
    io::read_values(in, std::span<float>(buf), p);
    ds.features.push_back(std::move(buf));
  }
  ds.labels = read_label_file(dir / m.labels_file, n);
  ds.backbone_pred = read_label_file(dir / m.backbone_pred_file, n);
  if (m.backbone_logits_file) {
    const auto p = dir / *m.backbone_logits_file;
    io::expect_file_size(p, 8 + 4ULL * n * m.num_classes);
    auto in = io::open_in(p);
    io::expect_magic(in, kLogitMagic, p);
    ds.backbone_logits.resize(n * m.num_classes);
    io::read_values(in, std::span<float>(ds.backbone_logits), p);
  }
  if (m.tiers_file) ds.tiers = read_label_file(dir / *m.tiers_file, n);
  ds.validate();
  return ds;
}

LevelStream::LevelStream(const fs::path& dir, std::size_t level,
                         std::optional<SampleMask> mask, std::size_t batch)
    : batch_(std::max<std::size_t>(batch, 1)) {
  const auto manifest = read_manifest(dir);
  meta_ = manifest.level(level);
  blob_path_ = dir / meta_.blob;
  in_ = io::open_in(blob_path_);
  check_feature_header(in_, meta_, manifest.num_samples, blob_path_);
  if (mask) {
    for (auto i : mask->indices()) {
      if (i >= manifest.num_samples) {
        throw ValidationError("mask index " + std::to_string(i) +
                              " out of range for " + blob_path_.string());
      }
    }
    order_.assign(mask->indices().begin(), mask->indices().end());
  } else {
    order_.resize(manifest.num_samples);
    for (std::size_t i = 0; i < order_.size(); ++i) {
      order_[i] = static_cast<std::uint32_t>(i);
    }
  }
}

void LevelStream::refill() {
  buffer_.clear();
  buffer_pos_ = 0;
  const std::size_t n = meta_.sample_size();
  const std::uint64_t stride = 4ULL * n;
  while (cursor_ < order_.size() && buffer_.size() < batch_) {
    const std::uint32_t idx = order_[cursor_++];
    in_.seekg(static_cast<std::streamoff>(kFeatureHeaderBytes + stride * idx));
    std::vector<float> values(n);
    io::read_values(in_, std::span<float>(values), blob_path_);
    buffer_.push_back({idx, Tensor(meta_.sample_shape(), std::move(values))});
  }
}

std::optional<StreamItem> LevelStream::next() {
  if (buffer_pos_ >= buffer_.size()) {
    if (cursor_ >= order_.size()) return std::nullopt;
    refill();
  }
  return std::move(buffer_[buffer_pos_++]);
}

LevelStream stream_level(const fs::path& dir, std::size_t level,
                         std::optional<SampleMask> mask) {
  return LevelStream(dir, level, std::move(mask));
}

VerifySummary verify_dataset(const fs::path& dir) {
  const auto m = read_manifest(dir);
  if (m.levels.empty()) throw FormatError("manifest lists no levels: " + dir.string());
  for (std::size_t l = 1; l <= m.levels.size(); ++l) {
    auto stream = stream_level(dir, l);
    std::size_t seen = 0;
    while (auto item = stream.next()) {
      if (!item->features.all_finite()) {
        throw FormatError("non-finite feature at sample " +
                          std::to_string(item->index) + " in " +
                          (dir / m.level(l).blob).string());
      }
      ++seen;
    }
    if (seen != m.num_samples) {
      throw FormatError("level " + std::to_string(l) + " yielded " +
                        std::to_string(seen) + " samples");
    }
  }
  Dataset ds;
  try {
    ds = read_dataset(dir);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("dataset invariant violated in ") +
                      dir.string() + ": " + e.what());
  }
  return {ds.size(), ds.num_classes(), ds.num_levels(), ds.backbone_accuracy()};
}

std::uint64_t fingerprint(const Dataset& dataset) {
  io::Fnv1a h;
  const std::uint64_t header[2] = {dataset.manifest.num_samples,
                                   dataset.manifest.num_classes};
  h.update(std::span<const std::uint64_t>(header));
  h.update(std::span<const std::uint16_t>(dataset.labels));
  h.update(std::span<const std::uint16_t>(dataset.backbone_pred));
  h.update(std::span<const float>(dataset.backbone_logits));
  for (const auto& level : dataset.features) {
    h.update(std::span<const float>(level));
  }
  return h.value();
}

}  // namespace eebt
