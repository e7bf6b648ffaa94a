#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eebt/tensor.hpp"

namespace eebt {

inline constexpr char kFeatureMagic[8] = {'E', 'X', 'F', 'G', 'F', 'M', 'A', 'P'};
inline constexpr char kLabelMagic[8] = {'E', 'X', 'F', 'G', 'L', 'B', 'L', '0'};
inline constexpr char kLogitMagic[8] = {'E', 'X', 'F', 'G', 'L', 'G', 'T', '0'};
inline constexpr std::uint32_t kFeatureBlobVersion = 1;
inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr std::size_t kFeatureHeaderBytes = 16;

struct LevelMeta {
  std::size_t level = 0;  // 1-based block index
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t cumulative_flops = 0;  // backbone cost through this block
  std::string blob;
  std::uint64_t blob_bytes = 0;

  std::size_t positions() const { return height * width; }
  std::size_t sample_size() const { return depth * height * width; }
  Shape sample_shape() const { return {depth, height, width}; }
};

struct DatasetManifest {
  int format_version = kManifestVersion;
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::vector<LevelMeta> levels;
  // Cost of everything after the deepest stored block: remaining backbone
  // blocks plus the final classifier.
  std::uint64_t final_classifier_flops = 0;
  std::string labels_file = "labels.bin";
  std::string backbone_pred_file = "backbone_pred.bin";
  std::optional<std::string> backbone_logits_file;
  // Difficulty tier per sample; written only by the synthetic generator.
  std::optional<std::string> tiers_file;
  // Free-form producer description (JSON text), echoed verbatim.
  std::string provenance = "{}";

  const LevelMeta& level(std::size_t l) const;
  std::uint64_t backbone_flops() const {
    return levels.empty() ? final_classifier_flops
                          : levels.back().cumulative_flops + final_classifier_flops;
  }
};

// In-memory dataset: metadata, per-sample labels, and every level's features.
struct Dataset {
  DatasetManifest manifest;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint16_t> backbone_pred;
  std::vector<float> backbone_logits;  // empty or num_samples * num_classes
  std::vector<std::uint16_t> tiers;    // empty unless synthetic
  std::vector<std::vector<float>> features;  // [level - 1][sample * size]

  std::size_t size() const { return manifest.num_samples; }
  std::size_t num_classes() const { return manifest.num_classes; }
  std::size_t num_levels() const { return manifest.levels.size(); }
  bool has_logits() const { return !backbone_logits.empty(); }

  std::span<const float> sample(std::size_t level, std::size_t index) const;
  Tensor sample_tensor(std::size_t level, std::size_t index) const;

  // Final-classifier prediction: argmax of stored logits when present.
  std::uint16_t backbone_prediction(std::size_t index) const;
  double backbone_accuracy() const;

  // Checks every manifest invariant against the buffers. Throws
  // ValidationError.
  void validate() const;
};

// Ordered subset of sample positions within a parent of known size.
class SampleMask {
 public:
  SampleMask() = default;
  SampleMask(std::vector<std::uint32_t> indices, std::size_t parent_size);
  static SampleMask all(std::size_t parent_size);

  std::span<const std::uint32_t> indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }

  friend bool operator==(const SampleMask&, const SampleMask&) = default;

 private:
  std::vector<std::uint32_t> indices_;
};

// Logical sub-dataset: positions map to parent sample indices.
class DatasetView {
 public:
  explicit DatasetView(const Dataset& parent);
  DatasetView(const Dataset& parent, std::vector<std::uint32_t> indices);

  const Dataset& parent() const { return *parent_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::uint32_t index(std::size_t pos) const { return indices_[pos]; }
  std::span<const std::uint32_t> indices() const { return indices_; }

 private:
  const Dataset* parent_;
  std::vector<std::uint32_t> indices_;
};

// Selects view positions listed in `mask`. Masks compose: applying [0,2,4]
// and then [1] selects parent sample 2.
DatasetView apply_mask(const DatasetView& view, const SampleMask& mask);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

struct StreamItem {
  std::size_t index;
  Tensor features;
};

// Reads one level's samples in mask order (or natural order), holding at
// most `batch` samples in memory.
class LevelStream {
 public:
  LevelStream(const std::filesystem::path& dir, std::size_t level,
              std::optional<SampleMask> mask = std::nullopt,
              std::size_t batch = 256);

  std::optional<StreamItem> next();

 private:
  void refill();

  std::filesystem::path blob_path_;
  std::ifstream in_;
  LevelMeta meta_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_;
  std::vector<StreamItem> buffer_;
  std::size_t buffer_pos_ = 0;
};

LevelStream stream_level(const std::filesystem::path& dir, std::size_t level,
                         std::optional<SampleMask> mask = std::nullopt);

struct VerifySummary {
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::size_t num_levels = 0;
  double backbone_accuracy = 0.0;
};

// Full structural check of an on-disk dataset: magics, lengths, label
// ranges, finiteness, and logit/prediction agreement.
VerifySummary verify_dataset(const std::filesystem::path& dir);

// 64-bit FNV-1a over labels, predictions, logits, and features.
std::uint64_t fingerprint(const Dataset& dataset);

}  // namespace eebt
