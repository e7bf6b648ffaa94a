#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eebt/calibration.hpp"
#include "eebt/dataset.hpp"
#include "eebt/heads.hpp"
#include "eebt/trainer.hpp"

namespace eebt {

inline constexpr int kBundleVersion = 1;
inline constexpr char kWeightMagic[8] = {'E', 'X', 'F', 'G', 'W', 'G', 'T', '0'};

enum class HeadRole : std::uint64_t { Classification = 1, Confidence = 2 };

struct PipelineConfig {
  // One entry per branch, or a single entry shared by all branches.
  std::vector<std::size_t> kernels = {32};
  double margin = 0.0;
  bool boosted = true;
  std::size_t levels = 0;  // branches to attach; 0 = every stored level
  TrainConfig train;

  std::size_t kernels_for(std::size_t level) const;
  void validate() const;
};

struct BranchRecord {
  BranchHeads heads;
  std::vector<ExitThreshold> thresholds;
  bool trained = true;
  std::string status = "trained";  // or the reason the branch was skipped
  std::size_t depth = 0, height = 0, width = 0;
  std::size_t train_view_size = 0;
  std::size_t validation_view_size = 0;
  double classifier_final_loss = 0.0;
  double confidence_final_loss = 0.0;
  std::vector<std::string> warnings;

  bool operator==(const BranchRecord&) const = default;
};

struct ModelBundle {
  PipelineConfig config;
  std::size_t num_classes = 0;
  std::vector<BranchRecord> branches;
  PrecisionTable precision;
  std::uint64_t fingerprint = 0;  // of the train and validation splits
  std::string config_echo = "{}";  // caller-resolved config, JSON text

  std::size_t num_branches() const { return branches.size(); }
};

// Independent seed for each (branch, head role) pair.
std::uint64_t head_seed(std::uint64_t root, std::size_t level, HeadRole role);

std::uint64_t split_fingerprint(const Dataset& train, const Dataset& validation);

// View positions whose sample triggers no exit at this branch.
SampleMask filter_survivors(const BranchHeads& heads,
                            std::span<const ExitThreshold> thresholds,
                            const DatasetView& view, Exec exec);

// Trains, calibrates, and (when cfg.boosted) filters branch by branch. The
// test split is never an input.
ModelBundle run_pipeline(const PipelineConfig& cfg, const Dataset& train,
                         const Dataset& validation);
ModelBundle run_boosted(PipelineConfig cfg, const Dataset& train,
                        const Dataset& validation);
ModelBundle run_nonboosted(PipelineConfig cfg, const Dataset& train,
                           const Dataset& validation);

// Keeps the heads, recomputes thresholds for a new margin. Boosted bundles
// recalibrate each branch on the validation samples that survive the newly
// calibrated upstream branches.
ModelBundle recalibrate(const ModelBundle& bundle, const Dataset& validation,
                        double margin);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace eebt
