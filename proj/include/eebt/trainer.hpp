#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eebt/dataset.hpp"
#include "eebt/error.hpp"
#include "eebt/heads.hpp"
#include "eebt/kernels.hpp"

namespace eebt {

enum class LabelMode { Absolute, Distillation };
enum class OptimizerKind { Sgd, Momentum };

std::string to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& text);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 128;
  double lr = 0.01;
  OptimizerKind optimizer = OptimizerKind::Momentum;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  LabelMode label_mode = LabelMode::Absolute;
  // Below 2*batch samples training refuses to run unless this is set, in
  // which case it falls back to one full batch per epoch.
  bool allow_tiny = false;
  Exec exec = Exec::Parallel;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-sample loss for each epoch
  double final_accuracy = 0.0;     // on the last epoch's updates
  std::size_t samples = 0;
  std::size_t batch = 0;           // effective batch size
  std::size_t saturated = 0;
};

// Raised when a training view is empty.
class NoSurvivorsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Raised when a view is below the minimum size guard.
class TinyViewError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Ground truth (absolute) or backbone prediction (distillation).
std::uint16_t resolve_label(const Dataset& dataset, std::size_t index,
                            LabelMode mode);

std::pair<HeadParams, TrainReport> train_classification_head(
    const DatasetView& view, std::size_t level, std::size_t num_kernels,
    const TrainConfig& cfg);

// Targets: bit [argmax classifier == resolve_label]; loss on the predicted
// unit only.
std::pair<HeadParams, TrainReport> train_confidence_head(
    const DatasetView& view, std::size_t level, const HeadParams& classifier,
    std::size_t num_kernels, const TrainConfig& cfg);

// Fisher-Yates with the portable generator.
std::vector<std::uint32_t> seeded_permutation(std::size_t n, Rng& rng);

}  // namespace eebt
