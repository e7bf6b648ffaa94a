#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "eebt/dataset.hpp"
#include "eebt/kernels.hpp"
#include "eebt/pipeline.hpp"

namespace eebt {

// Exit level reported when no branch fires and the backbone answers.
inline constexpr std::size_t kFinalExit = 0;

// Cost model for one bundle applied to one dataset's FLOPs metadata.
struct FlopsModel {
  std::vector<std::uint64_t> cumulative;     // backbone cost through block l
  std::vector<std::uint64_t> branch_overhead;  // both heads at branch l
  std::uint64_t backbone_total = 0;          // full backbone incl. classifier

  // Charged cost of a sample leaving at `exit_level` (kFinalExit = backbone).
  std::uint64_t charge(std::size_t exit_level) const;
};

// Throws ValidationError if the bundle and dataset disagree on shapes.
FlopsModel flops_model(const ModelBundle& bundle, const DatasetManifest& manifest);

struct BranchTrace {
  std::uint16_t predicted = 0;
  float confidence = 0.0f;
};

struct InferenceResult {
  std::uint16_t prediction = 0;
  std::size_t exit_level = kFinalExit;
  std::uint64_t flops = 0;
  std::vector<BranchTrace> trace;  // one entry per visited branch

  bool is_final() const { return exit_level == kFinalExit; }
};

InferenceResult selective_infer(const ModelBundle& bundle, const FlopsModel& flops,
                                const Dataset& dataset, std::size_t index);

// Selective inference for every sample.
std::vector<InferenceResult> infer_all(const ModelBundle& bundle,
                                       const Dataset& dataset, Exec exec);

struct EvalReport {
  std::size_t samples = 0;
  double selective_accuracy = 0.0;
  double backbone_accuracy = 0.0;
  double degradation_pp = 0.0;  // backbone minus selective, percentage points
  double mean_flops = 0.0;
  double backbone_flops = 0.0;
  double reduction = 0.0;  // 1 - mean_flops / backbone_flops
  std::vector<double> exit_ratios;        // branches 1..L, then final
  std::vector<double> class_exit_ratios;  // per true class, any early exit
};

EvalReport summarize(const Dataset& dataset, std::span<const InferenceResult> results,
                     std::size_t num_branches, std::uint64_t backbone_flops);

EvalReport evaluate(const ModelBundle& bundle, const Dataset& test, Exec exec);

// One line per sample: index, exit level, per-branch class and confidence,
// charged FLOPs.
void write_trace(std::ostream& out, std::span<const InferenceResult> results,
                 std::size_t num_branches);

}  // namespace eebt
