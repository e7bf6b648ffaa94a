#pragma once

// Data-parallel per-sample kernels. Each has a serial reference path and an
// OpenMP path; both produce bit-identical results because per-sample work is
// independent and every reduction runs serially in sample order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eebt/dataset.hpp"
#include "eebt/heads.hpp"

namespace eebt {

enum class Exec { Serial, Parallel };

// One level's features for every sample of a dataset.
struct LevelBlock {
  std::span<const float> data;
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t positions() const { return height * width; }
  std::size_t sample_size() const { return depth * height * width; }
  std::span<const float> sample(std::size_t index) const {
    return data.subspan(index * sample_size(), sample_size());
  }
};

LevelBlock level_block(const Dataset& dataset, std::size_t level);

struct BranchDecision {
  std::uint16_t predicted = 0;
  float confidence = 0.0f;  // sigmoid confidence at the predicted class
};

std::vector<BranchDecision> evaluate_branch(const BranchHeads& heads,
                                            const LevelBlock& block,
                                            std::span<const std::uint32_t> samples,
                                            Exec exec);

std::vector<std::uint16_t> predict_classes(const HeadParams& head,
                                           const LevelBlock& block,
                                           std::span<const std::uint32_t> samples,
                                           Exec exec);

enum class Objective { CrossEntropy, PredictedBce };

struct BatchResult {
  std::vector<float> grad;  // summed over the batch: kernels, then linear
  double loss_sum = 0.0;
  std::size_t hits = 0;  // CE: argmax == target; BCE: (p > 0.5) == correct
  std::size_t saturated = 0;
};

// `units` holds the CE target class, or the BCE predicted-class unit.
// `correct` is only read for PredictedBce.
BatchResult batch_gradient(const HeadParams& head, const LevelBlock& block,
                           std::span<const std::uint32_t> samples,
                           Objective objective,
                           std::span<const std::uint16_t> units,
                           std::span<const std::uint8_t> correct, Exec exec);

// Number of OpenMP threads the parallel path uses (1 without OpenMP).
int parallel_threads();

}  // namespace eebt
