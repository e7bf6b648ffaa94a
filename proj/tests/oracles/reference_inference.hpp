#pragma once

// Test-only reimplementation of early-exit selective inference and its FLOPs
// charge. Reads bundle and dataset buffers directly; shares no compute code
// with the library. Float arithmetic follows the same accumulation order so
// decisions can be compared exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <cstdint>
#include <vector>

#include "eebt/dataset.hpp"
#include "eebt/pipeline.hpp"

namespace oracle {

struct Outcome {
  std::uint16_t prediction = 0;
  std::size_t exit_level = 0;  // 0 = backbone
  std::uint64_t flops = 0;
};

inline std::vector<float> naive_logits(const eebt::HeadParams& p, const float* x,
                                       std::size_t depth, std::size_t positions) {
  const std::size_t K = p.kernels.shape()[0];
  const std::size_t N = p.linear.shape()[0];
  std::vector<float> mass(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<float> r(positions, 0.0f);
    for (std::size_t c = 0; c < depth; ++c) {
      for (std::size_t q = 0; q < positions; ++q) {
        r[q] += p.kernels.data()[k * depth + c] * x[c * positions + q];
      }
    }
    float m = 0.0f;
    for (float v : r) m += v * v;
    if (m > 1e20f) m = 1e20f;
    mass[k] = m;
  }
  std::vector<float> z(N);
  for (std::size_t n = 0; n < N; ++n) {
    float acc = 0.0f;
    for (std::size_t k = 0; k < K; ++k) acc += p.linear.data()[n * K + k] * mass[k];
    z[n] = acc;
  }
  return z;
}

// Predicted class and its confidence at one branch.
inline std::pair<std::size_t, float> reference_decision(const eebt::BranchHeads& heads,
                                                        const float* x, std::size_t depth,
                                                        std::size_t positions) {
  const auto scores = naive_logits(heads.classification, x, depth, positions);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  const auto conf = naive_logits(heads.confidence, x, depth, positions);
  const float z = conf[best];
  float r = z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
  r = std::min(std::max(r, std::numeric_limits<float>::denorm_min()),
               1.0f - std::numeric_limits<float>::epsilon() / 2.0f);
  return {best, r};
}

inline std::uint64_t naive_head_flops(std::uint64_t K, std::uint64_t d, std::uint64_t hw,
                                      std::uint64_t N) {
  return 2 * K * d * hw + K * hw + K * (hw - 1) + 2 * K * N;
}

inline Outcome reference_infer(const eebt::ModelBundle& bundle, const eebt::Dataset& ds,
                               std::size_t index) {
  Outcome o;
  std::uint64_t overhead = 0;
  for (const auto& b : bundle.branches) {
    const auto& meta = ds.manifest.levels[b.heads.level - 1];
    const std::size_t hw = meta.height * meta.width;
    const float* x = ds.features[b.heads.level - 1].data() + index * meta.depth * hw;
    overhead += naive_head_flops(b.heads.classification.kernels.shape()[0], meta.depth, hw,
                                 bundle.num_classes) +
                naive_head_flops(b.heads.confidence.kernels.shape()[0], meta.depth, hw,
                                 bundle.num_classes);
    const auto [best, r] = reference_decision(b.heads, x, meta.depth, hw);
    const auto& t = b.thresholds[best];
    if (!t.is_disabled() && r > t.value()) {
      o.prediction = static_cast<std::uint16_t>(best);
      o.exit_level = b.heads.level;
      o.flops = meta.cumulative_flops + overhead;
      return o;
    }
  }
  if (ds.has_logits()) {
    const float* z = ds.backbone_logits.data() + index * ds.manifest.num_classes;
    std::size_t best = 0;
    for (std::size_t i = 1; i < ds.manifest.num_classes; ++i) {
      if (z[i] > z[best]) best = i;
    }
    o.prediction = static_cast<std::uint16_t>(best);
  } else {
    o.prediction = ds.backbone_pred[index];
  }
  o.flops = ds.manifest.levels.back().cumulative_flops + ds.manifest.final_classifier_flops +
            overhead;
  return o;
}

}  // namespace oracle
