#include "eebt/kernels.hpp"

#include <cmath>

#include "eebt/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eebt {

int parallel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

LevelBlock level_block(const Dataset& dataset, std::size_t level) {
  const auto& meta = dataset.manifest.level(level);
  return {dataset.features[level - 1], meta.depth, meta.height, meta.width};
}

namespace {

HeadDims dims_of(const HeadParams& head, const LevelBlock& block) {
  if (head.depth() != block.depth) {
    throw DimensionError("head depth " + std::to_string(head.depth()) +
                         " does not match level depth " +
                         std::to_string(block.depth));
  }
  return {head.num_kernels(), block.depth, block.positions(), head.num_classes()};
}

// Per-thread forward/backward buffers.
struct Scratch {
  std::vector<float> responses, mass, logits, dlogits;
  explicit Scratch(const HeadDims& d)
      : responses(d.kernels * d.positions),
        mass(d.kernels),
        logits(d.classes),
        dlogits(d.classes) {}
  // Sized for whichever head has more kernels; the class count is shared.
  Scratch(const HeadDims& a, const HeadDims& b)
      : Scratch(a.kernels >= b.kernels ? a : b) {}
};

struct BranchDims {
  HeadDims classification;
  HeadDims confidence;
};

BranchDims branch_dims(const BranchHeads& heads, const LevelBlock& block) {
  BranchDims d{dims_of(heads.classification, block), dims_of(heads.confidence, block)};
  if (d.classification.classes != d.confidence.classes) {
    throw DimensionError("classification and confidence heads disagree on class count");
  }
  return d;
}

std::size_t run_forward(const HeadParams& head, const HeadDims& dims,
                        std::span<const float> x, Scratch& s) {
  return head_math::forward<float>(dims, head.kernels.values(),
                                   head.linear.values(), x, s.responses,
                                   s.mass, s.logits);
}

BranchDecision decide(const BranchHeads& heads, const BranchDims& dims,
                      std::span<const float> x, Scratch& s) {
  run_forward(heads.classification, dims.classification, x, s);
  const auto predicted = static_cast<std::uint16_t>(argmax(s.logits));
  run_forward(heads.confidence, dims.confidence, x, s);
  const float z = s.logits[predicted];
  if (!std::isfinite(z)) throw NumericError("non-finite confidence logit");
  return {predicted, stable_sigmoid(z)};
}

struct SampleOutcome {
  double loss = 0.0;
  bool hit = false;
  std::size_t saturated = 0;
};

// Gradient of one sample written into `grad` (kernels then linear).
SampleOutcome sample_gradient(const HeadParams& head, const HeadDims& dims,
                              std::span<const float> x, Objective objective,
                              std::uint16_t unit, bool correct, Scratch& s,
                              std::span<float> grad) {
  SampleOutcome out;
  out.saturated = run_forward(head, dims, x, s);
  for (float v : s.logits) {
    if (!std::isfinite(v)) throw NumericError("non-finite logits during training");
  }
  if (objective == Objective::CrossEntropy) {
    out.loss = head_math::cross_entropy<float>(s.logits, unit, s.dlogits);
    out.hit = argmax(s.logits) == unit;
  } else {
    out.loss = head_math::predicted_bce<float>(s.logits, unit, correct, s.dlogits);
    out.hit = (s.logits[unit] > 0.0f) == correct;
  }
  const std::size_t nk = head.kernels.size();
  head_math::backward<float>(dims, head.linear.values(), x, s.responses, s.mass,
                             s.dlogits, grad.subspan(0, nk),
                             grad.subspan(nk, head.linear.size()));
  return out;
}

}  // namespace

std::vector<BranchDecision> evaluate_branch(const BranchHeads& heads,
                                            const LevelBlock& block,
                                            std::span<const std::uint32_t> samples,
                                            Exec exec) {
  const BranchDims dims = branch_dims(heads, block);
  std::vector<BranchDecision> out(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  if (exec == Exec::Serial) {
    Scratch s(dims.classification, dims.confidence);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      out[i] = decide(heads, dims, block.sample(samples[i]), s);
    }
    return out;
  }
  bool failed = false;
#pragma omp parallel
  {
    Scratch s(dims.classification, dims.confidence);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        out[i] = decide(heads, dims, block.sample(samples[i]), s);
      } catch (const NumericError&) {
#pragma omp atomic write
        failed = true;
      }
    }
  }
  if (failed) throw NumericError("non-finite confidence logit");
  return out;
}

std::vector<std::uint16_t> predict_classes(const HeadParams& head,
                                           const LevelBlock& block,
                                           std::span<const std::uint32_t> samples,
                                           Exec exec) {
  const HeadDims dims = dims_of(head, block);
  std::vector<std::uint16_t> out(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  if (exec == Exec::Serial) {
    Scratch s(dims);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      run_forward(head, dims, block.sample(samples[i]), s);
      out[i] = static_cast<std::uint16_t>(argmax(s.logits));
    }
    return out;
  }
#pragma omp parallel
  {
    Scratch s(dims);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      run_forward(head, dims, block.sample(samples[i]), s);
      out[i] = static_cast<std::uint16_t>(argmax(s.logits));
    }
  }
  return out;
}

BatchResult batch_gradient(const HeadParams& head, const LevelBlock& block,
                           std::span<const std::uint32_t> samples,
                           Objective objective,
                           std::span<const std::uint16_t> units,
                           std::span<const std::uint8_t> correct, Exec exec) {
  const HeadDims dims = dims_of(head, block);
  if (units.size() != samples.size() ||
      (objective == Objective::PredictedBce && correct.size() != samples.size())) {
    throw DimensionError("batch targets do not match batch size");
  }
  for (auto u : units) {
    if (u >= dims.classes) throw ValidationError("batch target out of range");
  }
  const std::size_t params = head.parameter_count();
  BatchResult result;
  result.grad.assign(params, 0.0f);
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  auto is_correct = [&](std::ptrdiff_t i) {
    return objective == Objective::PredictedBce && correct[i] != 0;
  };

  if (exec == Exec::Serial) {
    Scratch s(dims);
    std::vector<float> g(params);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto o = sample_gradient(head, dims, block.sample(samples[i]),
                                     objective, units[i], is_correct(i), s, g);
      for (std::size_t j = 0; j < params; ++j) result.grad[j] += g[j];
      result.loss_sum += o.loss;
      result.hits += o.hit;
      result.saturated += o.saturated;
    }
    return result;
  }

  std::vector<float> per_sample(params * samples.size());
  std::vector<SampleOutcome> outcomes(samples.size());
  bool failed = false;
#pragma omp parallel
  {
    Scratch s(dims);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        outcomes[i] = sample_gradient(
            head, dims, block.sample(samples[i]), objective, units[i],
            is_correct(i), s,
            std::span<float>(per_sample).subspan(i * params, params));
      } catch (const NumericError&) {
#pragma omp atomic write
        failed = true;
      }
    }
  }
  if (failed) throw NumericError("non-finite logits during training");
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const float* g = per_sample.data() + i * params;
    for (std::size_t j = 0; j < params; ++j) result.grad[j] += g[j];
    result.loss_sum += outcomes[i].loss;
    result.hits += outcomes[i].hit;
    result.saturated += outcomes[i].saturated;
  }
  return result;
}

}  // namespace eebt
