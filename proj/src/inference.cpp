#include "eebt/inference.hpp"

#include <cstdio>

#include "eebt/error.hpp"

namespace eebt {

std::uint64_t FlopsModel::charge(std::size_t exit_level) const {
  std::uint64_t total = 0;
  const std::size_t visited =
      exit_level == kFinalExit ? branch_overhead.size() : exit_level;
  for (std::size_t l = 0; l < visited; ++l) total += branch_overhead[l];
  if (exit_level == kFinalExit) return total + backbone_total;
  return total + cumulative[exit_level - 1];
}

FlopsModel flops_model(const ModelBundle& bundle, const DatasetManifest& manifest) {
  if (bundle.num_branches() > manifest.levels.size()) {
    throw ValidationError("bundle has more branches than the dataset has levels");
  }
  if (bundle.num_classes != manifest.num_classes) {
    throw ValidationError("bundle class count " + std::to_string(bundle.num_classes) +
                          " does not match dataset " +
                          std::to_string(manifest.num_classes));
  }
  FlopsModel m;
  for (const auto& b : bundle.branches) {
    const auto& meta = manifest.level(b.heads.level);
    if (meta.depth != b.depth || meta.height != b.height || meta.width != b.width) {
      throw ValidationError("bundle branch " + std::to_string(b.heads.level) +
                            " shape does not match dataset level");
    }
    m.cumulative.push_back(meta.cumulative_flops);
    const auto& c = b.heads.classification;
    const auto& f = b.heads.confidence;
    m.branch_overhead.push_back(
        head_flops(c.num_kernels(), b.depth, b.height, b.width, c.num_classes()) +
        head_flops(f.num_kernels(), b.depth, b.height, b.width, f.num_classes()));
  }
  m.backbone_total = manifest.backbone_flops();
  return m;
}

InferenceResult selective_infer(const ModelBundle& bundle, const FlopsModel& flops,
                                const Dataset& dataset, std::size_t index) {
  InferenceResult r;
  const std::uint32_t idx = static_cast<std::uint32_t>(index);
  for (const auto& b : bundle.branches) {
    const auto decision = evaluate_branch(b.heads, level_block(dataset, b.heads.level),
                                          std::span(&idx, 1), Exec::Serial)
                              .front();
    r.trace.push_back({decision.predicted, decision.confidence});
    if (b.thresholds[decision.predicted].fires(decision.confidence)) {
      r.prediction = decision.predicted;
      r.exit_level = b.heads.level;
      r.flops = flops.charge(r.exit_level);
      return r;
    }
  }
  r.prediction = dataset.backbone_prediction(index);
  r.exit_level = kFinalExit;
  r.flops = flops.charge(kFinalExit);
  return r;
}

std::vector<InferenceResult> infer_all(const ModelBundle& bundle,
                                       const Dataset& dataset, Exec exec) {
  const FlopsModel flops = flops_model(bundle, dataset.manifest);
  // Branch-major evaluation: each level runs over the samples still in
  // flight, so the per-sample work inside a level is data-parallel.
  std::vector<InferenceResult> results(dataset.size());
  std::vector<std::uint32_t> pending(dataset.size());
  for (std::size_t i = 0; i < pending.size(); ++i) {
    pending[i] = static_cast<std::uint32_t>(i);
  }
  for (const auto& b : bundle.branches) {
    const auto decisions =
        evaluate_branch(b.heads, level_block(dataset, b.heads.level), pending, exec);
    std::vector<std::uint32_t> still;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      auto& r = results[pending[i]];
      r.trace.push_back({decisions[i].predicted, decisions[i].confidence});
      if (b.thresholds[decisions[i].predicted].fires(decisions[i].confidence)) {
        r.prediction = decisions[i].predicted;
        r.exit_level = b.heads.level;
        r.flops = flops.charge(r.exit_level);
      } else {
        still.push_back(pending[i]);
      }
    }
    pending = std::move(still);
  }
  for (auto idx : pending) {
    auto& r = results[idx];
    r.prediction = dataset.backbone_prediction(idx);
    r.exit_level = kFinalExit;
    r.flops = flops.charge(kFinalExit);
  }
  return results;
}

EvalReport summarize(const Dataset& dataset, std::span<const InferenceResult> results,
                     std::size_t num_branches, std::uint64_t backbone_flops) {
  if (results.empty()) throw ValidationError("cannot evaluate an empty test set");
  if (results.size() != dataset.size()) {
    throw ValidationError("result count does not match dataset size");
  }
  EvalReport rep;
  const std::size_t n = results.size();
  rep.samples = n;
  std::vector<std::size_t> exits(num_branches + 1, 0);
  std::vector<std::size_t> class_total(dataset.num_classes(), 0);
  std::vector<std::size_t> class_early(dataset.num_classes(), 0);
  std::size_t correct = 0, backbone_correct = 0;
  double flops_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = results[i];
    const auto label = dataset.labels[i];
    correct += r.prediction == label;
    backbone_correct += dataset.backbone_prediction(i) == label;
    flops_sum += static_cast<double>(r.flops);
    ++exits[r.is_final() ? num_branches : r.exit_level - 1];
    ++class_total[label];
    class_early[label] += !r.is_final();
  }
  const double dn = static_cast<double>(n);
  rep.selective_accuracy = correct / dn;
  rep.backbone_accuracy = backbone_correct / dn;
  // Integer numerator keeps the all-backbone case exactly zero.
  rep.degradation_pp =
      100.0 * (static_cast<double>(backbone_correct) - static_cast<double>(correct)) / dn;
  rep.mean_flops = flops_sum / dn;
  rep.backbone_flops = static_cast<double>(backbone_flops);
  rep.reduction = 1.0 - rep.mean_flops / rep.backbone_flops;
  for (auto e : exits) rep.exit_ratios.push_back(e / dn);
  for (std::size_t c = 0; c < class_total.size(); ++c) {
    rep.class_exit_ratios.push_back(
        class_total[c] ? static_cast<double>(class_early[c]) / class_total[c] : 0.0);
  }
  return rep;
}

EvalReport evaluate(const ModelBundle& bundle, const Dataset& test, Exec exec) {
  if (test.size() == 0) throw ValidationError("cannot evaluate an empty test set");
  const auto results = infer_all(bundle, test, exec);
  return summarize(test, results, bundle.num_branches(),
                   test.manifest.backbone_flops());
}

void write_trace(std::ostream& out, std::span<const InferenceResult> results,
                 std::size_t num_branches) {
  out << "index,exit_level";
  for (std::size_t l = 1; l <= num_branches; ++l) {
    out << ",pred_b" << l << ",conf_b" << l;
  }
  out << ",flops\n";
  char buf[32];
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i << ',';
    if (r.is_final()) {
      out << "FINAL";
    } else {
      out << r.exit_level;
    }
    for (std::size_t l = 0; l < num_branches; ++l) {
      if (l < r.trace.size()) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r.trace[l].confidence));
        out << ',' << r.trace[l].predicted << ',' << buf;
      } else {
        out << ",,";
      }
    }
    out << ',' << r.flops << '\n';
  }
}

}  // namespace eebt
