#include "eebt/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "eebt/error.hpp"

namespace eebt {

PrecisionTable backbone_class_precision(const DatasetView& split) {
  const Dataset& ds = split.parent();
  const std::size_t n = ds.num_classes();
  PrecisionTable t;
  t.precision.assign(n, std::nullopt);
  t.support.assign(n, 0);
  t.true_positives.assign(n, 0);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto idx = split.index(i);
    const auto pred = ds.backbone_pred[idx];
    ++t.support[pred];
    t.true_positives[pred] += ds.labels[idx] == pred;
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (t.support[c] > 0) {
      t.precision[c] = static_cast<double>(t.true_positives[c]) /
                       static_cast<double>(t.support[c]);
    }
  }
  return t;
}

std::vector<SweepPoint> precision_sweep(std::span<const CalibrationRecord> records) {
  std::vector<SweepPoint> sweep;
  if (records.empty()) return sweep;
  for (const auto& r : records) {
    if (r.predicted != records.front().predicted) {
      throw ValidationError("precision_sweep needs records of a single predicted class");
    }
  }
  std::vector<CalibrationRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.confidence < b.confidence; });
  // suffix_correct[j] = correct records among sorted[j..]
  const std::size_t n = sorted.size();
  std::vector<std::size_t> suffix_correct(n + 1, 0);
  for (std::size_t j = n; j-- > 0;) {
    suffix_correct[j] = suffix_correct[j + 1] + sorted[j].correct;
  }
  auto point = [&](float threshold, std::size_t first_exit) {
    SweepPoint p;
    p.threshold = threshold;
    p.exits = n - first_exit;
    p.correct = suffix_correct[first_exit];
    if (p.exits > 0) {
      p.precision = static_cast<double>(p.correct) / static_cast<double>(p.exits);
    }
    return p;
  };
  // Records with confidence <= 0 never exit at candidate 0.
  std::size_t j = 0;
  while (j < n && sorted[j].confidence <= 0.0f) ++j;
  sweep.push_back(point(0.0f, j));
  while (j < n) {
    const float v = sorted[j].confidence;
    while (j < n && sorted[j].confidence == v) ++j;
    sweep.push_back(point(v, j));
  }
  return sweep;
}

void validate_margin(double margin) {
  if (!(margin > -1.0 && margin <= 1.0)) {
    throw ValidationError("margin " + std::to_string(margin) +
                          " outside the valid range (-1, 1]");
  }
}

double required_precision(double backbone_precision, double margin) {
  return (1.0 + margin) * backbone_precision;
}

ExitThreshold cpm_select_threshold(std::span<const SweepPoint> sweep,
                                   std::optional<double> backbone_precision,
                                   double margin) {
  if (!backbone_precision) return ExitThreshold::disabled();
  const double required = required_precision(*backbone_precision, margin);
  for (const auto& p : sweep) {
    if (p.exits > 0 && *p.precision >= required) return ExitThreshold::at(p.threshold);
  }
  return ExitThreshold::disabled();
}

std::vector<CalibrationRecord> build_records(const BranchHeads& heads,
                                             const DatasetView& split,
                                             LabelMode mode, Exec exec) {
  const Dataset& ds = split.parent();
  const auto decisions =
      evaluate_branch(heads, level_block(ds, heads.level), split.indices(), exec);
  std::vector<CalibrationRecord> records(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    records[i].predicted = decisions[i].predicted;
    records[i].confidence = decisions[i].confidence;
    records[i].correct =
        decisions[i].predicted == resolve_label(ds, split.index(i), mode);
  }
  return records;
}

BranchCalibration calibrate_records(std::span<const CalibrationRecord> records,
                                    const PrecisionTable& precision, double margin) {
  validate_margin(margin);
  const std::size_t n = precision.num_classes();
  BranchCalibration out;
  out.thresholds.assign(n, ExitThreshold::disabled());
  if (records.empty()) {
    out.warnings.push_back("empty calibration view: every class disabled");
    return out;
  }
  std::vector<std::vector<CalibrationRecord>> by_class(n);
  for (const auto& r : records) {
    if (r.predicted >= n) throw ValidationError("record class out of range");
    by_class[r.predicted].push_back(r);
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (by_class[c].empty()) continue;
    const auto sweep = precision_sweep(by_class[c]);
    out.thresholds[c] = cpm_select_threshold(sweep, precision.precision[c], margin);
  }
  return out;
}

BranchCalibration calibrate_branch(const BranchHeads& heads,
                                   const DatasetView& split,
                                   const PrecisionTable& precision,
                                   double margin, LabelMode mode, Exec exec) {
  validate_margin(margin);
  if (precision.num_classes() != split.parent().num_classes()) {
    throw ValidationError("precision table class count does not match dataset");
  }
  const auto records = build_records(heads, split, mode, exec);
  return calibrate_records(records, precision, margin);
}

}  // namespace eebt
