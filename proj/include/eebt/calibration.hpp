#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eebt/dataset.hpp"
#include "eebt/heads.hpp"
#include "eebt/kernels.hpp"
#include "eebt/trainer.hpp"

namespace eebt {

// Backbone per-class precision on the calibration split. A class the
// backbone never predicts has no precision (nullopt), not zero.
struct PrecisionTable {
  std::vector<std::optional<double>> precision;
  std::vector<std::size_t> support;         // times the backbone predicted i
  std::vector<std::size_t> true_positives;  // ... and was right

  std::size_t num_classes() const { return precision.size(); }
  friend bool operator==(const PrecisionTable&, const PrecisionTable&) = default;
};

PrecisionTable backbone_class_precision(const DatasetView& split);

// Per-(branch, class) exit threshold. A sample exits iff its confidence is
// strictly greater than the value; a disabled threshold never fires and
// orders above every value.
class ExitThreshold {
 public:
  ExitThreshold() = default;  // disabled
  static ExitThreshold disabled() { return {}; }
  static ExitThreshold at(float value) { return ExitThreshold(value); }

  bool is_disabled() const { return !value_.has_value(); }
  float value() const { return *value_; }
  bool fires(float confidence) const { return value_ && confidence > *value_; }

  friend bool operator==(const ExitThreshold&, const ExitThreshold&) = default;
  friend std::partial_ordering operator<=>(const ExitThreshold& a,
                                           const ExitThreshold& b) {
    if (a.is_disabled() || b.is_disabled()) {
      return a.is_disabled() == b.is_disabled() ? std::partial_ordering::equivalent
             : a.is_disabled()                  ? std::partial_ordering::greater
                                                : std::partial_ordering::less;
    }
    return *a.value_ <=> *b.value_;
  }

 private:
  explicit ExitThreshold(float v) : value_(v) {}
  std::optional<float> value_;
};

struct CalibrationRecord {
  std::uint16_t predicted = 0;
  float confidence = 0.0f;
  bool correct = false;
};

struct SweepPoint {
  float threshold = 0.0f;
  std::size_t exits = 0;
  std::size_t correct = 0;
  std::optional<double> precision;  // nullopt when nothing exits
};

// Candidates {0} and every distinct confidence, ascending. All records must
// share one predicted class.
std::vector<SweepPoint> precision_sweep(std::span<const CalibrationRecord> records);

// Margins must lie in (-1, 1].
void validate_margin(double margin);

double required_precision(double backbone_precision, double margin);

// Smallest candidate whose nonempty exited set reaches (1+m) * backbone
// precision; disabled if none does or the backbone precision is undefined.
ExitThreshold cpm_select_threshold(std::span<const SweepPoint> sweep,
                                   std::optional<double> backbone_precision,
                                   double margin);

// Runs both heads over the split. Correctness follows `mode`.
std::vector<CalibrationRecord> build_records(const BranchHeads& heads,
                                             const DatasetView& split,
                                             LabelMode mode, Exec exec);

struct BranchCalibration {
  std::vector<ExitThreshold> thresholds;  // one per class
  std::vector<std::string> warnings;
};

BranchCalibration calibrate_records(std::span<const CalibrationRecord> records,
                                    const PrecisionTable& precision, double margin);

BranchCalibration calibrate_branch(const BranchHeads& heads,
                                   const DatasetView& split,
                                   const PrecisionTable& precision,
                                   double margin, LabelMode mode, Exec exec);

}  // namespace eebt
