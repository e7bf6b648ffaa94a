#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eebt/inference.hpp"
#include "eebt/pipeline.hpp"

namespace eebt {

// One point of an accuracy-compute curve.
struct CurvePoint {
  std::string config_id;
  bool boosted = true;
  LabelMode mode = LabelMode::Absolute;
  std::string kernels;  // "32", or "32_48_64" for per-branch sizes
  double margin = 0.0;
  double degradation_pp = 0.0;
  double reduction = 0.0;
  std::vector<double> exit_ratios;  // branches 1..L, then final

  bool operator==(const CurvePoint&) const = default;
};

std::string config_id(const PipelineConfig& cfg);
std::string kernels_label(const std::vector<std::size_t>& kernels);

CurvePoint make_point(const PipelineConfig& cfg, const EvalReport& report);

// Boosted configs re-run the whole pipeline per margin. Non-boosted configs
// train once and recalibrate per margin. Points come back sorted by
// reduction (stable, so ties keep margin order).
std::vector<CurvePoint> sweep_curve(const PipelineConfig& base,
                                    std::span<const double> margins,
                                    const Dataset& train, const Dataset& validation,
                                    const Dataset& test);

struct SweepGrid {
  std::vector<LabelMode> modes = {LabelMode::Absolute};
  std::vector<std::size_t> kernels = {32};
  std::vector<double> margins = {0.0};
  std::vector<bool> schemes = {true, false};  // boosted, non-boosted
};

// Every (mode, K, scheme) cell, each a sweep_curve over the margins. Cells
// run sequentially in mode, K, scheme order.
std::vector<CurvePoint> sweep_grid(const PipelineConfig& base, const SweepGrid& grid,
                                   const Dataset& train, const Dataset& validation,
                                   const Dataset& test);

// CSV columns, in order:
//   config_id, boosted (0/1), mode, k, margin, degradation_pp, reduction,
//   exit_ratio_b1 .. exit_ratio_bL, exit_ratio_final
// Real values are written with 9 fixed decimals.
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points,
                     std::size_t num_branches);
void write_curve_csv(const std::filesystem::path& path,
                     std::span<const CurvePoint> points, std::size_t num_branches);
std::vector<CurvePoint> read_curve_csv(std::istream& in);

std::string curve_json(std::span<const CurvePoint> points);
std::string report_json(const EvalReport& report, const std::string& config_echo);

// Rounds to the 9-decimal CSV precision.
double csv_round(double value);

}  // namespace eebt
