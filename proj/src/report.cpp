#include "eebt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eebt/error.hpp"
#include "json.hpp"

namespace eebt {

using nlohmann::json;

std::string kernels_label(const std::vector<std::size_t>& kernels) {
  std::string s;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    if (i) s += '_';
    s += std::to_string(kernels[i]);
  }
  return s;
}

std::string config_id(const PipelineConfig& cfg) {
  return to_string(cfg.train.label_mode) + "-k" + kernels_label(cfg.kernels) + "-" +
         (cfg.boosted ? "boosted" : "nonboosted");
}

CurvePoint make_point(const PipelineConfig& cfg, const EvalReport& report) {
  CurvePoint p;
  p.config_id = config_id(cfg);
  p.boosted = cfg.boosted;
  p.mode = cfg.train.label_mode;
  p.kernels = kernels_label(cfg.kernels);
  p.margin = cfg.margin;
  p.degradation_pp = report.degradation_pp;
  p.reduction = report.reduction;
  p.exit_ratios = report.exit_ratios;
  return p;
}

std::vector<CurvePoint> sweep_curve(const PipelineConfig& base,
                                    std::span<const double> margins,
                                    const Dataset& train, const Dataset& validation,
                                    const Dataset& test) {
  for (double m : margins) validate_margin(m);
  std::vector<CurvePoint> points;
  if (margins.empty()) return points;
  const Exec exec = base.train.exec;
  if (base.boosted) {
    for (double m : margins) {
      PipelineConfig cfg = base;
      cfg.margin = m;
      const auto bundle = run_pipeline(cfg, train, validation);
      points.push_back(make_point(cfg, evaluate(bundle, test, exec)));
    }
  } else {
    PipelineConfig cfg = base;
    cfg.margin = margins.front();
    const auto trained = run_pipeline(cfg, train, validation);
    for (double m : margins) {
      const auto bundle = recalibrate(trained, validation, m);
      points.push_back(make_point(bundle.config, evaluate(bundle, test, exec)));
    }
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const auto& a, const auto& b) { return a.reduction < b.reduction; });
  return points;
}

std::vector<CurvePoint> sweep_grid(const PipelineConfig& base, const SweepGrid& grid,
                                   const Dataset& train, const Dataset& validation,
                                   const Dataset& test) {
  std::vector<CurvePoint> all;
  for (auto mode : grid.modes) {
    for (auto k : grid.kernels) {
      for (bool boosted : grid.schemes) {
        PipelineConfig cfg = base;
        cfg.train.label_mode = mode;
        cfg.kernels = {k};
        cfg.boosted = boosted;
        auto pts = sweep_curve(cfg, grid.margins, train, validation, test);
        all.insert(all.end(), pts.begin(), pts.end());
      }
    }
  }
  return all;
}

double csv_round(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", value);
  return std::strtod(buf, nullptr);
}

namespace {

std::string fixed9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  std::string s = buf;
  if (s == "-0.000000000") s = "0.000000000";
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError("bad number in curve CSV: '" + s + "'");
  return v;
}

}  // namespace

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points,
                     std::size_t num_branches) {
  out << "config_id,boosted,mode,k,margin,degradation_pp,reduction";
  for (std::size_t l = 1; l <= num_branches; ++l) out << ",exit_ratio_b" << l;
  out << ",exit_ratio_final\n";
  for (const auto& p : points) {
    if (p.exit_ratios.size() != num_branches + 1) {
      throw ValidationError("curve point exit ratios do not match branch count");
    }
    out << p.config_id << ',' << (p.boosted ? 1 : 0) << ',' << to_string(p.mode)
        << ',' << p.kernels << ',' << fixed9(p.margin) << ','
        << fixed9(p.degradation_pp) << ',' << fixed9(p.reduction);
    for (double r : p.exit_ratios) out << ',' << fixed9(r);
    out << '\n';
  }
}

void write_curve_csv(const std::filesystem::path& path,
                     std::span<const CurvePoint> points, std::size_t num_branches) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_curve_csv(out, points, num_branches);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<CurvePoint> read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("curve CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 8 || header[0] != "config_id" ||
      header.back() != "exit_ratio_final") {
    throw FormatError("unexpected curve CSV header");
  }
  std::vector<CurvePoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError("ragged curve CSV row");
    CurvePoint p;
    p.config_id = cells[0];
    p.boosted = cells[1] == "1";
    p.mode = parse_label_mode(cells[2]);
    p.kernels = cells[3];
    p.margin = parse_double(cells[4]);
    p.degradation_pp = parse_double(cells[5]);
    p.reduction = parse_double(cells[6]);
    for (std::size_t i = 7; i < cells.size(); ++i) {
      p.exit_ratios.push_back(parse_double(cells[i]));
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string curve_json(std::span<const CurvePoint> points) {
  json a = json::array();
  for (const auto& p : points) {
    a.push_back({{"config_id", p.config_id},
                 {"boosted", p.boosted},
                 {"mode", to_string(p.mode)},
                 {"k", p.kernels},
                 {"margin", p.margin},
                 {"degradation_pp", p.degradation_pp},
                 {"reduction", p.reduction},
                 {"exit_ratios", p.exit_ratios}});
  }
  return json({{"points", a}}).dump(2) + "\n";
}

std::string report_json(const EvalReport& r, const std::string& config_echo) {
  json j = {{"samples", r.samples},
            {"selective_accuracy", r.selective_accuracy},
            {"backbone_accuracy", r.backbone_accuracy},
            {"degradation_pp", r.degradation_pp},
            {"mean_flops", r.mean_flops},
            {"backbone_flops", r.backbone_flops},
            {"reduction", r.reduction},
            {"exit_ratios", r.exit_ratios},
            {"class_exit_ratios", r.class_exit_ratios},
            {"config", json::parse(config_echo)}};
  return j.dump(2) + "\n";
}

}  // namespace eebt
