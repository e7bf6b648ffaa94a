// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eebt/calibration.hpp"
#include "eebt/heads.hpp"
#include "eebt/inference.hpp"
#include "eebt/pipeline.hpp"
#include "eebt/report.hpp"
#include "eebt/synth.hpp"
#include "oracles/brute_sweep.hpp"
#include "oracles/reference_head.hpp"
#include "oracles/reference_inference.hpp"

using namespace eebt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- gradients

Outcome gradient_check() {
  // Difference-quotient roundoff is about 1e-16 * |loss| / eps ~ 1e-11; the
  // floor keeps relative error meaningful for partials near that noise.
  constexpr double kEps = 1e-5, kTol = 1e-4, kFloor = 1e-6;
  Rng rng(20240601);
  int configs = 0;
  double worst = 0.0, worst_abs = 0.0;
  std::size_t checked = 0, floored = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t K = 1 + rng.below(8), d = 1 + rng.below(8), H = 1 + rng.below(4),
                      W = 1 + rng.below(4), N = trial % 2 == 0 ? 2 : 10;
    const std::size_t P = H * W;
    std::vector<double> kern(K * d), lin(N * K), x(d * P);
    for (auto& v : kern) v = rng.normal() / std::sqrt(static_cast<double>(d));
    for (auto& v : lin) v = rng.normal() / std::sqrt(static_cast<double>(K));
    for (auto& v : x) v = rng.normal() / std::sqrt(static_cast<double>(P));
    const std::size_t unit = rng.below(N);
    const bool correct = rng.below(2) == 1;

    const HeadDims dims{K, d, P, N};
    std::vector<double> resp(K * P), mass(K), logits(N), dlog(N), dk(K * d), dl(N * K);
    head_math::forward<double>(dims, kern, lin, x, resp, mass, logits);

    for (int objective = 0; objective < 2; ++objective) {
      if (objective == 0) {
        head_math::cross_entropy<double>(logits, unit, dlog);
      } else {
        head_math::predicted_bce<double>(logits, unit, correct, dlog);
      }
      head_math::backward<double>(dims, lin, x, resp, mass, dlog, dk, dl);

      const oracle::HeadShape s{K, d, H, W, N};
      std::vector<double> params = kern;
      params.insert(params.end(), lin.begin(), lin.end());
      const auto numeric = oracle::central_differences(
          params,
          [&](const std::vector<double>& p) {
            const std::vector<double> pk(p.begin(), p.begin() + K * d);
            const std::vector<double> pl(p.begin() + K * d, p.end());
            const auto z = oracle::head_logits(s, pk, pl, x);
            return objective == 0 ? oracle::cross_entropy(z, unit)
                                  : oracle::predicted_bce(z, unit, correct);
          },
          kEps);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double analytic = i < K * d ? dk[i] : dl[i - K * d];
        worst = std::max(worst, oracle::relative_error(analytic, numeric[i], kFloor));
        worst_abs = std::max(worst_abs, std::abs(analytic - numeric[i]));
        floored += std::max(std::abs(analytic), std::abs(numeric[i])) < kFloor;
        ++checked;
      }
    }
    ++configs;
  }
  return {worst <= kTol, std::to_string(configs) + " configs, " + std::to_string(checked) +
                             " partials (CE and predicted-class BCE), max relative error " +
                             fmt(worst, 3) + " (tolerance " + fmt(kTol) + ", floor " + fmt(kFloor) + " reached by " +
                             std::to_string(floored) + " partials), max absolute error " +
                             fmt(worst_abs, 3)};
}

// ---------------------------------------------------------- parameter count

Outcome parameter_count() {
  Rng rng(3);
  std::size_t tested = 0;
  bool ok = true;
  std::vector<std::array<std::size_t, 3>> cases = {{32, 64, 10}, {48, 16, 10}, {80, 256, 10},
                                                   {1, 1, 2},    {64, 32, 100}};
  for (int i = 0; i < 60; ++i) {
    cases.push_back({1 + rng.below(100), 1 + rng.below(300), 2 + rng.below(20)});
  }
  for (const auto& [k, d, n] : cases) {
    const auto head = init_head(k, d, n, rng);
    ok &= head.parameter_count() == k * (d + n);
    ok &= head_param_count(k, d, n) == k * (d + n);
    ok &= head.kernels.size() + head.linear.size() == k * (d + n);
    ++tested;
  }
  const auto ref = init_head(32, 64, 10, rng).parameter_count();
  ok &= ref == 2368;
  return {ok, std::to_string(tested) + " configurations; K=32,d=64,N=10 -> " +
                  std::to_string(ref)};
}

// --------------------------------------------------------------- calibration

std::vector<CalibrationRecord> random_records(Rng& rng, std::size_t classes,
                                              std::size_t n) {
  std::vector<CalibrationRecord> r(n);
  const double skill = rng.uniform();
  const std::size_t grid = 2 + rng.below(60);
  for (auto& x : r) {
    x.predicted = static_cast<std::uint16_t>(rng.below(classes));
    x.confidence = static_cast<float>(1 + rng.below(grid)) / static_cast<float>(grid + 1);
    x.correct = rng.uniform() < skill * x.confidence + (1 - skill) * 0.6;
  }
  return r;
}

PrecisionTable random_precision(Rng& rng, std::size_t classes) {
  PrecisionTable t;
  for (std::size_t c = 0; c < classes; ++c) {
    t.support.push_back(1 + rng.below(200));
    t.true_positives.push_back(rng.below(t.support.back() + 1));
    t.precision.push_back(rng.below(10) == 0
                              ? std::nullopt
                              : std::optional(static_cast<double>(t.true_positives.back()) /
                                              static_cast<double>(t.support.back())));
  }
  return t;
}

std::vector<oracle::Record> class_records(std::span<const CalibrationRecord> r,
                                          std::uint16_t cls) {
  std::vector<oracle::Record> out;
  for (const auto& x : r) {
    if (x.predicted == cls) out.push_back({x.confidence, x.correct});
  }
  return out;
}

Outcome cpm_oracle() {
  Rng rng(777);
  std::size_t sets = 0, decisions = 0, mismatches = 0, disabled = 0;
  for (int trial = 0; trial < 1200; ++trial) {
    const std::size_t classes = 1 + rng.below(6);
    const auto records = random_records(rng, classes, rng.below(120));
    const auto prec = random_precision(rng, classes);
    const double margin = -0.5 + 1.5 * rng.uniform();
    const auto c = calibrate_records(records, prec, std::min(margin, 1.0));
    for (std::uint16_t cls = 0; cls < classes; ++cls) {
      const auto want = oracle::brute_force_threshold(class_records(records, cls),
                                                      prec.precision[cls],
                                                      std::min(margin, 1.0));
      const auto& got = c.thresholds[cls];
      const bool same = want.disabled ? got.is_disabled()
                                      : !got.is_disabled() && got.value() == want.threshold;
      mismatches += !same;
      disabled += want.disabled;
      ++decisions;
    }
    ++sets;
  }
  return {mismatches == 0, std::to_string(sets) + " record sets, " + std::to_string(decisions) +
                               " class thresholds (" + std::to_string(disabled) +
                               " disabled), " + std::to_string(mismatches) + " mismatches"};
}

Outcome monotonicity() {
  Rng rng(4242);
  std::size_t sets = 0, pairs = 0, violations = 0;
  const std::vector<double> margins = {-0.5, -0.2, -0.05, -0.02, 0.0, 0.02, 0.05, 0.1, 0.3, 1.0};
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t classes = 1 + rng.below(5);
    const auto records = random_records(rng, classes, 10 + rng.below(150));
    const auto prec = random_precision(rng, classes);
    std::vector<BranchCalibration> cal;
    for (double m : margins) cal.push_back(calibrate_records(records, prec, m));
    for (std::size_t a = 0; a + 1 < margins.size(); ++a) {
      for (std::size_t b = a + 1; b < margins.size(); ++b) {
        for (std::size_t cls = 0; cls < classes; ++cls) {
          const auto& ta = cal[a].thresholds[cls];
          const auto& tb = cal[b].thresholds[cls];
          std::size_t ea = 0, eb = 0;
          for (const auto& r : records) {
            if (r.predicted != cls) continue;
            ea += ta.fires(r.confidence);
            eb += tb.fires(r.confidence);
          }
          violations += !(tb >= ta) || eb > ea;
          ++pairs;
        }
      }
    }
    ++sets;
  }
  return {violations == 0, std::to_string(sets) + " record sets, " + std::to_string(pairs) +
                               " (m < m', class) pairs, " + std::to_string(violations) +
                               " violations"};
}

// Recomputes every exit decision with the oracle and checks the precision
// requirement against an independently counted backbone precision.
struct ConstraintTally {
  std::size_t cells = 0, enabled = 0, violations = 0;
  double min_slack = 1e300;
};

void check_constraint(const std::vector<std::pair<std::size_t, float>>& decisions,
                      const std::vector<bool>& correct, const std::vector<ExitThreshold>& t,
                      const std::vector<std::optional<double>>& backbone, double margin,
                      ConstraintTally& tally) {
  for (std::size_t cls = 0; cls < t.size(); ++cls) {
    ++tally.cells;
    if (t[cls].is_disabled()) continue;
    ++tally.enabled;
    std::size_t exits = 0, good = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      if (decisions[i].first == cls && decisions[i].second > t[cls].value()) {
        ++exits;
        good += correct[i];
      }
    }
    if (exits == 0) continue;
    const double precision = static_cast<double>(good) / static_cast<double>(exits);
    const double required = (1.0 + margin) * backbone[cls].value();
    tally.violations += !(precision >= required);
    tally.min_slack = std::min(tally.min_slack, precision - required);
  }
}

std::vector<std::optional<double>> counted_precision(const Dataset& ds) {
  std::vector<std::size_t> pred(ds.num_classes(), 0), hit(ds.num_classes(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++pred[ds.backbone_pred[i]];
    hit[ds.backbone_pred[i]] += ds.labels[i] == ds.backbone_pred[i];
  }
  std::vector<std::optional<double>> p(ds.num_classes());
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (pred[c]) p[c] = static_cast<double>(hit[c]) / static_cast<double>(pred[c]);
  }
  return p;
}

// Walks a bundle over the validation split with the oracle, branch by branch,
// and checks each branch on the samples that reach it (all samples when the
// bundle is non-boosted).
void check_bundle_constraint(const ModelBundle& bundle, const Dataset& val,
                             ConstraintTally& tally) {
  const auto backbone = counted_precision(val);
  std::vector<std::uint32_t> alive(val.size());
  std::iota(alive.begin(), alive.end(), 0u);
  const LabelMode mode = bundle.config.train.label_mode;
  for (const auto& b : bundle.branches) {
    const auto& meta = val.manifest.level(b.heads.level);
    std::vector<std::pair<std::size_t, float>> decisions;
    std::vector<bool> correct;
    std::vector<std::uint32_t> next;
    for (auto i : alive) {
      const float* x = val.features[b.heads.level - 1].data() + i * meta.sample_size();
      const auto d = oracle::reference_decision(b.heads, x, meta.depth, meta.positions());
      decisions.push_back(d);
      const auto truth = mode == LabelMode::Absolute ? val.labels[i] : val.backbone_pred[i];
      correct.push_back(d.first == truth);
      if (!(b.thresholds[d.first].fires(d.second))) next.push_back(i);
    }
    check_constraint(decisions, correct, b.thresholds, backbone, bundle.config.margin, tally);
    if (bundle.config.boosted) alive = std::move(next);
  }
}

std::string tally_text(const ConstraintTally& t) {
  return std::to_string(t.cells) + " (branch, class) cells, " + std::to_string(t.enabled) +
         " enabled, " + std::to_string(t.violations) + " violations, min slack " +
         (t.enabled ? fmt(t.min_slack, 3) : std::string("n/a"));
}

Outcome calibration_constraint() {
  ConstraintTally tally;
  const auto micro = synth_generate(SynthSpec::micro(), 11);
  for (bool boosted : {true, false}) {
    for (auto mode : {LabelMode::Absolute, LabelMode::Distillation}) {
      for (double m : {-0.1, -0.02, 0.0, 0.02, 0.05}) {
        PipelineConfig cfg;
        cfg.kernels = {8};
        cfg.boosted = boosted;
        cfg.margin = m;
        cfg.train.epochs = 8;
        cfg.train.batch = 32;
        cfg.train.allow_tiny = true;
        cfg.train.label_mode = mode;
        check_bundle_constraint(run_pipeline(cfg, micro.train, micro.validation),
                                micro.validation, tally);
      }
    }
  }
  // Untrained heads on unrelated random datasets.
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto spec = SynthSpec::micro();
    spec.num_classes = 2 + rng.below(9);
    spec.validation_samples = 50 + rng.below(300);
    spec.train_samples = spec.test_samples = 10;
    const auto t = synth_generate(spec, 1000 + trial);
    const auto& v = t.validation;
    ModelBundle bundle;
    bundle.num_classes = v.num_classes();
    bundle.config.margin = -0.3 + 0.5 * rng.uniform();
    bundle.config.boosted = trial % 2 == 0;
    const auto precision = backbone_class_precision(DatasetView(v));
    DatasetView view(v);
    for (std::size_t l = 1; l <= v.num_levels(); ++l) {
      const auto& m = v.manifest.level(l);
      BranchRecord r;
      r.heads = {l, init_head(4, m.depth, v.num_classes(), rng),
                 init_head(4, m.depth, v.num_classes(), rng)};
      r.thresholds = calibrate_branch(r.heads, view, precision, bundle.config.margin,
                                      LabelMode::Absolute, Exec::Parallel)
                         .thresholds;
      if (bundle.config.boosted) {
        view = apply_mask(view, filter_survivors(r.heads, r.thresholds, view, Exec::Serial));
      }
      bundle.branches.push_back(std::move(r));
    }
    check_bundle_constraint(bundle, v, tally);
  }
  return {tally.violations == 0 && tally.enabled > 0, tally_text(tally)};
}

// ---------------------------------------------------------------- inference

void randomize_thresholds(ModelBundle& b, const Dataset& ds, Rng& rng) {
  std::vector<std::uint32_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), 0u);
  for (auto& br : b.branches) {
    const auto d = evaluate_branch(br.heads, level_block(ds, br.heads.level), ids,
                                   Exec::Serial);
    for (auto& t : br.thresholds) {
      t = rng.below(6) == 0 ? ExitThreshold::disabled()
                            : ExitThreshold::at(d[rng.below(d.size())].confidence);
    }
  }
}

ModelBundle random_bundle(const Dataset& ds, std::size_t k, Rng& rng) {
  ModelBundle b;
  b.num_classes = ds.num_classes();
  for (std::size_t l = 1; l <= ds.num_levels(); ++l) {
    const auto& m = ds.manifest.level(l);
    BranchRecord r;
    r.heads = {l, init_head(k, m.depth, ds.num_classes(), rng),
               init_head(k, m.depth, ds.num_classes(), rng)};
    r.depth = m.depth;
    r.height = m.height;
    r.width = m.width;
    r.thresholds.assign(ds.num_classes(), ExitThreshold::disabled());
    b.branches.push_back(std::move(r));
  }
  return b;
}

Outcome inference_oracle() {
  const auto t = synth_generate(SynthSpec::micro(), 11);
  Rng rng(9);
  std::size_t samples = 0, mismatches = 0;
  std::vector<std::size_t> exits(4, 0);
  std::vector<ModelBundle> bundles;
  for (std::size_t k : {4u, 16u, 32u}) {
    auto b = random_bundle(t.test, k, rng);
    randomize_thresholds(b, t.test, rng);
    bundles.push_back(std::move(b));
  }
  PipelineConfig cfg;
  cfg.kernels = {8};
  cfg.train.epochs = 10;
  cfg.train.batch = 32;
  cfg.margin = -0.05;
  bundles.push_back(run_pipeline(cfg, t.train, t.validation));
  for (const auto& b : bundles) {
    const auto fm = flops_model(b, t.test.manifest);
    const auto all = infer_all(b, t.test, Exec::Parallel);
    for (std::size_t i = 0; i < t.test.size(); ++i) {
      const auto want = oracle::reference_infer(b, t.test, i);
      const auto got = selective_infer(b, fm, t.test, i);
      const bool same = got.prediction == want.prediction &&
                        got.exit_level == want.exit_level && got.flops == want.flops &&
                        all[i].prediction == want.prediction &&
                        all[i].exit_level == want.exit_level && all[i].flops == want.flops;
      mismatches += !same;
      ++exits[want.exit_level];
      ++samples;
    }
  }
  return {mismatches == 0 && samples >= 200,
          std::to_string(samples) + " sample decisions over " + std::to_string(bundles.size()) +
              " bundles (exits b1/b2/b3/final " + std::to_string(exits[1]) + "/" +
              std::to_string(exits[2]) + "/" + std::to_string(exits[3]) + "/" +
              std::to_string(exits[0]) + "), " + std::to_string(mismatches) + " mismatches"};
}

Outcome backbone_reproduction() {
  const auto t = synth_generate(SynthSpec::micro(), 11);
  Rng rng(5);
  const auto b = random_bundle(t.test, 32, rng);
  const auto results = infer_all(b, t.test, Exec::Parallel);
  std::size_t same = 0;
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    std::size_t best = 0;
    const float* z = t.test.backbone_logits.data() + i * t.test.num_classes();
    for (std::size_t c = 1; c < t.test.num_classes(); ++c) {
      if (z[c] > z[best]) best = c;
    }
    same += results[i].prediction == best && results[i].is_final();
  }
  const auto rep = evaluate(b, t.test, Exec::Serial);
  const bool ok = same == t.test.size() && rep.degradation_pp == 0.0 && rep.reduction < 0.0;
  return {ok, std::to_string(same) + "/" + std::to_string(t.test.size()) +
                  " backbone argmax reproduced, degradation " + fmt(rep.degradation_pp) +
                  " pp, reduction " + fmt(rep.reduction, 6)};
}

// ----------------------------------------------------------- end to end

Outcome end_to_end(const std::string& csv_path) {
  const auto t = synth_generate(SynthSpec::tiny(), 11);
  const std::vector<double> margins = {-0.02, 0.0, 0.02, 0.05};
  PipelineConfig base;  // K = 32, 200 epochs, batch 128, lr 0.01, momentum 0.9
  base.margin = 0.0;

  std::vector<CurvePoint> boosted;
  ModelBundle at_zero;
  for (double m : margins) {
    PipelineConfig cfg = base;
    cfg.boosted = true;
    cfg.margin = m;
    auto bundle = run_pipeline(cfg, t.train, t.validation);
    boosted.push_back(make_point(cfg, evaluate(bundle, t.test, Exec::Parallel)));
    if (m == 0.0) at_zero = std::move(bundle);
  }
  std::stable_sort(boosted.begin(), boosted.end(),
                   [](const auto& a, const auto& b) { return a.reduction < b.reduction; });
  PipelineConfig nb = base;
  nb.boosted = false;
  const auto nonboosted = sweep_curve(nb, margins, t.train, t.validation, t.test);

  std::vector<CurvePoint> curve = boosted;
  curve.insert(curve.end(), nonboosted.begin(), nonboosted.end());
  write_curve_csv(fs::path(csv_path), curve, t.train.num_levels());

  const auto rep = evaluate(at_zero, t.test, Exec::Parallel);
  const double early = 1.0 - rep.exit_ratios.back();
  ConstraintTally tally;
  check_bundle_constraint(at_zero, t.validation, tally);

  std::cout << "  boosted m=0: test accuracy " << fmt(rep.selective_accuracy) << " vs backbone "
            << fmt(rep.backbone_accuracy) << ", degradation " << fmt(rep.degradation_pp)
            << " pp, FLOPs reduction " << fmt(rep.reduction) << ", exit ratios";
  for (double e : rep.exit_ratios) std::cout << ' ' << fmt(e, 3);
  std::cout << "\n  branch views (train/validation):";
  for (const auto& b : at_zero.branches) {
    std::cout << ' ' << b.train_view_size << '/' << b.validation_view_size;
  }
  std::cout << "\n  curve written to " << csv_path << "\n";
  for (double m : margins) {
    const auto find = [&](const std::vector<CurvePoint>& pts) {
      return *std::find_if(pts.begin(), pts.end(), [&](const auto& p) { return p.margin == m; });
    };
    const auto b = find(boosted), n = find(nonboosted);
    const bool dominates = b.reduction >= n.reduction && b.degradation_pp <= n.degradation_pp;
    std::cout << "  m=" << fmt(m) << ": boosted (deg " << fmt(b.degradation_pp) << " pp, red "
              << fmt(b.reduction) << ") vs non-boosted (deg " << fmt(n.degradation_pp)
              << " pp, red " << fmt(n.reduction) << ")"
              << (dominates ? ", boosted dominates" : ", no dominance") << "\n";
  }
  const bool ok = early >= 0.25 && tally.violations == 0;
  return {ok, "early exits " + fmt(early) + " (need >= 0.25); constraint " + tally_text(tally) +
                  "; degradation " + fmt(rep.degradation_pp) + " pp; reduction " +
                  fmt(rep.reduction)};
}

// -------------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome cli_determinism() {
  const auto base = fs::temp_directory_path() / "eebt_acceptance_cli";
  fs::remove_all(base);
  const std::string quick = " --epochs 4 --batch 32 --k 6";
  // Later commands read the first run's outputs of earlier commands.
  const auto shared = base / "shared";
  const std::string in = "'" + shared.string() + "/";
  const std::vector<std::string> commands = {
      "synth-data --spec micro --seed 11 --out data",
      "verify-dataset " + in + "data'",
      "flops-report --data " + in + "data' --k 32,48 --out flops.json",
      "train --data " + in + "data' --out bundle" + quick,
      "train --data " + in + "data' --out nbundle --no-boosted --mode distillation" + quick,
      "calibrate --bundle " + in + "bundle' --data " + in + "data' --margin 0.05 --out recal",
      "infer --bundle " + in + "bundle' --data " + in + "data' --out preds.csv --trace trace.csv",
      "evaluate --bundle " + in + "bundle' --data " + in + "data' --out report.json",
      "sweep --data " + in + "data' --margins 0,0.02 --out curve.csv" + quick,
  };
  fs::create_directories(shared);
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::vector<std::pair<std::string, std::string>>> outputs;
    for (int run = 0; run < 2; ++run) {
      const auto dir = base / ("run" + std::to_string(run)) / std::to_string(c);
      fs::create_directories(dir);
      const std::string cmd = "cd '" + dir.string() + "' && '" EEBT_CLI_PATH "' " +
                              commands[c] + " > stdout.txt 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        return {false, "command failed: " + commands[c] + "\n" + slurp(dir / "stdout.txt")};
      }
      outputs.push_back(tree(dir));
      if (run == 0) {
        for (const auto& e : fs::directory_iterator(dir)) {
          if (e.is_directory()) {
            fs::copy(e.path(), shared / e.path().filename(),
                     fs::copy_options::recursive | fs::copy_options::overwrite_existing);
          }
        }
      }
    }
    compared += outputs[0].size();
    if (outputs[0] != outputs[1]) differing.push_back(commands[c]);
  }
  fs::remove_all(base);
  std::string detail = std::to_string(commands.size()) + " commands run twice, " +
                       std::to_string(compared) + " output files compared byte for byte";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string csv = argc > 1 ? argv[1] : "acceptance_curve.csv";
  std::cout << "parallel threads: " << parallel_threads() << "\n";
  criterion("gradient correctness", gradient_check);
  criterion("parameter-count fidelity", parameter_count);
  criterion("calibration constraint (exact)", calibration_constraint);
  criterion("calibration oracle", cpm_oracle);
  criterion("monotonicity in margin", monotonicity);
  criterion("inference oracle", inference_oracle);
  criterion("backbone reproduction", backbone_reproduction);
  criterion("end-to-end synthetic benchmark", [&] { return end_to_end(csv); });
  criterion("CLI determinism", cli_determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}
