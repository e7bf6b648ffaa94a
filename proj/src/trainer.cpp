#include "eebt/trainer.hpp"

#include <cmath>

namespace eebt {

std::string to_string(LabelMode mode) {
  return mode == LabelMode::Absolute ? "absolute" : "distillation";
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "absolute") return LabelMode::Absolute;
  if (text == "distillation") return LabelMode::Distillation;
  throw ValidationError("unknown label mode '" + text +
                        "' (expected absolute or distillation)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "momentum";
}

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "momentum") return OptimizerKind::Momentum;
  throw ValidationError("unknown optimizer '" + text + "' (expected sgd or momentum)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch < 1) throw ValidationError("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
  if (optimizer == OptimizerKind::Momentum && !(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("momentum must be in [0,1)");
  }
}

std::uint16_t resolve_label(const Dataset& dataset, std::size_t index,
                            LabelMode mode) {
  if (mode == LabelMode::Absolute) return dataset.labels.at(index);
  if (dataset.backbone_pred.size() != dataset.size()) {
    throw ValidationError("distillation mode requires backbone predictions");
  }
  return dataset.backbone_pred[index];
}

std::vector<std::uint32_t> seeded_permutation(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

namespace {

std::size_t effective_batch(const DatasetView& view, const TrainConfig& cfg) {
  if (view.empty()) throw NoSurvivorsError("no surviving samples to train on");
  if (view.size() < 2 * cfg.batch) {
    if (!cfg.allow_tiny) {
      throw TinyViewError("training view has " + std::to_string(view.size()) +
                          " samples, below the minimum of 2 x batch = " +
                          std::to_string(2 * cfg.batch) +
                          " (pass --allow-tiny for full-batch training)");
    }
    return view.size();
  }
  return cfg.batch;
}

// Minibatch loop shared by both heads. `units` and `correct` are indexed by
// view position.
TrainReport fit(HeadParams& head, const DatasetView& view, std::size_t level,
                Objective objective, const std::vector<std::uint16_t>& units,
                const std::vector<std::uint8_t>& correct, const TrainConfig& cfg,
                Rng& rng) {
  const LevelBlock block = level_block(view.parent(), level);
  const std::size_t batch = effective_batch(view, cfg);
  const std::size_t n = view.size();
  const std::size_t nk = head.kernels.size();
  const std::size_t params = head.parameter_count();
  std::vector<float> velocity(params, 0.0f);

  TrainReport report;
  report.samples = n;
  report.batch = batch;
  std::vector<std::uint32_t> ids;
  std::vector<std::uint16_t> batch_units;
  std::vector<std::uint8_t> batch_correct;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(n, rng);
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      ids.clear();
      batch_units.clear();
      batch_correct.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::uint32_t pos = order[i];
        ids.push_back(view.index(pos));
        batch_units.push_back(units[pos]);
        if (objective == Objective::PredictedBce) batch_correct.push_back(correct[pos]);
      }
      auto r = batch_gradient(head, block, ids, objective, batch_units,
                              batch_correct, cfg.exec);
      loss += r.loss_sum;
      hits += r.hits;
      report.saturated += r.saturated;

      const float inv = 1.0f / static_cast<float>(ids.size());
      const float lr = static_cast<float>(cfg.lr);
      const float mu = static_cast<float>(cfg.momentum);
      for (std::size_t j = 0; j < params; ++j) {
        float g = r.grad[j] * inv;
        if (cfg.optimizer == OptimizerKind::Momentum) {
          velocity[j] = mu * velocity[j] + g;
          g = velocity[j];
        }
        float& w = j < nk ? head.kernels[j] : head.linear[j - nk];
        w -= lr * g;
      }
    }
    if (!head.kernels.all_finite() || !head.linear.all_finite()) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                         " (non-finite parameters); lower the learning rate");
    }
    report.epoch_loss.push_back(loss / static_cast<double>(n));
    report.final_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  }
  return report;
}

}  // namespace

std::pair<HeadParams, TrainReport> train_classification_head(
    const DatasetView& view, std::size_t level, std::size_t num_kernels,
    const TrainConfig& cfg) {
  cfg.validate();
  const Dataset& ds = view.parent();
  const auto& meta = ds.manifest.level(level);
  effective_batch(view, cfg);
  Rng rng(cfg.seed);
  HeadParams head = init_head(num_kernels, meta.depth, ds.num_classes(), rng);
  std::vector<std::uint16_t> targets(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    targets[i] = resolve_label(ds, view.index(i), cfg.label_mode);
  }
  auto report = fit(head, view, level, Objective::CrossEntropy, targets, {}, cfg, rng);
  return {std::move(head), std::move(report)};
}

std::pair<HeadParams, TrainReport> train_confidence_head(
    const DatasetView& view, std::size_t level, const HeadParams& classifier,
    std::size_t num_kernels, const TrainConfig& cfg) {
  cfg.validate();
  const Dataset& ds = view.parent();
  const auto& meta = ds.manifest.level(level);
  effective_batch(view, cfg);
  const auto predicted = predict_classes(classifier, level_block(ds, level),
                                         view.indices(), cfg.exec);
  std::vector<std::uint8_t> correct(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    correct[i] = predicted[i] == resolve_label(ds, view.index(i), cfg.label_mode);
  }
  Rng rng(cfg.seed);
  HeadParams head = init_head(num_kernels, meta.depth, ds.num_classes(), rng);
  auto report =
      fit(head, view, level, Objective::PredictedBce, predicted, correct, cfg, rng);
  return {std::move(head), std::move(report)};
}

}  // namespace eebt
