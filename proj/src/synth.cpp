#include "eebt/synth.hpp"

#include <cmath>
#include <sstream>

#include "eebt/error.hpp"
#include "eebt/rng.hpp"

namespace eebt {

void SynthSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic spec needs >= 2 classes");
  if (levels.empty()) throw ValidationError("synthetic spec needs >= 1 level");
  for (const auto& l : levels) {
    if (l.depth == 0 || l.height == 0 || l.width == 0) {
      throw ValidationError("synthetic level shapes must be nonzero");
    }
  }
  if (tier_fractions.size() != levels.size() + 1) {
    throw ValidationError("tier_fractions needs L+1 entries");
  }
  double total = 0.0;
  for (double f : tier_fractions) {
    if (f < 0.0) throw ValidationError("tier fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("tier fractions must sum to 1 (got " +
                          std::to_string(total) + ")");
  }
  if (backbone_error.size() != levels.size() + 1) {
    throw ValidationError("backbone_error needs L+1 entries");
  }
  for (double e : backbone_error) {
    if (e < 0.0 || e > 1.0) throw ValidationError("backbone error rates must be in [0,1]");
  }
  if (noise < 0.0 || signal < 0.0 || leak < 0.0) {
    throw ValidationError("signal, noise, and leak must be nonnegative");
  }
}

SynthSpec SynthSpec::tiny() {
  SynthSpec s;
  s.name = "tiny";
  s.num_classes = 10;
  s.levels = {{16, 8, 8}, {32, 4, 4}, {64, 2, 2}};
  s.tier_fractions = {0.4, 0.2, 0.1, 0.3};
  s.train_samples = 5000;
  s.validation_samples = 2000;
  s.test_samples = 2000;
  s.backbone_error = {0.03, 0.06, 0.10, 0.20};
  return s;
}

SynthSpec SynthSpec::micro() {
  SynthSpec s = tiny();
  s.name = "micro";
  s.train_samples = 600;
  s.validation_samples = 400;
  s.test_samples = 400;
  return s;
}

SynthSpec SynthSpec::named(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "micro") return micro();
  throw ValidationError("unknown synthetic spec '" + name + "' (known: tiny, micro)");
}

FlopsProfile residual_flops_profile(const std::vector<SynthLevel>& levels,
                                    std::size_t num_classes) {
  // Stem: 3x3 conv from RGB. Each group: two basic blocks of two 3x3 convs;
  // the first conv maps the previous depth, 2 FLOPs per MAC.
  FlopsProfile p;
  std::uint64_t total = 0;
  std::uint64_t prev_depth = 3;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    const std::uint64_t hw = l.height * l.width;
    if (i == 0) {
      total += 2ULL * 9 * 3 * l.depth * hw;
      prev_depth = l.depth;
    }
    total += 2ULL * 9 * prev_depth * l.depth * hw;
    total += 3ULL * 2 * 9 * l.depth * l.depth * hw;
    p.cumulative.push_back(total);
    prev_depth = l.depth;
  }
  const auto& last = levels.back();
  const std::uint64_t depth = 2 * last.depth;
  const std::uint64_t hw = std::max<std::uint64_t>(1, last.height / 2) *
                           std::max<std::uint64_t>(1, last.width / 2);
  p.final_classifier = 2ULL * 9 * last.depth * depth * hw +
                       3ULL * 2 * 9 * depth * depth * hw +
                       2ULL * depth * num_classes;
  return p;
}

namespace {

enum Split : std::uint64_t { kTrain = 1, kValidation = 2, kTest = 3 };

using Prototypes = std::vector<std::vector<std::vector<double>>>;  // [l][c][d]

Prototypes make_prototypes(const SynthSpec& spec, std::uint64_t seed) {
  Prototypes protos(spec.levels.size());
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    Rng rng(derive_seed(seed, 100 + l));
    const std::size_t d = spec.levels[l].depth;
    protos[l].resize(spec.num_classes);
    for (auto& u : protos[l]) {
      u.resize(d);
      double norm = 0.0;
      for (auto& v : u) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : u) v /= norm;
    }
  }
  return protos;
}

Dataset make_split(const SynthSpec& spec, const Prototypes& protos,
                   const FlopsProfile& flops, std::uint64_t seed, Split split,
                   std::size_t count) {
  Rng rng(derive_seed(seed, split));
  const std::size_t n_classes = spec.num_classes;
  const std::size_t n_levels = spec.levels.size();

  Dataset ds;
  auto& m = ds.manifest;
  m.num_samples = count;
  m.num_classes = n_classes;
  for (std::size_t l = 0; l < n_levels; ++l) {
    LevelMeta meta;
    meta.level = l + 1;
    meta.depth = spec.levels[l].depth;
    meta.height = spec.levels[l].height;
    meta.width = spec.levels[l].width;
    meta.cumulative_flops = flops.cumulative[l];
    meta.blob = "level" + std::to_string(l + 1) + ".bin";
    m.levels.push_back(meta);
    ds.features.emplace_back(meta.sample_size() * count);
  }
  m.final_classifier_flops = flops.final_classifier;
  std::ostringstream prov;
  const char* split_name =
      split == kTrain ? "train" : split == kValidation ? "validation" : "test";
  prov << "{\"generator\":\"synthetic\",\"spec\":\"" << spec.name
       << "\",\"seed\":" << seed << ",\"split\":\"" << split_name << "\"}";
  m.provenance = prov.str();

  ds.labels.resize(count);
  ds.backbone_pred.resize(count);
  ds.tiers.resize(count);
  if (spec.store_logits) ds.backbone_logits.resize(count * n_classes);

  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<std::uint16_t>(rng.below(n_classes));
    const double u = rng.uniform();
    std::size_t tier = 1;
    double acc = spec.tier_fractions[0];
    while (tier <= n_levels && u >= acc) {
      acc += spec.tier_fractions[tier];
      ++tier;
    }
    // Guard against zero-fraction trailing tiers absorbing rounding.
    while (spec.tier_fractions[tier - 1] == 0.0 && tier > 1) --tier;
    ds.labels[i] = label;
    ds.tiers[i] = static_cast<std::uint16_t>(tier);

    std::uint16_t pred = label;
    if (rng.uniform() < spec.backbone_error[tier - 1]) {
      auto other = static_cast<std::uint16_t>(rng.below(n_classes - 1));
      pred = other >= label ? static_cast<std::uint16_t>(other + 1) : other;
    }
    ds.backbone_pred[i] = pred;
    if (spec.store_logits) {
      float* logits = ds.backbone_logits.data() + i * n_classes;
      float best = -1e30f;
      for (std::size_t c = 0; c < n_classes; ++c) {
        logits[c] = static_cast<float>(0.5 * rng.normal() + (c == pred ? 4.0 : 0.0));
        if (c != pred) best = std::max(best, logits[c]);
      }
      if (logits[pred] <= best) logits[pred] = best + 1.0f;
    }

    for (std::size_t l = 0; l < n_levels; ++l) {
      const auto& meta = m.levels[l];
      const std::size_t hw = meta.positions();
      const double norm = 1.0 / std::sqrt(static_cast<double>(hw));
      const std::size_t level = l + 1;
      double amplitude = 0.0;
      if (level >= tier) {
        amplitude = spec.signal;
      } else if (level + 1 == tier && tier <= n_levels) {
        amplitude = spec.signal * spec.leak;
      }
      const auto& proto = protos[l][label];
      float* out = ds.features[l].data() + i * meta.sample_size();
      for (std::size_t c = 0; c < meta.depth; ++c) {
        for (std::size_t p = 0; p < hw; ++p) {
          out[c * hw + p] = static_cast<float>(
              (spec.noise * rng.normal() + amplitude * proto[c]) * norm);
        }
      }
    }
  }
  ds.validate();
  return ds;
}

}  // namespace

DatasetTriplet synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto protos = make_prototypes(spec, seed);
  const auto flops = residual_flops_profile(spec.levels, spec.num_classes);
  return {make_split(spec, protos, flops, seed, kTrain, spec.train_samples),
          make_split(spec, protos, flops, seed, kValidation, spec.validation_samples),
          make_split(spec, protos, flops, seed, kTest, spec.test_samples)};
}

}  // namespace eebt
