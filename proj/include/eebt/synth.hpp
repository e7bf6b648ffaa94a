#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eebt/dataset.hpp"

namespace eebt {

struct SynthLevel {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

// Recipe for a synthetic frozen-backbone dataset.
//
// Every sample has a class and a difficulty tier t in 1..L+1. At levels
// l >= t each spatial position carries `signal * u[l][class]` plus Gaussian
// noise, where u[l][c] is a random unit prototype; at level t-1 the class
// signal is attenuated by `leak` (tiers <= L only); lower levels are pure
// noise. Features are
// scaled by 1/sqrt(H*W) so a unit-norm kernel sees unit cluster mass from
// noise alone. Tier L+1 samples carry no class signal at any stored level.
struct SynthSpec {
  std::string name = "custom";
  std::size_t num_classes = 10;
  std::vector<SynthLevel> levels;
  std::vector<double> tier_fractions;  // L + 1 entries summing to 1
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::size_t test_samples = 0;
  double signal = 2.0;
  double noise = 1.0;
  double leak = 0.35;
  // Backbone error probability per tier (L + 1 entries).
  std::vector<double> backbone_error;
  bool store_logits = true;

  void validate() const;

  // N=10, L=3, depths 16/32/64 at 8x8, 4x4, 2x2; tiers 0.4/0.2/0.1/0.3;
  // 5000/2000/2000 samples.
  static SynthSpec tiny();
  // Same geometry as tiny with 600/400/400 samples, for fast tests.
  static SynthSpec micro();
  static SynthSpec named(const std::string& name);
};

struct DatasetTriplet {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Cumulative FLOPs through each block of a small residual network with the
// given level geometry, plus the cost of the remaining block and classifier.
struct FlopsProfile {
  std::vector<std::uint64_t> cumulative;
  std::uint64_t final_classifier = 0;
};
FlopsProfile residual_flops_profile(const std::vector<SynthLevel>& levels,
                                    std::size_t num_classes);

// Pure function of (spec, seed).
DatasetTriplet synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace eebt
