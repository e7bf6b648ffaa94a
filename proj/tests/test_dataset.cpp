#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>

#include "doctest.h"
#include "eebt/dataset.hpp"
#include "eebt/error.hpp"
#include "eebt/synth.hpp"
#include "test_support.hpp"

using namespace eebt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("eebt_test_" + name);
  fs::remove_all(p);
  return p;
}

// Nearest class-mean probe on spatially averaged features: an oracle for
// whether class information is linearly decodable at a level.
double probe_accuracy(const Dataset& train, const Dataset& eval, std::size_t level) {
  const auto& meta = train.manifest.level(level);
  const std::size_t d = meta.depth, hw = meta.positions(), n = train.num_classes();
  auto pooled = [&](const Dataset& ds, std::size_t i) {
    std::vector<double> v(d, 0.0);
    auto s = ds.sample(level, i);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t p = 0; p < hw; ++p) v[c] += s[c * hw + p];
    }
    return v;
  };
  std::vector<std::vector<double>> means(n, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto v = pooled(train, i);
    for (std::size_t c = 0; c < d; ++c) means[train.labels[i]][c] += v[c];
    ++counts[train.labels[i]];
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& m : means[k]) m /= std::max<std::size_t>(1, counts[k]);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    auto v = pooled(eval, i);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < n; ++k) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist += (v[c] - means[k][c]) * (v[c] - means[k][c]);
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    hits += best == eval.labels[i];
  }
  return static_cast<double>(hits) / eval.size();
}

}  // namespace

TEST_CASE("write then read round-trips bit-exactly") {
  auto ds = testing_support::small_dataset(5, 4, {{3, 2, 2}, {2, 1, 1}}, 9);
  ds.tiers = {1, 2, 3, 1, 2};
  auto dir = scratch_dir("roundtrip");
  write_dataset(ds, dir);
  auto back = read_dataset(dir);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.backbone_pred == ds.backbone_pred);
  CHECK(back.backbone_logits == ds.backbone_logits);
  CHECK(back.tiers == ds.tiers);
  CHECK(back.manifest.levels[0].blob_bytes == 16 + 4 * 12 * 5);
  CHECK(fingerprint(back) == fingerprint(ds));

  // Re-writing the loaded dataset reproduces identical bytes.
  auto dir2 = scratch_dir("roundtrip2");
  write_dataset(back, dir2);
  for (const auto& f : {"manifest.json", "level1.bin", "labels.bin", "backbone_logits.bin"}) {
    std::ifstream a(dir / f, std::ios::binary), b(dir2 / f, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("blob header layout") {
  auto ds = testing_support::small_dataset(2, 3, {{1, 1, 1}}, 1);
  auto dir = scratch_dir("layout");
  write_dataset(ds, dir);
  std::ifstream in(dir / "level1.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() == 16 + 8);
  CHECK(bytes.substr(0, 8) == "EXFGFMAP");
  CHECK(bytes[8] == 1);
  CHECK(bytes.substr(9, 7) == std::string(7, '\0'));
  float first;
  std::memcpy(&first, bytes.data() + 16, 4);
  CHECK(first == ds.features[0][0]);
  std::ifstream lab(dir / "labels.bin", std::ios::binary);
  std::string lb((std::istreambuf_iterator<char>(lab)), {});
  CHECK(lb.substr(0, 8) == "EXFGLBL0");
  CHECK(lb.size() == 8 + 4);
}

TEST_CASE("dataset validation") {
  auto ds = testing_support::small_dataset(4, 10, {{2, 1, 1}, {2, 1, 1}}, 2);
  SUBCASE("label out of range") {
    ds.labels[1] = 12;
    CHECK_THROWS_AS(write_dataset(ds, scratch_dir("bad")), ValidationError);
  }
  SUBCASE("unequal sample counts across levels") {
    ds.features[1].resize(ds.features[1].size() - 2);
    CHECK_THROWS_AS(ds.validate(), ValidationError);
  }
  SUBCASE("FLOPs must increase") {
    ds.manifest.levels[1].cumulative_flops = ds.manifest.levels[0].cumulative_flops;
    CHECK_THROWS_AS(ds.validate(), ValidationError);
  }
  SUBCASE("logits must agree with predictions") {
    ds.backbone_pred[0] = static_cast<std::uint16_t>((ds.backbone_pred[0] + 1) % 10);
    CHECK_THROWS_AS(ds.validate(), ValidationError);
  }
}

TEST_CASE("stream_level honours masks and bounded batches") {
  auto ds = testing_support::small_dataset(10, 3, {{2, 2, 1}}, 4);
  auto dir = scratch_dir("stream");
  write_dataset(ds, dir);

  LevelStream masked(dir, 1, SampleMask({2, 5}, 10), 1);
  auto a = masked.next();
  auto b = masked.next();
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->index == 2);
  CHECK(b->index == 5);
  CHECK(a->features == ds.sample_tensor(1, 2));
  CHECK_FALSE(masked.next());

  auto empty = stream_level(dir, 1, SampleMask({}, 10));
  CHECK_FALSE(empty.next());
  CHECK_THROWS_AS(stream_level(dir, 2), ValidationError);
}

TEST_CASE("full stream of a 1000-sample dataset touches each sample once") {
  auto ds = testing_support::small_dataset(1000, 10, {{4, 2, 2}}, 5, false);
  auto dir = scratch_dir("stream1000");
  write_dataset(ds, dir);
  LevelStream s(dir, 1, std::nullopt, 64);
  std::vector<int> seen(1000, 0);
  std::size_t n = 0;
  while (auto item = s.next()) {
    ++seen[item->index];
    if (item->index == 777) CHECK(item->features == ds.sample_tensor(1, 777));
    ++n;
  }
  CHECK(n == 1000);
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("corrupt blobs are format errors naming the file") {
  auto ds = testing_support::small_dataset(6, 3, {{2, 1, 1}}, 6);
  auto dir = scratch_dir("corrupt");
  write_dataset(ds, dir);
  SUBCASE("truncated") {
    fs::resize_file(dir / "level1.bin", fs::file_size(dir / "level1.bin") - 3);
    try {
      verify_dataset(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("level1.bin") != std::string::npos);
    }
  }
  SUBCASE("bad magic") {
    std::fstream f(dir / "level1.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXXXXX", 8);
    f.close();
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("bad label magic") {
    std::fstream f(dir / "labels.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("EXFGLGT0", 8);
    f.close();
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("intact dataset verifies") {
    auto summary = verify_dataset(dir);
    CHECK(summary.num_samples == 6);
    CHECK(summary.backbone_accuracy == doctest::Approx(ds.backbone_accuracy()));
  }
}

TEST_CASE("masks and views") {
  auto ds = testing_support::small_dataset(6, 3, {{1, 1, 1}}, 7);
  DatasetView full(ds);
  auto same = apply_mask(full, SampleMask::all(6));
  CHECK(std::vector<std::uint32_t>(same.indices().begin(), same.indices().end()) ==
        std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5});
  auto none = apply_mask(full, SampleMask({}, 6));
  CHECK(none.empty());
  auto first = apply_mask(full, SampleMask({0, 2, 4}, 6));
  auto composed = apply_mask(first, SampleMask({1}, 3));
  REQUIRE(composed.size() == 1);
  CHECK(composed.index(0) == 2);
  CHECK_THROWS_AS(SampleMask({3}, 3), ValidationError);
  CHECK_THROWS_AS(SampleMask({2, 2}, 5), ValidationError);
  CHECK_THROWS_AS(SampleMask({3, 1}, 5), ValidationError);
  CHECK_THROWS_AS(apply_mask(first, SampleMask({3}, 4)), ValidationError);
}

TEST_CASE("synthetic generation is deterministic") {
  auto spec = SynthSpec::micro();
  spec.train_samples = 50;
  spec.validation_samples = 20;
  spec.test_samples = 20;
  auto a = synth_generate(spec, 11);
  auto b = synth_generate(spec, 11);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.labels == b.test.labels);
  CHECK(fingerprint(a.validation) == fingerprint(b.validation));
  auto c = synth_generate(spec, 12);
  CHECK_FALSE(a.train.features == c.train.features);

  spec.tier_fractions = {0.5, 0.5, 0.5, 0.0};
  CHECK_THROWS_AS(synth_generate(spec, 1), ValidationError);
}

TEST_CASE("synthetic FLOPs metadata mimics a residual profile") {
  auto t = synth_generate(SynthSpec::micro(), 3);
  const auto& m = t.train.manifest;
  CHECK(m.levels[0].cumulative_flops == 1234944);
  CHECK(m.levels[1].cumulative_flops == 2267136);
  CHECK(m.levels[2].cumulative_flops == 3299328);
  CHECK(m.final_classifier_flops > 0);
  CHECK(m.backbone_flops() == 3299328 + m.final_classifier_flops);
}

TEST_CASE("tier placement controls level-1 decodability") {
  auto spec = SynthSpec::micro();
  spec.tier_fractions = {1, 0, 0, 0};
  auto easy = synth_generate(spec, 11);
  CHECK(probe_accuracy(easy.train, easy.validation, 1) >= 0.9);

  spec.tier_fractions = {0, 0, 0, 1};
  auto hard = synth_generate(spec, 11);
  CHECK(probe_accuracy(hard.train, hard.validation, 1) <= 0.2);
  // Tier L+1 samples carry no signal at any stored level.
  CHECK(probe_accuracy(hard.train, hard.validation, 3) <= 0.2);

  for (auto t : hard.train.tiers) CHECK(t == 4);
  for (auto t : easy.train.tiers) CHECK(t == 1);
}
