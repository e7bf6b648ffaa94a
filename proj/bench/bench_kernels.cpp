// Serial reference vs OpenMP kernels on the tiny synthetic spec. Also checks
// that both paths agree before reporting a time.
//
//   bench_kernels [repeats] [K]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>

#include "eebt/inference.hpp"
#include "eebt/kernels.hpp"
#include "eebt/pipeline.hpp"
#include "eebt/synth.hpp"

using namespace eebt;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %9.2f ms  parallel %9.2f ms  speedup %5.2fx  %s\n", name, serial,
              parallel, serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  const std::size_t k = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 32;
  const auto t = synth_generate(SynthSpec::tiny(), 11);
  const Dataset& ds = t.train;
  std::printf("threads %d, K %zu, %zu samples, best of %d\n", parallel_threads(), k,
              ds.size(), repeats);

  std::vector<std::uint32_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), 0u);
  Rng rng(1);
  bool all_same = true;

  for (std::size_t level = 1; level <= ds.num_levels(); ++level) {
    const auto& m = ds.manifest.level(level);
    const BranchHeads heads{level, init_head(k, m.depth, ds.num_classes(), rng),
                            init_head(k, m.depth, ds.num_classes(), rng)};
    const auto block = level_block(ds, level);

    std::vector<BranchDecision> ds_s, ds_p;
    const double es = best_ms(repeats, [&] { ds_s = evaluate_branch(heads, block, ids, Exec::Serial); });
    const double ep = best_ms(repeats, [&] { ds_p = evaluate_branch(heads, block, ids, Exec::Parallel); });
    bool same = ds_s.size() == ds_p.size();
    for (std::size_t i = 0; same && i < ds_s.size(); ++i) {
      same = ds_s[i].predicted == ds_p[i].predicted &&
             std::memcmp(&ds_s[i].confidence, &ds_p[i].confidence, sizeof(float)) == 0;
    }
    all_same &= same;
    report(("evaluate_branch level " + std::to_string(level)).c_str(), es, ep, same);

    const std::vector<std::uint32_t> batch(ids.begin(), ids.begin() + 128);
    std::vector<std::uint16_t> units(ds.labels.begin(), ds.labels.begin() + 128);
    BatchResult gs, gp;
    const double bs = best_ms(repeats, [&] {
      gs = batch_gradient(heads.classification, block, batch, Objective::CrossEntropy, units,
                          {}, Exec::Serial);
    });
    const double bp = best_ms(repeats, [&] {
      gp = batch_gradient(heads.classification, block, batch, Objective::CrossEntropy, units,
                          {}, Exec::Parallel);
    });
    same = gs.grad == gp.grad && gs.loss_sum == gp.loss_sum;
    all_same &= same;
    report(("batch_gradient level " + std::to_string(level)).c_str(), bs, bp, same);
  }

  ModelBundle bundle;
  bundle.num_classes = ds.num_classes();
  for (std::size_t level = 1; level <= ds.num_levels(); ++level) {
    const auto& m = ds.manifest.level(level);
    BranchRecord r;
    r.heads = {level, init_head(k, m.depth, ds.num_classes(), rng),
               init_head(k, m.depth, ds.num_classes(), rng)};
    r.depth = m.depth;
    r.height = m.height;
    r.width = m.width;
    r.thresholds.assign(ds.num_classes(), ExitThreshold::at(0.6f));
    bundle.branches.push_back(std::move(r));
  }
  std::vector<InferenceResult> is, ip;
  const double s = best_ms(repeats, [&] { is = infer_all(bundle, ds, Exec::Serial); });
  const double p = best_ms(repeats, [&] { ip = infer_all(bundle, ds, Exec::Parallel); });
  bool same = is.size() == ip.size();
  for (std::size_t i = 0; same && i < is.size(); ++i) {
    same = is[i].prediction == ip[i].prediction && is[i].exit_level == ip[i].exit_level &&
           is[i].flops == ip[i].flops;
  }
  all_same &= same;
  report("infer_all", s, p, same);
  return all_same ? 0 : 1;
}
