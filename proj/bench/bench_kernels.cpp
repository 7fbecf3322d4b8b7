// Times the OpenMP kernels against their serial references on a synthetic
// corpus and checks that both produce identical output.
//
//   sasv_bench [speakers] [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "sasv/cascade.hpp"
#include "sasv/fusion_mlp.hpp"
#include "sasv/scoring.hpp"
#include "sasv/synth.hpp"

using namespace sasv;

namespace {

template <typename Fn>
double best_of(int repeats, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, std::size_t items, double serial, double parallel, bool same) {
  std::printf("%-18s %9zu %12.3f %12.3f %8.2fx  %s\n", name, items, 1e3 * serial, 1e3 * parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  SynthConfig cfg;
  cfg.n_speakers = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 100;
  cfg.nontargets_per_model = 0;
  cfg.seed = 1;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;

  const SynthCorpus c = generate(cfg);
  const ProtocolSet& p = c.eval;
  const ScoringInputs in{&c.spk, &c.cm_logits};
  std::printf("threads %d, %zu eval trials\n\n", omp_get_max_threads(), p.trials.size());
  std::printf("%-18s %9s %12s %12s %9s\n", "kernel", "items", "serial ms", "openmp ms", "speedup");

  bool all_same = true;
  {
    ScoreSet a, b;
    const double s = best_of(repeats, [&] { a = reference::score_protocol(p, in, ScoreMode::B1); });
    const double t = best_of(repeats, [&] { b = score_protocol(p, in, ScoreMode::B1); });
    row("score_protocol b1", p.trials.size(), s, t, a == b);
    all_same &= a == b;
  }
  {
    Rng rng(2);
    const MlpParams params = MlpParams::glorot(MlpShape{}.widths(), rng);
    ScoreSet a, b;
    const double s = best_of(repeats, [&] { a = reference::score_b2(params, p, c.spk, c.cm); });
    const double t = best_of(repeats, [&] { b = score_b2(params, p, c.spk, c.cm); });
    row("score_b2", p.trials.size(), s, t, a == b);
    all_same &= a == b;
  }
  {
    const ScoreSet cm = score_protocol(p, in, ScoreMode::CM);
    const ScoreSet asv = score_protocol(p, in, ScoreMode::ASV);
    const Thresholds th = manual_thresholds(0.5, 0.3);
    std::vector<Decision> a, b;
    const double s = best_of(repeats, [&] { a = reference::cascade_decisions(cm, asv, th); });
    const double t = best_of(repeats, [&] { b = cascade_decisions(cm, asv, th); });
    row("cascade", p.trials.size(), s, t, a == b);
    all_same &= a == b;
  }
  return all_same ? 0 : 1;
}
