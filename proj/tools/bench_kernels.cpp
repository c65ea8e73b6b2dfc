// Serial-reference vs OpenMP timings for the three batch kernels: episode
// rollouts, SFT batch gradients and the E-GRPO surrogate. The serial path is
// the one the equivalence tests pin the parallel path against.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "agentask/config.hpp"
#include "agentask/egrpo.hpp"
#include "agentask/experiment.hpp"
#include "agentask/rollout.hpp"
#include "agentask/sft.hpp"
#include "agentask/templates.hpp"

using namespace agentask;

namespace {

double seconds_of(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-22s serial %8.3fs   openmp %8.3fs   speedup %.2fx\n", name, serial, parallel,
              serial / parallel);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without openmp; both columns run the serial path\n");
#endif

  AppConfig app;
  const Environment env = app.make_environment();
  const Featurizer featurizer = app.make_featurizer();

  // rollouts
  const auto seeds = seed_block(1234, 2000);
  OraclePolicy oracle;
  std::vector<Trajectory> traces;
  const double roll_s = seconds_of(
      [&] { traces = rollout_batch(env, oracle, seeds, "bench", Exec::kSerial); });
  const double roll_p =
      seconds_of([&] { rollout_batch(env, oracle, seeds, "bench", Exec::kParallel); });
  report("rollout_batch", roll_s, roll_p);

  // sft gradient over a labeled corpus
  const Corpus corpus = build_corpus(env, {1, 400}, env_teacher(env), Exec::kParallel);
  const auto rows = prepare_sft_examples(corpus, featurizer);
  PolicyParams params = PolicyParams::zeros(featurizer.config().dim, {4, 4, 4, 4},
                                            featurizer.config().hash(),
                                            TemplateLibrary::builtin().hash());
  const double sft_s = seconds_of([&] {
    for (int i = 0; i < 20; ++i) sft_loss(params, rows, 1.0, Exec::kSerial);
  });
  const double sft_p = seconds_of([&] {
    for (int i = 0; i < 20; ++i) sft_loss(params, rows, 1.0, Exec::kParallel);
  });
  report("sft_loss", sft_s, sft_p);

  // surrogate over a collected batch
  std::vector<SurrogateEntry> batch;
  RandomStream rng(99);
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      SurrogateEntry e;
      e.features = featurizer.featurize(r.state);
      e.action = index_of_action(r.state, r.action);
      e.a_local = rng.uniform01() - 0.5;
      if (rng.uniform01() < 0.5) e.a_global = rng.uniform01() - 0.5;
      batch.push_back(std::move(e));
      if (batch.size() >= 4000) break;
    }
    if (batch.size() >= 4000) break;
  }
  const double sur_s = seconds_of([&] {
    surrogate_and_grad(params, params, params, batch, 0.2, 0.5, 0.02, Exec::kSerial);
  });
  const double sur_p = seconds_of([&] {
    surrogate_and_grad(params, params, params, batch, 0.2, 0.5, 0.02, Exec::kParallel);
  });
  report("surrogate_and_grad", sur_s, sur_p);
  return 0;
}
