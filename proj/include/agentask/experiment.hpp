#pragma once

#include <string>
#include <vector>

#include "agentask/audit.hpp"
#include "agentask/config.hpp"
#include "agentask/rollout.hpp"
#include "agentask/sft.hpp"

namespace agentask {

// Stage A + B at one seed: corpus from seeded rollouts, then supervised
// transfer. Returns the best held-out snapshot.
SftResult run_stage_sft(const AppConfig& config, std::uint64_t seed, int corpus_episodes);

std::vector<Trajectory> simulate_policy(const AppConfig& config, const Environment& env,
                                        const RolloutPolicy& policy, int episodes,
                                        std::uint64_t seed, Exec exec);

// overhead of a policy against the never-ask baseline on a shared seed block
OverheadReport evaluate_policy(const AppConfig& config, const Environment& env,
                               const RolloutPolicy& policy, int episodes, std::uint64_t seed,
                               Exec exec);

struct SweepRow {
  Rational lambda_sw;
  int window_h = 0;
  double accuracy = 0.0;
  double latency_pct = 0.0;
  double extra_cost_pct = 0.0;
  double asks_per_episode = 0.0;
};

// One sensitivity cell: trains E-GRPO (from a shared SFT init) at the given
// (lambda_sw, H) for `repeats` seeds and averages the evaluation metrics.
// Seeds are common across cells so the sweep is paired.
SweepRow run_sweep_cell(const AppConfig& base, const Rational& lambda_sw, int window_h,
                        int repeats, std::uint64_t seed);

std::vector<SweepRow> run_sweep_grid(const AppConfig& base, const std::vector<Rational>& lambdas,
                                     const std::vector<int>& windows, int repeats,
                                     std::uint64_t seed);

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& config_hash);

std::string metrics_csv(const std::vector<IterationMetrics>& metrics,
                        const std::string& config_hash);

}  // namespace agentask
