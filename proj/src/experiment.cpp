#include "agentask/experiment.hpp"

#include <sstream>

#include "agentask/egrpo.hpp"

namespace agentask {

namespace {
constexpr std::uint64_t kCorpusStream = 0xc0590f5ull;
constexpr std::uint64_t kEvalStream = 0xe7a1b3ull;
}  // namespace

SftResult run_stage_sft(const AppConfig& config, std::uint64_t seed, int corpus_episodes) {
  const Environment env = config.make_environment();
  const Featurizer featurizer = config.make_featurizer();
  const std::uint64_t lo = derive_seed(seed, kCorpusStream);
  const Corpus corpus = build_corpus(
      env, {lo, lo + static_cast<std::uint64_t>(corpus_episodes) - 1}, env_teacher(env),
      config.train.exec);
  SftConfig sft_cfg = config.sft;
  sft_cfg.seed = derive_seed(seed, 0x5f7u);
  return train_sft(corpus, featurizer, sft_cfg);
}

std::vector<Trajectory> simulate_policy(const AppConfig& config, const Environment& env,
                                        const RolloutPolicy& policy, int episodes,
                                        std::uint64_t seed, Exec exec) {
  return rollout_batch(env, policy, seed_block(derive_seed(seed, kEvalStream), episodes),
                       config.hash(), exec);
}

OverheadReport evaluate_policy(const AppConfig& config, const Environment& env,
                               const RolloutPolicy& policy, int episodes, std::uint64_t seed,
                               Exec exec) {
  const auto traces = simulate_policy(config, env, policy, episodes, seed, exec);
  NeverAskPolicy never;
  const auto baseline = simulate_policy(config, env, never, episodes, seed, exec);
  return overhead_metrics(traces, baseline);
}

namespace {

SweepRow run_cell_with_inits(const AppConfig& base, const Rational& lambda_sw, int window_h,
                             const std::vector<PolicyParams>& inits, std::uint64_t seed) {
  AppConfig cell = base;
  cell.reward.lambda_sw = lambda_sw;
  cell.reward.window_h = window_h;
  const Environment env = cell.make_environment();
  const Featurizer featurizer = cell.make_featurizer();

  SweepRow row;
  row.lambda_sw = lambda_sw;
  row.window_h = window_h;
  for (std::size_t r = 0; r < inits.size(); ++r) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    TrainConfig tc = cell.train;
    tc.seed = derive_seed(rep_seed, 0x7141ull);
    const TrainResult trained = train_egrpo(env, featurizer, inits[r], tc);
    LearnedPolicy policy(trained.params, featurizer, "egrpo");
    const OverheadReport rep =
        evaluate_policy(cell, env, policy, cell.eval_episodes, rep_seed, cell.train.exec);
    row.accuracy += rep.accuracy;
    row.latency_pct += rep.latency_pct;
    row.extra_cost_pct += rep.extra_cost_pct;
    row.asks_per_episode += rep.asks_per_episode;
  }
  const double n = static_cast<double>(inits.size());
  row.accuracy /= n;
  row.latency_pct /= n;
  row.extra_cost_pct /= n;
  row.asks_per_episode /= n;
  return row;
}

// SFT is independent of (lambda_sw, H): one init per repeat seed, shared by
// every cell, keeps the sweep paired and saves redundant Stage A+B runs.
std::vector<PolicyParams> sweep_inits(const AppConfig& base, int repeats, std::uint64_t seed) {
  std::vector<PolicyParams> inits;
  inits.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    inits.push_back(run_stage_sft(base, rep_seed, /*corpus_episodes=*/120).params);
  }
  return inits;
}

}  // namespace

SweepRow run_sweep_cell(const AppConfig& base, const Rational& lambda_sw, int window_h,
                        int repeats, std::uint64_t seed) {
  return run_cell_with_inits(base, lambda_sw, window_h, sweep_inits(base, repeats, seed), seed);
}

std::vector<SweepRow> run_sweep_grid(const AppConfig& base, const std::vector<Rational>& lambdas,
                                     const std::vector<int>& windows, int repeats,
                                     std::uint64_t seed) {
  const auto inits = sweep_inits(base, repeats, seed);
  std::vector<SweepRow> rows;
  for (const auto& lambda : lambdas) {
    for (int h : windows) {
      rows.push_back(run_cell_with_inits(base, lambda, h, inits, seed));
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << "\n";
  out << "lambda_sw,H,accuracy,latency_pct,extra_cost_pct,asks_per_episode\n";
  for (const auto& r : rows) {
    out << r.lambda_sw.to_double() << ',' << r.window_h << ',' << r.accuracy << ','
        << r.latency_pct << ',' << r.extra_cost_pct << ',' << r.asks_per_episode << '\n';
  }
  return out.str();
}

std::string metrics_csv(const std::vector<IterationMetrics>& metrics,
                        const std::string& config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << "\n";
  out << "iteration,mean_s,asks_per_episode,latency_pct,extra_cost_pct,kl_mean,objective\n";
  for (const auto& m : metrics) {
    out << m.iteration << ',' << m.mean_s << ',' << m.asks_per_episode << ',' << m.latency_pct
        << ',' << m.extra_cost_pct << ',' << m.kl_mean << ',' << m.objective << '\n';
  }
  return out.str();
}

}  // namespace agentask
