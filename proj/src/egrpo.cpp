#include "agentask/egrpo.hpp"

#include <algorithm>
#include <cmath>

#include "agentask/errors.hpp"
#include "agentask/rollout.hpp"

namespace agentask {

Rational effectiveness_reward(int z, int n_next) {
  if (z == 0) return Rational(0);
  return n_next == 0 ? Rational(1) : Rational(-1);
}

int update_counter(const std::vector<int>& window, int h, int z) {
  if (h < 1) throw ContractError("counter window H must be >= 1");
  const int keep = std::min<int>(h - 1, static_cast<int>(window.size()));
  int c = z;
  for (std::size_t i = window.size() - static_cast<std::size_t>(keep); i < window.size(); ++i) {
    c += window[i];
  }
  return c;
}

Rational parsimony_reward(int c, const Rational& lambda_sw) {
  const std::int64_t over = std::max<std::int64_t>(c - 1, 0);
  return -(lambda_sw * Rational(over));
}

Rational format_reward(int flag, const Rational& alpha_fmt) {
  return flag == 1 ? alpha_fmt : Rational(0);
}

Rational edge_reward(const Rational& r_eff, const Rational& r_par, const Rational& r_fmt,
                     const Rational& alpha_eff) {
  return alpha_eff * r_eff + r_par + r_fmt;
}

Rational terminal_reward(int s, const Rational& alpha_ans) {
  return alpha_ans * Rational(s);
}

std::vector<double> local_advantages(const std::vector<double>& group_rewards) {
  const std::size_t g = group_rewards.size();
  if (g < 2) throw ContractError("local advantages need a group of >= 2");
  double mean = 0.0;
  for (double r : group_rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : group_rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population variance
  const double denom = std::sqrt(var) + 1e-8;
  std::vector<double> a(g);
  for (std::size_t i = 0; i < g; ++i) a[i] = (group_rewards[i] - mean) / denom;
  return a;
}

std::vector<double> global_advantages(double terminal_r, double baseline, int visited_edges) {
  return std::vector<double>(static_cast<std::size_t>(visited_edges), terminal_r - baseline);
}

SurrogateResult surrogate_and_grad(const PolicyParams& params, const PolicyParams& params_old,
                                   const PolicyParams& params_ref,
                                   const std::vector<SurrogateEntry>& batch, double eps,
                                   double lambda_r, double beta, Exec exec) {
  if (batch.empty()) throw ContractError("surrogate needs a non-empty batch");
  if (!(eps > 0.0 && eps < 1.0)) throw ContractError("clip epsilon must lie in (0,1)");

  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  const std::size_t p = params.w.size();
  std::vector<double> slabs(static_cast<std::size_t>(n) * p, 0.0);
  std::vector<double> loc_terms(batch.size(), 0.0);
  std::vector<double> glob_terms(batch.size(), 0.0);
  std::vector<double> kls(batch.size(), 0.0);

  auto work = [&](std::int64_t i) {
    const SurrogateEntry& e = batch[static_cast<std::size_t>(i)];
    double* slab = &slabs[static_cast<std::size_t>(i) * p];
    std::vector<double> local(p, 0.0);

    const double lp = action_logprob(params, e.features, e.action);
    const double lp_old = action_logprob(params_old, e.features, e.action);
    const double rho = std::exp(lp - lp_old);
    if (!(rho > 0.0)) throw std::logic_error("internal: nonpositive probability ratio");
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);

    double coef = 0.0;
    {
      const double u = rho * e.a_local;
      const double v = clipped * e.a_local;
      loc_terms[static_cast<std::size_t>(i)] = std::min(u, v);
      if (u <= v) coef += e.a_local * rho;
    }
    if (e.a_global) {
      const double u = rho * *e.a_global;
      const double v = clipped * *e.a_global;
      glob_terms[static_cast<std::size_t>(i)] = lambda_r * std::min(u, v);
      if (u <= v) coef += lambda_r * *e.a_global * rho;
    }
    if (coef != 0.0) add_scaled_grad_logprob(params, e.features, e.action, coef, local);
    kls[static_cast<std::size_t>(i)] = exact_kl(params, params_ref, e.features);
    add_scaled_grad_kl(params, params_ref, e.features, -beta, local);
    for (std::size_t j = 0; j < p; ++j) slab[j] = local[j];
  };

  parallel_for(n, exec, work);

  SurrogateResult res;
  res.gradient.assign(p, 0.0);
  double loc_sum = 0.0;
  double glob_sum = 0.0;
  double kl_sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    loc_sum += loc_terms[static_cast<std::size_t>(i)];
    glob_sum += glob_terms[static_cast<std::size_t>(i)];
    kl_sum += kls[static_cast<std::size_t>(i)];
    const double* slab = &slabs[static_cast<std::size_t>(i) * p];
    for (std::size_t j = 0; j < p; ++j) res.gradient[j] += slab[j];
  }
  const double dn = static_cast<double>(n);
  res.kl_mean = kl_sum / dn;
  res.objective = loc_sum / dn + glob_sum / dn - beta * res.kl_mean;
  for (std::size_t j = 0; j < p; ++j) res.gradient[j] /= dn;
  return res;
}

// --- training ---------------------------------------------------------------

namespace {

constexpr std::uint64_t kTrainStream = 0x6e1a9f2c47ull;
constexpr std::uint64_t kBaselineStream = 0xba5e11e5ull;

struct EpisodeCollect {
  std::vector<SurrogateEntry> entries;
  std::vector<std::size_t> executed;  // indices into entries
  double terminal_r = 0.0;
  int s = 0;
  int asks = 0;
  std::int64_t latency = 0;
  std::int64_t clar_tokens = 0;
};

std::vector<int> window_tail(const std::vector<int>& window, int h) {
  const int keep = std::min<int>(h - 1, static_cast<int>(window.size()));
  return {window.end() - keep, window.end()};
}

EpisodeCollect collect_episode(const Environment& env, const Featurizer& featurizer,
                               const PolicyParams& old_params, int group_size,
                               std::uint64_t seed) {
  const RewardConfig& rc = env.reward_config();
  EpisodeCollect out;
  EpisodeState ep = env.reset(seed);
  RandomStream rng(derive_seed(seed, kTrainStream));

  while (!ep.terminated()) {
    const EdgeState x = env.emit_edge(ep);
    const FeatureVector f = featurizer.featurize(x);
    const auto prior_window = window_tail(ep.ask_window, rc.window_h);

    std::vector<double> rewards(static_cast<std::size_t>(group_size));
    std::vector<ActionIndex> indices(static_cast<std::size_t>(group_size));
    StepOutcome executed_outcome;
    int executed_gate = 0;
    for (int g = 0; g < group_size; ++g) {
      const SampledAction sa =
          sample_action(old_params, x, f, rng, x.budget_remaining, min_ask_budget());
      const StepOutcome branch = env.apply_action(ep, sa.action);
      const int gate = sa.action.gate() ? 1 : 0;
      const int c = update_counter(prior_window, rc.window_h, gate);
      const int flag = validate_schema(canonical_clarifier_json(sa.action), rc.token_cap);
      const Rational r_edge =
          edge_reward(effectiveness_reward(gate, branch.residual_flag),
                      parsimony_reward(c, rc.lambda_sw), format_reward(flag, rc.alpha_fmt),
                      rc.alpha_eff);
      rewards[static_cast<std::size_t>(g)] = r_edge.to_double();
      indices[static_cast<std::size_t>(g)] = index_of_action(x, sa.action);
      if (g == 0) {
        executed_outcome = branch;
        executed_gate = gate;
      }
    }

    const auto advantages = local_advantages(rewards);
    const std::size_t first_entry = out.entries.size();
    for (int g = 0; g < group_size; ++g) {
      SurrogateEntry e;
      e.features = f;
      e.action = indices[static_cast<std::size_t>(g)];
      e.a_local = advantages[static_cast<std::size_t>(g)];
      out.entries.push_back(std::move(e));
    }
    out.executed.push_back(first_entry);  // candidate 0 drives the episode
    out.asks += executed_gate;
    ep = executed_outcome.next;
  }

  out.s = env.terminal_score(ep);
  out.terminal_r = terminal_reward(out.s, rc.alpha_ans).to_double();
  out.latency = ep.latency_spent;
  out.clar_tokens = ep.tokens_spent;
  return out;
}

}  // namespace

TrainResult train_egrpo(const Environment& env, const Featurizer& featurizer,
                        const PolicyParams& init_params, const TrainConfig& config) {
  if (config.group_size < 2) throw ConfigError("group_size must be >= 2");
  if (config.iterations < 1 || config.episodes_per_iter < 1) {
    throw ConfigError("iterations and episodes_per_iter must be >= 1");
  }
  if (!(config.lr > 0.0)) throw ConfigError("lr must be > 0");
  const RewardConfig& rc = env.reward_config();

  // never-ask rollouts anchor the overhead percentages
  NeverAskPolicy never;
  const auto base_seeds = seed_block(derive_seed(config.seed, kBaselineStream), 64);
  double base_latency = 0.0;
  double base_tokens = 0.0;
  {
    const auto traces = rollout_batch(env, never, base_seeds, "", config.exec);
    for (const auto& t : traces) {
      for (const auto& r : t.records) {
        base_latency += r.latency_units;
        base_tokens += whitespace_tokens(r.state.message) + static_cast<double>(r.cost_tokens);
      }
    }
    base_latency /= static_cast<double>(traces.size());
    base_tokens /= static_cast<double>(traces.size());
  }

  TrainResult result;
  result.params = init_params;
  const PolicyParams ref = init_params;
  RunningBaseline baseline;
  std::uint64_t episode_counter = 0;

  for (int iter = 0; iter < config.iterations; ++iter) {
    const PolicyParams old_params = result.params;

    std::vector<EpisodeCollect> collected(static_cast<std::size_t>(config.episodes_per_iter));
    parallel_for(config.episodes_per_iter, config.exec, [&](std::int64_t e) {
      collected[static_cast<std::size_t>(e)] =
          collect_episode(env, featurizer, old_params, config.group_size,
                          derive_seed(config.seed, episode_counter + static_cast<std::uint64_t>(e)));
    });
    episode_counter += static_cast<std::uint64_t>(config.episodes_per_iter);

    // single-threaded: global credit with the evolving baseline, fixed order
    std::vector<SurrogateEntry> batch;
    IterationMetrics m;
    m.iteration = iter;
    double latency_sum = 0.0;
    double clar_sum = 0.0;
    for (auto& ec : collected) {
      const double b = baseline.value();
      for (std::size_t idx : ec.executed) ec.entries[idx].a_global = ec.terminal_r - b;
      baseline.update(ec.terminal_r);
      m.mean_s += ec.s;
      m.asks_per_episode += ec.asks;
      latency_sum += static_cast<double>(ec.latency);
      clar_sum += static_cast<double>(ec.clar_tokens);
      for (auto& e : ec.entries) batch.push_back(std::move(e));
    }
    const double ne = static_cast<double>(config.episodes_per_iter);
    m.mean_s /= ne;
    m.asks_per_episode /= ne;
    m.latency_pct = 100.0 * (latency_sum / ne) / base_latency;
    m.extra_cost_pct = 100.0 * (clar_sum / ne) / base_tokens;

    const SurrogateResult sr = surrogate_and_grad(result.params, old_params, ref, batch,
                                                  rc.clip_eps, rc.lambda_r, rc.beta_kl,
                                                  config.exec);
    m.kl_mean = sr.kl_mean;
    m.objective = sr.objective;
    if (!std::isfinite(sr.objective)) {
      throw TrainingAbort("objective diverged at iteration " + std::to_string(iter));
    }
    if (sr.kl_mean > config.kl_ceiling) {
      throw TrainingAbort("reference KL " + std::to_string(sr.kl_mean) +
                          " exceeded the ceiling at iteration " + std::to_string(iter));
    }
    for (std::size_t j = 0; j < result.params.w.size(); ++j) {
      result.params.w[j] += config.lr * sr.gradient[j];
    }
    result.metrics.push_back(m);
  }
  return result;
}

}  // namespace agentask
