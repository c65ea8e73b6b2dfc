#include "agentask/rollout.hpp"

#include "agentask/errors.hpp"
#include "agentask/templates.hpp"

namespace agentask {

namespace {

constexpr std::uint64_t kPolicyStream = 0x7a5c3b1fd02ull;

// last h-1 prior gate bits, oldest first
std::vector<int> window_slice(const std::vector<int>& window, int h) {
  const int keep = std::min<int>(h - 1, static_cast<int>(window.size()));
  return {window.end() - keep, window.end()};
}

}  // namespace

std::int64_t min_ask_budget() {
  static const std::int64_t v =
      TemplateLibrary::builtin().max_question_tokens(/*slot_token_bound=*/2) + kMaxReplyTokens;
  return v;
}

SampledAction NeverAskPolicy::act(const Environment&, const EpisodeState&, const EdgeState&,
                                  RandomStream&) const {
  return SampledAction{};
}

SampledAction AlwaysAskPolicy::act(const Environment& env, const EpisodeState& episode,
                                   const EdgeState& state, RandomStream&) const {
  SampledAction out;
  if (state.budget_remaining < min_ask_budget()) {
    out.budget_forced = true;
    return out;
  }
  const GoldLabel gold = env.teacher_label(episode, state);
  if (gold.error_type != ErrorType::NONE) {
    out.action.error_type = gold.error_type;
    out.action.addressee = gold.addressee;
    out.action.question = gold.question;
  } else {
    out.action.error_type = ErrorType::DG;
    out.action.addressee = state.sender;
    out.action.question =
        TemplateLibrary::builtin().render(ErrorType::DG, 0, {salient_slot(state, ErrorType::DG)});
  }
  return out;
}

SampledAction OraclePolicy::act(const Environment& env, const EpisodeState& episode,
                                const EdgeState& state, RandomStream&) const {
  SampledAction out;
  if (state.budget_remaining < min_ask_budget()) {
    out.budget_forced = true;
    return out;
  }
  const GoldLabel gold = env.teacher_label(episode, state);
  if (gold.error_type == ErrorType::NONE) return out;
  out.action.error_type = gold.error_type;
  out.action.addressee = gold.addressee;
  out.action.question = gold.question;
  return out;
}

SampledAction LearnedPolicy::act(const Environment&, const EpisodeState&, const EdgeState& state,
                                 RandomStream& rng) const {
  return sample_action(params_, featurizer_, state, rng, state.budget_remaining,
                       min_ask_budget());
}

Trajectory rollout_episode(const Environment& env, const RolloutPolicy& policy,
                           std::uint64_t seed, const std::string& config_hash) {
  const RewardConfig& rc = env.reward_config();
  EpisodeState ep = env.reset(seed);
  RandomStream rng(derive_seed(seed, kPolicyStream));

  Trajectory traj;
  traj.episode_seed = static_cast<std::int64_t>(seed);
  traj.config_hash = config_hash;
  traj.policy_name = policy.name();

  while (!ep.terminated()) {
    const EdgeState x = env.emit_edge(ep);
    const SampledAction sa = policy.act(env, ep, x, rng);
    const int gate = sa.action.gate() ? 1 : 0;
    const int c = update_counter(window_slice(ep.ask_window, rc.window_h), rc.window_h, gate);

    const StepOutcome outcome = env.apply_action(ep, sa.action);
    const int flag = validate_schema(canonical_clarifier_json(sa.action), rc.token_cap);

    EdgeRecord rec;
    rec.state = x;
    rec.action = sa.action;
    rec.reply = outcome.reply;
    rec.residual_flag = outcome.residual_flag;
    rec.counter = c;
    rec.rewards.r_eff = effectiveness_reward(gate, outcome.residual_flag);
    rec.rewards.r_par = parsimony_reward(c, rc.lambda_sw);
    rec.rewards.r_fmt = format_reward(flag, rc.alpha_fmt);
    rec.rewards.r_edge =
        edge_reward(rec.rewards.r_eff, rec.rewards.r_par, rec.rewards.r_fmt, rc.alpha_eff);
    rec.latency_units = 1 + gate;
    rec.cost_tokens = outcome.next.tokens_spent - ep.tokens_spent;
    rec.gold_type = ep.plan.per_edge[ep.cursor] ? ep.plan.per_edge[ep.cursor]->type
                                                : ErrorType::NONE;
    traj.records.push_back(std::move(rec));

    ep = outcome.next;
  }
  traj.terminal_score = env.terminal_score(ep);
  traj.terminal_reward = terminal_reward(traj.terminal_score, rc.alpha_ans);
  return traj;
}

std::vector<Trajectory> rollout_batch(const Environment& env, const RolloutPolicy& policy,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::string& config_hash, Exec exec) {
  std::vector<Trajectory> out(seeds.size());
  parallel_for(static_cast<std::int64_t>(seeds.size()), exec, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] =
        rollout_episode(env, policy, seeds[static_cast<std::size_t>(i)], config_hash);
  });
  return out;
}

std::vector<std::uint64_t> seed_block(std::uint64_t base_seed, int count) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) seeds[i] = derive_seed(base_seed, static_cast<std::uint64_t>(i));
  return seeds;
}

Trajectory rescore_trajectory(const Trajectory& decoded, const RewardConfig& reward) {
  Trajectory out = decoded;
  std::vector<int> gates;
  for (auto& rec : out.records) {
    const int gate = rec.action.gate() ? 1 : 0;
    const int c = update_counter(window_slice(gates, reward.window_h), reward.window_h, gate);
    gates.push_back(gate);
    rec.counter = c;
    rec.rewards.r_eff = effectiveness_reward(gate, rec.residual_flag);
    rec.rewards.r_par = parsimony_reward(c, reward.lambda_sw);
    const int flag = validate_schema(canonical_clarifier_json(rec.action), reward.token_cap);
    rec.rewards.r_fmt = format_reward(flag, reward.alpha_fmt);
    rec.rewards.r_edge =
        edge_reward(rec.rewards.r_eff, rec.rewards.r_par, rec.rewards.r_fmt, reward.alpha_eff);
    rec.latency_units = 1 + gate;
    rec.cost_tokens =
        gate ? rec.action.question.token_count + whitespace_tokens(rec.reply.value_or("")) : 0;
  }
  out.terminal_reward = terminal_reward(out.terminal_score, reward.alpha_ans);
  return out;
}

}  // namespace agentask
