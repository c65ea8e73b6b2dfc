#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "agentask/env.hpp"
#include "agentask/errors.hpp"
#include "agentask/policy.hpp"
#include "agentask/rollout.hpp"
#include "agentask/templates.hpp"

using namespace agentask;

namespace {

Environment make_env(EnvConfig cfg = EnvConfig{}, RewardConfig rc = RewardConfig{}) {
  return Environment(cfg, rc);
}

EnvConfig single_type_config(ErrorType type, double p = 1.0) {
  EnvConfig cfg;
  cfg.injection_probabilities = {0, 0, 0, 0};
  cfg.injection_probabilities[static_cast<int>(type)] = p;
  return cfg;
}

Action gold_action(const Environment& env, const EpisodeState& ep, const EdgeState& x) {
  const GoldLabel g = env.teacher_label(ep, x);
  Action a;
  a.error_type = g.error_type;
  a.addressee = g.addressee;
  a.question = g.question;
  return a;
}

// independent relay evaluator: folds the episode's delivered payloads through
// the damage rules, tracking whether any unresolved fault touched the value
struct ReplayResult {
  std::int64_t value = 0;
  bool tainted = false;
};

ReplayResult replay_pipeline(const Environment& env, std::uint64_t seed,
                             const std::vector<Action>& actions) {
  EpisodeState ep = env.reset(seed);
  ReplayResult out;
  out.value = ep.task.v0;
  for (std::size_t t = 0; !ep.terminated(); ++t) {
    const EdgeState x = env.emit_edge(ep);
    const StepOutcome step = env.apply_action(ep, actions[t]);
    Payload delivered = parse_payload(x.message);
    if (step.reply) delivered = apply_reply_overrides(delivered, *step.reply);
    out.value = eval_payload(delivered, role_of(x.receiver), static_cast<int>(t));
    if (step.residual_flag) out.tainted = true;
    ep = step.next;
  }
  return out;
}

}  // namespace

TEST_CASE("reset is deterministic in (config, seed)") {
  const Environment env = make_env();
  CHECK(env.reset(7) == env.reset(7));
  CHECK_FALSE(env.reset(7) == env.reset(8));
}

TEST_CASE("zero injection probabilities give a clean pipeline") {
  EnvConfig cfg;
  cfg.injection_probabilities = {0, 0, 0, 0};
  const Environment env = make_env(cfg);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    EpisodeState ep = env.reset(seed);
    for (const auto& f : ep.plan.per_edge) CHECK_FALSE(f.has_value());
    while (!ep.terminated()) ep = env.apply_action(ep, Action{}).next;
    CHECK(env.terminal_score(ep) == 1);  // monotone damage, empty plan
  }
}

TEST_CASE("forced DG probability marks every edge") {
  EnvConfig cfg = single_type_config(ErrorType::DG);
  cfg.chain_length_range = {4, 4};
  const Environment env = make_env(cfg);
  const EpisodeState ep = env.reset(3);
  REQUIRE(ep.task.num_edges() == 3);
  for (const auto& f : ep.plan.per_edge) {
    REQUIRE(f.has_value());
    CHECK(f->type == ErrorType::DG);
  }
  // independent check: each emitted message misses exactly one schema field
  EpisodeState cur = ep;
  while (!cur.terminated()) {
    const EdgeState x = env.emit_edge(cur);
    const Payload p = parse_payload(x.message);
    const int present = (p.op_kind ? 1 : 0) + (p.ref ? 1 : 0) + (p.value ? 1 : 0);
    CHECK(present == 2);
    cur = env.apply_action(cur, Action{}).next;
  }
}

TEST_CASE("clean edges carry the full payload schema") {
  EnvConfig cfg;
  cfg.injection_probabilities = {0, 0, 0, 0};
  const Environment env = make_env(cfg);
  EpisodeState ep = env.reset(11);
  while (!ep.terminated()) {
    const EdgeState x = env.emit_edge(ep);
    const Payload p = parse_payload(x.message);
    CHECK(p.op_kind.has_value());
    CHECK(p.ref.has_value());
    CHECK(p.value.has_value());
    CHECK(*p.ref == expected_symbol(x.step_index));
    ep = env.apply_action(ep, Action{}).next;
  }
}

TEST_CASE("SC corruption multiplies the clean value by the planned factor") {
  EnvConfig cfg = single_type_config(ErrorType::SC);
  const Environment env = make_env(cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EpisodeState ep = env.reset(seed);
    // recompute the clean incoming value independently: resolve every fault
    std::int64_t clean_value = ep.task.v0;
    while (!ep.terminated()) {
      const int t = ep.cursor;
      const EdgeState x = env.emit_edge(ep);
      const Payload p = parse_payload(x.message);
      REQUIRE(p.value.has_value());
      REQUIRE(ep.plan.per_edge[t].has_value());
      CHECK(*p.value == clean_value * ep.plan.per_edge[t]->sc_factor);
      clean_value = apply_op(ep.task.ops[t].kind, ep.task.ops[t].operand, clean_value);
      ep = env.apply_action(ep, gold_action(env, ep, x)).next;
    }
    CHECK(env.terminal_score(ep) == 1);
  }
}

TEST_CASE("apply_action resolution semantics on a DG edge") {
  EnvConfig cfg = single_type_config(ErrorType::DG);
  cfg.chain_length_range = {2, 2};
  const Environment env = make_env(cfg);
  const EpisodeState ep = env.reset(5);
  const EdgeState x = env.emit_edge(ep);

  SUBCASE("matching ask resolves and the reply supplies the field") {
    const StepOutcome out = env.apply_action(ep, gold_action(env, ep, x));
    CHECK(out.residual_flag == 0);
    REQUIRE(out.reply.has_value());
    CHECK(out.reply->find(ep.plan.per_edge[0]->dropped_field + "=") != std::string::npos);
    CHECK(env.terminal_score(out.next) == 1);
  }
  SUBCASE("silence leaves the fault") {
    const StepOutcome out = env.apply_action(ep, Action{});
    CHECK(out.residual_flag == 1);
    CHECK_FALSE(out.reply.has_value());
    CHECK(env.terminal_score(out.next) == 0);
  }
  SUBCASE("wrong type does not resolve") {
    Action a;
    a.error_type = ErrorType::SC;
    a.addressee = x.sender;
    a.question = TemplateLibrary::builtin().render(ErrorType::SC, 0, {"value"});
    const StepOutcome out = env.apply_action(ep, a);
    CHECK(out.residual_flag == 1);
    REQUIRE(out.reply.has_value());
  }
  SUBCASE("wrong addressee does not resolve") {
    Action a = gold_action(env, ep, x);
    a.addressee = x.receiver;  // DG gold addressee is the sender
    const StepOutcome out = env.apply_action(ep, a);
    CHECK(out.residual_flag == 1);
  }
}

TEST_CASE("asking on a clean edge wastes the ask but leaves no residual") {
  EnvConfig cfg;
  cfg.injection_probabilities = {0, 0, 0, 0};
  cfg.chain_length_range = {2, 2};
  const Environment env = make_env(cfg);
  const EpisodeState ep = env.reset(2);
  const EdgeState x = env.emit_edge(ep);
  Action a;
  a.error_type = ErrorType::DG;
  a.addressee = x.sender;
  a.question = TemplateLibrary::builtin().render(ErrorType::DG, 0, {"op"});
  const StepOutcome out = env.apply_action(ep, a);
  CHECK(out.residual_flag == 0);
  REQUIRE(out.reply.has_value());
  CHECK(out.next.tokens_spent > 0);
}

TEST_CASE("fault resolution soundness: exactly one (type, addressee) pair resolves") {
  const PolicyParams params = PolicyParams::zeros(16, {4, 4, 4, 4}, "f", "t");
  for (int type_i = 0; type_i < kAskTypeCount; ++type_i) {
    EnvConfig cfg = single_type_config(static_cast<ErrorType>(type_i));
    cfg.chain_length_range = {2, 2};
    const Environment env = make_env(cfg);
    const EpisodeState ep = env.reset(17 + static_cast<std::uint64_t>(type_i));
    const EdgeState x = env.emit_edge(ep);
    const GoldLabel gold = env.teacher_label(ep, x);

    std::set<std::pair<int, int>> resolving;
    for (const auto& ai : enumerate_action_indices(params)) {
      if (!ai.ask()) {
        CHECK(env.apply_action(ep, Action{}).residual_flag == 1);
        continue;
      }
      const Action a = realize_action(x, ai);
      const StepOutcome out = env.apply_action(ep, a);
      if (out.residual_flag == 0) resolving.insert({ai.type, ai.addr});
    }
    REQUIRE(resolving.size() == 1);
    const auto [rt, ra] = *resolving.begin();
    CHECK(static_cast<ErrorType>(rt) == gold.error_type);
    CHECK((ra == 0 ? x.sender : x.receiver) == gold.addressee);
  }
}

TEST_CASE("terminal score agrees with an independent pipeline replay") {
  const Environment env = make_env();
  OraclePolicy oracle;
  NeverAskPolicy never;
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    for (const RolloutPolicy* pol : {static_cast<const RolloutPolicy*>(&oracle),
                                     static_cast<const RolloutPolicy*>(&never)}) {
      const Trajectory traj = rollout_episode(env, *pol, seed, "h");
      std::vector<Action> actions;
      for (const auto& r : traj.records) actions.push_back(r.action);
      const ReplayResult replay = replay_pipeline(env, seed, actions);
      const EpisodeState ep = env.reset(seed);
      if (traj.terminal_score == 1) {
        CHECK_FALSE(replay.tainted);
        CHECK(replay.value == ep.task.ground_truth);
      } else {
        CHECK(replay.tainted);
      }
    }
  }
}

TEST_CASE("lifecycle errors after termination") {
  EnvConfig cfg;
  cfg.chain_length_range = {2, 2};
  const Environment env = make_env(cfg);
  EpisodeState ep = env.reset(1);
  CHECK_THROWS_AS(env.terminal_score(ep), LifecycleError);
  ep = env.apply_action(ep, Action{}).next;
  CHECK(ep.terminated());
  CHECK_THROWS_AS(env.emit_edge(ep), LifecycleError);
  CHECK_THROWS_AS(env.apply_action(ep, Action{}), LifecycleError);
}

TEST_CASE("teacher labels match the injected faults") {
  SUBCASE("clean edge is NONE") {
    EnvConfig cfg;
    cfg.injection_probabilities = {0, 0, 0, 0};
    const Environment env = make_env(cfg);
    const EpisodeState ep = env.reset(4);
    const GoldLabel g = env.teacher_label(ep, env.emit_edge(ep));
    CHECK(g.error_type == ErrorType::NONE);
    CHECK(g.addressee.empty());
    CHECK(g.question.rendered.empty());
  }
  SUBCASE("RD label mentions the drifted alias and goes to the sender") {
    const Environment env = make_env(single_type_config(ErrorType::RD));
    const EpisodeState ep = env.reset(9);
    const EdgeState x = env.emit_edge(ep);
    const GoldLabel g = env.teacher_label(ep, x);
    CHECK(g.error_type == ErrorType::RD);
    CHECK(g.addressee == x.sender);
    CHECK(g.question.rendered.find(ep.plan.per_edge[0]->alias) != std::string::npos);
  }
  SUBCASE("CG label reroutes via the receiver") {
    const Environment env = make_env(single_type_config(ErrorType::CG));
    const EpisodeState ep = env.reset(3);
    const EdgeState x = env.emit_edge(ep);
    const GoldLabel g = env.teacher_label(ep, x);
    CHECK(g.error_type == ErrorType::CG);
    CHECK(g.addressee == x.receiver);
  }
  SUBCASE("foreign edge states are rejected") {
    const Environment env = make_env();
    const EpisodeState ep = env.reset(1);
    EdgeState foreign = env.emit_edge(ep);
    foreign.query = "task=task-999 start=10 required=op,ref,value";
    CHECK_THROWS_AS(env.teacher_label(ep, foreign), UnknownEdgeError);
  }
}

TEST_CASE("invalid configs are rejected") {
  EnvConfig cfg;
  cfg.chain_length_range = {1, 1};
  CHECK_THROWS_AS(make_env(cfg), ConfigError);
  cfg = EnvConfig{};
  cfg.injection_probabilities = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(make_env(cfg), ConfigError);
  cfg = EnvConfig{};
  cfg.history_bound = 0;
  CHECK_THROWS_AS(make_env(cfg), ConfigError);
}

TEST_CASE("injection statistics track the configured probabilities") {
  EnvConfig cfg;
  cfg.injection_probabilities = taxonomy_s3();  // sums to 1: every edge faulted
  const Environment env = make_env(cfg);
  std::array<std::size_t, kAskTypeCount> counts{};
  std::size_t edges = 0;
  for (std::uint64_t seed = 0; edges < 10000; ++seed) {
    const EpisodeState ep = env.reset(seed);
    for (const auto& f : ep.plan.per_edge) {
      REQUIRE(f.has_value());
      ++counts[static_cast<int>(f->type)];
      ++edges;
    }
  }
  for (int k = 0; k < kAskTypeCount; ++k) {
    const double freq = static_cast<double>(counts[k]) / static_cast<double>(edges);
    CHECK(std::abs(freq - taxonomy_s3()[k]) < 0.015);
  }
}

TEST_CASE("histories are bounded and ask windows advance FIFO") {
  EnvConfig cfg;
  cfg.chain_length_range = {8, 8};
  cfg.history_bound = 3;
  cfg.ask_window_bound = 2;
  const Environment env = make_env(cfg);
  EpisodeState ep = env.reset(21);
  AlwaysAskPolicy always;
  RandomStream rng(5);
  while (!ep.terminated()) {
    const EdgeState x = env.emit_edge(ep);
    CHECK(x.history.size() <= 3);
    ep = env.apply_action(ep, always.act(env, ep, x, rng).action).next;
    CHECK(ep.ask_window.size() <= 2);
  }
}

TEST_CASE("environment replies stay within the reply token bound") {
  const Environment env = make_env();
  OraclePolicy oracle;
  AlwaysAskPolicy always;
  RandomStream rng(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EpisodeState ep = env.reset(seed);
    while (!ep.terminated()) {
      const EdgeState x = env.emit_edge(ep);
      const auto sa = (seed % 2 ? oracle.act(env, ep, x, rng) : always.act(env, ep, x, rng));
      const StepOutcome out = env.apply_action(ep, sa.action);
      if (out.reply) CHECK(whitespace_tokens(*out.reply) <= kMaxReplyTokens);
      ep = out.next;
    }
  }
}

TEST_CASE("hard budget keeps trajectory cost within B") {
  RewardConfig rc;
  rc.budget_b = 40;  // room for roughly one exchange
  EnvConfig cfg;
  cfg.chain_length_range = {8, 8};
  const Environment env = Environment(cfg, rc);
  AlwaysAskPolicy always;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Trajectory t = rollout_episode(env, always, seed, "h");
    std::int64_t total = 0;
    for (const auto& r : t.records) total += r.cost_tokens;
    CHECK(total <= rc.budget_b);
  }
}
