#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "agentask/audit.hpp"
#include "agentask/errors.hpp"
#include "agentask/rollout.hpp"
#include "agentask/rng.hpp"
#include "agentask/templates.hpp"

using namespace agentask;

namespace {

// hand-built trajectory: n records of `message_tokens`-token messages, the
// first `asks` records carrying an ask of `ask_cost` tokens
Trajectory synthetic(int n, int message_tokens, int asks, std::int64_t ask_cost, int score,
                     const std::string& hash = "cfg") {
  Trajectory t;
  t.config_hash = hash;
  t.policy_name = "synthetic";
  t.terminal_score = score;
  t.terminal_reward = Rational(score);
  for (int i = 0; i < n; ++i) {
    EdgeRecord r;
    r.state.sender = "user.0";
    r.state.receiver = "adder.1";
    r.state.step_index = i;
    std::string msg = "tok";
    for (int k = 1; k < message_tokens; ++k) msg += " tok";
    r.state.message = msg;
    if (i < asks) {
      r.action.error_type = ErrorType::DG;
      r.action.addressee = "user.0";
      r.action.question = TemplateLibrary::builtin().render(ErrorType::DG, 0, {"op"});
      r.reply = "supplied op=add:1";
      r.cost_tokens = ask_cost;
      r.latency_units = 2;
    } else {
      r.latency_units = 1;
    }
    r.gold_type = ErrorType::NONE;
    t.records.push_back(std::move(r));
  }
  return t;
}

}  // namespace

TEST_CASE("distribution: single faulted edge dominates; clean corpora are empty") {
  Trajectory t = synthetic(3, 5, 0, 0, 1);
  t.records[1].gold_type = ErrorType::DG;
  const DistributionReport one = annotate_distribution({t});
  REQUIRE(one.fractions.size() == 1);
  CHECK(one.fractions.at(ErrorType::DG) == 1.0);
  CHECK(one.faulted_edges == 1);
  CHECK(one.unlabeled_edges == 0);

  const DistributionReport clean = annotate_distribution({synthetic(4, 5, 0, 0, 1)});
  CHECK(clean.fractions.empty());
  CHECK(clean.clean_edges == 4);
}

TEST_CASE("records without gold annotations land in the unlabeled bucket") {
  Trajectory t = synthetic(3, 5, 0, 0, 1);
  t.records[0].gold_type.reset();
  t.records[2].gold_type = ErrorType::SC;
  const DistributionReport rep = annotate_distribution({t});
  CHECK(rep.unlabeled_edges == 1);
  CHECK(rep.faulted_edges == 1);
  CHECK(rep.fractions.at(ErrorType::SC) == 1.0);
}

TEST_CASE("distribution fractions are invariant to trace order and sum to one") {
  const Environment env(EnvConfig{}, RewardConfig{});
  NeverAskPolicy never;
  auto traces = rollout_batch(env, never, seed_block(5, 200), "cfg");
  const DistributionReport a = annotate_distribution(traces);
  std::reverse(traces.begin(), traces.end());
  const DistributionReport b = annotate_distribution(traces);
  CHECK(a.fractions == b.fractions);
  double sum = 0.0;
  for (const auto& [type, frac] : a.fractions) sum += frac;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("one-shot resolution per policy") {
  const Environment env(EnvConfig{}, RewardConfig{});
  const auto seeds = seed_block(9, 300);

  SUBCASE("the oracle resolves every type it asks about") {
    OraclePolicy oracle;
    const auto traces = rollout_batch(env, oracle, seeds, "cfg");
    const ResolutionReport rep = one_shot_resolution(traces);
    REQUIRE(rep.rates.size() == kAskTypeCount);
    for (const auto& [type, rate] : rep.rates) CHECK(rate == 1.0);
    CHECK(rep.absent.empty());
  }
  SUBCASE("a never-ask policy has no one-shot data at all") {
    NeverAskPolicy never;
    const auto traces = rollout_batch(env, never, seeds, "cfg");
    const ResolutionReport rep = one_shot_resolution(traces);
    CHECK(rep.rates.empty());
    CHECK(rep.absent.size() == kAskTypeCount);  // all injected types lack asks
  }
  SUBCASE("asking DG questions on SC faults never resolves them") {
    class DgProbePolicy : public RolloutPolicy {
     public:
      std::string name() const override { return "dg-probe"; }
      SampledAction act(const Environment&, const EpisodeState&, const EdgeState& state,
                        RandomStream&) const override {
        SampledAction out;
        out.action.error_type = ErrorType::DG;
        out.action.addressee = state.sender;
        out.action.question =
            TemplateLibrary::builtin().render(ErrorType::DG, 0, {salient_slot(state, ErrorType::DG)});
        return out;
      }
    };
    DgProbePolicy probe;
    const auto traces = rollout_batch(env, probe, seeds, "cfg");
    const ResolutionReport rep = one_shot_resolution(traces);
    REQUIRE(rep.rates.count(ErrorType::SC) == 1);
    CHECK(rep.rates.at(ErrorType::SC) == 0.0);
    CHECK(rep.rates.at(ErrorType::DG) == 1.0);
  }
}

TEST_CASE("overhead of a trace set against itself is the origin row") {
  const Environment env(EnvConfig{}, RewardConfig{});
  OraclePolicy oracle;
  NeverAskPolicy never;
  for (const RolloutPolicy* pol : {static_cast<const RolloutPolicy*>(&oracle),
                                   static_cast<const RolloutPolicy*>(&never)}) {
    const auto traces = rollout_batch(env, *pol, seed_block(3, 50), "cfg");
    const OverheadReport rep = overhead_metrics(traces, traces);
    CHECK(rep.latency_pct == 100.0);
    CHECK(rep.extra_cost_pct == 0.0);
    double acc = 0.0;
    for (const auto& t : traces) acc += t.terminal_score;
    CHECK(rep.accuracy == acc / 50.0);
  }
}

TEST_CASE("worked overhead example: one 20-token exchange on a 400-token episode") {
  // 20 edges x 20 message tokens = 400 baseline tokens; one ask costing
  // 10 question + 10 reply tokens
  const Trajectory baseline = synthetic(20, 20, 0, 0, 1);
  const Trajectory asked = synthetic(20, 20, 1, 20, 1);
  const OverheadReport rep = overhead_metrics({asked}, {baseline});
  CHECK(rep.extra_cost_pct == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(rep.latency_pct == doctest::Approx(100.0 * 21.0 / 20.0).epsilon(1e-12));
}

TEST_CASE("always-ask strictly raises latency over the origin") {
  const Environment env(EnvConfig{}, RewardConfig{});
  AlwaysAskPolicy always;
  NeverAskPolicy never;
  const auto seeds = seed_block(17, 60);
  const auto asked = rollout_batch(env, always, seeds, "cfg");
  const auto origin = rollout_batch(env, never, seeds, "cfg");
  const OverheadReport rep = overhead_metrics(asked, origin);
  CHECK(rep.latency_pct > 100.0);
  CHECK(rep.extra_cost_pct > 0.0);
  CHECK(rep.asks_per_episode > 0.0);
}

TEST_CASE("mismatched config hashes are refused") {
  const auto a = synthetic(3, 5, 0, 0, 1, "cfg-a");
  const auto b = synthetic(3, 5, 0, 0, 1, "cfg-b");
  CHECK_THROWS_AS(overhead_metrics({a}, {b}), DataError);
}

TEST_CASE("csv emitters carry the expected headers") {
  const Trajectory t = synthetic(3, 5, 1, 12, 1);
  const auto dist = annotate_distribution({t});
  const auto res = one_shot_resolution({t});
  const auto over = overhead_metrics({t}, {t});
  CHECK(distribution_csv(dist).rfind("error_type,fraction", 0) == 0);
  CHECK(resolution_csv(res).rfind("error_type,one_shot_rate", 0) == 0);
  CHECK(overhead_csv(over).rfind("accuracy,latency_pct,extra_cost_pct", 0) == 0);
  CHECK_FALSE(text_summary(dist, res, &over).empty());
}
