#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "agentask/core.hpp"
#include "agentask/egrpo.hpp"
#include "agentask/env.hpp"
#include "agentask/policy.hpp"
#include "agentask/rng.hpp"

namespace agentask {

// worst-case whitespace tokens of an environment reply; checked by tests
constexpr int kMaxReplyTokens = 12;

// conservative exchange cost: below this remaining budget no ask fits, so the
// gate is forced shut and the per-trajectory token bound holds
std::int64_t min_ask_budget();

// Rollout-time action source. Implementations must be const-callable from
// concurrent workers; all randomness comes through the caller's stream.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual std::string name() const = 0;
  virtual SampledAction act(const Environment& env, const EpisodeState& episode,
                            const EdgeState& state, RandomStream& rng) const = 0;
};

// never intervenes (the origin baseline)
class NeverAskPolicy : public RolloutPolicy {
 public:
  std::string name() const override { return "never-ask"; }
  SampledAction act(const Environment&, const EpisodeState&, const EdgeState&,
                    RandomStream&) const override;
};

// asks on every edge: the oracle question when a fault exists, a generic
// confirmation probe otherwise (the heavy-evaluator anchor)
class AlwaysAskPolicy : public RolloutPolicy {
 public:
  std::string name() const override { return "always-ask"; }
  SampledAction act(const Environment& env, const EpisodeState& episode, const EdgeState& state,
                    RandomStream& rng) const override;
};

// follows the teacher label exactly: gold ask on faulted edges, silent otherwise
class OraclePolicy : public RolloutPolicy {
 public:
  std::string name() const override { return "oracle"; }
  SampledAction act(const Environment& env, const EpisodeState& episode, const EdgeState& state,
                    RandomStream& rng) const override;
};

class LearnedPolicy : public RolloutPolicy {
 public:
  LearnedPolicy(PolicyParams params, Featurizer featurizer, std::string name = "checkpoint")
      : params_(std::move(params)), featurizer_(std::move(featurizer)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  SampledAction act(const Environment& env, const EpisodeState& episode, const EdgeState& state,
                    RandomStream& rng) const override;
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
  Featurizer featurizer_;
  std::string name_;
};

// Runs one episode, computing rewards, counters and cost accounting per edge.
// Deterministic in (env config, seed, policy).
Trajectory rollout_episode(const Environment& env, const RolloutPolicy& policy,
                           std::uint64_t seed, const std::string& config_hash);

// data-parallel across episodes; serial and parallel modes are bit-identical
std::vector<Trajectory> rollout_batch(const Environment& env, const RolloutPolicy& policy,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::string& config_hash,
                                      Exec exec = Exec::kParallel);

std::vector<std::uint64_t> seed_block(std::uint64_t base_seed, int count);

// Recomputes rewards, counters and cost fields of a decoded trajectory from
// its states and actions; used for replay verification.
Trajectory rescore_trajectory(const Trajectory& decoded, const RewardConfig& reward);

}  // namespace agentask
