#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentask/core.hpp"
#include "agentask/payload.hpp"

namespace agentask {

// Synthetic multi-agent pipeline: an arithmetic relay whose ground truth is
// exactly computable, with taxonomy faults injected per edge.

struct EnvConfig {
  std::pair<int, int> chain_length_range{3, 8};  // number of agents
  // absolute per-edge probabilities for (DG, RD, SC, CG); remainder = clean
  std::array<double, kAskTypeCount> injection_probabilities{0.0582, 0.0546, 0.0736, 0.0136};
  std::vector<std::int64_t> sc_factors{2, 3, 4};  // corruption rule
  int history_bound = 4;
  std::pair<std::int64_t, std::int64_t> v0_range{10, 99};
  int ask_window_bound = 8;  // gate bits the episode remembers (>= window_h - 1)

  void validate() const;  // throws ConfigError
  std::string canonical_string() const;
};

// named taxonomy presets; scale < 1 leaves clean edges
std::array<double, kAskTypeCount> taxonomy_s3(double scale = 1.0);
std::array<double, kAskTypeCount> taxonomy_rq3(double scale = 1.0);

struct PipelineTask {
  std::string task_id;
  std::vector<std::string> chain;  // agent ids; chain[0] is the source
  std::int64_t ground_truth = 0;
  std::vector<std::string> payload_schema{"op", "ref", "value"};
  std::int64_t v0 = 0;
  struct EdgeOp {
    std::string kind;
    std::int64_t operand = 0;
    bool operator==(const EdgeOp&) const = default;
  };
  std::vector<EdgeOp> ops;  // clean op per edge

  int num_edges() const { return static_cast<int>(chain.size()) - 1; }
  bool operator==(const PipelineTask&) const = default;
};

struct Fault {
  ErrorType type = ErrorType::NONE;
  std::string dropped_field;    // DG
  std::string alias;            // RD
  std::int64_t sc_factor = 1;   // SC
  std::string wrong_kind;       // CG
  bool operator==(const Fault&) const = default;
};

struct FaultPlan {
  std::vector<std::optional<Fault>> per_edge;
  std::array<double, kAskTypeCount> injection_probabilities{};
  bool operator==(const FaultPlan&) const = default;
};

struct EpisodeState {
  PipelineTask task;
  FaultPlan plan;
  int cursor = 0;
  std::vector<int> residual_faults;      // injected-and-unresolved indicator per edge
  std::vector<int> ask_window;           // recent gate bits, FIFO
  std::int64_t tokens_spent = 0;
  std::int64_t latency_spent = 0;
  std::int64_t current_value = 0;        // value entering edge `cursor`
  std::vector<HistoryEntry> history;     // trailing window
  std::uint64_t episode_seed = 0;

  bool terminated() const { return cursor >= task.num_edges(); }
  bool operator==(const EpisodeState&) const = default;
};

struct GoldLabel {
  ErrorType error_type = ErrorType::NONE;
  std::string addressee;   // absent (empty) when NONE
  QuestionSpec question;   // absent (empty) when NONE
};

struct StepOutcome {
  std::optional<std::string> reply;
  int residual_flag = 0;  // n_{t+1}
  EpisodeState next;
};

class Environment {
 public:
  Environment(EnvConfig config, RewardConfig reward);

  // deterministic in (config, seed)
  EpisodeState reset(std::uint64_t seed) const;

  EdgeState emit_edge(const EpisodeState& episode) const;

  // Pure step: the caller keeps the old state, so group candidates can be
  // scored by branching and discarding.
  StepOutcome apply_action(const EpisodeState& episode, const Action& action) const;

  int terminal_score(const EpisodeState& episode) const;

  // oracle label for an edge this environment produced
  GoldLabel teacher_label(const EpisodeState& episode, const EdgeState& state) const;

  const EnvConfig& config() const { return config_; }
  const RewardConfig& reward_config() const { return reward_; }

  // payload of edge `t` after fault injection (before any clarification)
  Payload faulted_payload(const EpisodeState& episode, int t) const;

 private:
  Payload clean_payload(const EpisodeState& episode, int t) const;

  EnvConfig config_;
  RewardConfig reward_;
};

}  // namespace agentask
