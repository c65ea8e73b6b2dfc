#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agentask/rational.hpp"

namespace agentask {

// Edge-level error taxonomy. NONE = pass the message through untouched.
enum class ErrorType { DG = 0, RD = 1, SC = 2, CG = 3, NONE = 4 };

constexpr int kAskTypeCount = 4;   // DG, RD, SC, CG
constexpr int kTypeCount = 5;      // + NONE

const std::string& error_type_tag(ErrorType t);
std::optional<ErrorType> error_type_from_tag(const std::string& tag);

// Number of non-empty whitespace-separated tokens; the cap is enforced on
// this count (model-free, deterministic).
int whitespace_tokens(const std::string& text);

// A schema-constrained question: template plus ordered slot fillers.
// `rendered` is the deterministic expansion of the template with the slots.
struct QuestionSpec {
  std::string template_id;
  std::vector<std::string> slots;
  std::string rendered;
  int token_count = 0;

  bool operator==(const QuestionSpec&) const = default;
};

// The controller's structured action (z, v-tilde, q). The ask gate is
// derived: z=1 iff error_type != NONE, so there is no separate gate field
// to fall out of sync.
struct Action {
  ErrorType error_type = ErrorType::NONE;
  std::string addressee;  // agent id; meaningful only when gate()
  QuestionSpec question;  // meaningful only when gate()

  bool gate() const { return error_type != ErrorType::NONE; }

  bool operator==(const Action&) const = default;
};

// Compact projection of a processed edge kept in EdgeState::history.
// Carries what downstream featurization needs (message, ask outcome,
// residual) without nesting whole records recursively.
struct HistoryEntry {
  int step_index = 0;
  std::string message;
  int gate = 0;
  ErrorType error_type = ErrorType::NONE;
  std::string addressee;
  std::string reply;
  int residual_flag = 0;

  bool operator==(const HistoryEntry&) const = default;
};

// The handoff context x_t: everything the clarifier may look at.
struct EdgeState {
  std::string query;    // user query / current subgoal
  std::string sender;   // u_t
  std::string receiver; // v_t
  std::string message;  // m_t, candidate payload
  std::vector<HistoryEntry> history;  // h_t, bounded
  int step_index = 0;
  std::int64_t budget_remaining = 0;

  bool operator==(const EdgeState&) const = default;
};

struct RewardBreakdown {
  Rational r_eff;
  Rational r_par;
  Rational r_fmt;
  Rational r_edge;

  bool operator==(const RewardBreakdown&) const = default;
};

struct EdgeRecord {
  EdgeState state;
  Action action;
  std::optional<std::string> reply;  // present iff action.gate()
  int residual_flag = 0;             // n_{t+1}
  int counter = 0;                   // c_t
  RewardBreakdown rewards;
  int latency_units = 0;
  std::int64_t cost_tokens = 0;
  // injected fault, written in simulator mode so audits never have to guess
  std::optional<ErrorType> gold_type;

  bool operator==(const EdgeRecord&) const = default;
};

struct Trajectory {
  std::vector<EdgeRecord> records;
  int terminal_score = 0;        // s
  Rational terminal_reward;      // R = alpha_ans * s
  std::int64_t episode_seed = 0;
  std::string config_hash;       // embedded in the trace header
  std::string policy_name;

  bool operator==(const Trajectory&) const = default;
};

// Coefficients and knobs of the shaped-reward / E-GRPO stage. Reward
// coefficients are exact rationals; optimizer-side knobs are doubles.
struct RewardConfig {
  Rational alpha_eff{1};
  Rational lambda_sw{2, 5};  // 0.4
  Rational alpha_fmt{1, 10}; // 0.1
  Rational alpha_ans{1};
  int window_h = 3;
  std::int64_t budget_b = 256;
  double clip_eps = 0.2;
  double beta_kl = 0.02;
  double lambda_r = 0.5;
  int token_cap = 40;

  void validate() const;  // throws ConfigError
};

// Format flag F_t. Returns 1 iff `text` is a single JSON object with exactly
// the fields type/to_agent/question, the type tag is known, NONE goes with a
// null addressee and an empty question, and an ask question is non-empty and
// within the token cap. Total: malformed input yields 0, never a throw.
int validate_schema(const std::string& text, int cap);

// The JSON object form of an action, as a clarifier would have to emit it.
// A NONE action serializes to {"type":"NONE","to_agent":null,"question":""}.
std::string canonical_clarifier_json(const Action& action);

// --- trace codec -----------------------------------------------------------
//
// Line-delimited JSON, strict: header line, one line per edge record, one
// terminal line. Unknown fields are rejected by name; a bad version is a
// distinct error.

constexpr int kTraceVersion = 1;

std::vector<std::string> encode_trace(const Trajectory& trajectory);

// Decodes exactly one trajectory. `line_offset` shifts reported line numbers
// when the lines come from the middle of a file.
Trajectory decode_trace(const std::vector<std::string>& lines, std::size_t line_offset = 0);

// Whole-file helpers; a file is a concatenation of encoded trajectories.
void write_trace_file(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_trace_file(const std::string& path);

}  // namespace agentask
