#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace agentask {

// Message grammar of the arithmetic relay: payloads are space-separated
// key=value tokens over the required fields {op, ref, value}.
//   op    "add:7" or "mul:3" — what the receiver must apply
//   ref   symbol naming the incoming value; the clean lineage is x0, x1, ...
//   value the number itself
struct Payload {
  std::optional<std::string> op_kind;
  std::optional<std::int64_t> operand;
  std::optional<std::string> ref;
  std::optional<std::int64_t> value;
};

Payload parse_payload(const std::string& message);
std::string render_payload(const Payload& p);

// agent ids are "<role>.<index>"; roles: user (source), adder {add}, scaler {mul}
std::string role_of(const std::string& agent_id);
bool known_role(const std::string& role);
bool role_can(const std::string& role, const std::string& op_kind);

std::int64_t apply_op(const std::string& kind, std::int64_t operand, std::int64_t x);

// clean symbol for the value entering edge `step_index`
std::string expected_symbol(int step_index);

// replies can restore payload fields ("supplied op=add:7", "corrected value=42")
Payload apply_reply_overrides(Payload p, const std::string& reply);

// What the receiving agent computes from a delivered payload. This is the
// damage model: missing or misbound pieces degrade deterministically, and an
// incapable receiver passes the value through.
std::int64_t eval_payload(const Payload& p, const std::string& receiver_role, int step_index);

// query grammar: "task=<id> start=<v0> required=op,ref,value"
std::optional<std::int64_t> query_start(const std::string& query);
std::optional<std::string> query_task_id(const std::string& query);

}  // namespace agentask
