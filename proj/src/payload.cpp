#include "agentask/payload.hpp"

#include <sstream>
#include <vector>

namespace agentask {

namespace {

std::vector<std::pair<std::string, std::string>> key_value_tokens(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) continue;
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

std::optional<std::int64_t> to_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void set_field(Payload& p, const std::string& key, const std::string& value) {
  if (key == "op") {
    const auto colon = value.find(':');
    if (colon == std::string::npos) return;
    const auto operand = to_int(value.substr(colon + 1));
    if (!operand) return;
    p.op_kind = value.substr(0, colon);
    p.operand = *operand;
  } else if (key == "ref") {
    p.ref = value;
  } else if (key == "value") {
    const auto v = to_int(value);
    if (v) p.value = *v;
  }
}

}  // namespace

Payload parse_payload(const std::string& message) {
  Payload p;
  for (const auto& [k, v] : key_value_tokens(message)) set_field(p, k, v);
  return p;
}

std::string render_payload(const Payload& p) {
  std::string out;
  auto append = [&out](const std::string& tok) {
    if (!out.empty()) out += ' ';
    out += tok;
  };
  if (p.op_kind) append("op=" + *p.op_kind + ":" + std::to_string(p.operand.value_or(0)));
  if (p.ref) append("ref=" + *p.ref);
  if (p.value) append("value=" + std::to_string(*p.value));
  return out;
}

std::string role_of(const std::string& agent_id) {
  const auto dot = agent_id.find('.');
  return dot == std::string::npos ? agent_id : agent_id.substr(0, dot);
}

bool known_role(const std::string& role) {
  return role == "user" || role == "adder" || role == "scaler";
}

bool role_can(const std::string& role, const std::string& op_kind) {
  if (role == "adder") return op_kind == "add";
  if (role == "scaler") return op_kind == "mul";
  return false;
}

std::int64_t apply_op(const std::string& kind, std::int64_t operand, std::int64_t x) {
  if (kind == "add") return x + operand;
  if (kind == "mul") return x * operand;
  return x;
}

std::string expected_symbol(int step_index) { return "x" + std::to_string(step_index); }

Payload apply_reply_overrides(Payload p, const std::string& reply) {
  for (const auto& [k, v] : key_value_tokens(reply)) set_field(p, k, v);
  return p;
}

// Guessed stand-in for an unknown or misbound input. Kept at 1 so every
// lineage stays positive and a multiplicative corruption never maps a value
// onto itself.
constexpr std::int64_t kFallbackValue = 1;

std::int64_t eval_payload(const Payload& p, const std::string& receiver_role, int step_index) {
  if (!p.op_kind || !p.operand) return p.value.value_or(kFallbackValue);  // nothing to apply
  if (!p.value) return apply_op(*p.op_kind, *p.operand, kFallbackValue);  // unknown input
  if (!p.ref || *p.ref != expected_symbol(step_index)) {
    return apply_op(*p.op_kind, *p.operand, kFallbackValue);              // misbound input
  }
  if (!role_can(receiver_role, *p.op_kind)) return *p.value;              // incapable receiver
  return apply_op(*p.op_kind, *p.operand, *p.value);
}

std::optional<std::int64_t> query_start(const std::string& query) {
  for (const auto& [k, v] : key_value_tokens(query)) {
    if (k == "start") return to_int(v);
  }
  return std::nullopt;
}

std::optional<std::string> query_task_id(const std::string& query) {
  for (const auto& [k, v] : key_value_tokens(query)) {
    if (k == "task") return v;
  }
  return std::nullopt;
}

}  // namespace agentask
