#include "agentask/core.hpp"

#include <array>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "agentask/errors.hpp"
#include "core_json.hpp"
#include "json.hpp"

namespace agentask {

using nlohmann::json;

const std::string& error_type_tag(ErrorType t) {
  static const std::array<std::string, 5> tags = {"DG", "RD", "SC", "CG", "NONE"};
  return tags[static_cast<int>(t)];
}

std::optional<ErrorType> error_type_from_tag(const std::string& tag) {
  for (int i = 0; i < kTypeCount; ++i) {
    if (error_type_tag(static_cast<ErrorType>(i)) == tag) return static_cast<ErrorType>(i);
  }
  return std::nullopt;
}

int whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  int n = 0;
  while (in >> tok) ++n;
  return n;
}

void RewardConfig::validate() const {
  if (window_h < 1) throw ConfigError("window_h must be >= 1");
  if (budget_b < 1) throw ConfigError("budget_b must be >= 1");
  if (token_cap < 1) throw ConfigError("token_cap must be >= 1");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must be in (0,1)");
  if (beta_kl < 0.0 || lambda_r < 0.0) throw ConfigError("beta_kl/lambda_r must be >= 0");
  if (alpha_eff < Rational(0) || lambda_sw < Rational(0) || alpha_fmt < Rational(0) ||
      alpha_ans < Rational(0)) {
    throw ConfigError("reward coefficients must be >= 0");
  }
}

int validate_schema(const std::string& text, int cap) {
  if (cap <= 0) return 0;
  const json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return 0;
  if (j.size() != 3 || !j.contains("type") || !j.contains("to_agent") || !j.contains("question")) {
    return 0;
  }
  if (!j["type"].is_string() || !j["question"].is_string()) return 0;
  const auto type = error_type_from_tag(j["type"].get<std::string>());
  if (!type) return 0;
  const std::string question = j["question"].get<std::string>();
  if (*type == ErrorType::NONE) {
    return (j["to_agent"].is_null() && question.empty()) ? 1 : 0;
  }
  if (!j["to_agent"].is_string() || j["to_agent"].get<std::string>().empty()) return 0;
  if (question.empty()) return 0;
  return whitespace_tokens(question) <= cap ? 1 : 0;
}

std::string canonical_clarifier_json(const Action& action) {
  json j;
  j["type"] = error_type_tag(action.error_type);
  if (action.gate()) {
    j["to_agent"] = action.addressee;
    j["question"] = action.question.rendered;
  } else {
    j["to_agent"] = nullptr;
    j["question"] = "";
  }
  return j.dump();
}

// --- codec -------------------------------------------------------------

namespace detail {
void reject_unknown_fields(const json& j, std::initializer_list<const char*> known,
                           std::size_t lineno, const char* what) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw TraceParseError(lineno, std::string(what) + " has unknown field \"" + item.key() + "\"");
    }
  }
}
}  // namespace detail

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, std::size_t lineno,
                    const char* what) {
  detail::reject_unknown_fields(j, known, lineno, what);
}

const json& need(const json& j, const char* key, std::size_t lineno, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw TraceParseError(lineno, std::string(what) + " missing field \"" + key + "\"");
  }
  return *it;
}

std::string need_str(const json& j, const char* key, std::size_t lineno, const char* what) {
  const json& v = need(j, key, lineno, what);
  if (!v.is_string()) throw TraceParseError(lineno, std::string(what) + "." + key + " not a string");
  return v.get<std::string>();
}

std::int64_t need_int(const json& j, const char* key, std::size_t lineno, const char* what) {
  const json& v = need(j, key, lineno, what);
  if (!v.is_number_integer())
    throw TraceParseError(lineno, std::string(what) + "." + key + " not an integer");
  return v.get<std::int64_t>();
}

Rational need_rational(const json& j, const char* key, std::size_t lineno, const char* what) {
  const std::string s = need_str(j, key, lineno, what);
  try {
    return Rational::parse(s);
  } catch (const std::exception&) {
    throw TraceParseError(lineno, std::string(what) + "." + key + " not a rational");
  }
}

ErrorType need_type(const json& j, const char* key, std::size_t lineno, const char* what) {
  const auto t = error_type_from_tag(need_str(j, key, lineno, what));
  if (!t) throw TraceParseError(lineno, std::string(what) + "." + key + " unknown tag");
  return *t;
}

json history_to_json(const HistoryEntry& h) {
  json j;
  j["step_index"] = h.step_index;
  j["message"] = h.message;
  j["gate"] = h.gate;
  j["error_type"] = error_type_tag(h.error_type);
  j["addressee"] = h.addressee;
  j["reply"] = h.reply;
  j["residual_flag"] = h.residual_flag;
  return j;
}

HistoryEntry history_from_json(const json& j, std::size_t lineno) {
  reject_unknown(j, {"step_index", "message", "gate", "error_type", "addressee", "reply",
                     "residual_flag"},
                 lineno, "history entry");
  HistoryEntry h;
  h.step_index = static_cast<int>(need_int(j, "step_index", lineno, "history"));
  h.message = need_str(j, "message", lineno, "history");
  h.gate = static_cast<int>(need_int(j, "gate", lineno, "history"));
  h.error_type = need_type(j, "error_type", lineno, "history");
  h.addressee = need_str(j, "addressee", lineno, "history");
  h.reply = need_str(j, "reply", lineno, "history");
  h.residual_flag = static_cast<int>(need_int(j, "residual_flag", lineno, "history"));
  return h;
}

}  // namespace

namespace detail {

json state_to_json(const EdgeState& s) {
  json j;
  j["query"] = s.query;
  j["sender"] = s.sender;
  j["receiver"] = s.receiver;
  j["message"] = s.message;
  json hist = json::array();
  for (const auto& h : s.history) hist.push_back(history_to_json(h));
  j["history"] = hist;
  j["step_index"] = s.step_index;
  j["budget_remaining"] = s.budget_remaining;
  return j;
}

EdgeState state_from_json(const json& j, std::size_t lineno) {
  reject_unknown(j, {"query", "sender", "receiver", "message", "history", "step_index",
                     "budget_remaining"},
                 lineno, "state");
  EdgeState s;
  s.query = need_str(j, "query", lineno, "state");
  s.sender = need_str(j, "sender", lineno, "state");
  s.receiver = need_str(j, "receiver", lineno, "state");
  s.message = need_str(j, "message", lineno, "state");
  const json& hist = need(j, "history", lineno, "state");
  if (!hist.is_array()) throw TraceParseError(lineno, "state.history not an array");
  for (const auto& h : hist) s.history.push_back(history_from_json(h, lineno));
  s.step_index = static_cast<int>(need_int(j, "step_index", lineno, "state"));
  s.budget_remaining = need_int(j, "budget_remaining", lineno, "state");
  return s;
}

json question_to_json(const QuestionSpec& q) {
  json j;
  j["template_id"] = q.template_id;
  j["slots"] = q.slots;
  j["rendered"] = q.rendered;
  j["token_count"] = q.token_count;
  return j;
}

QuestionSpec question_from_json(const json& q, std::size_t lineno) {
  reject_unknown(q, {"template_id", "slots", "rendered", "token_count"}, lineno, "question");
  QuestionSpec out;
  out.template_id = need_str(q, "template_id", lineno, "question");
  const json& slots = need(q, "slots", lineno, "question");
  if (!slots.is_array()) throw TraceParseError(lineno, "question.slots not an array");
  for (const auto& s : slots) {
    if (!s.is_string()) throw TraceParseError(lineno, "question slot not a string");
    out.slots.push_back(s.get<std::string>());
  }
  out.rendered = need_str(q, "rendered", lineno, "question");
  out.token_count = static_cast<int>(need_int(q, "token_count", lineno, "question"));
  return out;
}

}  // namespace detail

namespace {

json action_to_json(const Action& a) {
  json j;
  j["error_type"] = error_type_tag(a.error_type);
  if (a.gate()) {
    j["addressee"] = a.addressee;
    j["question"] = detail::question_to_json(a.question);
  }
  return j;
}

Action action_from_json(const json& j, std::size_t lineno) {
  reject_unknown(j, {"error_type", "addressee", "question"}, lineno, "action");
  Action a;
  a.error_type = need_type(j, "error_type", lineno, "action");
  if (a.error_type == ErrorType::NONE) {
    if (j.contains("addressee") || j.contains("question")) {
      throw TraceParseError(lineno, "NONE action must not carry addressee/question");
    }
    return a;
  }
  a.addressee = need_str(j, "addressee", lineno, "action");
  a.question = detail::question_from_json(need(j, "question", lineno, "action"), lineno);
  return a;
}

json record_to_json(const EdgeRecord& r) {
  json j;
  j["state"] = detail::state_to_json(r.state);
  j["action"] = action_to_json(r.action);
  if (r.reply) j["reply"] = *r.reply;
  j["residual_flag"] = r.residual_flag;
  j["counter"] = r.counter;
  json rw;
  rw["r_eff"] = r.rewards.r_eff.to_string();
  rw["r_par"] = r.rewards.r_par.to_string();
  rw["r_fmt"] = r.rewards.r_fmt.to_string();
  rw["r_edge"] = r.rewards.r_edge.to_string();
  j["rewards"] = rw;
  j["latency_units"] = r.latency_units;
  j["cost_tokens"] = r.cost_tokens;
  if (r.gold_type) j["gold_type"] = error_type_tag(*r.gold_type);
  return j;
}

EdgeRecord record_from_json(const json& j, std::size_t lineno) {
  reject_unknown(j, {"state", "action", "reply", "residual_flag", "counter", "rewards",
                     "latency_units", "cost_tokens", "gold_type"},
                 lineno, "record");
  EdgeRecord r;
  r.state = detail::state_from_json(need(j, "state", lineno, "record"), lineno);
  r.action = action_from_json(need(j, "action", lineno, "record"), lineno);
  if (j.contains("reply")) {
    if (!j["reply"].is_string()) throw TraceParseError(lineno, "record.reply not a string");
    r.reply = j["reply"].get<std::string>();
  }
  if (r.action.gate() != r.reply.has_value()) {
    throw TraceParseError(lineno, "reply must be present iff the action asks");
  }
  r.residual_flag = static_cast<int>(need_int(j, "residual_flag", lineno, "record"));
  r.counter = static_cast<int>(need_int(j, "counter", lineno, "record"));
  const json& rw = need(j, "rewards", lineno, "record");
  reject_unknown(rw, {"r_eff", "r_par", "r_fmt", "r_edge"}, lineno, "rewards");
  r.rewards.r_eff = need_rational(rw, "r_eff", lineno, "rewards");
  r.rewards.r_par = need_rational(rw, "r_par", lineno, "rewards");
  r.rewards.r_fmt = need_rational(rw, "r_fmt", lineno, "rewards");
  r.rewards.r_edge = need_rational(rw, "r_edge", lineno, "rewards");
  r.latency_units = static_cast<int>(need_int(j, "latency_units", lineno, "record"));
  r.cost_tokens = need_int(j, "cost_tokens", lineno, "record");
  if (j.contains("gold_type")) r.gold_type = need_type(j, "gold_type", lineno, "record");
  return r;
}

json parse_object(const std::string& line, std::size_t lineno) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw TraceParseError(lineno, "not a JSON object");
  return j;
}

}  // namespace

std::vector<std::string> encode_trace(const Trajectory& t) {
  std::vector<std::string> lines;
  lines.reserve(t.records.size() + 2);
  json header;
  header["version"] = kTraceVersion;
  header["kind"] = "agentask-trace";
  if (!t.config_hash.empty()) header["config_hash"] = t.config_hash;
  if (!t.policy_name.empty()) header["policy"] = t.policy_name;
  lines.push_back(header.dump());
  for (const auto& r : t.records) lines.push_back(record_to_json(r).dump());
  json terminal;
  terminal["terminal_score"] = t.terminal_score;
  terminal["terminal_reward"] = t.terminal_reward.to_string();
  terminal["episode_seed"] = t.episode_seed;
  lines.push_back(terminal.dump());
  return lines;
}

Trajectory decode_trace(const std::vector<std::string>& lines, std::size_t line_offset) {
  if (lines.size() < 2) {
    throw TraceParseError(line_offset + 1, "trace needs a header and a terminal line");
  }
  const std::size_t header_no = line_offset + 1;
  json header = parse_object(lines[0], header_no);
  reject_unknown(header, {"version", "kind", "config_hash", "policy"}, header_no, "header");
  const std::int64_t version = need_int(header, "version", header_no, "header");
  if (version != kTraceVersion) {
    throw TraceVersionError("expected version " + std::to_string(kTraceVersion) + ", got " +
                            std::to_string(version));
  }
  if (need_str(header, "kind", header_no, "header") != "agentask-trace") {
    throw TraceParseError(header_no, "header kind is not \"agentask-trace\"");
  }
  Trajectory t;
  if (header.contains("config_hash")) t.config_hash = header["config_hash"].get<std::string>();
  if (header.contains("policy")) t.policy_name = header["policy"].get<std::string>();

  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const std::size_t lineno = line_offset + i + 1;
    t.records.push_back(record_from_json(parse_object(lines[i], lineno), lineno));
  }
  const std::size_t term_no = line_offset + lines.size();
  json terminal = parse_object(lines.back(), term_no);
  reject_unknown(terminal, {"terminal_score", "terminal_reward", "episode_seed"}, term_no,
                 "terminal");
  t.terminal_score = static_cast<int>(need_int(terminal, "terminal_score", term_no, "terminal"));
  t.terminal_reward = need_rational(terminal, "terminal_reward", term_no, "terminal");
  t.episode_seed = need_int(terminal, "episode_seed", term_no, "terminal");
  return t;
}

void write_trace_file(const std::string& path, const std::vector<Trajectory>& trajectories) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open trace file for writing: " + path);
  for (const auto& t : trajectories) {
    for (const auto& line : encode_trace(t)) out << line << '\n';
  }
}

std::vector<Trajectory> read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file: " + path);
  std::vector<Trajectory> out;
  std::vector<std::string> block;
  std::size_t block_start = 0;
  std::size_t lineno = 0;
  std::string line;
  auto flush = [&]() {
    if (!block.empty()) {
      out.push_back(decode_trace(block, block_start));
      block.clear();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    // a header line starts a new trajectory block
    if (line.find("\"agentask-trace\"") != std::string::npos &&
        line.find("\"version\"") != std::string::npos) {
      flush();
      block_start = lineno - 1;
    } else if (block.empty()) {
      throw TraceParseError(lineno, "expected a trace header line");
    }
    block.push_back(line);
  }
  flush();
  return out;
}

}  // namespace agentask
