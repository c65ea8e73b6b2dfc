#include "agentask/gateway.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "agentask/errors.hpp"
#include "agentask/templates.hpp"
#include "httplib.h"
#include "json.hpp"

namespace agentask {

using nlohmann::json;

const char* const kClarifierSystemPrompt =
    "You are AgentAsk, an edge-level clarifier between two agents. Your job is to decide "
    "whether a minimal clarification should be asked before the message is handed off, so that "
    "small mistakes do not spread. If you do ask, decide what to ask, whom to ask (sender or "
    "receiver), and write one short, concrete question. Keep it brief and low-cost. Do not "
    "change the overall workflow.\n"
    "\n"
    "Use the following error taxonomy when asking. Choose one type if you decide to ask; if no "
    "clarification is needed, set type=\"NONE\" and leave the question empty.\n"
    "\n"
    "DG — Data Gap\n"
    "Some required detail is missing, and the next agent would have to guess.\n"
    "Signals: missing boundary cases; absent IDs, keys, or columns; unclear ranges or formats; "
    "placeholders.\n"
    "How to ask: request the smallest missing piece in one short question.\n"
    "Who to ask: usually the sender.\n"
    "Do not ask: when the value is obvious from context or does not affect the outcome.\n"
    "\n"
    "SC — Signal Corruption\n"
    "An intermediate value, unit, scale, or structure is wrong or malformed and may be copied "
    "forward as truth.\n"
    "Signals: unit mismatch; off-by-one indices; broken JSON or tables; inconsistent time "
    "zones; impossible magnitudes.\n"
    "How to ask: point to the exact field or structure and confirm or repair it.\n"
    "Who to ask: usually the sender; the receiver if they must choose a canonical unit.\n"
    "Do not ask: when downstream already normalizes it deterministically.\n"
    "\n"
    "RD — Referential Drift\n"
    "Names or symbols do not refer to the same thing across turns, so agents bind to different "
    "entities.\n"
    "Signals: pronouns like it or they; reused symbols without scope; conflicting aliases; "
    "index shifts; unlabeled columns.\n"
    "How to ask: fix a single binding with a clear choice.\n"
    "Who to ask: usually the sender; the receiver if they must commit to a binding for later "
    "steps.\n"
    "Do not ask: when the binding is unambiguous from nearby context.\n"
    "\n"
    "CG — Capability Gap\n"
    "The current addressee lacks the skill or role to complete the step.\n"
    "Signals: narrative text where computation is needed; missing tool access; math or code "
    "assigned to a planner; required API not available.\n"
    "How to ask: propose a minimal reroute or ask for the needed computation in one line.\n"
    "Who to ask: the receiver if they must accept the reroute; otherwise, the sender to reissue "
    "with the right role.\n"
    "Do not ask: when a tiny hint lets the current role finish; in that case consider DG, RD, "
    "or SC first.\n"
    "\n"
    "NONE — no ask\n"
    "Choose NONE when a single short question will not meaningfully reduce uncertainty, when "
    "the handoff is already sufficient, when policy or privacy would block the question, or "
    "when the next agent can fix it deterministically without new information. When using "
    "NONE, set to_agent to null and leave question empty. Output only the required JSON.";

std::string render_clarifier_prompt(const EdgeState& state) {
  std::ostringstream out;
  out << kClarifierSystemPrompt << "\n\n";
  out << "query: " << state.query << "\n";
  out << "sender: " << state.sender << "\n";
  out << "receiver: " << state.receiver << "\n";
  out << "message: " << state.message << "\n";
  if (state.history.empty()) {
    out << "history: none\n";
  } else {
    for (const auto& h : state.history) {
      out << "history: step " << h.step_index << " | " << h.message << " | ask="
          << (h.gate ? error_type_tag(h.error_type) : "none") << " | reply="
          << (h.reply.empty() ? "none" : h.reply) << "\n";
    }
  }
  return out.str();
}

ClarifierReply parse_clarifier_reply(const std::string& text, int cap) {
  ClarifierReply reply;
  reply.raw = text;
  reply.format_flag = validate_schema(text, cap);
  if (reply.format_flag != 1) return reply;
  const json j = json::parse(text);
  Action action;
  action.error_type = *error_type_from_tag(j["type"].get<std::string>());
  if (action.gate()) {
    action.addressee = j["to_agent"].get<std::string>();
    const std::string q = j["question"].get<std::string>();
    action.question.template_id = kFreeformTemplateId;
    action.question.rendered = q;
    action.question.token_count = whitespace_tokens(q);
  }
  reply.parsed = action;
  return reply;
}

namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) return {endpoint, ""};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

void wire_log(const std::string& path, const json& entry) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (out) out << entry.dump() << '\n';
}

}  // namespace

ChatResponse chat_roundtrip(const ChatRequest& request) {
  if (request.endpoint.empty()) throw GatewayError("no endpoint configured");
  const auto [base, prefix] = split_endpoint(request.endpoint);
  const std::string path = prefix + "/v1/chat/completions";

  json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  json messages = json::array();
  for (const auto& [role, content] : request.messages) {
    messages.push_back({{"role", role}, {"content", content}});
  }
  body["messages"] = messages;
  const std::string body_text = body.dump();

  httplib::Client client(base);
  client.set_connection_timeout(request.timeout_seconds, 0);
  client.set_read_timeout(request.timeout_seconds, 0);
  httplib::Headers headers;
  if (!request.api_key.empty()) headers.emplace("Authorization", "Bearer " + request.api_key);

  const auto t0 = std::chrono::steady_clock::now();
  httplib::Result res(nullptr, httplib::Error::Unknown);
  int attempts = 0;
  for (; attempts <= request.max_retries; ++attempts) {
    res = client.Post(path, headers, body_text, "application/json");
    if (res && res->status < 500) break;  // transport failures and 5xx retry
  }
  const auto t1 = std::chrono::steady_clock::now();

  ChatResponse out;
  out.retry_count = std::min(attempts, request.max_retries);
  out.latency_seconds = std::chrono::duration<double>(t1 - t0).count();
  if (!res) {
    wire_log(request.wire_log_path,
             {{"request", body}, {"error", "transport failure"}, {"attempts", attempts + 1}});
    throw GatewayError("transport failure after retries", 0);
  }
  if (res->status != 200) {
    wire_log(request.wire_log_path,
             {{"request", body}, {"status", res->status}, {"body", res->body}});
    throw GatewayError("HTTP " + std::to_string(res->status), res->status);
  }

  const json resp = json::parse(res->body, nullptr, false);
  if (resp.is_discarded() || !resp.contains("choices") || resp["choices"].empty() ||
      !resp["choices"][0].contains("message")) {
    throw GatewayError("malformed chat-completions response");
  }
  out.content = resp["choices"][0]["message"].value("content", "");
  if (resp.contains("usage") && resp["usage"].contains("prompt_tokens") &&
      resp["usage"].contains("completion_tokens")) {
    out.usage.prompt_tokens = resp["usage"]["prompt_tokens"].get<int>();
    out.usage.completion_tokens = resp["usage"]["completion_tokens"].get<int>();
  } else {
    // fall back to whitespace counts, flagged as estimated
    int prompt = 0;
    for (const auto& [role, content] : request.messages) prompt += whitespace_tokens(content);
    out.usage.prompt_tokens = prompt;
    out.usage.completion_tokens = whitespace_tokens(out.content);
    out.usage.estimated = true;
  }
  wire_log(request.wire_log_path, {{"request", body},
                                   {"status", res->status},
                                   {"response", res->body},
                                   {"retries", out.retry_count},
                                   {"latency_s", out.latency_seconds}});
  return out;
}

SampledAction GatewayPolicy::act(const Environment&, const EpisodeState&, const EdgeState& state,
                                 RandomStream&) const {
  SampledAction out;
  if (state.budget_remaining < min_ask_budget()) {
    out.budget_forced = true;
    return out;
  }
  ChatRequest req = request_;
  req.messages = {{"user", render_clarifier_prompt(state)}};
  const ChatResponse resp = chat_roundtrip(req);
  const ClarifierReply reply = parse_clarifier_reply(resp.content, token_cap_);
  if (!reply.parsed) return out;  // malformed output: deliver unchanged
  Action action = *reply.parsed;
  if (action.gate()) {
    if (action.addressee == "sender") action.addressee = state.sender;
    if (action.addressee == "receiver") action.addressee = state.receiver;
    if (action.addressee != state.sender && action.addressee != state.receiver) {
      return out;  // unaddressable ask: deliver unchanged
    }
  }
  out.action = std::move(action);
  return out;
}

}  // namespace agentask
