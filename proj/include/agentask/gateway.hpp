#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentask/core.hpp"
#include "agentask/rollout.hpp"

namespace agentask {

// the clarifier instruction; prepended verbatim to every context block
extern const char* const kClarifierSystemPrompt;

struct ChatRequest {
  std::string endpoint;  // base URL (http://host:port[/prefix])
  std::string model;
  std::vector<std::pair<std::string, std::string>> messages;  // (role, content)
  double temperature = 0.0;  // deterministic decoding for reproduction
  int max_tokens = 256;
  int timeout_seconds = 30;
  int max_retries = 2;
  std::string api_key;        // sent as a bearer token when non-empty
  std::string wire_log_path;  // optional .jsonl mirror of request/response
};

struct ChatUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  bool estimated = false;  // true when the server omitted usage
};

struct ChatResponse {
  std::string content;
  int retry_count = 0;
  ChatUsage usage;
  double latency_seconds = 0.0;
};

struct ClarifierReply {
  std::string raw;
  std::optional<Action> parsed;  // present iff format_flag == 1
  int format_flag = 0;
};

// system prompt followed by the fixed-template context block; byte-stable
std::string render_clarifier_prompt(const EdgeState& state);

// schema-validates and maps the reply; malformed replies are data, never errors
ClarifierReply parse_clarifier_reply(const std::string& text, int cap);

// one chat-completions call with idempotent retries on transport errors
ChatResponse chat_roundtrip(const ChatRequest& request);

// rollout policy backed by a live clarifier endpoint (opt-in; never on the
// primary test path)
class GatewayPolicy : public RolloutPolicy {
 public:
  GatewayPolicy(ChatRequest request_template, int token_cap)
      : request_(std::move(request_template)), token_cap_(token_cap) {}

  std::string name() const override { return "gateway:" + request_.model; }
  SampledAction act(const Environment& env, const EpisodeState& episode, const EdgeState& state,
                    RandomStream& rng) const override;

 private:
  ChatRequest request_;
  int token_cap_;
};

}  // namespace agentask
