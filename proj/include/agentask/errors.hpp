#pragma once

#include <stdexcept>
#include <string>

namespace agentask {

// Exit-code mapping: usage=1, data=2, training=3 (see tools/agentask_main.cpp).

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error("data error: " + m) {}
};

// decode failures carry the 1-based line number
struct TraceParseError : std::runtime_error {
  TraceParseError(std::size_t line, const std::string& m)
      : std::runtime_error("trace parse error at line " + std::to_string(line) + ": " + m),
        line_number(line) {}
  std::size_t line_number;
};

struct TraceVersionError : std::runtime_error {
  explicit TraceVersionError(const std::string& m)
      : std::runtime_error("trace version error: " + m) {}
};

struct LifecycleError : std::logic_error {
  explicit LifecycleError(const std::string& m) : std::logic_error("lifecycle error: " + m) {}
};

struct ContractError : std::logic_error {
  explicit ContractError(const std::string& m) : std::logic_error("contract error: " + m) {}
};

struct UnknownEdgeError : std::logic_error {
  explicit UnknownEdgeError(const std::string& m) : std::logic_error("unknown edge: " + m) {}
};

struct TrainingAbort : std::runtime_error {
  explicit TrainingAbort(const std::string& m) : std::runtime_error("training aborted: " + m) {}
};

struct GatewayError : std::runtime_error {
  GatewayError(const std::string& m, int status = 0)
      : std::runtime_error("gateway error: " + m), http_status(status) {}
  int http_status;
};

}  // namespace agentask
