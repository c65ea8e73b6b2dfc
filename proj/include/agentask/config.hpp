#pragma once

#include <string>

#include "agentask/core.hpp"
#include "agentask/egrpo.hpp"
#include "agentask/env.hpp"
#include "agentask/gateway.hpp"
#include "agentask/policy.hpp"
#include "agentask/sft.hpp"

namespace agentask {

// Single config file with one section per module; CLI flags override
// individual keys. The canonical hash is embedded in every output artifact.
struct AppConfig {
  EnvConfig env;
  RewardConfig reward;
  int feature_dim = 16;
  SftConfig sft;
  TrainConfig train;
  int eval_episodes = 200;
  struct Gateway {
    std::string endpoint;
    std::string model = "clarifier";
    std::string api_key;
    int max_tokens = 256;
    int timeout_seconds = 30;
    int max_retries = 2;
    std::string wire_log;
  } gateway;

  std::string hash() const;  // canonical content hash
  Featurizer make_featurizer() const;
  Environment make_environment() const;
};

AppConfig parse_app_config(const std::string& json_text);
AppConfig load_app_config(const std::string& path);  // empty path -> defaults
std::string dump_app_config(const AppConfig& config);

}  // namespace agentask
