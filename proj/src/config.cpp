#include "agentask/config.hpp"

#include <fstream>

#include "agentask/errors.hpp"
#include "agentask/hashing.hpp"
#include "json.hpp"

namespace agentask {

using nlohmann::json;

namespace {

Rational rational_from_json(const json& j, const char* key) {
  try {
    if (j.is_number_integer()) return Rational(j.get<std::int64_t>());
    if (j.is_string()) return Rational::parse(j.get<std::string>());
    if (j.is_number_float()) {
      // nlohmann dumps the shortest round-trip decimal, e.g. 0.4 -> "0.4"
      const std::string text = j.dump();
      if (text.find('e') != std::string::npos || text.find('E') != std::string::npos) {
        throw ConfigError(std::string(key) + ": use a decimal string for this coefficient");
      }
      return Rational::parse(text);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + " is not a rational value");
}

std::array<double, kAskTypeCount> probabilities_from_json(const json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "s3") return taxonomy_s3();
    if (name == "rq3") return taxonomy_rq3();
    throw ConfigError("unknown taxonomy preset: " + name);
  }
  if (j.is_object() && j.contains("preset")) {
    const std::string name = j.at("preset").get<std::string>();
    const double scale = j.value("scale", 1.0);
    if (name == "s3") return taxonomy_s3(scale);
    if (name == "rq3") return taxonomy_rq3(scale);
    throw ConfigError("unknown taxonomy preset: " + name);
  }
  if (j.is_object()) {
    std::array<double, kAskTypeCount> out{};
    out[0] = j.value("DG", 0.0);
    out[1] = j.value("RD", 0.0);
    out[2] = j.value("SC", 0.0);
    out[3] = j.value("CG", 0.0);
    return out;
  }
  throw ConfigError("injection_probabilities must be a preset or a per-type object");
}

template <typename T>
std::pair<T, T> range_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string(key) + " must be a two-element array");
  }
  return {j[0].get<T>(), j[1].get<T>()};
}

void parse_env(const json& j, EnvConfig& env) {
  if (j.contains("chain_length_range")) {
    env.chain_length_range = range_from_json<int>(j["chain_length_range"], "chain_length_range");
  }
  if (j.contains("injection_probabilities")) {
    env.injection_probabilities = probabilities_from_json(j["injection_probabilities"]);
  }
  if (j.contains("corruption_rule")) {
    const json& c = j["corruption_rule"];
    if (c.contains("sc_factors")) {
      env.sc_factors = c["sc_factors"].get<std::vector<std::int64_t>>();
    }
  }
  if (j.contains("history_bound")) env.history_bound = j["history_bound"].get<int>();
  if (j.contains("v0_range")) {
    env.v0_range = range_from_json<std::int64_t>(j["v0_range"], "v0_range");
  }
  if (j.contains("ask_window_bound")) env.ask_window_bound = j["ask_window_bound"].get<int>();
}

void parse_reward(const json& j, RewardConfig& r) {
  if (j.contains("alpha_eff")) r.alpha_eff = rational_from_json(j["alpha_eff"], "alpha_eff");
  if (j.contains("lambda_sw")) r.lambda_sw = rational_from_json(j["lambda_sw"], "lambda_sw");
  if (j.contains("alpha_fmt")) r.alpha_fmt = rational_from_json(j["alpha_fmt"], "alpha_fmt");
  if (j.contains("alpha_ans")) r.alpha_ans = rational_from_json(j["alpha_ans"], "alpha_ans");
  if (j.contains("window_h")) r.window_h = j["window_h"].get<int>();
  if (j.contains("budget_b")) r.budget_b = j["budget_b"].get<std::int64_t>();
  if (j.contains("clip_eps")) r.clip_eps = j["clip_eps"].get<double>();
  if (j.contains("beta_kl")) r.beta_kl = j["beta_kl"].get<double>();
  if (j.contains("lambda_r")) r.lambda_r = j["lambda_r"].get<double>();
  if (j.contains("token_cap")) r.token_cap = j["token_cap"].get<int>();
}

void parse_sft(const json& j, SftConfig& s) {
  if (j.contains("lr")) s.lr = j["lr"].get<double>();
  if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) s.batch_size = j["batch_size"].get<int>();
  if (j.contains("lambda_ask")) s.lambda_ask = j["lambda_ask"].get<double>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("patience")) s.patience = j["patience"].get<int>();
}

void parse_train(const json& j, TrainConfig& t) {
  if (j.contains("group_size")) t.group_size = j["group_size"].get<int>();
  if (j.contains("iterations")) t.iterations = j["iterations"].get<int>();
  if (j.contains("episodes_per_iter")) t.episodes_per_iter = j["episodes_per_iter"].get<int>();
  if (j.contains("lr")) t.lr = j["lr"].get<double>();
  if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("kl_ceiling")) t.kl_ceiling = j["kl_ceiling"].get<double>();
}

void parse_gateway(const json& j, AppConfig::Gateway& g) {
  if (j.contains("endpoint")) g.endpoint = j["endpoint"].get<std::string>();
  if (j.contains("model")) g.model = j["model"].get<std::string>();
  if (j.contains("api_key")) g.api_key = j["api_key"].get<std::string>();
  if (j.contains("max_tokens")) g.max_tokens = j["max_tokens"].get<int>();
  if (j.contains("timeout_seconds")) g.timeout_seconds = j["timeout_seconds"].get<int>();
  if (j.contains("max_retries")) g.max_retries = j["max_retries"].get<int>();
  if (j.contains("wire_log")) g.wire_log = j["wire_log"].get<std::string>();
}

}  // namespace

AppConfig parse_app_config(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config is not a JSON object");
  AppConfig app;
  if (j.contains("env")) parse_env(j["env"], app.env);
  if (j.contains("reward")) parse_reward(j["reward"], app.reward);
  if (j.contains("policy") && j["policy"].contains("feature_dim")) {
    app.feature_dim = j["policy"]["feature_dim"].get<int>();
  }
  if (j.contains("sft")) parse_sft(j["sft"], app.sft);
  if (j.contains("train")) parse_train(j["train"], app.train);
  if (j.contains("eval") && j["eval"].contains("episodes")) {
    app.eval_episodes = j["eval"]["episodes"].get<int>();
  }
  if (j.contains("gateway")) parse_gateway(j["gateway"], app.gateway);
  app.env.validate();
  app.reward.validate();
  return app;
}

AppConfig load_app_config(const std::string& path) {
  if (path.empty()) return AppConfig{};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_app_config(text);
}

std::string dump_app_config(const AppConfig& a) {
  json j;
  j["env"]["chain_length_range"] = {a.env.chain_length_range.first,
                                    a.env.chain_length_range.second};
  j["env"]["injection_probabilities"] = {{"DG", a.env.injection_probabilities[0]},
                                         {"RD", a.env.injection_probabilities[1]},
                                         {"SC", a.env.injection_probabilities[2]},
                                         {"CG", a.env.injection_probabilities[3]}};
  j["env"]["corruption_rule"]["sc_factors"] = a.env.sc_factors;
  j["env"]["history_bound"] = a.env.history_bound;
  j["env"]["v0_range"] = {a.env.v0_range.first, a.env.v0_range.second};
  j["env"]["ask_window_bound"] = a.env.ask_window_bound;
  j["reward"]["alpha_eff"] = a.reward.alpha_eff.to_string();
  j["reward"]["lambda_sw"] = a.reward.lambda_sw.to_string();
  j["reward"]["alpha_fmt"] = a.reward.alpha_fmt.to_string();
  j["reward"]["alpha_ans"] = a.reward.alpha_ans.to_string();
  j["reward"]["window_h"] = a.reward.window_h;
  j["reward"]["budget_b"] = a.reward.budget_b;
  j["reward"]["clip_eps"] = a.reward.clip_eps;
  j["reward"]["beta_kl"] = a.reward.beta_kl;
  j["reward"]["lambda_r"] = a.reward.lambda_r;
  j["reward"]["token_cap"] = a.reward.token_cap;
  j["policy"]["feature_dim"] = a.feature_dim;
  j["sft"]["lr"] = a.sft.lr;
  j["sft"]["epochs"] = a.sft.epochs;
  j["sft"]["batch_size"] = a.sft.batch_size;
  j["sft"]["lambda_ask"] = a.sft.lambda_ask;
  j["sft"]["seed"] = a.sft.seed;
  j["sft"]["patience"] = a.sft.patience;
  j["train"]["group_size"] = a.train.group_size;
  j["train"]["iterations"] = a.train.iterations;
  j["train"]["episodes_per_iter"] = a.train.episodes_per_iter;
  j["train"]["lr"] = a.train.lr;
  j["train"]["seed"] = a.train.seed;
  j["train"]["kl_ceiling"] = a.train.kl_ceiling;
  j["eval"]["episodes"] = a.eval_episodes;
  return j.dump(2);
}

std::string AppConfig::hash() const { return hex64(fnv1a64(dump_app_config(*this))); }

Featurizer AppConfig::make_featurizer() const {
  FeatureConfig fc;
  fc.dim = feature_dim;
  fc.history_bound = env.history_bound;
  fc.budget_b = reward.budget_b;
  fc.max_steps = env.chain_length_range.second;
  return Featurizer(fc);
}

Environment AppConfig::make_environment() const { return Environment(env, reward); }

}  // namespace agentask
