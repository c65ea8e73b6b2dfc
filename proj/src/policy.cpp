#include "agentask/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "agentask/errors.hpp"
#include "agentask/hashing.hpp"
#include "agentask/payload.hpp"
#include "agentask/templates.hpp"
#include "json.hpp"

namespace agentask {

using nlohmann::json;

std::string FeatureConfig::hash() const {
  std::string c = "dim=" + std::to_string(dim) + ";hist=" + std::to_string(history_bound) +
                  ";budget=" + std::to_string(budget_b) + ";steps=" + std::to_string(max_steps);
  return hex64(fnv1a64(c));
}

Featurizer::Featurizer(FeatureConfig config) : config_(config) {
  if (config_.dim < 16) throw ConfigError("feature dim must be >= 16");
  if (config_.history_bound < 1 || config_.max_steps < 1 || config_.budget_b < 1) {
    throw ConfigError("featurizer bounds must be positive");
  }
}

FeatureVector Featurizer::featurize(const EdgeState& x) const {
  const Payload p = parse_payload(x.message);
  const bool op_missing = !p.op_kind.has_value();
  const bool value_missing = !p.value.has_value();
  const bool ref_missing = !p.ref.has_value();

  const double consistency =
      (p.ref && *p.ref != expected_symbol(x.step_index)) ? 0.0 : 1.0;

  // expectation check against the delivered upstream payload (or the query's
  // start value at the first edge); inherited corruption stays consistent, so
  // this flags corruption entering at this edge
  double plausible = 1.0;
  if (p.value) {
    std::optional<std::int64_t> expected;
    if (x.step_index == 0) {
      expected = query_start(x.query);
    } else if (!x.history.empty() && x.history.back().step_index == x.step_index - 1) {
      const HistoryEntry& h = x.history.back();
      const Payload prev = apply_reply_overrides(parse_payload(h.message), h.reply);
      expected = eval_payload(prev, role_of(x.sender), h.step_index);
    }
    if (expected && *expected != *p.value) plausible = 0.0;
  }

  double cap_match = 1.0;
  if (p.op_kind) {
    const std::string role = role_of(x.receiver);
    if (known_role(role) && !role_can(role, *p.op_kind)) cap_match = 0.0;
  }

  int asks = 0;
  for (const auto& h : x.history) asks += h.gate;
  const int present = (op_missing ? 0 : 1) + (value_missing ? 0 : 1) + (ref_missing ? 0 : 1);

  FeatureVector f(static_cast<std::size_t>(config_.dim), 0.0);
  f[0] = 1.0;
  f[1] = (op_missing || value_missing || ref_missing) ? 1.0 : 0.0;
  f[2] = op_missing ? 1.0 : 0.0;
  f[3] = value_missing ? 1.0 : 0.0;
  f[4] = ref_missing ? 1.0 : 0.0;
  f[5] = consistency;
  f[6] = plausible;
  f[7] = cap_match;
  f[8] = static_cast<double>(asks) / static_cast<double>(config_.history_bound);
  f[9] = std::min(1.0, static_cast<double>(x.budget_remaining) /
                           static_cast<double>(config_.budget_b));
  f[10] = std::min(1.0, static_cast<double>(x.step_index) /
                            static_cast<double>(config_.max_steps));
  f[11] = std::min(1.0, static_cast<double>(x.history.size()) /
                            static_cast<double>(config_.history_bound));
  f[12] = x.history.empty() ? 0.0 : static_cast<double>(x.history.back().residual_flag);
  f[13] = static_cast<double>(present) / 3.0;
  f[14] = p.op_kind ? (*p.op_kind == "add" ? 1.0 : 0.0) : 0.5;
  f[15] = asks > 0 ? 1.0 : 0.0;
  return f;
}

std::string salient_slot(const EdgeState& state, ErrorType type) {
  const Payload p = parse_payload(state.message);
  switch (type) {
    case ErrorType::DG:
      if (!p.op_kind) return "op";
      if (!p.ref) return "ref";
      if (!p.value) return "value";
      return "op";
    case ErrorType::RD:
      if (p.ref && *p.ref != expected_symbol(state.step_index)) return *p.ref;
      return expected_symbol(state.step_index);
    case ErrorType::SC:
      return "value";
    case ErrorType::CG:
      return p.op_kind.value_or("op");
    default:
      return "";
  }
}

// --- parameter layout ----------------------------------------------------

PolicyParams PolicyParams::zeros(int feature_dim, const std::array<int, kAskTypeCount>& counts,
                                 const std::string& feature_hash,
                                 const std::string& template_hash) {
  PolicyParams p;
  p.feature_dim = feature_dim;
  p.template_counts = counts;
  p.feature_config_hash = feature_hash;
  p.template_library_hash = template_hash;
  p.w.assign(static_cast<std::size_t>(p.size()), 0.0);
  return p;
}

int PolicyParams::size() const {
  const int d = feature_dim;
  int s = kTypeCount * d + kTypeCount;          // type head
  s += 2 * (d + kTypeCount) + 2;                // addressee head
  for (int k = 0; k < kAskTypeCount; ++k) s += template_counts[k] * (d + 1);
  return s;
}

int PolicyParams::type_w(int row, int col) const { return row * feature_dim + col; }
int PolicyParams::type_b(int row) const { return kTypeCount * feature_dim + row; }

int PolicyParams::addr_w(int row, int col) const {
  const int base = kTypeCount * feature_dim + kTypeCount;
  return base + row * (feature_dim + kTypeCount) + col;
}
int PolicyParams::addr_b(int row) const {
  const int base = kTypeCount * feature_dim + kTypeCount;
  return base + 2 * (feature_dim + kTypeCount) + row;
}

int PolicyParams::question_w(int type, int row, int col) const {
  int base = kTypeCount * feature_dim + kTypeCount + 2 * (feature_dim + kTypeCount) + 2;
  for (int k = 0; k < type; ++k) base += template_counts[k] * (feature_dim + 1);
  return base + row * feature_dim + col;
}
int PolicyParams::question_b(int type, int row) const {
  return question_w(type, template_counts[type], 0) + row;
}

// --- head math -------------------------------------------------------------

namespace {

// log-softmax in place; returns nothing. probs are exp() of the result.
void log_softmax(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lz = std::log(z) + mx;
  for (double& x : v) x -= lz;
}

std::vector<double> type_log_probs(const PolicyParams& P, const FeatureVector& f) {
  std::vector<double> logits(kTypeCount, 0.0);
  for (int r = 0; r < kTypeCount; ++r) {
    double s = P.w[P.type_b(r)];
    for (int c = 0; c < P.feature_dim; ++c) s += P.w[P.type_w(r, c)] * f[c];
    logits[r] = s;
  }
  log_softmax(logits);
  return logits;
}

std::vector<double> addr_log_probs(const PolicyParams& P, const FeatureVector& f, int type) {
  std::vector<double> logits(2, 0.0);
  for (int r = 0; r < 2; ++r) {
    double s = P.w[P.addr_b(r)];
    for (int c = 0; c < P.feature_dim; ++c) s += P.w[P.addr_w(r, c)] * f[c];
    s += P.w[P.addr_w(r, P.feature_dim + type)];  // one-hot type input
    logits[r] = s;
  }
  log_softmax(logits);
  return logits;
}

std::vector<double> question_log_probs(const PolicyParams& P, const FeatureVector& f, int type) {
  std::vector<double> logits(static_cast<std::size_t>(P.template_counts[type]), 0.0);
  for (int r = 0; r < P.template_counts[type]; ++r) {
    double s = P.w[P.question_b(type, r)];
    for (int c = 0; c < P.feature_dim; ++c) s += P.w[P.question_w(type, r, c)] * f[c];
    logits[r] = s;
  }
  log_softmax(logits);
  return logits;
}

void check_dims(const PolicyParams& P, const FeatureVector& f) {
  if (static_cast<int>(f.size()) != P.feature_dim) {
    throw ContractError("feature vector dimension does not match the policy");
  }
}

// accumulates scale * d(logprob)/dw into out
void add_grad_logprob(const PolicyParams& P, const FeatureVector& f, const ActionIndex& ai,
                      double scale, const std::vector<double>& type_lp,
                      std::vector<double>& out) {
  for (int r = 0; r < kTypeCount; ++r) {
    const double coef = scale * ((r == ai.type ? 1.0 : 0.0) - std::exp(type_lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.type_w(r, c)] += coef * f[c];
    out[P.type_b(r)] += coef;
  }
  if (!ai.ask()) return;
  const auto addr_lp = addr_log_probs(P, f, ai.type);
  for (int r = 0; r < 2; ++r) {
    const double coef = scale * ((r == ai.addr ? 1.0 : 0.0) - std::exp(addr_lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.addr_w(r, c)] += coef * f[c];
    out[P.addr_w(r, P.feature_dim + ai.type)] += coef;
    out[P.addr_b(r)] += coef;
  }
  const auto q_lp = question_log_probs(P, f, ai.type);
  for (int r = 0; r < P.template_counts[ai.type]; ++r) {
    const double coef = scale * ((r == ai.tmpl ? 1.0 : 0.0) - std::exp(q_lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.question_w(ai.type, r, c)] += coef * f[c];
    out[P.question_b(ai.type, r)] += coef;
  }
}

}  // namespace

std::vector<double> head_type_log_probs(const PolicyParams& P, const FeatureVector& f) {
  check_dims(P, f);
  return type_log_probs(P, f);
}

std::vector<double> head_addr_log_probs(const PolicyParams& P, const FeatureVector& f, int type) {
  check_dims(P, f);
  return addr_log_probs(P, f, type);
}

std::vector<double> head_question_log_probs(const PolicyParams& P, const FeatureVector& f,
                                            int type) {
  check_dims(P, f);
  return question_log_probs(P, f, type);
}

void add_type_ce_grad(const PolicyParams& P, const FeatureVector& f, int label, double scale,
                      std::vector<double>& out) {
  const auto lp = type_log_probs(P, f);
  for (int r = 0; r < kTypeCount; ++r) {
    const double coef = -scale * ((r == label ? 1.0 : 0.0) - std::exp(lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.type_w(r, c)] += coef * f[c];
    out[P.type_b(r)] += coef;
  }
}

void add_addr_ce_grad(const PolicyParams& P, const FeatureVector& f, int type, int label,
                      double scale, std::vector<double>& out) {
  const auto lp = addr_log_probs(P, f, type);
  for (int r = 0; r < 2; ++r) {
    const double coef = -scale * ((r == label ? 1.0 : 0.0) - std::exp(lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.addr_w(r, c)] += coef * f[c];
    out[P.addr_w(r, P.feature_dim + type)] += coef;
    out[P.addr_b(r)] += coef;
  }
}

void add_question_ce_grad(const PolicyParams& P, const FeatureVector& f, int type, int label,
                          double scale, std::vector<double>& out) {
  const auto lp = question_log_probs(P, f, type);
  for (int r = 0; r < P.template_counts[type]; ++r) {
    const double coef = -scale * ((r == label ? 1.0 : 0.0) - std::exp(lp[r]));
    for (int c = 0; c < P.feature_dim; ++c) out[P.question_w(type, r, c)] += coef * f[c];
    out[P.question_b(type, r)] += coef;
  }
}

HeadDistributions forward(const PolicyParams& P, const FeatureVector& f) {
  check_dims(P, f);
  HeadDistributions hd;
  const auto t_lp = type_log_probs(P, f);
  for (int r = 0; r < kTypeCount; ++r) hd.type_probs[r] = std::exp(t_lp[r]);
  for (int k = 0; k < kAskTypeCount; ++k) {
    const auto a_lp = addr_log_probs(P, f, k);
    for (int r = 0; r < 2; ++r) hd.addr_probs[k][r] = std::exp(a_lp[r]);
    const auto q_lp = question_log_probs(P, f, k);
    hd.question_probs[k].resize(q_lp.size());
    for (std::size_t r = 0; r < q_lp.size(); ++r) hd.question_probs[k][r] = std::exp(q_lp[r]);
  }
  return hd;
}

std::vector<ActionIndex> enumerate_action_indices(const PolicyParams& P) {
  std::vector<ActionIndex> out;
  out.push_back(ActionIndex{});  // NONE
  for (int k = 0; k < kAskTypeCount; ++k) {
    for (int a = 0; a < 2; ++a) {
      for (int j = 0; j < P.template_counts[k]; ++j) out.push_back(ActionIndex{k, a, j});
    }
  }
  return out;
}

Action realize_action(const EdgeState& state, const ActionIndex& ai) {
  Action action;
  if (!ai.ask()) return action;
  action.error_type = static_cast<ErrorType>(ai.type);
  action.addressee = ai.addr == 0 ? state.sender : state.receiver;
  action.question = TemplateLibrary::builtin().render(action.error_type, ai.tmpl,
                                                      {salient_slot(state, action.error_type)});
  return action;
}

ActionIndex index_of_action(const EdgeState& state, const Action& action) {
  ActionIndex ai;
  if (!action.gate()) return ai;
  ai.type = static_cast<int>(action.error_type);
  if (action.addressee == state.sender) {
    ai.addr = 0;
  } else if (action.addressee == state.receiver) {
    ai.addr = 1;
  } else {
    throw ContractError("action addressee is neither sender nor receiver");
  }
  const auto found = TemplateLibrary::builtin().find(action.question.template_id);
  if (!found || found->first != action.error_type) {
    throw ContractError("question template outside the action type's library");
  }
  ai.tmpl = found->second;
  return ai;
}

double action_logprob(const PolicyParams& P, const FeatureVector& f, const ActionIndex& ai) {
  check_dims(P, f);
  const auto t_lp = type_log_probs(P, f);
  double lp = t_lp[ai.type];
  if (ai.ask()) {
    lp += addr_log_probs(P, f, ai.type)[ai.addr];
    lp += question_log_probs(P, f, ai.type)[ai.tmpl];
  }
  return lp;
}

std::vector<double> grad_logprob(const PolicyParams& P, const FeatureVector& f,
                                 const ActionIndex& ai) {
  check_dims(P, f);
  std::vector<double> g(P.w.size(), 0.0);
  add_grad_logprob(P, f, ai, 1.0, type_log_probs(P, f), g);
  return g;
}

void add_scaled_grad_logprob(const PolicyParams& P, const FeatureVector& f, const ActionIndex& ai,
                             double scale, std::vector<double>& out) {
  check_dims(P, f);
  add_grad_logprob(P, f, ai, scale, type_log_probs(P, f), out);
}

double action_logprob(const PolicyParams& P, const Featurizer& featurizer, const EdgeState& state,
                      const Action& action) {
  return action_logprob(P, featurizer.featurize(state), index_of_action(state, action));
}

std::vector<double> grad_logprob(const PolicyParams& P, const Featurizer& featurizer,
                                 const EdgeState& state, const Action& action) {
  return grad_logprob(P, featurizer.featurize(state), index_of_action(state, action));
}

SampledAction sample_action(const PolicyParams& P, const Featurizer& featurizer,
                            const EdgeState& state, RandomStream& rng,
                            std::int64_t budget_remaining, std::int64_t min_ask_budget) {
  return sample_action(P, state, featurizer.featurize(state), rng, budget_remaining,
                       min_ask_budget);
}

SampledAction sample_action(const PolicyParams& P, const EdgeState& state,
                            const FeatureVector& f, RandomStream& rng,
                            std::int64_t budget_remaining, std::int64_t min_ask_budget) {
  SampledAction out;
  if (budget_remaining < min_ask_budget) {
    out.budget_forced = true;
    out.log_prob = action_logprob(P, f, ActionIndex{});
    return out;
  }
  const auto t_lp = type_log_probs(P, f);
  std::vector<double> t_probs(kTypeCount);
  for (int r = 0; r < kTypeCount; ++r) t_probs[r] = std::exp(t_lp[r]);
  const int type = static_cast<int>(rng.pick(t_probs, kTypeCount - 1));
  ActionIndex ai;
  ai.type = type;
  if (ai.ask()) {
    const auto a_lp = addr_log_probs(P, f, type);
    ai.addr = static_cast<int>(rng.pick({std::exp(a_lp[0]), std::exp(a_lp[1])}, 1));
    const auto q_lp = question_log_probs(P, f, type);
    std::vector<double> q_probs(q_lp.size());
    for (std::size_t r = 0; r < q_lp.size(); ++r) q_probs[r] = std::exp(q_lp[r]);
    ai.tmpl = static_cast<int>(rng.pick(q_probs, q_probs.size() - 1));
  }
  out.action = realize_action(state, ai);
  out.log_prob = action_logprob(P, f, ai);
  return out;
}

double exact_kl(const PolicyParams& p, const PolicyParams& q, const FeatureVector& f) {
  if (p.feature_dim != q.feature_dim || p.template_counts != q.template_counts) {
    throw ContractError("KL needs policies over the same action space");
  }
  double kl = 0.0;
  for (const auto& ai : enumerate_action_indices(p)) {
    const double lp = action_logprob(p, f, ai);
    const double lq = action_logprob(q, f, ai);
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

std::vector<double> grad_exact_kl(const PolicyParams& p, const PolicyParams& q,
                                  const FeatureVector& f) {
  std::vector<double> g(p.w.size(), 0.0);
  add_scaled_grad_kl(p, q, f, 1.0, g);
  return g;
}

void add_scaled_grad_kl(const PolicyParams& p, const PolicyParams& q, const FeatureVector& f,
                        double scale, std::vector<double>& out) {
  if (p.feature_dim != q.feature_dim || p.template_counts != q.template_counts) {
    throw ContractError("KL needs policies over the same action space");
  }
  const auto type_lp = type_log_probs(p, f);
  for (const auto& ai : enumerate_action_indices(p)) {
    const double lp = action_logprob(p, f, ai);
    const double lq = action_logprob(q, f, ai);
    // d KL = sum_a pi(a) grad logpi(a) (logpi(a) - logq(a)); the +1 term
    // vanishes because sum_a pi grad logpi == 0 identically
    add_grad_logprob(p, f, ai, scale * std::exp(lp) * (lp - lq), type_lp, out);
  }
}

// --- checkpoints -----------------------------------------------------------

namespace {

std::string double_to_hex(double d) { return hex64(std::bit_cast<std::uint64_t>(d)); }

double hex_to_double(const std::string& s) {
  if (s.size() != 16) throw DataError("checkpoint weight is not a 16-digit hex value");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw DataError("checkpoint weight has a non-hex digit");
  }
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  json j;
  j["version"] = 1;
  j["kind"] = "agentask-checkpoint";
  j["feature_dim"] = params.feature_dim;
  j["template_counts"] = params.template_counts;
  j["feature_config_hash"] = params.feature_config_hash;
  j["template_library_hash"] = params.template_library_hash;
  json weights = json::array();
  for (double w : params.w) weights.push_back(double_to_hex(w));
  j["weights"] = weights;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << j.dump() << '\n';
}

PolicyParams load_checkpoint(const std::string& path, const std::string& expected_feature_hash,
                             const std::string& expected_template_hash) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw DataError("checkpoint is not valid JSON");
  if (!j.contains("kind") || j["kind"] != "agentask-checkpoint" || !j.contains("version") ||
      j["version"] != 1) {
    throw DataError("not an agentask checkpoint (or unsupported version)");
  }
  PolicyParams p;
  p.feature_dim = j.at("feature_dim").get<int>();
  const auto counts = j.at("template_counts").get<std::vector<int>>();
  if (counts.size() != kAskTypeCount) throw DataError("checkpoint template_counts malformed");
  for (int k = 0; k < kAskTypeCount; ++k) p.template_counts[k] = counts[k];
  p.feature_config_hash = j.at("feature_config_hash").get<std::string>();
  p.template_library_hash = j.at("template_library_hash").get<std::string>();
  if (p.feature_config_hash != expected_feature_hash) {
    throw DataError("checkpoint feature config hash mismatch");
  }
  if (p.template_library_hash != expected_template_hash) {
    throw DataError("checkpoint template library hash mismatch");
  }
  for (const auto& w : j.at("weights")) p.w.push_back(hex_to_double(w.get<std::string>()));
  if (static_cast<int>(p.w.size()) != p.size()) {
    throw DataError("checkpoint weight count does not match its layout");
  }
  return p;
}

}  // namespace agentask
