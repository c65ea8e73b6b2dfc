#include "agentask/env.hpp"

#include <algorithm>
#include <sstream>

#include "agentask/errors.hpp"
#include "agentask/rng.hpp"
#include "agentask/templates.hpp"

namespace agentask {

namespace {

constexpr std::uint64_t kResetStream = 0x9d2c5680e9a17ull;

std::string gold_addressee_for(ErrorType type, const PipelineTask& task, int t) {
  // CG resolves at the receiver (reroute); everything else at the source
  return type == ErrorType::CG ? task.chain[t + 1] : task.chain[t];
}

std::string gold_slot_for(const Fault& fault) {
  switch (fault.type) {
    case ErrorType::DG: return fault.dropped_field;
    case ErrorType::RD: return fault.alias;
    case ErrorType::SC: return "value";
    case ErrorType::CG: return fault.wrong_kind;
    default: return "";
  }
}

}  // namespace

void EnvConfig::validate() const {
  if (chain_length_range.first < 2 || chain_length_range.second < chain_length_range.first) {
    throw ConfigError("chain_length_range must satisfy 2 <= lo <= hi");
  }
  double sum = 0.0;
  for (double p : injection_probabilities) {
    if (p < 0.0) throw ConfigError("injection probability < 0");
    sum += p;
  }
  if (sum > 1.0 + 1e-9) throw ConfigError("injection probabilities sum to > 1");
  if (history_bound < 1) throw ConfigError("history_bound must be >= 1");
  if (sc_factors.empty()) throw ConfigError("corruption rule needs at least one factor");
  for (auto f : sc_factors) {
    if (f < 2) throw ConfigError("sc factors must be >= 2");
  }
  if (v0_range.first < 1 || v0_range.second < v0_range.first) {
    throw ConfigError("v0_range must satisfy 1 <= lo <= hi");
  }
  if (ask_window_bound < 1) throw ConfigError("ask_window_bound must be >= 1");
}

std::string EnvConfig::canonical_string() const {
  std::ostringstream out;
  out << "chain=" << chain_length_range.first << ":" << chain_length_range.second;
  out << ";p=";
  for (double p : injection_probabilities) out << p << ",";
  out << ";sc=";
  for (auto f : sc_factors) out << f << ",";
  out << ";hist=" << history_bound;
  out << ";v0=" << v0_range.first << ":" << v0_range.second;
  out << ";win=" << ask_window_bound;
  return out.str();
}

std::array<double, kAskTypeCount> taxonomy_s3(double scale) {
  return {0.291 * scale, 0.273 * scale, 0.368 * scale, 0.068 * scale};
}

std::array<double, kAskTypeCount> taxonomy_rq3(double scale) {
  return {0.368 * scale, 0.207 * scale, 0.309 * scale, 0.116 * scale};
}

Environment::Environment(EnvConfig config, RewardConfig reward)
    : config_(std::move(config)), reward_(reward) {
  config_.validate();
  reward_.validate();
  if (config_.ask_window_bound < reward_.window_h - 1) {
    throw ConfigError("ask_window_bound must cover window_h - 1 prior bits");
  }
}

EpisodeState Environment::reset(std::uint64_t seed) const {
  RandomStream rng(derive_seed(seed, kResetStream));
  EpisodeState ep;
  ep.episode_seed = seed;

  const int agents = static_cast<int>(
      rng.uniform_int(config_.chain_length_range.first, config_.chain_length_range.second));
  ep.task.task_id = "task-" + std::to_string(seed);
  ep.task.chain.push_back("user.0");
  for (int i = 1; i < agents; ++i) {
    const bool adder = rng.uniform01() < 0.5;
    ep.task.chain.push_back((adder ? "adder." : "scaler.") + std::to_string(i));
  }
  ep.task.v0 = rng.uniform_int(config_.v0_range.first, config_.v0_range.second);

  const int edges = ep.task.num_edges();
  for (int t = 0; t < edges; ++t) {
    const std::string role = role_of(ep.task.chain[t + 1]);
    PipelineTask::EdgeOp op;
    if (role == "adder") {
      op.kind = "add";
      op.operand = rng.uniform_int(1, 9);
    } else {
      op.kind = "mul";
      op.operand = rng.uniform_int(2, 4);
    }
    ep.task.ops.push_back(op);
  }
  std::int64_t truth = ep.task.v0;
  for (const auto& op : ep.task.ops) truth = apply_op(op.kind, op.operand, truth);
  ep.task.ground_truth = truth;

  ep.plan.injection_probabilities = config_.injection_probabilities;
  for (int t = 0; t < edges; ++t) {
    const double u = rng.uniform01();
    double acc = 0.0;
    std::optional<Fault> fault;
    for (int k = 0; k < kAskTypeCount; ++k) {
      acc += config_.injection_probabilities[k];
      if (u < acc) {
        Fault f;
        f.type = static_cast<ErrorType>(k);
        switch (f.type) {
          case ErrorType::DG: {
            const auto& schema = ep.task.payload_schema;
            f.dropped_field = schema[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(schema.size()) - 1))];
            break;
          }
          case ErrorType::RD:
            f.alias = expected_symbol(t) + "b";
            break;
          case ErrorType::SC:
            f.sc_factor = config_.sc_factors[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(config_.sc_factors.size()) - 1))];
            break;
          case ErrorType::CG:
            f.wrong_kind = ep.task.ops[t].kind == "add" ? "mul" : "add";
            break;
          default:
            break;
        }
        fault = f;
        break;
      }
    }
    ep.plan.per_edge.push_back(fault);
    ep.residual_faults.push_back(fault ? 1 : 0);
  }

  ep.cursor = 0;
  ep.current_value = ep.task.v0;
  return ep;
}

Payload Environment::clean_payload(const EpisodeState& ep, int t) const {
  Payload p;
  p.op_kind = ep.task.ops[t].kind;
  p.operand = ep.task.ops[t].operand;
  p.ref = expected_symbol(t);
  p.value = ep.current_value;
  return p;
}

Payload Environment::faulted_payload(const EpisodeState& ep, int t) const {
  if (t != ep.cursor) throw ContractError("faulted_payload is defined at the cursor only");
  Payload p = clean_payload(ep, t);
  const auto& fault = ep.plan.per_edge[t];
  if (!fault) return p;
  switch (fault->type) {
    case ErrorType::DG:
      if (fault->dropped_field == "op") {
        p.op_kind.reset();
        p.operand.reset();
      } else if (fault->dropped_field == "ref") {
        p.ref.reset();
      } else {
        p.value.reset();
      }
      break;
    case ErrorType::RD:
      p.ref = fault->alias;
      break;
    case ErrorType::SC:
      p.value = *p.value * fault->sc_factor;
      break;
    case ErrorType::CG:
      p.op_kind = fault->wrong_kind;
      break;
    default:
      break;
  }
  return p;
}

EdgeState Environment::emit_edge(const EpisodeState& ep) const {
  if (ep.terminated()) throw LifecycleError("emit_edge after termination");
  const int t = ep.cursor;
  EdgeState x;
  x.query = "task=" + ep.task.task_id + " start=" + std::to_string(ep.task.v0) +
            " required=op,ref,value";
  x.sender = ep.task.chain[t];
  x.receiver = ep.task.chain[t + 1];
  x.message = render_payload(faulted_payload(ep, t));
  x.history = ep.history;
  x.step_index = t;
  x.budget_remaining = std::max<std::int64_t>(0, reward_.budget_b - ep.tokens_spent);
  return x;
}

StepOutcome Environment::apply_action(const EpisodeState& ep, const Action& action) const {
  if (ep.terminated()) throw LifecycleError("apply_action after termination");
  const int t = ep.cursor;
  const std::string& sender = ep.task.chain[t];
  const std::string& receiver = ep.task.chain[t + 1];

  if (action.gate()) {
    if (action.addressee != sender && action.addressee != receiver) {
      throw ContractError("addressee must be the edge's sender or receiver");
    }
    if (action.question.template_id != kFreeformTemplateId) {
      const auto found = TemplateLibrary::builtin().find(action.question.template_id);
      if (!found || found->first != action.error_type) {
        throw ContractError("question template does not belong to the action's error type");
      }
    }
  }

  const auto& fault = ep.plan.per_edge[t];
  bool resolved = false;
  std::optional<std::string> reply;
  if (action.gate()) {
    if (!fault) {
      reply = "nothing to correct.";
    } else if (action.error_type == fault->type &&
               action.addressee == gold_addressee_for(fault->type, ep.task, t)) {
      resolved = true;
      const Payload clean = clean_payload(ep, t);
      switch (fault->type) {
        case ErrorType::DG:
          if (fault->dropped_field == "op") {
            reply = "supplied op=" + *clean.op_kind + ":" + std::to_string(*clean.operand);
          } else if (fault->dropped_field == "ref") {
            reply = "supplied ref=" + *clean.ref;
          } else {
            reply = "supplied value=" + std::to_string(*clean.value);
          }
          break;
        case ErrorType::RD:
          reply = "confirmed ref=" + *clean.ref + " alias " + fault->alias + " is unbound";
          break;
        case ErrorType::SC:
          reply = "corrected value=" + std::to_string(*clean.value);
          break;
        case ErrorType::CG:
          reply = "rerouted op=" + *clean.op_kind + ":" + std::to_string(*clean.operand) +
                  " to a capable role";
          break;
        default:
          break;
      }
    } else {
      reply = "no clarification available.";
    }
  }

  const int residual = (fault && !resolved) ? 1 : 0;

  StepOutcome out;
  out.reply = reply;
  out.residual_flag = residual;
  out.next = ep;
  EpisodeState& next = out.next;

  const Payload delivered = resolved ? clean_payload(ep, t) : faulted_payload(ep, t);
  next.current_value = eval_payload(delivered, role_of(receiver), t);
  next.residual_faults[t] = residual;

  const int gate = action.gate() ? 1 : 0;
  if (gate) {
    next.tokens_spent += action.question.token_count + whitespace_tokens(*reply);
    next.latency_spent += 2;  // delivery + clarification round trip
  } else {
    next.latency_spent += 1;
  }
  next.ask_window.push_back(gate);
  while (static_cast<int>(next.ask_window.size()) > config_.ask_window_bound) {
    next.ask_window.erase(next.ask_window.begin());
  }

  HistoryEntry h;
  h.step_index = t;
  h.message = render_payload(faulted_payload(ep, t));
  h.gate = gate;
  h.error_type = action.error_type;
  h.addressee = gate ? action.addressee : "";
  h.reply = reply.value_or("");
  h.residual_flag = residual;
  next.history.push_back(h);
  while (static_cast<int>(next.history.size()) > config_.history_bound) {
    next.history.erase(next.history.begin());
  }

  next.cursor = t + 1;
  return out;
}

int Environment::terminal_score(const EpisodeState& ep) const {
  if (!ep.terminated()) throw LifecycleError("terminal_score before termination");
  for (int r : ep.residual_faults) {
    if (r != 0) return 0;
  }
  return 1;
}

GoldLabel Environment::teacher_label(const EpisodeState& ep, const EdgeState& x) const {
  const auto task_id = query_task_id(x.query);
  if (!task_id || *task_id != ep.task.task_id || x.step_index < 0 ||
      x.step_index >= ep.task.num_edges()) {
    throw UnknownEdgeError("edge state does not belong to this environment's episode");
  }
  GoldLabel label;
  const auto& fault = ep.plan.per_edge[x.step_index];
  if (!fault) return label;  // NONE
  label.error_type = fault->type;
  label.addressee = gold_addressee_for(fault->type, ep.task, x.step_index);
  label.question = TemplateLibrary::builtin().render(fault->type, 0, {gold_slot_for(*fault)});
  return label;
}

}  // namespace agentask
