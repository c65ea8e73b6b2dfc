#include "agentask/sft.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "agentask/errors.hpp"
#include "agentask/hashing.hpp"
#include "agentask/rollout.hpp"
#include "agentask/templates.hpp"
#include "core_json.hpp"

namespace agentask {

using nlohmann::json;

namespace {

json label_to_json(const GoldLabel& label) {
  json j;
  j["error_type"] = error_type_tag(label.error_type);
  if (label.error_type != ErrorType::NONE) {
    j["addressee"] = label.addressee;
    j["question"] = detail::question_to_json(label.question);
  }
  return j;
}

GoldLabel label_from_json(const json& j, std::size_t lineno) {
  detail::reject_unknown_fields(j, {"error_type", "addressee", "question"}, lineno, "label");
  GoldLabel label;
  const auto tag = j.at("error_type").get<std::string>();
  const auto type = error_type_from_tag(tag);
  if (!type) throw TraceParseError(lineno, "label has unknown error type " + tag);
  label.error_type = *type;
  if (label.error_type != ErrorType::NONE) {
    label.addressee = j.at("addressee").get<std::string>();
    label.question = detail::question_from_json(j.at("question"), lineno);
  }
  return label;
}

std::string example_key(const CorpusExample& ex) {
  return detail::state_to_json(ex.state).dump() + "|" + label_to_json(ex.label).dump();
}

std::uint64_t seed_of_example(const CorpusExample& ex) {
  const auto task_id = query_task_id(ex.state.query);
  if (task_id && task_id->rfind("task-", 0) == 0) {
    try {
      return std::stoull(task_id->substr(5));
    } catch (const std::exception&) {
    }
  }
  return 0;
}

}  // namespace

TeacherFn env_teacher(const Environment& env) {
  return [&env](const EpisodeState& ep, const EdgeState& x) { return env.teacher_label(ep, x); };
}

Corpus build_corpus(const Environment& env, std::pair<std::uint64_t, std::uint64_t> seeds,
                    const TeacherFn& teacher, Exec exec) {
  if (seeds.second < seeds.first) throw ConfigError("corpus seed range is empty");
  const std::int64_t n = static_cast<std::int64_t>(seeds.second - seeds.first + 1);

  struct PerSeed {
    std::vector<CorpusExample> examples;
    int failures = 0;
  };
  std::vector<PerSeed> partial(static_cast<std::size_t>(n));

  auto work = [&](std::int64_t i) {
    PerSeed& slot = partial[static_cast<std::size_t>(i)];
    EpisodeState ep = env.reset(seeds.first + static_cast<std::uint64_t>(i));
    while (!ep.terminated()) {
      const EdgeState x = env.emit_edge(ep);
      try {
        CorpusExample ex;
        ex.state = x;
        ex.label = teacher(ep, x);
        ex.mask_m = ex.label.error_type != ErrorType::NONE ? 1 : 0;
        slot.examples.push_back(std::move(ex));
      } catch (const std::exception&) {
        ++slot.failures;
      }
      ep = env.apply_action(ep, Action{}).next;  // unroll silently
    }
  };

  parallel_for(n, exec, work);

  Corpus corpus;
  corpus.env_config_hash = hex64(fnv1a64(env.config().canonical_string()));
  corpus.seed_range = seeds;
  std::unordered_set<std::string> seen;
  for (const auto& slot : partial) {
    corpus.teacher_failures += slot.failures;
    for (const auto& ex : slot.examples) {
      if (seen.insert(example_key(ex)).second) corpus.examples.push_back(ex);
    }
  }
  return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open corpus file for writing: " + path);
  json header;
  header["kind"] = "agentask-corpus";
  header["version"] = 1;
  header["env_config_hash"] = corpus.env_config_hash;
  header["seed_lo"] = corpus.seed_range.first;
  header["seed_hi"] = corpus.seed_range.second;
  header["teacher_failures"] = corpus.teacher_failures;
  out << header.dump() << '\n';
  for (const auto& ex : corpus.examples) {
    json j;
    j["state"] = detail::state_to_json(ex.state);
    j["label"] = label_to_json(ex.label);
    j["mask_m"] = ex.mask_m;
    out << j.dump() << '\n';
  }
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::string line;
  std::size_t lineno = 0;
  Corpus corpus;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw TraceParseError(lineno, "not a JSON object");
    if (!saw_header) {
      if (!j.contains("kind") || j["kind"] != "agentask-corpus") {
        throw TraceParseError(lineno, "expected a corpus header");
      }
      if (!j.contains("version") || j["version"] != 1) {
        throw TraceVersionError("unsupported corpus version");
      }
      corpus.env_config_hash = j.value("env_config_hash", "");
      corpus.seed_range = {j.value("seed_lo", 0ull), j.value("seed_hi", 0ull)};
      corpus.teacher_failures = j.value("teacher_failures", 0);
      saw_header = true;
      continue;
    }
    detail::reject_unknown_fields(j, {"state", "label", "mask_m"}, lineno, "corpus example");
    CorpusExample ex;
    ex.state = detail::state_from_json(j.at("state"), lineno);
    ex.label = label_from_json(j.at("label"), lineno);
    ex.mask_m = j.at("mask_m").get<int>();
    if (ex.mask_m != (ex.label.error_type != ErrorType::NONE ? 1 : 0)) {
      throw TraceParseError(lineno, "mask_m inconsistent with the label");
    }
    corpus.examples.push_back(std::move(ex));
  }
  if (!saw_header) throw DataError("corpus file has no header: " + path);
  return corpus;
}

std::string corpus_hash(const Corpus& corpus) {
  std::uint64_t h = fnv1a64("agentask-corpus");
  h = fnv1a64(corpus.env_config_hash, h);
  h = fnv1a64(std::to_string(corpus.seed_range.first), h);
  h = fnv1a64(std::to_string(corpus.seed_range.second), h);
  for (const auto& ex : corpus.examples) h = fnv1a64(example_key(ex), h);
  return hex64(h);
}

std::vector<SftExample> prepare_sft_examples(const Corpus& corpus, const Featurizer& featurizer) {
  std::vector<SftExample> rows;
  rows.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    SftExample row;
    row.features = featurizer.featurize(ex.state);
    row.mask = ex.mask_m;
    row.episode_seed = seed_of_example(ex);
    row.label_type = static_cast<int>(ex.label.error_type);
    if (ex.mask_m) {
      if (ex.label.addressee == ex.state.sender) {
        row.label_addr = 0;
      } else if (ex.label.addressee == ex.state.receiver) {
        row.label_addr = 1;
      } else {
        throw DataError("labeled addressee is neither sender nor receiver");
      }
      const auto found = TemplateLibrary::builtin().find(ex.label.question.template_id);
      if (!found || found->first != ex.label.error_type) {
        throw DataError("labeled question template outside the type's library");
      }
      row.label_tmpl = found->second;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::pair<double, std::vector<double>> sft_loss(const PolicyParams& params,
                                                const std::vector<SftExample>& batch,
                                                double lambda_ask, Exec exec) {
  if (batch.empty()) throw ContractError("sft_loss needs a non-empty batch");
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  const std::size_t p = params.w.size();
  std::vector<double> slabs(static_cast<std::size_t>(n) * p, 0.0);
  std::vector<double> type_terms(batch.size(), 0.0);
  std::vector<double> ask_terms(batch.size(), 0.0);

  auto work = [&](std::int64_t i) {
    const SftExample& row = batch[static_cast<std::size_t>(i)];
    double* slab = &slabs[static_cast<std::size_t>(i) * p];
    std::vector<double> local(p, 0.0);
    const auto t_lp = head_type_log_probs(params, row.features);
    type_terms[static_cast<std::size_t>(i)] = -t_lp[row.label_type];
    add_type_ce_grad(params, row.features, row.label_type, 1.0, local);
    if (row.mask) {
      if (row.label_addr < 0 || row.label_tmpl < 0) {
        throw DataError("masked example lacks addressee/question labels");
      }
      const auto a_lp = head_addr_log_probs(params, row.features, row.label_type);
      const auto q_lp = head_question_log_probs(params, row.features, row.label_type);
      ask_terms[static_cast<std::size_t>(i)] = -a_lp[row.label_addr] - q_lp[row.label_tmpl];
      add_addr_ce_grad(params, row.features, row.label_type, row.label_addr, lambda_ask, local);
      add_question_ce_grad(params, row.features, row.label_type, row.label_tmpl, lambda_ask,
                           local);
    }
    for (std::size_t j = 0; j < p; ++j) slab[j] = local[j];
  };

  parallel_for(n, exec, work);

  double type_sum = 0.0;
  double ask_sum = 0.0;
  std::vector<double> grad(p, 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    type_sum += type_terms[static_cast<std::size_t>(i)];
    ask_sum += ask_terms[static_cast<std::size_t>(i)];
    const double* slab = &slabs[static_cast<std::size_t>(i) * p];
    for (std::size_t j = 0; j < p; ++j) grad[j] += slab[j];
  }
  const double dn = static_cast<double>(n);
  const double loss = type_sum / dn + lambda_ask * (ask_sum / dn);
  for (std::size_t j = 0; j < p; ++j) grad[j] /= dn;
  return {loss, std::move(grad)};
}

SftResult train_sft(const Corpus& corpus, const Featurizer& featurizer, const SftConfig& config) {
  if (corpus.examples.empty()) throw DataError("cannot train on an empty corpus");
  if (config.batch_size < 1 || config.epochs < 1) throw ConfigError("bad sft hyperparameters");
  const auto rows = prepare_sft_examples(corpus, featurizer);

  // 90/10 held-out split by episode seed
  std::vector<std::uint64_t> seeds;
  for (const auto& r : rows) seeds.push_back(r.episode_seed);
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  std::unordered_set<std::uint64_t> held_seeds;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i % 10 == 9) held_seeds.insert(seeds[i]);
  }
  std::vector<SftExample> train_rows;
  std::vector<SftExample> held_rows;
  for (const auto& r : rows) {
    (held_seeds.count(r.episode_seed) ? held_rows : train_rows).push_back(r);
  }
  if (train_rows.empty()) train_rows = rows;

  PolicyParams params = PolicyParams::zeros(featurizer.config().dim, {4, 4, 4, 4},
                                            featurizer.config().hash(),
                                            TemplateLibrary::builtin().hash());

  auto eval_loss = [&](const std::vector<SftExample>& set) {
    return sft_loss(params, set, config.lambda_ask, config.exec).first;
  };

  SftResult result;
  result.params = params;
  result.best_heldout_loss = eval_loss(held_rows.empty() ? train_rows : held_rows);

  RandomStream shuffle_rng(derive_seed(config.seed, 0x5f7a11ull));
  std::vector<std::size_t> order(train_rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with our own stream; std::shuffle is not reproducible
    // across standard libraries
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<SftExample> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_rows[order[i]]);
      const auto [loss, grad] = sft_loss(params, batch, config.lambda_ask, config.exec);
      if (!std::isfinite(loss)) {
        throw TrainingAbort("sft loss diverged in epoch " + std::to_string(epoch));
      }
      for (std::size_t j = 0; j < params.w.size(); ++j) params.w[j] -= config.lr * grad[j];
    }
    result.train_loss_per_epoch.push_back(eval_loss(train_rows));
    const double held = eval_loss(held_rows.empty() ? train_rows : held_rows);
    result.epochs_run = epoch + 1;
    if (held < result.best_heldout_loss - 1e-12) {
      result.best_heldout_loss = held;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace agentask
