#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "agentask/egrpo.hpp"
#include "agentask/env.hpp"
#include "agentask/policy.hpp"

namespace agentask {

struct CorpusExample {
  EdgeState state;
  GoldLabel label;
  int mask_m = 0;  // 1 iff label.error_type != NONE
};

struct Corpus {
  std::vector<CorpusExample> examples;
  std::string env_config_hash;
  std::pair<std::uint64_t, std::uint64_t> seed_range{0, 0};
  int teacher_failures = 0;
};

using TeacherFn = std::function<GoldLabel(const EpisodeState&, const EdgeState&)>;

// Stage A: unrolls every episode in [seed_lo, seed_hi], labels each edge with
// the teacher, deduplicates by (state, label). Teacher failures are counted
// and skipped, never silently dropped.
Corpus build_corpus(const Environment& env, std::pair<std::uint64_t, std::uint64_t> seeds,
                    const TeacherFn& teacher, Exec exec = Exec::kParallel);

// simulator-mode teacher: the environment's own oracle
TeacherFn env_teacher(const Environment& env);

void write_corpus(const std::string& path, const Corpus& corpus);
Corpus read_corpus(const std::string& path);

std::string corpus_hash(const Corpus& corpus);

// featurized training row
struct SftExample {
  FeatureVector features;
  int label_type = kTypeCount - 1;  // 0..4, NONE = 4
  int label_addr = -1;              // 0 sender / 1 receiver when mask
  int label_tmpl = -1;
  int mask = 0;
  std::uint64_t episode_seed = 0;  // for the held-out split
};

std::vector<SftExample> prepare_sft_examples(const Corpus& corpus, const Featurizer& featurizer);

// L = L_type + lambda_ask * L_ask with L_type the 5-way type cross-entropy
// and L_ask the masked addressee+template negative log-likelihood, both
// averaged over the batch. Returns the analytic gradient alongside.
std::pair<double, std::vector<double>> sft_loss(const PolicyParams& params,
                                                const std::vector<SftExample>& batch,
                                                double lambda_ask, Exec exec = Exec::kParallel);

struct SftConfig {
  double lr = 0.5;
  int epochs = 80;
  int batch_size = 64;
  double lambda_ask = 1.0;
  std::uint64_t seed = 1;
  int patience = 15;  // epochs without held-out improvement before stopping
  Exec exec = Exec::kParallel;
};

struct SftResult {
  PolicyParams params;  // best held-out snapshot
  double best_heldout_loss = 0.0;
  int epochs_run = 0;
  std::vector<double> train_loss_per_epoch;
};

// Stage B: deterministic minibatch gradient descent with a 90/10 held-out
// split by episode seed and early stopping on the held-out loss.
SftResult train_sft(const Corpus& corpus, const Featurizer& featurizer, const SftConfig& config);

}  // namespace agentask
