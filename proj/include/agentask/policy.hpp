#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agentask/core.hpp"
#include "agentask/rng.hpp"

namespace agentask {

struct FeatureConfig {
  int dim = 16;
  int history_bound = 4;
  std::int64_t budget_b = 256;
  int max_steps = 8;  // normalizes the step-index feature

  std::string hash() const;
};

using FeatureVector = std::vector<double>;

// Hand-built view of the edge state: fault indicators plus budget/history
// context. Pure function of the EdgeState; the policy learns on top of it.
class Featurizer {
 public:
  explicit Featurizer(FeatureConfig config);

  FeatureVector featurize(const EdgeState& state) const;

  const FeatureConfig& config() const { return config_; }

 private:
  FeatureConfig config_;
};

// Deterministic slot filler the question templates are rendered with: the
// salient token of the state for a given error type (missing field, drifted
// symbol, corrupted field, requested capability).
std::string salient_slot(const EdgeState& state, ErrorType type);

// Parameters of the three linear-softmax heads, stored flat so gradient
// arithmetic, finite differencing and SGD all act on one vector.
//
// layout: type head (5 x D + 5), addressee head (2 x (D+5) + 2),
// then per ask type the template head (T_k x D + T_k).
struct PolicyParams {
  int feature_dim = 16;
  std::array<int, kAskTypeCount> template_counts{4, 4, 4, 4};
  std::vector<double> w;
  std::string feature_config_hash;
  std::string template_library_hash;

  static PolicyParams zeros(int feature_dim, const std::array<int, kAskTypeCount>& counts,
                            const std::string& feature_hash, const std::string& template_hash);

  int size() const;
  int type_w(int row, int col) const;
  int type_b(int row) const;
  int addr_w(int row, int col) const;  // col indexes [features | one-hot type]
  int addr_b(int row) const;
  int question_w(int type, int row, int col) const;
  int question_b(int type, int row) const;

  bool operator==(const PolicyParams&) const = default;
};

// index form of an action: type in 0..4 (4 = NONE), and for asks the
// addressee slot (0 sender, 1 receiver) and template index
struct ActionIndex {
  int type = kTypeCount - 1;
  int addr = -1;
  int tmpl = -1;

  bool ask() const { return type < kAskTypeCount; }
  bool operator==(const ActionIndex&) const = default;
};

struct HeadDistributions {
  std::array<double, kTypeCount> type_probs{};
  std::array<std::array<double, 2>, kAskTypeCount> addr_probs{};
  std::array<std::vector<double>, kAskTypeCount> question_probs{};
};

HeadDistributions forward(const PolicyParams& params, const FeatureVector& features);

// per-head log-softmax outputs (the addressee and question heads condition
// on the one-hot ask type)
std::vector<double> head_type_log_probs(const PolicyParams& params, const FeatureVector& features);
std::vector<double> head_addr_log_probs(const PolicyParams& params, const FeatureVector& features,
                                        int type);
std::vector<double> head_question_log_probs(const PolicyParams& params,
                                            const FeatureVector& features, int type);

// accumulate scale * d(-log p_head[label])/dw into out (cross-entropy grads)
void add_type_ce_grad(const PolicyParams& params, const FeatureVector& features, int label,
                      double scale, std::vector<double>& out);
void add_addr_ce_grad(const PolicyParams& params, const FeatureVector& features, int type,
                      int label, double scale, std::vector<double>& out);
void add_question_ce_grad(const PolicyParams& params, const FeatureVector& features, int type,
                          int label, double scale, std::vector<double>& out);

// all action indices at a state: NONE plus (type, addressee, template)
std::vector<ActionIndex> enumerate_action_indices(const PolicyParams& params);

// materializes an index as an Action at a concrete state
Action realize_action(const EdgeState& state, const ActionIndex& index);

// maps an Action back to indices; throws ContractError for foreign templates
ActionIndex index_of_action(const EdgeState& state, const Action& action);

double action_logprob(const PolicyParams& params, const FeatureVector& features,
                      const ActionIndex& index);
std::vector<double> grad_logprob(const PolicyParams& params, const FeatureVector& features,
                                 const ActionIndex& index);

// accumulate scale * d(logprob)/dw into out (no allocation)
void add_scaled_grad_logprob(const PolicyParams& params, const FeatureVector& features,
                             const ActionIndex& index, double scale, std::vector<double>& out);

// convenience overloads on raw states
double action_logprob(const PolicyParams& params, const Featurizer& featurizer,
                      const EdgeState& state, const Action& action);
std::vector<double> grad_logprob(const PolicyParams& params, const Featurizer& featurizer,
                                 const EdgeState& state, const Action& action);

struct SampledAction {
  Action action;
  double log_prob = 0.0;
  bool budget_forced = false;
};

// Samples from the factored policy. Hard budget rule: below `min_ask_budget`
// the gate is forced shut and the NONE branch's log-probability is recorded.
SampledAction sample_action(const PolicyParams& params, const Featurizer& featurizer,
                            const EdgeState& state, RandomStream& rng,
                            std::int64_t budget_remaining, std::int64_t min_ask_budget);
SampledAction sample_action(const PolicyParams& params, const EdgeState& state,
                            const FeatureVector& features, RandomStream& rng,
                            std::int64_t budget_remaining, std::int64_t min_ask_budget);

// Exact KL(p || q) at one state over the finite action space, and its
// gradient with respect to p's parameters.
double exact_kl(const PolicyParams& p, const PolicyParams& q, const FeatureVector& features);
std::vector<double> grad_exact_kl(const PolicyParams& p, const PolicyParams& q,
                                  const FeatureVector& features);
void add_scaled_grad_kl(const PolicyParams& p, const PolicyParams& q,
                        const FeatureVector& features, double scale, std::vector<double>& out);

// checkpoint io; loading verifies feature and template hashes
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path, const std::string& expected_feature_hash,
                             const std::string& expected_template_hash);

}  // namespace agentask
