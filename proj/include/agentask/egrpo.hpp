#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "agentask/core.hpp"
#include "agentask/env.hpp"
#include "agentask/parallel.hpp"
#include "agentask/policy.hpp"
#include "agentask/rational.hpp"

namespace agentask {

// --- shaped rewards (exact rational arithmetic) ---------------------------

// +1 if the ask removed downstream uncertainty, -1 if it asked and failed,
// 0 when silent
Rational effectiveness_reward(int z, int n_next);

// c_t: asks among the last H edges inclusive of the current one; `window`
// holds at most H-1 prior gate bits
int update_counter(const std::vector<int>& window, int h, int z);

Rational parsimony_reward(int c, const Rational& lambda_sw);

Rational format_reward(int flag, const Rational& alpha_fmt);

Rational edge_reward(const Rational& r_eff, const Rational& r_par, const Rational& r_fmt,
                     const Rational& alpha_eff);

Rational terminal_reward(int s, const Rational& alpha_ans);

// --- advantages ------------------------------------------------------------

// group mean/std normalization; all-equal groups map to all zeros
std::vector<double> local_advantages(const std::vector<double>& group_rewards);

// uniform injection: every visited edge receives R - b
std::vector<double> global_advantages(double terminal_r, double baseline, int visited_edges);

// exponential moving average of R, decay 0.9, initialized to 0; episode
// advantages use the pre-update value
class RunningBaseline {
 public:
  double value() const { return b_; }
  void update(double r) { b_ = 0.9 * b_ + 0.1 * r; }

 private:
  double b_ = 0.0;
};

// --- clipped surrogate -------------------------------------------------------

struct SurrogateEntry {
  FeatureVector features;
  ActionIndex action;
  double a_local = 0.0;
  std::optional<double> a_global;  // absent until the episode terminated
};

struct SurrogateResult {
  double objective = 0.0;        // includes the -beta * KL term
  std::vector<double> gradient;  // ascent direction, same layout as params.w
  double kl_mean = 0.0;
};

// Eq-13-style objective: clipped ratio terms for local and (when present)
// global advantages, sharing one ratio, minus beta * KL to the reference.
// rho's denominator and both advantages are constants w.r.t. params.
SurrogateResult surrogate_and_grad(const PolicyParams& params, const PolicyParams& params_old,
                                   const PolicyParams& params_ref,
                                   const std::vector<SurrogateEntry>& batch, double eps,
                                   double lambda_r, double beta, Exec exec = Exec::kParallel);

// --- training loop -----------------------------------------------------------

struct TrainConfig {
  int group_size = 8;
  int iterations = 200;
  int episodes_per_iter = 8;
  double lr = 0.05;
  std::uint64_t seed = 1;
  double kl_ceiling = 25.0;  // abort threshold on mean reference KL
  Exec exec = Exec::kParallel;
};

struct IterationMetrics {
  int iteration = 0;
  double mean_s = 0.0;
  double asks_per_episode = 0.0;
  double latency_pct = 0.0;
  double extra_cost_pct = 0.0;
  double kl_mean = 0.0;
  double objective = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<IterationMetrics> metrics;
};

// Stage C: group sampling at every edge from the frozen old policy, local
// advantages from r_edge, uniform global credit once the episode terminates,
// one clipped ascent step per iteration, KL anchored to the SFT init.
TrainResult train_egrpo(const Environment& env, const Featurizer& featurizer,
                        const PolicyParams& init_params, const TrainConfig& config);

}  // namespace agentask
