#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "agentask/egrpo.hpp"
#include "agentask/errors.hpp"
#include "agentask/rollout.hpp"
#include "agentask/templates.hpp"

using namespace agentask;

namespace {

Featurizer default_featurizer() { return Featurizer(FeatureConfig{}); }

PolicyParams fresh_params() {
  return PolicyParams::zeros(16, {4, 4, 4, 4}, FeatureConfig{}.hash(),
                             TemplateLibrary::builtin().hash());
}

PolicyParams random_params(RandomStream& rng, double scale = 0.5) {
  PolicyParams p = fresh_params();
  for (auto& w : p.w) w = scale * (2.0 * rng.uniform01() - 1.0);
  return p;
}

std::vector<FeatureVector> sample_features(int n, std::uint64_t seed) {
  const Environment env(EnvConfig{}, RewardConfig{});
  const Featurizer fz = default_featurizer();
  OraclePolicy oracle;
  std::vector<FeatureVector> out;
  for (std::uint64_t s = seed; static_cast<int>(out.size()) < n; ++s) {
    for (const auto& r : rollout_episode(env, oracle, s, "h").records) {
      out.push_back(fz.featurize(r.state));
      if (static_cast<int>(out.size()) >= n) break;
    }
  }
  return out;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("effectiveness reward follows the three-way case split") {
  CHECK(effectiveness_reward(1, 0) == Rational(1));
  CHECK(effectiveness_reward(1, 1) == Rational(-1));
  CHECK(effectiveness_reward(0, 1) == Rational(0));
  CHECK(effectiveness_reward(0, 0) == Rational(0));
}

TEST_CASE("sliding counter counts asks over the last H edges") {
  CHECK(update_counter({1, 0}, 3, 1) == 2);
  CHECK(update_counter({0, 0}, 3, 0) == 0);
  CHECK(update_counter({}, 1, 1) == 1);
  CHECK(update_counter({1, 1, 1}, 1, 1) == 1);  // window of one ignores the past
  CHECK(update_counter({1, 1}, 2, 0) == 1);     // only the last prior bit counts
}

TEST_CASE("counter equals a brute-force window count on random sequences") {
  RandomStream rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<int> gates;
    for (int t = 0; t < 30; ++t) {
      const int z = static_cast<int>(rng.uniform_int(0, 1));
      const int keep = std::min<int>(h - 1, static_cast<int>(gates.size()));
      const std::vector<int> window(gates.end() - keep, gates.end());
      const int c = update_counter(window, h, z);
      gates.push_back(z);
      int brute = 0;
      for (std::size_t i = gates.size() >= static_cast<std::size_t>(h)
                               ? gates.size() - static_cast<std::size_t>(h)
                               : 0;
           i < gates.size(); ++i) {
        brute += gates[i];
      }
      CHECK(c == brute);
    }
  }
}

TEST_CASE("parsimony, format, edge and terminal rewards are exact") {
  CHECK(parsimony_reward(1, Rational(2, 5)) == Rational(0));
  CHECK(parsimony_reward(3, Rational(2, 5)) == Rational(-4, 5));
  CHECK(parsimony_reward(0, Rational(7, 3)) == Rational(0));
  CHECK(format_reward(1, Rational(1, 10)) == Rational(1, 10));
  CHECK(format_reward(0, Rational(1, 10)) == Rational(0));
  CHECK(format_reward(1, Rational(0)) == Rational(0));
  CHECK(edge_reward(Rational(1), Rational(0), Rational(1, 10), Rational(1)) ==
        Rational(11, 10));
  CHECK(edge_reward(Rational(-1), Rational(-4, 5), Rational(0), Rational(1)) ==
        Rational(-9, 5));
  CHECK(edge_reward(Rational(0), Rational(0), Rational(0), Rational(7)) == Rational(0));
  CHECK(terminal_reward(1, Rational(1)) == Rational(1));
  CHECK(terminal_reward(0, Rational(1)) == Rational(0));
  CHECK(terminal_reward(1, Rational(2)) == Rational(2));
}

TEST_CASE("local advantages normalize by the population std") {
  const auto a = local_advantages({1.0, 0.0, -1.0});
  const double expect = 1.0 / (std::sqrt(2.0 / 3.0) + 1e-8);
  CHECK(a[0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(-expect).epsilon(1e-9));

  const auto b = local_advantages({0.5, 0.5});
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 0.0);

  RandomStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r;
    for (int i = 0; i < 8; ++i) r.push_back(rng.uniform01() * 4.0 - 2.0);
    const auto adv = local_advantages(r);
    double mean = 0.0;
    for (double v : adv) mean += v;
    CHECK(std::abs(mean) < 1e-9);
    // centering: a constant shift leaves the advantages unchanged
    std::vector<double> shifted;
    for (double v : r) shifted.push_back(v + 3.25);
    const auto adv2 = local_advantages(shifted);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv2[i] == doctest::Approx(adv[i]).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(local_advantages({1.0}), ContractError);
}

TEST_CASE("global advantages inject R - b uniformly") {
  const auto a = global_advantages(1.0, 0.5, 3);
  REQUIRE(a.size() == 3);
  for (double v : a) CHECK(v == 0.5);
  for (double v : global_advantages(0.7, 0.7, 4)) CHECK(v == 0.0);
  // first episode ever: baseline starts at zero
  RunningBaseline b;
  CHECK(b.value() == 0.0);
  for (double v : global_advantages(1.0, b.value(), 2)) CHECK(v == 1.0);
  b.update(1.0);
  CHECK(b.value() == doctest::Approx(0.1));
  b.update(0.0);
  CHECK(b.value() == doctest::Approx(0.09));
}

TEST_CASE("surrogate at identical policies reduces to the mean advantages") {
  RandomStream rng(7);
  const auto feats = sample_features(12, 11);
  const PolicyParams p = random_params(rng);
  std::vector<SurrogateEntry> batch;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    SurrogateEntry e;
    e.features = feats[i];
    e.action = enumerate_action_indices(p)[i % 33];
    e.a_local = rng.uniform01() * 2.0 - 1.0;
    if (i % 2 == 0) e.a_global = rng.uniform01() - 0.5;
    batch.push_back(std::move(e));
  }
  const double lambda_r = 0.5;
  const SurrogateResult res = surrogate_and_grad(p, p, p, batch, 0.2, lambda_r, 0.02);
  double loc = 0.0;
  double glob = 0.0;
  for (const auto& e : batch) {
    loc += e.a_local;
    glob += e.a_global ? lambda_r * *e.a_global : 0.0;
  }
  const double n = static_cast<double>(batch.size());
  CHECK(res.objective == loc / n + glob / n);  // exact: rho == 1, KL == 0
  CHECK(res.kl_mean == 0.0);
}

TEST_CASE("clip arithmetic on engineered ratios") {
  const Featurizer fz = default_featurizer();
  const auto feats = sample_features(1, 17);
  PolicyParams p = fresh_params();

  SUBCASE("rho = 1.5, positive advantage, clipped at 1.2") {
    PolicyParams old = p;
    // lift the NONE probability of the old policy to 2/15 so rho = 0.2/(2/15) = 1.5
    FeatureVector unit(16, 0.0);
    unit[0] = 1.0;
    old.w[old.type_b(kTypeCount - 1)] = std::log(8.0 / 13.0);
    SurrogateEntry e;
    e.features = unit;
    e.action = ActionIndex{};
    e.a_local = 1.0;
    const SurrogateResult res = surrogate_and_grad(p, old, p, {e}, 0.2, 0.5, 0.0);
    CHECK(res.objective == doctest::Approx(1.2).epsilon(1e-12));
  }
  SUBCASE("rho = 0.5, negative advantage, clip floor applies") {
    PolicyParams old = p;
    FeatureVector unit(16, 0.0);
    unit[0] = 1.0;
    old.w[old.type_b(kTypeCount - 1)] = std::log(8.0 / 3.0);  // old NONE prob = 0.4
    SurrogateEntry e;
    e.features = unit;
    e.action = ActionIndex{};
    e.a_local = -1.0;
    const SurrogateResult res = surrogate_and_grad(p, old, p, {e}, 0.2, 0.5, 0.0);
    CHECK(res.objective == doctest::Approx(-0.8).epsilon(1e-12));
  }
}

TEST_CASE("every per-sample contribution respects the clip bound") {
  RandomStream rng(19);
  const auto feats = sample_features(40, 23);
  for (int trial = 0; trial < 40; ++trial) {
    const PolicyParams p = random_params(rng);
    const PolicyParams old = random_params(rng);
    SurrogateEntry e;
    e.features = feats[static_cast<std::size_t>(trial)];
    e.action = enumerate_action_indices(p)[static_cast<std::size_t>(rng.uniform_int(0, 32))];
    e.a_local = rng.uniform01() * 4.0 - 2.0;
    const double eps = 0.2;
    const SurrogateResult res = surrogate_and_grad(p, old, p, {e}, eps, 0.5, 0.0);
    const double lp = action_logprob(p, e.features, e.action);
    const double lp_old = action_logprob(old, e.features, e.action);
    const double rho = std::exp(lp - lp_old);
    const double u = rho * e.a_local;
    const double v = std::clamp(rho, 1.0 - eps, 1.0 + eps) * e.a_local;
    CHECK(res.objective >= std::min(u, v) - 1e-12);
    CHECK(res.objective <= std::max(u, v) + 1e-12);
  }
}

TEST_CASE("prefix regime: batches without global advantages ignore lambda_r entirely") {
  RandomStream rng(29);
  const auto feats = sample_features(20, 31);
  const PolicyParams p = random_params(rng);
  const PolicyParams old = random_params(rng);
  const PolicyParams ref = random_params(rng);
  std::vector<SurrogateEntry> batch;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    SurrogateEntry e;
    e.features = feats[i];
    e.action = enumerate_action_indices(p)[(i * 5) % 33];
    e.a_local = rng.uniform01() * 2.0 - 1.0;
    batch.push_back(std::move(e));
  }
  const SurrogateResult with_lambda = surrogate_and_grad(p, old, ref, batch, 0.2, 0.5, 0.02);
  const SurrogateResult without = surrogate_and_grad(p, old, ref, batch, 0.2, 0.0, 0.02);
  CHECK(with_lambda.objective == without.objective);
  REQUIRE(with_lambda.gradient.size() == without.gradient.size());
  for (std::size_t j = 0; j < with_lambda.gradient.size(); ++j) {
    CHECK(with_lambda.gradient[j] == without.gradient[j]);  // bit-for-bit
  }
}

TEST_CASE("surrogate gradient matches central finite differences") {
  RandomStream rng(37);
  const auto feats = sample_features(6, 41);
  PolicyParams p = random_params(rng);
  const PolicyParams old = random_params(rng);
  const PolicyParams ref = random_params(rng);
  std::vector<SurrogateEntry> batch;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    SurrogateEntry e;
    e.features = feats[i];
    e.action = enumerate_action_indices(p)[(i * 7 + 1) % 33];
    e.a_local = rng.uniform01() * 2.0 - 1.0;
    if (i % 2 == 1) e.a_global = rng.uniform01() - 0.5;
    batch.push_back(std::move(e));
  }
  const double eps = 0.2;
  const double lambda_r = 0.5;
  const double beta = 0.05;
  // keep every ratio away from the clip kink so the subgradient is the gradient
  for (const auto& e : batch) {
    const double rho =
        std::exp(action_logprob(p, e.features, e.action) - action_logprob(old, e.features, e.action));
    REQUIRE(std::abs(rho - (1.0 - eps)) > 1e-3);
    REQUIRE(std::abs(rho - (1.0 + eps)) > 1e-3);
  }
  const SurrogateResult res = surrogate_and_grad(p, old, ref, batch, eps, lambda_r, beta);
  const double h = 1e-5;
  for (std::size_t j = 0; j < p.w.size(); j += 9) {
    const double keep = p.w[j];
    p.w[j] = keep + h;
    const double up = surrogate_and_grad(p, old, ref, batch, eps, lambda_r, beta).objective;
    p.w[j] = keep - h;
    const double dn = surrogate_and_grad(p, old, ref, batch, eps, lambda_r, beta).objective;
    p.w[j] = keep;
    CHECK(rel_err(res.gradient[j], (up - dn) / (2.0 * h)) < 1e-5);
  }
}

TEST_CASE("surrogate rejects bad inputs") {
  const PolicyParams p = fresh_params();
  CHECK_THROWS_AS(surrogate_and_grad(p, p, p, {}, 0.2, 0.5, 0.0), ContractError);
  SurrogateEntry e;
  e.features = FeatureVector(16, 0.0);
  e.action = ActionIndex{};
  e.a_local = 0.5;
  CHECK_THROWS_AS(surrogate_and_grad(p, p, p, {e}, 0.0, 0.5, 0.0), ContractError);
  CHECK_THROWS_AS(surrogate_and_grad(p, p, p, {e}, 1.0, 0.5, 0.0), ContractError);
}

TEST_CASE("train_egrpo learns the single-edge forced-fault environment") {
  EnvConfig cfg;
  cfg.chain_length_range = {2, 2};
  cfg.injection_probabilities = {1.0, 0, 0, 0};
  const Environment env(cfg, RewardConfig{});
  const Featurizer fz = default_featurizer();
  TrainConfig tc;
  tc.iterations = 60;
  tc.episodes_per_iter = 8;
  tc.seed = 5;
  const TrainResult res = train_egrpo(env, fz, fresh_params(), tc);
  REQUIRE(res.metrics.size() == 60);
  // from a uniform start the matching ask must dominate quickly
  double late = 0.0;
  for (std::size_t i = res.metrics.size() - 10; i < res.metrics.size(); ++i) {
    late += res.metrics[i].mean_s;
  }
  CHECK(late / 10.0 > 0.6);
  CHECK(res.metrics.back().mean_s > res.metrics.front().mean_s);
}

TEST_CASE("train_egrpo is deterministic in its seed") {
  EnvConfig cfg;
  cfg.chain_length_range = {2, 3};
  const Environment env(cfg, RewardConfig{});
  const Featurizer fz = default_featurizer();
  TrainConfig tc;
  tc.iterations = 5;
  tc.episodes_per_iter = 4;
  const TrainResult a = train_egrpo(env, fz, fresh_params(), tc);
  const TrainResult b = train_egrpo(env, fz, fresh_params(), tc);
  CHECK(a.params == b.params);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].objective == b.metrics[i].objective);
    CHECK(a.metrics[i].kl_mean == b.metrics[i].kl_mean);
  }
}

TEST_CASE("a tiny KL ceiling aborts training with a diagnostic") {
  const Environment env(EnvConfig{}, RewardConfig{});
  const Featurizer fz = default_featurizer();
  TrainConfig tc;
  tc.iterations = 50;
  tc.kl_ceiling = 1e-9;
  // iteration 0 has zero KL (params == ref); any real update then trips it
  CHECK_THROWS_AS(train_egrpo(env, fz, fresh_params(), tc), TrainingAbort);
}
