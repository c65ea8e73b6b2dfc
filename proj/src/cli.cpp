#include "agentask/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "agentask/audit.hpp"
#include "agentask/config.hpp"
#include "agentask/egrpo.hpp"
#include "agentask/errors.hpp"
#include "agentask/experiment.hpp"
#include "agentask/gateway.hpp"
#include "agentask/templates.hpp"

namespace agentask {

namespace {

namespace fs = std::filesystem;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int workers = 0;  // 0 = host parallelism
  std::string policy = "never-ask";
  bool gateway = false;
  bool serial = false;

  Exec exec() const { return serial ? Exec::kSerial : Exec::kParallel; }
};

void apply_workers(int workers) {
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#else
  (void)workers;
#endif
}

AppConfig load_config(const GlobalOpts& g) {
  AppConfig app = load_app_config(g.config_path);
  app.sft.exec = g.exec();
  app.train.exec = g.exec();
  if (const char* ep = std::getenv("AGENTASK_ENDPOINT")) app.gateway.endpoint = ep;
  if (const char* key = std::getenv("AGENTASK_API_KEY")) app.gateway.api_key = key;
  if (const char* model = std::getenv("AGENTASK_MODEL")) app.gateway.model = model;
  return app;
}

std::unique_ptr<RolloutPolicy> make_policy(const std::string& name, const AppConfig& app,
                                           bool gateway) {
  if (gateway) {
    if (app.gateway.endpoint.empty()) {
      throw ConfigError("gateway mode needs an endpoint (config or AGENTASK_ENDPOINT)");
    }
    ChatRequest req;
    req.endpoint = app.gateway.endpoint;
    req.model = app.gateway.model;
    req.api_key = app.gateway.api_key;
    req.max_tokens = app.gateway.max_tokens;
    req.timeout_seconds = app.gateway.timeout_seconds;
    req.max_retries = app.gateway.max_retries;
    req.wire_log_path = app.gateway.wire_log;
    return std::make_unique<GatewayPolicy>(req, app.reward.token_cap);
  }
  if (name == "never-ask") return std::make_unique<NeverAskPolicy>();
  if (name == "always-ask") return std::make_unique<AlwaysAskPolicy>();
  if (name == "oracle") return std::make_unique<OraclePolicy>();
  // anything else is a checkpoint path
  const Featurizer featurizer = app.make_featurizer();
  PolicyParams params = load_checkpoint(name, featurizer.config().hash(),
                                        TemplateLibrary::builtin().hash());
  return std::make_unique<LearnedPolicy>(std::move(params), featurizer, "checkpoint");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

int cmd_simulate(const GlobalOpts& g, int episodes) {
  const AppConfig app = load_config(g);
  const Environment env = app.make_environment();
  const auto policy = make_policy(g.policy, app, g.gateway);
  const auto traces = simulate_policy(app, env, *policy, episodes, g.seed, g.exec());
  fs::create_directories(g.out_dir);
  const fs::path out = fs::path(g.out_dir) / "traces.jsonl";
  write_trace_file(out.string(), traces);
  double acc = 0.0;
  for (const auto& t : traces) acc += t.terminal_score;
  std::cout << "wrote " << traces.size() << " trajectories to " << out.string()
            << " (accuracy " << acc / static_cast<double>(traces.size()) << ")\n";
  return 0;
}

int cmd_build_corpus(const GlobalOpts& g, int episodes) {
  const AppConfig app = load_config(g);
  const Environment env = app.make_environment();
  const std::uint64_t lo = derive_seed(g.seed, 0xc0590f5ull);
  const Corpus corpus =
      build_corpus(env, {lo, lo + static_cast<std::uint64_t>(episodes) - 1}, env_teacher(env),
                   g.exec());
  fs::create_directories(g.out_dir);
  const fs::path out = fs::path(g.out_dir) / "corpus.jsonl";
  write_corpus(out.string(), corpus);
  std::cout << "wrote " << corpus.examples.size() << " examples to " << out.string() << " (hash "
            << corpus_hash(corpus) << ", " << corpus.teacher_failures << " teacher failures)\n";
  return 0;
}

int cmd_sft(const GlobalOpts& g, const std::string& corpus_path) {
  const AppConfig app = load_config(g);
  const Featurizer featurizer = app.make_featurizer();
  const std::string path =
      corpus_path.empty() ? (fs::path(g.out_dir) / "corpus.jsonl").string() : corpus_path;
  const Corpus corpus = read_corpus(path);
  SftConfig cfg = app.sft;
  cfg.seed = derive_seed(g.seed, 0x5f7u);
  const SftResult result = train_sft(corpus, featurizer, cfg);
  fs::create_directories(g.out_dir);
  const fs::path out = fs::path(g.out_dir) / "sft.ckpt";
  save_checkpoint(out.string(), result.params);
  std::cout << "sft: " << result.epochs_run << " epochs, held-out loss "
            << result.best_heldout_loss << ", checkpoint " << out.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& init_path) {
  const AppConfig app = load_config(g);
  const Environment env = app.make_environment();
  const Featurizer featurizer = app.make_featurizer();
  const std::string path =
      init_path.empty() ? (fs::path(g.out_dir) / "sft.ckpt").string() : init_path;
  const PolicyParams init = load_checkpoint(path, featurizer.config().hash(),
                                            TemplateLibrary::builtin().hash());
  TrainConfig cfg = app.train;
  cfg.seed = derive_seed(g.seed, 0x7141ull);
  const TrainResult result = train_egrpo(env, featurizer, init, cfg);
  fs::create_directories(g.out_dir);
  const fs::path ckpt = fs::path(g.out_dir) / "egrpo.ckpt";
  save_checkpoint(ckpt.string(), result.params);
  write_text(fs::path(g.out_dir) / "metrics.csv", metrics_csv(result.metrics, app.hash()));
  const auto& last = result.metrics.back();
  std::cout << "train: " << result.metrics.size() << " iterations, final mean_s " << last.mean_s
            << ", asks/episode " << last.asks_per_episode << ", checkpoint " << ckpt.string()
            << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts&, const std::string& traces_path, const std::string& baseline_path) {
  const auto traces = read_trace_file(traces_path);
  const auto baseline = read_trace_file(baseline_path);
  const OverheadReport overhead = overhead_metrics(traces, baseline);
  const DistributionReport dist = annotate_distribution(traces);
  std::cout << overhead_csv(overhead);
  std::cout << distribution_csv(dist);
  return 0;
}

int cmd_audit(const GlobalOpts& g, const std::string& traces_path,
              const std::string& baseline_path) {
  const auto traces = read_trace_file(traces_path);
  const DistributionReport dist = annotate_distribution(traces);
  const ResolutionReport res = one_shot_resolution(traces);
  std::unique_ptr<OverheadReport> overhead;
  if (!baseline_path.empty()) {
    const auto baseline = read_trace_file(baseline_path);
    overhead = std::make_unique<OverheadReport>(overhead_metrics(traces, baseline));
  }
  fs::create_directories(g.out_dir);
  write_text(fs::path(g.out_dir) / "distribution.csv", distribution_csv(dist));
  write_text(fs::path(g.out_dir) / "resolution.csv", resolution_csv(res));
  if (overhead) write_text(fs::path(g.out_dir) / "overhead.csv", overhead_csv(*overhead));
  std::cout << text_summary(dist, res, overhead.get());
  return 0;
}

int cmd_sweep(const GlobalOpts& g, int repeats) {
  const AppConfig app = load_config(g);
  const std::vector<Rational> lambdas = {Rational(1, 5), Rational(2, 5), Rational(4, 5)};
  const std::vector<int> windows = {2, 3, 4, 5};
  const auto rows = run_sweep_grid(app, lambdas, windows, repeats, g.seed);
  fs::create_directories(g.out_dir);
  const std::string csv = sweep_csv(rows, app.hash());
  write_text(fs::path(g.out_dir) / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"agentask: edge-level clarification controller"};
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "config file (JSON, one section per module)")
      ->envname("AGENTASK_CONFIG");
  app.add_option("--seed", g.seed, "base seed")->envname("AGENTASK_SEED");
  app.add_option("--out", g.out_dir, "output directory")->envname("AGENTASK_OUT");
  app.add_option("--workers", g.workers, "rollout worker threads (0 = host parallelism)")
      ->envname("AGENTASK_WORKERS");
  app.add_option("--policy", g.policy, "never-ask | always-ask | oracle | <checkpoint path>");
  app.add_flag("--gateway", g.gateway, "route the clarifier through a live LLM endpoint");
  app.add_flag("--serial", g.serial, "run kernels on the serial reference path");

  int episodes = 100;
  int corpus_episodes = 200;
  int repeats = 5;
  std::string corpus_path;
  std::string init_path;
  std::string traces_path;
  std::string baseline_path;

  auto* simulate = app.add_subcommand("simulate", "roll out episodes under a named policy");
  simulate->add_option("--episodes", episodes, "episodes to roll out");

  auto* build = app.add_subcommand("build-corpus", "Stage A: teacher-labeled edge corpus");
  build->add_option("--episodes", corpus_episodes, "episodes to label");

  auto* sft = app.add_subcommand("sft", "Stage B: supervised transfer");
  sft->add_option("--corpus", corpus_path, "corpus file (default <out>/corpus.jsonl)");

  auto* train = app.add_subcommand("train", "Stage C: E-GRPO reinforcement learning");
  train->add_option("--init", init_path, "initial checkpoint (default <out>/sft.ckpt)");

  auto* eval = app.add_subcommand("eval", "overhead and distribution of recorded traces");
  eval->add_option("--traces", traces_path, "trace file")->required();
  eval->add_option("--baseline", baseline_path, "never-ask baseline trace file")->required();

  auto* audit = app.add_subcommand("audit", "taxonomy and resolution analytics");
  audit->add_option("--traces", traces_path, "trace file")->required();
  audit->add_option("--baseline", baseline_path, "optional baseline for overhead");

  auto* sweep = app.add_subcommand("sweep", "RQ3 sensitivity grid over lambda_sw and H");
  sweep->add_option("--repeats", repeats, "training seeds per cell");

  app.require_subcommand(1);

  std::vector<const char*> argv;
  argv.push_back("agentask");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_workers(g.workers);
    if (simulate->parsed()) return cmd_simulate(g, episodes);
    if (build->parsed()) return cmd_build_corpus(g, corpus_episodes);
    if (sft->parsed()) return cmd_sft(g, corpus_path);
    if (train->parsed()) return cmd_train(g, init_path);
    if (eval->parsed()) return cmd_eval(g, traces_path, baseline_path);
    if (audit->parsed()) return cmd_audit(g, traces_path, baseline_path);
    if (sweep->parsed()) return cmd_sweep(g, repeats);
    return 1;
  } catch (const TrainingAbort& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}

}  // namespace agentask
