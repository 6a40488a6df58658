// Command-line front end: simulate, train, evaluate, stats, verify-theory, serve.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "ncd/corpus.hpp"
#include "ncd/harness.hpp"
#include "ncd/record_io.hpp"
#include "ncd/service.hpp"
#include "ncd/theory.hpp"

namespace fs = std::filesystem;
using namespace ncd;
using nlohmann::json;

namespace {

struct Options {
  double p_nc = 0.5;
  std::string reward = "object";
  int episodes = 0;
  std::uint64_t seed = 1;
  int scene_objects = 6;
  int rounds = 5;
  std::string out = ".";
  std::string corpus;
  std::string format = "game-log";
  std::string checkpoint;
  std::string nc_pool = "learned";
  bool sweep = false;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int threads = 1;
  int instances = 1000;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_path;
};

agent::AgentConfig agent_config(const Options& o) {
  agent::AgentConfig c;
  c.scene.n_objects = o.scene_objects;
  c.max_rounds = o.rounds;
  return c;
}

harness::NcPool parse_pool(const std::string& token) {
  if (token == "learned") return harness::NcPool::kLearned;
  if (token == "scripted") return harness::NcPool::kScripted;
  throw ConfigError("--nc-pool must be learned or scripted");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

fs::path out_dir(const Options& o) {
  fs::create_directories(o.out);
  return o.out;
}

agent::AgentModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  try {
    return agent::agent_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  } catch (const ModelShapeError& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

// SL-pretrained agent, the starting point for training and the default
// opponent when no checkpoint is given.
agent::AgentModel pretrained(const Options& o) {
  auto model = agent::AgentModel::make(agent_config(o));
  const harness::ExperimentConfig defaults;
  Rng rng(derive_seed(o.seed, 100));
  const auto pre = training::pretrain_supervised(
      model, training::SceneSource{model.config.scene, {}}, defaults.pretrain_games,
      defaults.pretrain, rng);
  model.policy = pre.policy;
  model.guesser = pre.guesser;
  return model;
}

agent::AgentModel agent_for(const Options& o) {
  return o.checkpoint.empty() ? pretrained(o) : load_checkpoint(o.checkpoint);
}

answerers::StrategyPool pool_for(const Options& o, const agent::AgentModel& model) {
  harness::ExperimentConfig cfg;
  cfg.agent = model.config;
  cfg.nc_pool = parse_pool(o.nc_pool);
  return harness::build_pool(cfg, model, o.seed);
}

int cmd_simulate(const Options& o) {
  const auto model = agent_for(o);
  answerers::StrategyPool pool;
  pool.non_cooperative = {harness::scripted_nc_mixture()};
  const int games = o.episodes > 0 ? o.episodes : 100;
  Rng rng(o.seed);
  const training::SceneSource scenes{model.config.scene, {}};
  std::vector<game::GameRecord> records;
  for (int i = 0; i < games; ++i) {
    records.push_back(training::simulate_episode(model, training::RewardSpec::object_only(),
                                                 o.p_nc, pool, scenes, false, rng())
                          .record);
  }
  const auto path = out_dir(o) / "games.jsonl";
  io::write_jsonl(path.string(), records);
  std::cout << json{{"games", games}, {"out", path.string()}}.dump(2) << "\n";
  return 0;
}

training::RewardSpec parse_reward(const std::string& token, bool& train_policy) {
  train_policy = true;
  if (token == "coop") return training::RewardSpec::coop_only();
  if (token == "object") return training::RewardSpec::object_only();
  if (token == "none") {
    train_policy = false;
    return training::RewardSpec::object_only();
  }
  if (token.rfind("mixed:", 0) == 0) {
    try {
      return training::RewardSpec::mixed(std::stod(token.substr(6)));
    } catch (const std::logic_error&) {
      throw ConfigError("bad mixed reward '" + token + "'");
    }
  }
  throw ConfigError("--reward must be coop, object, mixed:<lambda>, none or random");
}

int cmd_train(const Options& o) {
  const auto dir = out_dir(o);
  if (o.reward == "random") {
    const auto model = agent::AgentModel::make(agent_config(o));
    write_text(dir / "checkpoint.json", agent::to_json(model, o.seed).dump(2));
    std::cout << json{{"reward", "random"}, {"episodes", 0}}.dump(2) << "\n";
    return 0;
  }
  bool train_policy = true;
  const auto reward = parse_reward(o.reward, train_policy);
  auto model = agent_for(o);
  const auto pool = pool_for(o, model);

  harness::ExperimentConfig defaults;
  auto hyper = defaults.reinforce;
  if (!train_policy) hyper.policy_lr = 0.0;
  training::EvalSet eval;
  Rng eval_rng(derive_seed(o.seed, 500));
  for (int i = 0; i < 200; ++i) {
    eval.scenes.push_back(game::generate_scene(model.config.scene, eval_rng));
  }
  eval.label_seed = derive_seed(o.seed, 501);

  Rng rng(derive_seed(o.seed, 300));
  const auto result = training::reinforce_train(
      model, reward, o.p_nc, pool, training::SceneSource{model.config.scene, {}},
      o.episodes > 0 ? o.episodes : defaults.episodes, training::Baseline::kMean, hyper,
      rng, &eval);
  model.policy = result.policy;
  model.coop = result.coop;
  model.guesser = result.guesser;
  write_text(dir / "checkpoint.json", agent::to_json(model, o.seed).dump(2));

  std::ofstream curve(dir / "curve.csv");
  curve << "epoch,mean_reward,oer_eval,cer_eval\n";
  for (const auto& p : result.curve) {
    curve << p.epoch << ',' << p.mean_reward << ',' << p.oer_eval.value_or(NAN) << ','
          << p.cer_eval.value_or(NAN) << '\n';
  }
  std::cout << json{{"reward", reward.name()},
                    {"episodes", result.episodes},
                    {"nc_episodes", result.nc_episodes},
                    {"final_mean_reward", result.curve.back().mean_reward},
                    {"checkpoint", (dir / "checkpoint.json").string()}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_sweep(const Options& o) {
  harness::ExperimentConfig cfg;
  cfg.agent = agent_config(o);
  cfg.seeds = o.seeds;
  cfg.threads = o.threads;
  cfg.nc_pool = parse_pool(o.nc_pool);
  if (o.episodes > 0) cfg.episodes = o.episodes;
  const auto rows = harness::run_experiment(cfg);
  const auto dir = out_dir(o);
  std::ofstream results(dir / "results.csv");
  harness::write_results_csv(results, rows);
  const auto plots = harness::emit_plot_data(rows, dir.string());
  harness::write_results_csv(std::cout, rows);
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.sweep) return cmd_sweep(o);
  const auto model = agent_for(o);
  const auto pool = pool_for(o, model);
  training::EvalSet eval;
  Rng eval_rng(derive_seed(o.seed, 500));
  const int n = o.episodes > 0 ? o.episodes : 1000;
  for (int i = 0; i < n; ++i) {
    eval.scenes.push_back(game::generate_scene(model.config.scene, eval_rng));
  }
  eval.label_seed = derive_seed(o.seed, 501);
  const bool random = o.reward == "random";
  const auto items = training::evaluate(
      model, eval, o.p_nc, pool, agent::SelectMode::kSample,
      random ? training::GuessMode::kUniformRandom : training::GuessMode::kModel);
  const auto s = training::summarize(items);
  std::vector<game::GameRecord> records;
  for (const auto& it : items) records.push_back(it.record);
  const auto dir = out_dir(o);
  io::write_jsonl((dir / "eval_games.jsonl").string(), records);
  const auto nan_null = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  const json summary = {{"m", s.m},        {"p_hat", s.p_hat},
                        {"oer", s.oer},    {"oer_cp", nan_null(s.oer_cp)},
                        {"oer_nc", nan_null(s.oer_nc)}, {"cer", s.cer}};
  write_text(dir / "eval.json", summary.dump(2));
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_stats(const Options& o) {
  if (o.corpus.empty()) throw ConfigError("stats needs --corpus");
  const auto stats =
      corpus::compute_corpus_stats(o.corpus, corpus::parse_corpus_format(o.format));
  std::cout << corpus::to_json(stats).dump(2) << "\n";
  return 0;
}

int cmd_verify_theory(const Options& o) {
  Rng rng(o.seed);
  const auto rows = theory::thm1_battery(o.instances, 0.1, rng);
  int violations = 0;
  for (const auto& r : rows) violations += !r.holds;

  const auto lemma_a = theory::lemma1_mc_check(
      0.3, 0.1, 200, 100000, theory::bernoulli_reward_pair(0.5, 0.8), rng);
  const auto lemma_b = theory::lemma1_mc_check(
      0.2, 0.05, 500, 100000, theory::bernoulli_reward_pair(0.5, 0.7), rng);
  const auto phat = theory::phat_concentration_check(0.5, 100, 0.3, 100000, rng);

  const auto dir = out_dir(o);
  std::ofstream csv(dir / "thm1_battery.csv");
  theory::write_battery_csv(csv, rows);
  const json report = {{"thm1_instances", rows.size()},
                       {"thm1_violations", violations},
                       {"lemma1_0.3_0.1_200", theory::to_json(lemma_a)},
                       {"lemma1_0.2_0.05_500", theory::to_json(lemma_b)},
                       {"phat_concentration", theory::to_json(phat)}};
  std::cout << report.dump(2) << "\n";
  const bool ok = violations == 0 && lemma_a.passes && lemma_b.passes && phat.passes;
  return ok ? 0 : 1;
}

int cmd_serve(const Options& o) {
  auto model = std::make_shared<const agent::AgentModel>(agent_for(o));
  service::ServiceConfig cfg;
  cfg.log_path = o.log_path;
  cfg.seed = o.seed;
  service::SessionManager manager({{"default", model}}, cfg);
  httplib::Server server;
  service::register_routes(server, manager);
  std::cerr << "listening on " << o.host << ":" << o.port << "\n";
  if (!server.listen(o.host, o.port)) {
    throw ConfigError("cannot listen on " + o.host + ":" + std::to_string(o.port));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially non-cooperative question game: simulation, training, theory checks"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--p-nc", o.p_nc, "probability that an answerer is non-cooperative");
    c->add_option("--episodes", o.episodes, "games to play or train on");
    c->add_option("--seed", o.seed, "random seed");
    c->add_option("--scene-objects", o.scene_objects, "objects per scene");
    c->add_option("--rounds", o.rounds, "question rounds per game");
    c->add_option("--out", o.out, "output directory");
    c->add_option("--checkpoint", o.checkpoint, "agent checkpoint JSON");
    c->add_option("--nc-pool", o.nc_pool, "non-cooperative answerers: learned|scripted");
  };

  auto* simulate = app.add_subcommand("simulate", "play games and write them as JSONL");
  common(simulate);
  auto* train = app.add_subcommand("train", "pretrain, then fine-tune with REINFORCE");
  common(train);
  train->add_option("--reward", o.reward, "coop|object|mixed:<lambda>|none|random");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint or run the sweep");
  common(evaluate);
  evaluate->add_option("--reward", o.reward, "random replaces guesses with uniform draws");
  evaluate->add_flag("--sweep", o.sweep, "run the strategy x p_nc sweep");
  evaluate->add_option("--seeds", o.seeds, "seeds for the sweep");
  evaluate->add_option("--threads", o.threads, "worker threads for the sweep");
  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("--corpus", o.corpus, "corpus path")->required();
  stats->add_option("--format", o.format, "game-log|guesswhat-json");
  auto* verify = app.add_subcommand("verify-theory", "run the bound-check batteries");
  verify->add_option("--seed", o.seed, "random seed");
  verify->add_option("--instances", o.instances, "random finite instances");
  verify->add_option("--out", o.out, "output directory");
  auto* serve = app.add_subcommand("serve", "HTTP play service");
  common(serve);
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--port", o.port, "port");
  serve->add_option("--log", o.log_path, "append finished games to this JSONL file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (train->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (stats->parsed()) return cmd_stats(o);
    if (verify->parsed()) return cmd_verify_theory(o);
    if (serve->parsed()) return cmd_serve(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
