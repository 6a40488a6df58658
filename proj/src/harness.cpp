#include "ncd/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

namespace ncd::harness {

using agent::AgentModel;
using answerers::AnswerStrategy;

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kCoopOnly:
      return "coop_only";
    case Strategy::kObjectOnly:
      return "object_only";
    case Strategy::kMixed:
      return "mixed";
    case Strategy::kNoRl:
      return "no_rl";
    case Strategy::kRandom:
      return "random";
  }
  return "?";
}

Strategy parse_strategy(const std::string& token) {
  for (Strategy s : {Strategy::kCoopOnly, Strategy::kObjectOnly, Strategy::kMixed,
                     Strategy::kNoRl, Strategy::kRandom}) {
    if (token == to_string(s)) return s;
  }
  throw ConfigError("unknown strategy '" + token + "'");
}

void ExperimentConfig::validate() const {
  if (p_nc_grid.empty()) throw ConfigError("p_nc grid is empty");
  for (double p : p_nc_grid) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("p_nc grid values must lie in (0, 1)");
  }
  if (strategies.empty()) throw ConfigError("no strategies to compare");
  if (seeds.empty()) throw ConfigError("need at least one seed");
  if (episodes < 1 || eval_size < 1) {
    throw ConfigError("episodes and eval size must be positive");
  }
  if (pretrain_games < 1) throw ConfigError("pretraining needs at least one game");
  if (!(mixed_lambda >= 0.0 && mixed_lambda <= 1.0)) {
    throw ConfigError("mixed reward weight must lie in [0, 1]");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

AnswerStrategy scripted_nc_mixture() {
  return AnswerStrategy::mixture({{0.19, AnswerStrategy::spam(game::Answer::kNo)},
                                  {0.36, AnswerStrategy::contradict()},
                                  {0.45, AnswerStrategy::alternate_goal()}});
}

answerers::StrategyPool build_pool(const ExperimentConfig& cfg,
                                   const AgentModel& sl_agent,
                                   std::uint64_t seed) {
  answerers::StrategyPool pool;
  const AnswerStrategy scripted = scripted_nc_mixture();
  if (cfg.nc_pool == NcPool::kScripted) {
    pool.non_cooperative = {scripted};
    return pool;
  }

  // Corpus of the scripted answerer playing against the pretrained agent.
  Rng rng(derive_seed(seed, 400));
  const answerers::StrategyAnswerer answerer(scripted);
  const agent::QuestionPlayer player(std::make_shared<AgentModel>(sl_agent),
                                     agent::SelectMode::kSample);
  std::vector<game::GameRecord> corpus;
  corpus.reserve(cfg.nc_corpus_games);
  for (int g = 0; g < cfg.nc_corpus_games; ++g) {
    const auto scene = game::generate_scene(cfg.agent.scene, rng);
    corpus.push_back(game::run_episode(player, answerer, scene,
                                       cfg.agent.max_rounds, rng));
  }
  answerers::FitHyper fit;
  fit.seed = derive_seed(seed, 401);
  fit.max_rounds = cfg.agent.max_rounds;
  auto params = std::make_shared<answerers::LearnedNCParams>(
      answerers::fit_learned_nc(corpus, cfg.nc_mode, fit));
  pool.non_cooperative = {AnswerStrategy::learned(std::move(params))};
  return pool;
}

namespace {

struct SeedContext {
  std::uint64_t seed = 0;
  AgentModel sl;
  answerers::StrategyPool pool;
};

ResultRow run_cell(const ExperimentConfig& cfg, const SeedContext& ctx,
                   const training::EvalSet& eval_scenes, int grid_index,
                   Strategy strategy) {
  const double p_nc = cfg.p_nc_grid[grid_index];
  training::EvalSet eval = eval_scenes;
  // Same labels for every strategy at this grid point.
  eval.label_seed = derive_seed(ctx.seed, 200, grid_index);

  ResultRow row;
  row.p_nc = p_nc;
  row.strategy = strategy;
  row.seed = ctx.seed;

  AgentModel model = ctx.sl;
  auto guess = training::GuessMode::kModel;
  if (strategy == Strategy::kRandom) {
    model = AgentModel::make(cfg.agent);
    guess = training::GuessMode::kUniformRandom;
    row.train_nc_fraction = std::numeric_limits<double>::quiet_NaN();
  } else {
    training::RewardSpec reward = training::RewardSpec::object_only();
    auto hyper = cfg.reinforce;
    if (strategy == Strategy::kCoopOnly) reward = training::RewardSpec::coop_only();
    if (strategy == Strategy::kMixed) {
      reward = training::RewardSpec::mixed(cfg.mixed_lambda);
    }
    // c is still trained, on the same episodes.
    if (strategy == Strategy::kNoRl) hyper.policy_lr = 0.0;
    const training::SceneSource scenes{cfg.agent.scene, {}};
    Rng rng(derive_seed(ctx.seed, 300, grid_index));
    try {
      const auto result =
          training::reinforce_train(model, reward, p_nc, ctx.pool, scenes,
                                    cfg.episodes, training::Baseline::kMean,
                                    hyper, rng);
      model.policy = result.policy;
      model.coop = result.coop;
      model.guesser = result.guesser;
      row.train_episodes = result.episodes;
      row.train_nc_fraction =
          static_cast<double>(result.nc_episodes) / result.episodes;
    } catch (const TrainingAbortedError& e) {
      throw TrainingAbortedError(std::string("cell (p_nc=") + std::to_string(p_nc) +
                                 ", strategy=" + to_string(strategy) +
                                 ", seed=" + std::to_string(ctx.seed) +
                                 "): " + e.what());
    }
  }

  const auto items = training::evaluate(model, eval, p_nc, ctx.pool,
                                        agent::SelectMode::kSample, guess);
  const auto s = training::summarize(items);
  row.oer = s.oer;
  row.oer_cp = s.oer_cp;
  row.oer_nc = s.oer_nc;
  row.cer = s.cer;
  row.eval_nc_fraction = s.p_hat;
  row.eval_m = s.m;
  return row;
}

// Runs task(i) for i in [0, n) on up to `threads` workers.
template <typename Task>
void parallel_for(int n, int threads, const Task& task) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  // One evaluation scene set for every seed, grid point and strategy.
  training::EvalSet eval;
  Rng eval_rng(derive_seed(0xE7A1, cfg.agent.scene.n_objects));
  for (int i = 0; i < cfg.eval_size; ++i) {
    eval.scenes.push_back(game::generate_scene(cfg.agent.scene, eval_rng));
  }

  const int n_seeds = static_cast<int>(cfg.seeds.size());
  std::vector<std::optional<SeedContext>> contexts(n_seeds);
  parallel_for(n_seeds, cfg.threads, [&](int k) {
    SeedContext& ctx = contexts[k].emplace(
        SeedContext{cfg.seeds[k], AgentModel::make(cfg.agent), {}});
    Rng rng(derive_seed(ctx.seed, 100));
    const auto pre = training::pretrain_supervised(
        ctx.sl, training::SceneSource{cfg.agent.scene, {}}, cfg.pretrain_games,
        cfg.pretrain, rng);
    ctx.sl.policy = pre.policy;
    ctx.sl.guesser = pre.guesser;
    ctx.pool = build_pool(cfg, ctx.sl, ctx.seed);
  });

  const int n_grid = static_cast<int>(cfg.p_nc_grid.size());
  const int n_strat = static_cast<int>(cfg.strategies.size());
  std::vector<ResultRow> rows(static_cast<std::size_t>(n_seeds) * n_grid * n_strat);
  parallel_for(static_cast<int>(rows.size()), cfg.threads, [&](int idx) {
    const int k = idx / (n_grid * n_strat);
    const int g = (idx / n_strat) % n_grid;
    const int s = idx % n_strat;
    rows[idx] = run_cell(cfg, *contexts[k], eval, g, cfg.strategies[s]);
  });
  return rows;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double metric_of(const ResultRow& r, const std::string& metric) {
  if (metric == "oer") return r.oer;
  if (metric == "oer_cp") return r.oer_cp;
  if (metric == "oer_nc") return r.oer_nc;
  if (metric == "cer") return r.cer;
  throw ConfigError("unknown metric '" + metric + "'");
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "p_nc,strategy,seed,oer,oer_cp,oer_nc,cer,eval_nc_fraction,eval_m,"
         "train_nc_fraction,train_episodes\n";
  for (const auto& r : rows) {
    out << fmt(r.p_nc) << ',' << to_string(r.strategy) << ',' << r.seed << ','
        << fmt(r.oer) << ',' << fmt(r.oer_cp) << ',' << fmt(r.oer_nc) << ','
        << fmt(r.cer) << ',' << fmt(r.eval_nc_fraction) << ',' << r.eval_m << ','
        << fmt(r.train_nc_fraction) << ',' << r.train_episodes << '\n';
  }
}

std::vector<std::string> plot_metrics() { return {"oer", "oer_cp", "oer_nc", "cer"}; }

std::vector<PlotRow> aggregate(const std::vector<ResultRow>& rows,
                               const std::string& metric) {
  if (rows.empty()) throw PreconditionError("no results to aggregate");
  // Keyed by (p_nc, strategy) in first-seen order.
  std::vector<std::pair<double, Strategy>> keys;
  std::map<std::pair<double, Strategy>, std::vector<double>> values;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.p_nc, r.strategy);
    if (!values.count(key)) keys.push_back(key);
    const double v = metric_of(r, metric);
    auto& bucket = values[key];
    if (!std::isnan(v)) bucket.push_back(v);
  }
  std::vector<PlotRow> out;
  for (const auto& key : keys) {
    const auto& v = values[key];
    PlotRow p;
    p.pct_cooperative = 100.0 * (1.0 - key.first);
    p.strategy = key.second;
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    p.mean = v.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / n;
    if (v.size() >= 2) {
      double ss = 0.0;
      for (double x : v) ss += (x - p.mean) * (x - p.mean);
      p.stderr_over_seeds = std::sqrt(ss / (n - 1.0) / n);
    }
    out.push_back(p);
  }
  return out;
}

void write_plot_csv(std::ostream& out, const std::vector<PlotRow>& rows) {
  out << "pct_cooperative,strategy,mean,stderr\n";
  for (const auto& r : rows) {
    out << fmt(r.pct_cooperative) << ',' << to_string(r.strategy) << ','
        << fmt(r.mean) << ','
        << (r.stderr_over_seeds ? fmt(*r.stderr_over_seeds) : "") << '\n';
  }
}

std::vector<std::string> emit_plot_data(const std::vector<ResultRow>& rows,
                                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& metric : plot_metrics()) {
    const auto path =
        (std::filesystem::path(out_dir) / ("plot_" + metric + ".csv")).string();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_plot_csv(out, aggregate(rows, metric));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace ncd::harness
