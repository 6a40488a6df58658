#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ncd/answerers.hpp"
#include "ncd/training.hpp"

namespace ncd::harness {

// The five question-player strategies compared in the sweep.
enum class Strategy { kCoopOnly, kObjectOnly, kMixed, kNoRl, kRandom };
const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& token);

// Who plays the non-cooperative side of the simulated games.
enum class NcPool {
  // Learned answerer fit on a scripted human-like corpus (spam, contradiction,
  // alternate goal).
  kLearned,
  // The scripted strategies themselves.
  kScripted,
};

struct ExperimentConfig {
  std::vector<double> p_nc_grid{0.3, 0.5, 0.7};
  std::vector<Strategy> strategies{Strategy::kCoopOnly, Strategy::kObjectOnly,
                                   Strategy::kMixed, Strategy::kNoRl,
                                   Strategy::kRandom};
  double mixed_lambda = 0.5;
  int episodes = 3000;
  int eval_size = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  agent::AgentConfig agent;
  int pretrain_games = 300;
  training::PretrainHyper pretrain{8, 1.0};
  training::ReinforceHyper reinforce{0.1, 0.05, 0.0, 10, false, false};
  NcPool nc_pool = NcPool::kLearned;
  answerers::FeatureMode nc_mode = answerers::FeatureMode::kQGoalHist;
  int nc_corpus_games = 1000;
  // Cells run on this many threads; results do not depend on it.
  int threads = 1;

  // Throws ConfigError for out-of-range values.
  void validate() const;
};

struct ResultRow {
  double p_nc = 0.0;
  Strategy strategy = Strategy::kRandom;
  std::uint64_t seed = 0;
  double oer = 0.0;
  double oer_cp = 0.0;
  double oer_nc = 0.0;
  double cer = 0.0;
  // Realized NC fractions on the evaluation set and during training.
  double eval_nc_fraction = 0.0;
  int eval_m = 0;
  double train_nc_fraction = 0.0;
  int train_episodes = 0;
};

// The scripted NC mixture the learned answerer imitates.
answerers::AnswerStrategy scripted_nc_mixture();

// The non-cooperative pool used by an experiment at a given seed.
answerers::StrategyPool build_pool(const ExperimentConfig& cfg,
                                   const agent::AgentModel& sl_agent,
                                   std::uint64_t seed);

// Rows ordered by seed, then grid point, then strategy.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

struct PlotRow {
  double pct_cooperative = 0.0;
  Strategy strategy = Strategy::kRandom;
  double mean = 0.0;
  // Standard error over seeds; absent with a single seed.
  std::optional<double> stderr_over_seeds;
};

// Metric names: "oer", "oer_cp", "oer_nc", "cer".
std::vector<std::string> plot_metrics();
std::vector<PlotRow> aggregate(const std::vector<ResultRow>& rows,
                               const std::string& metric);
void write_plot_csv(std::ostream& out, const std::vector<PlotRow>& rows);
// Writes plot_<metric>.csv for every metric into out_dir; returns the paths.
std::vector<std::string> emit_plot_data(const std::vector<ResultRow>& rows,
                                        const std::string& out_dir);

}  // namespace ncd::harness
