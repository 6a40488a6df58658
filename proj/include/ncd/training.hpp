#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ncd/agent.hpp"
#include "ncd/answerers.hpp"

namespace ncd::training {

using agent::AgentModel;
using game::CoopLabel;
using game::Scene;

// Where training scenes come from: freshly generated, or drawn uniformly
// from a fixed list.
struct SceneSource {
  game::SceneConfig config;
  std::vector<Scene> fixed;

  Scene draw(Rng& rng) const;
};

struct RewardSpec {
  enum class Kind { kCoopOnly, kObjectOnly, kMixed };
  Kind kind = Kind::kObjectOnly;
  double lambda = 0.5;  // weight on the object term for kMixed

  static RewardSpec coop_only() { return {Kind::kCoopOnly, 0.0}; }
  static RewardSpec object_only() { return {Kind::kObjectOnly, 1.0}; }
  static RewardSpec mixed(double lambda);

  double operator()(bool object_correct, bool coop_correct) const;
  std::string name() const;
};

// Information-gain teacher: the question maximizing expected reduction of
// belief entropy (ties to the lowest index).
int teacher_question(const agent::AgentModel& model, const Scene& scene,
                     const agent::BeliefState& b);
double expected_information_gain(const Scene& scene,
                                 const agent::BeliefState& b,
                                 const game::Question& q);

struct PretrainHyper {
  int epochs = 40;
  double learning_rate = 1.0;
};

struct PretrainResult {
  agent::PolicyParams policy;
  agent::GuesserParams guesser;
  // Cross-entropy on the teacher data before training and after each epoch.
  std::vector<double> loss_curve;
};

PretrainResult pretrain_supervised(const AgentModel& agent,
                                   const SceneSource& scenes, int n_games,
                                   const PretrainHyper& hyper, Rng& rng);

enum class Baseline { kNone, kMean };

struct ReinforceHyper {
  double policy_lr = 0.05;
  double coop_lr = 0.05;
  double guesser_lr = 0.0;
  int epochs = 10;
  // Trains the linear guesser alongside; off keeps o fixed.
  bool train_guesser = false;
  // Debug switch: every episode is cooperative regardless of p_nc.
  bool cooperative_only = false;
};

struct EpisodeOutcome {
  game::GameRecord record;
  agent::DialogueFeatures features;
  CoopLabel z = CoopLabel::kCP;
  double reward = 0.0;
  // Sum over rounds of the gradient of log pi(question).
  std::vector<double> score;
  std::vector<std::vector<double>> object_feats;
  std::uint64_t seed = 0;
};

// Samples Z ~ Bernoulli(p_nc) and a scene, plays one episode with questions
// sampled from the policy, and scores it.
EpisodeOutcome simulate_episode(const AgentModel& model,
                                const RewardSpec& reward, double p_nc,
                                const answerers::StrategyPool& pool,
                                const SceneSource& scenes, bool cooperative_only,
                                std::uint64_t seed);

// Monte-Carlo REINFORCE estimate of grad J(theta), without updating.
std::vector<double> estimate_policy_gradient(
    const AgentModel& model, const RewardSpec& reward, double p_nc,
    const answerers::StrategyPool& pool, const SceneSource& scenes,
    int episodes, Baseline baseline, Rng& rng);

struct CurvePoint {
  int epoch = 0;
  double mean_reward = 0.0;
  std::optional<double> oer_eval;
  std::optional<double> cer_eval;
};

struct EvalSet {
  std::vector<Scene> scenes;
  std::uint64_t label_seed = 0;
};

struct ReinforceResult {
  agent::PolicyParams policy;
  agent::CoopClassifierParams coop;
  agent::GuesserParams guesser;
  std::vector<CurvePoint> curve;
  int episodes = 0;
  int nc_episodes = 0;
};

// Episodic REINFORCE on theta with a terminal reward (discount 1), while c
// takes one logistic-regression step on (X, Z) per episode. When `eval` is
// given, every epoch ends with an evaluation on it.
ReinforceResult reinforce_train(const AgentModel& init,
                                const RewardSpec& reward, double p_nc,
                                const answerers::StrategyPool& pool,
                                const SceneSource& scenes, int episodes,
                                Baseline baseline, const ReinforceHyper& hyper,
                                Rng& rng, const EvalSet* eval = nullptr);

struct EvalItem {
  int goal = 0;
  int object_guess = 0;
  CoopLabel z = CoopLabel::kCP;
  CoopLabel coop_guess = CoopLabel::kCP;
  std::string strategy_tag;
  game::GameRecord record;
};

enum class GuessMode { kModel, kUniformRandom };

// Plays one episode per evaluation scene. Labels and answerer draws depend
// only on (label_seed, item index), so every agent faces the same Z
// sequence. kUniformRandom replaces both guesses with uniform draws.
std::vector<EvalItem> evaluate(const AgentModel& model, const EvalSet& eval,
                               double p_nc, const answerers::StrategyPool& pool,
                               agent::SelectMode mode,
                               GuessMode guess = GuessMode::kModel);

struct EvalSummary {
  double oer = 0.0;
  double oer_cp = 0.0;
  double oer_nc = 0.0;
  double cer = 0.0;
  double p_hat = 0.0;
  int m = 0;
};
EvalSummary summarize(const std::vector<EvalItem>& items);

struct EffectivenessReport {
  // Mean over trials of the largest pairwise |oer(o|NC)| gap between policies.
  double epsilon_hat = 0.0;
  // Mean absolute gap per policy pair (i < j), row-major over pairs.
  std::vector<double> pair_deviations;
  std::vector<std::pair<int, int>> pairs;
  int m = 0;
  int trials = 0;
};

// Plays m non-cooperative episodes per policy per trial against `answerer`,
// all policies sharing the guesser `o` and the same scenes and seeds.
EffectivenessReport effectiveness_estimate(
    const answerers::AnswerStrategy& answerer,
    const std::vector<AgentModel>& policies, const agent::GuesserParams& o,
    const SceneSource& scenes, int m, int trials, Rng& rng);

}  // namespace ncd::training
