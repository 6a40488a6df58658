#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ncd/game.hpp"

namespace ncd::answerers {

using game::Answer;
using game::CoopLabel;
using game::DialogueTurn;
using game::Question;
using game::Scene;

// Information a learned non-cooperative answerer may condition on.
enum class FeatureMode {
  kQGoal,      // goal object + the current question
  kQGoalHist,  // + the dialogue so far
  kQGoalImg,   // + the whole scene
  kAll,
};

const char* to_string(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& token);

int answer_feature_dim(FeatureMode mode, const game::Vocabulary& vocab);
std::vector<double> answer_features(FeatureMode mode, const Scene& scene,
                                    std::span<const DialogueTurn> history,
                                    const Question& q, int max_rounds);

// Linear softmax over {yes, no, n/a}; `weights` is row-major 3 x dim.
struct LearnedNCParams {
  FeatureMode mode = FeatureMode::kQGoalHist;
  game::Vocabulary vocab;
  int max_rounds = 5;
  std::vector<double> weights;

  int dim() const { return answer_feature_dim(mode, vocab); }
  // Throws ModelShapeError when weights do not match the feature layout.
  void check_shape() const;
  std::vector<double> probabilities(std::span<const double> features) const;
};

nlohmann::json to_json(const LearnedNCParams& p);
LearnedNCParams learned_nc_from_json(const nlohmann::json& j);

struct DecoyRule {
  enum class Kind { kUniform, kFixed };
  Kind kind = Kind::kUniform;
  int fixed_index = 0;
};

class AnswerStrategy {
 public:
  enum class Kind {
    kCooperative,
    kSpam,
    kContradict,
    kAlternateGoal,
    kLearnedNC,
    kMixtureNC
  };

  static AnswerStrategy cooperative();
  static AnswerStrategy spam(Answer fixed);
  static AnswerStrategy contradict();
  static AnswerStrategy alternate_goal(DecoyRule rule = {});
  static AnswerStrategy learned(std::shared_ptr<const LearnedNCParams> params);
  // Weights must be nonnegative and sum to 1; members must be non-cooperative
  // and not themselves mixtures.
  static AnswerStrategy mixture(
      std::vector<std::pair<double, AnswerStrategy>> members);

  Kind kind() const { return kind_; }
  CoopLabel label() const {
    return kind_ == Kind::kCooperative ? CoopLabel::kCP : CoopLabel::kNC;
  }
  // "coop", "spam_no", "contradict", "altgoal", "learned_nc:<mode>", ...
  std::string tag() const;

  Answer spam_answer() const { return spam_answer_; }
  const DecoyRule& decoy_rule() const { return decoy_rule_; }
  const LearnedNCParams& learned_params() const { return *learned_; }
  const std::vector<std::pair<double, AnswerStrategy>>& members() const {
    return members_;
  }

 private:
  explicit AnswerStrategy(Kind kind) : kind_(kind) {}

  Kind kind_;
  Answer spam_answer_ = Answer::kNo;
  DecoyRule decoy_rule_;
  std::shared_ptr<const LearnedNCParams> learned_;
  std::vector<std::pair<double, AnswerStrategy>> members_;
};

// Picks the decoy object for an AlternateGoal episode. Never the goal.
int resolve_decoy(const AnswerStrategy& strategy, const Scene& scene, Rng& rng);
// Draws the member that plays a MixtureNC episode.
const AnswerStrategy& resolve_member(const AnswerStrategy& strategy, Rng& rng);

// One answer. `decoy` is required for AlternateGoal; mixtures must be
// resolved with resolve_member first.
Answer answer(const AnswerStrategy& strategy, const Scene& scene,
              std::span<const DialogueTurn> history, const Question& q,
              Rng& rng, int decoy = -1);

Answer negate(Answer a);

class StrategyAnswerer : public game::Answerer {
 public:
  explicit StrategyAnswerer(AnswerStrategy strategy)
      : strategy_(std::move(strategy)) {}

  CoopLabel label() const override { return strategy_.label(); }
  std::unique_ptr<game::AnswererEpisode> begin(const Scene& scene,
                                               Rng& rng) const override;
  const AnswerStrategy& strategy() const { return strategy_; }

 private:
  AnswerStrategy strategy_;
};

struct StrategyPool {
  AnswerStrategy cooperative = AnswerStrategy::cooperative();
  std::vector<AnswerStrategy> non_cooperative;
  // Empty means uniform over non_cooperative.
  std::vector<double> weights;
};

// Z ~ Bernoulli(p_nc): the cooperative strategy with probability 1 - p_nc,
// otherwise a non-cooperative one.
std::pair<AnswerStrategy, CoopLabel> sample_answerer(double p_nc,
                                                     const StrategyPool& pool,
                                                     Rng& rng);

struct FitHyper {
  double learning_rate = 0.5;
  int epochs = 200;
  std::uint64_t seed = 0;
  int max_rounds = 5;
};

// Full-batch gradient descent on the cross-entropy of recorded answers. The
// step is halved whenever it would increase the loss, so the per-epoch loss
// curve (written to `loss_curve` when given) is non-increasing.
LearnedNCParams fit_learned_nc(const std::vector<game::GameRecord>& corpus,
                               FeatureMode mode, const FitHyper& hyper,
                               std::vector<double>* loss_curve = nullptr);

}  // namespace ncd::answerers
