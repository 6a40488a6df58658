#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncd/game.hpp"

namespace ncd::agent {

using game::Answer;
using game::CoopLabel;
using game::Question;
using game::QuestionSpace;
using game::Scene;

struct AgentConfig {
  // n_objects doubles as the largest scene the features are laid out for.
  game::SceneConfig scene;
  int max_rounds = 5;
  // Assumed probability that any single answer is untruthful.
  double lie_rate = 0.05;
};

// Posterior over which object is the goal.
struct BeliefState {
  std::vector<double> probs;
  double lie_rate = 0.05;
  // Set when the evidence ruled out every object and the state was reset
  // to uniform.
  bool fallback = false;

  static BeliefState uniform(int n_objects, double lie_rate);
  int size() const { return static_cast<int>(probs.size()); }
  double entropy() const;
};

BeliefState belief_update(const BeliefState& b, const Scene& scene,
                          const Question& q, Answer a);

// Per-question inputs to the policy: one-hot identity, the entropy of the
// yes/no split the question induces under the belief, that entropy scaled
// by progress through the dialogue, and the predicted probability of "yes".
int policy_feature_dim(const QuestionSpace& space);
std::vector<double> policy_features(const QuestionSpace& space, int q_index,
                                    const Scene& scene, const BeliefState& b,
                                    int round, int max_rounds);

struct PolicyParams {
  std::vector<double> theta;
};

enum class SelectMode { kSample, kGreedy };

struct Selection {
  int index = 0;
  Question question;
  double log_prob = 0.0;
  // Gradient of log_prob with respect to theta.
  std::vector<double> score;
};

std::vector<double> question_probabilities(const PolicyParams& p,
                                           const QuestionSpace& space,
                                           const Scene& scene,
                                           const BeliefState& b, int round,
                                           int max_rounds);

Selection select_question(const PolicyParams& p, const QuestionSpace& space,
                          const Scene& scene, const BeliefState& b, int round,
                          int max_rounds, SelectMode mode, Rng& rng);

// Fixed layout of the dialogue feature vector X.
class FeatureLayout {
 public:
  FeatureLayout(int n_questions, int max_rounds, int max_objects);

  int dim() const { return dim_; }
  int n_questions() const { return n_questions_; }
  int max_rounds() const { return max_rounds_; }
  int max_objects() const { return max_objects_; }

  int bias_index() const { return 0; }
  int round_block(int round) const;  // round is 1-based
  int belief_block() const { return belief_; }
  int entropy_block() const { return entropy_; }
  int answer_count_block() const { return counts_; }
  int agreement_index() const { return counts_ + 3; }
  int contradiction_index() const { return counts_ + 4; }
  int fallback_index() const { return counts_ + 5; }
  int all_identical_index() const { return counts_ + 6; }
  int consistent_fraction_index() const { return counts_ + 7; }

 private:
  int n_questions_;
  int max_rounds_;
  int max_objects_;
  int belief_;
  int entropy_;
  int counts_;
  int dim_;
};

struct DialogueFeatures {
  std::vector<double> values;
  bool operator==(const DialogueFeatures&) const = default;
};

// `trace` holds the belief before the first turn and after every turn.
// Throws ConfigError when the record does not fit the layout.
DialogueFeatures extract_features(const game::GameRecord& record,
                                  std::span<const BeliefState> trace,
                                  const QuestionSpace& space,
                                  const FeatureLayout& layout);

// Candidate set bookkeeping shared by the features: an answer that rules out
// every object still consistent with the earlier answers is a contradiction
// and leaves the set unchanged.
struct ConsistencyTally {
  int agreements = 0;
  int contradictions = 0;
  std::vector<bool> candidates;
};
ConsistencyTally tally_consistency(const Scene& scene,
                                   std::span<const game::DialogueTurn> turns);

// Per-object evidence for the linear guesser: belief, log-belief, and the
// fraction of turns the object is consistent with.
inline constexpr int kObjectFeatureDim = 3;
std::vector<std::vector<double>> object_features(
    const Scene& scene, std::span<const game::DialogueTurn> turns,
    const BeliefState& b);

struct GuesserParams {
  enum class Mode { kBeliefArgmax, kLinear };
  Mode mode = Mode::kBeliefArgmax;
  std::vector<double> weights;  // kObjectFeatureDim entries in kLinear mode
};

int guess_object(const GuesserParams& o,
                 std::span<const std::vector<double>> object_feats,
                 const BeliefState& b);

struct CoopClassifierParams {
  std::vector<double> weights;
  double threshold = 0.0;
};

double coop_score(const CoopClassifierParams& c, const DialogueFeatures& x);
// NC iff weights . x > threshold; equality is CP.
CoopLabel classify_cooperation(const CoopClassifierParams& c,
                               const DialogueFeatures& x);

// Everything the question-player needs to play and be trained.
struct AgentModel {
  AgentConfig config;
  QuestionSpace space;
  PolicyParams policy;
  GuesserParams guesser;
  CoopClassifierParams coop;

  // Zero-initialized parameters over the full question space.
  static AgentModel make(const AgentConfig& config);
  static AgentModel make(const AgentConfig& config, QuestionSpace space);
  FeatureLayout layout() const;
  // Throws ModelShapeError when a parameter vector has the wrong size.
  void check_shapes() const;
};

// The question-player's side of one game.
class PlayerEpisode : public game::AgentEpisode {
 public:
  PlayerEpisode(const AgentModel& model, Scene scene, SelectMode mode);

  Question ask(int round, Rng& rng) override;
  void observe(const game::DialogueTurn& turn) override;
  int guess_object() const override;
  CoopLabel guess_cooperation() const override;

  DialogueFeatures features() const;
  const std::vector<BeliefState>& trace() const { return trace_; }
  const std::vector<Selection>& selections() const { return selections_; }
  const std::vector<game::DialogueTurn>& turns() const { return turns_; }
  const BeliefState& belief() const { return trace_.back(); }

 private:
  const AgentModel& model_;
  Scene scene_;
  SelectMode mode_;
  std::vector<BeliefState> trace_;
  std::vector<Selection> selections_;
  std::vector<game::DialogueTurn> turns_;
};

class QuestionPlayer : public game::QuestionAgent {
 public:
  QuestionPlayer(std::shared_ptr<const AgentModel> model, SelectMode mode)
      : model_(std::move(model)), mode_(mode) {}

  std::unique_ptr<game::AgentEpisode> begin(const Scene& scene) const override;
  const AgentModel& model() const { return *model_; }

 private:
  std::shared_ptr<const AgentModel> model_;
  SelectMode mode_;
};

// Checkpoint JSON: parameters, configuration, a hash of the configuration and
// the seed that produced it.
nlohmann::json to_json(const AgentModel& model, std::uint64_t seed);
AgentModel agent_from_json(const nlohmann::json& j);
std::string config_hash(const AgentModel& model);

}  // namespace ncd::agent
