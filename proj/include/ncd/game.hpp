#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncd/common.hpp"

namespace ncd::game {

enum class Attribute { kCategory = 0, kColor, kSize, kRow, kCol };
inline constexpr int kNumAttributes = 5;

enum class Answer { kYes = 0, kNo, kNa };
inline constexpr int kNumAnswers = 3;

enum class CoopLabel { kCP = 0, kNC };

const char* to_string(Attribute a);
const char* to_string(Answer a);
const char* to_string(CoopLabel z);
// "yes" | "no" | "na"; throws DataError on anything else.
Answer parse_answer(const std::string& token);
CoopLabel parse_coop_label(const std::string& token);
Attribute parse_attribute(const std::string& token);

// Names for every categorical value. Sizes are always {small, medium, large};
// rows and columns are grid indices.
struct Vocabulary {
  int n_categories = 8;
  int n_colors = 6;
  int grid_dim = 3;

  int size_of(Attribute a) const;
  std::string value_name(Attribute a, int value) const;
  bool contains(Attribute a, int value) const {
    return value >= 0 && value < size_of(a);
  }
  bool operator==(const Vocabulary&) const = default;
};

inline constexpr int kNumSizes = 3;

struct SceneConfig {
  int n_objects = 4;
  Vocabulary vocab;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct ObjectSpec {
  int id = 0;
  int category = 0;
  int color = 0;
  int size = 0;
  Cell cell;

  int attribute(Attribute a) const;
  bool operator==(const ObjectSpec&) const = default;
};

struct Scene {
  std::vector<ObjectSpec> objects;
  int goal = 0;
  Vocabulary vocab;

  int n_objects() const { return static_cast<int>(objects.size()); }
  // Throws DataError when an invariant is broken.
  void validate() const;
  bool operator==(const Scene&) const = default;
};

// A yes/no predicate "attribute == value". Values outside the vocabulary are
// representable and are answered with n/a by the ground truth.
struct Question {
  static constexpr int kOutOfVocabulary = -1;

  Attribute attribute = Attribute::kCategory;
  int value = 0;

  static Question oov(Attribute a) { return {a, kOutOfVocabulary}; }
  bool operator==(const Question&) const = default;
};

struct DialogueTurn {
  Question question;
  Answer answer = Answer::kNa;
  int round = 1;
  bool operator==(const DialogueTurn&) const = default;
};

struct GameRecord {
  Scene scene;
  std::vector<DialogueTurn> turns;
  CoopLabel coop_label = CoopLabel::kCP;
  std::string strategy_tag;
  std::optional<int> object_guess;
  std::optional<CoopLabel> coop_guess;
  std::uint64_t seed = 0;

  bool operator==(const GameRecord&) const = default;
};

Scene generate_scene(const SceneConfig& config, Rng& rng);

Answer truth_answer(const Scene& scene, int target, const Question& q);

// Whether `object` would truthfully give answer `a` to `q`. n/a is
// consistent with every object.
bool consistent(const Scene& scene, int object, const Question& q, Answer a);

std::string render_question(const Question& q, const Vocabulary& vocab = {});

// The finite set of questions a policy chooses among.
class QuestionSpace {
 public:
  // Every in-vocabulary predicate, ordered by attribute then value.
  static QuestionSpace full(const Vocabulary& vocab);
  explicit QuestionSpace(std::vector<Question> questions);

  int size() const { return static_cast<int>(questions_.size()); }
  const Question& at(int index) const { return questions_.at(index); }
  const std::vector<Question>& questions() const { return questions_; }
  // Index of `q`, or -1 when it is not part of the space.
  int index_of(const Question& q) const;

 private:
  std::vector<Question> questions_;
};

// One episode from the question-player's side.
class AgentEpisode {
 public:
  virtual ~AgentEpisode() = default;
  virtual Question ask(int round, Rng& rng) = 0;
  virtual void observe(const DialogueTurn& turn) = 0;
  virtual int guess_object() const = 0;
  virtual CoopLabel guess_cooperation() const = 0;
};

class QuestionAgent {
 public:
  virtual ~QuestionAgent() = default;
  virtual std::unique_ptr<AgentEpisode> begin(const Scene& scene) const = 0;
};

// One episode from the answer-player's side.
class AnswererEpisode {
 public:
  virtual ~AnswererEpisode() = default;
  virtual Answer respond(std::span<const DialogueTurn> history,
                         const Question& q, Rng& rng) = 0;
  // Tag of the strategy actually in play (a mixture resolves to a member).
  virtual std::string tag() const = 0;
};

class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual CoopLabel label() const = 0;
  virtual std::unique_ptr<AnswererEpisode> begin(const Scene& scene,
                                                 Rng& rng) const = 0;
};

// Plays exactly max_rounds question/answer rounds, then asks for both guesses.
// The coop label comes from the answerer. Throws ProtocolError naming the
// offending party and round when either side produces malformed output.
GameRecord play_episode(AgentEpisode& agent, AnswererEpisode& answerer,
                        CoopLabel label, const Scene& scene, int max_rounds,
                        Rng& rng);

GameRecord run_episode(const QuestionAgent& agent, const Answerer& answerer,
                       const Scene& scene, int max_rounds, Rng& rng);

}  // namespace ncd::game
