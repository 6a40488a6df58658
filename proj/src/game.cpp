#include "ncd/game.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

namespace ncd::game {

namespace {

constexpr std::array<const char*, 12> kCategoryNames = {
    "chair", "table", "cup",   "lamp",  "book",   "vase",
    "ball",  "plant", "clock", "phone", "bottle", "bowl"};
constexpr std::array<const char*, 10> kColorNames = {
    "red",   "blue",  "green",  "yellow", "white",
    "black", "brown", "orange", "purple", "gray"};
constexpr std::array<const char*, kNumSizes> kSizeNames = {"small", "medium",
                                                           "large"};

bool starts_with_vowel(const std::string& s) {
  return !s.empty() && std::string("aeiou").find(s[0]) != std::string::npos;
}

}  // namespace

const char* to_string(Attribute a) {
  switch (a) {
    case Attribute::kCategory: return "category";
    case Attribute::kColor: return "color";
    case Attribute::kSize: return "size";
    case Attribute::kRow: return "row";
    case Attribute::kCol: return "col";
  }
  return "?";
}

const char* to_string(Answer a) {
  switch (a) {
    case Answer::kYes: return "yes";
    case Answer::kNo: return "no";
    case Answer::kNa: return "na";
  }
  return "?";
}

const char* to_string(CoopLabel z) { return z == CoopLabel::kNC ? "NC" : "CP"; }

Answer parse_answer(const std::string& token) {
  if (token == "yes") return Answer::kYes;
  if (token == "no") return Answer::kNo;
  if (token == "na") return Answer::kNa;
  throw DataError("invalid answer token '" + token + "'");
}

CoopLabel parse_coop_label(const std::string& token) {
  if (token == "CP") return CoopLabel::kCP;
  if (token == "NC") return CoopLabel::kNC;
  throw DataError("invalid coop label '" + token + "'");
}

Attribute parse_attribute(const std::string& token) {
  for (int i = 0; i < kNumAttributes; ++i) {
    if (token == to_string(static_cast<Attribute>(i))) {
      return static_cast<Attribute>(i);
    }
  }
  throw DataError("invalid attribute '" + token + "'");
}

int Vocabulary::size_of(Attribute a) const {
  switch (a) {
    case Attribute::kCategory: return n_categories;
    case Attribute::kColor: return n_colors;
    case Attribute::kSize: return kNumSizes;
    case Attribute::kRow:
    case Attribute::kCol: return grid_dim;
  }
  return 0;
}

std::string Vocabulary::value_name(Attribute a, int value) const {
  if (!contains(a, value)) return "<unknown>";
  switch (a) {
    case Attribute::kCategory:
      if (value < static_cast<int>(kCategoryNames.size())) {
        return kCategoryNames[value];
      }
      return "category" + std::to_string(value);
    case Attribute::kColor:
      if (value < static_cast<int>(kColorNames.size())) {
        return kColorNames[value];
      }
      return "color" + std::to_string(value);
    case Attribute::kSize: return kSizeNames[value];
    case Attribute::kRow:
    case Attribute::kCol: return std::to_string(value);
  }
  return "<unknown>";
}

int ObjectSpec::attribute(Attribute a) const {
  switch (a) {
    case Attribute::kCategory: return category;
    case Attribute::kColor: return color;
    case Attribute::kSize: return size;
    case Attribute::kRow: return cell.row;
    case Attribute::kCol: return cell.col;
  }
  return -1;
}

void Scene::validate() const {
  if (objects.size() < 2) throw DataError("scene needs at least 2 objects");
  if (goal < 0 || goal >= n_objects()) {
    throw DataError("scene goal index out of range");
  }
  std::set<int> ids;
  for (const auto& o : objects) {
    if (!ids.insert(o.id).second) {
      throw DataError("duplicate object id " + std::to_string(o.id));
    }
    for (int a = 0; a < kNumAttributes; ++a) {
      const auto attr = static_cast<Attribute>(a);
      if (!vocab.contains(attr, o.attribute(attr))) {
        throw DataError("object " + std::to_string(o.id) + " has " +
                        to_string(attr) + " outside the vocabulary");
      }
    }
  }
}

Scene generate_scene(const SceneConfig& config, Rng& rng) {
  const auto& v = config.vocab;
  if (config.n_objects < 2) {
    throw ConfigError("n_objects must be at least 2");
  }
  if (v.n_categories < 2 || v.n_colors < 2) {
    throw ConfigError("vocabulary sizes must be at least 2");
  }
  if (v.grid_dim < 1) throw ConfigError("grid_dim must be at least 1");

  Scene scene;
  scene.vocab = v;
  scene.objects.reserve(config.n_objects);
  for (int i = 0; i < config.n_objects; ++i) {
    ObjectSpec o;
    o.id = i;
    o.category = uniform_index(rng, v.n_categories);
    o.color = uniform_index(rng, v.n_colors);
    o.size = uniform_index(rng, kNumSizes);
    o.cell.row = uniform_index(rng, v.grid_dim);
    o.cell.col = uniform_index(rng, v.grid_dim);
    scene.objects.push_back(o);
  }
  scene.goal = uniform_index(rng, config.n_objects);
  return scene;
}

Answer truth_answer(const Scene& scene, int target, const Question& q) {
  if (!scene.vocab.contains(q.attribute, q.value)) return Answer::kNa;
  return scene.objects.at(target).attribute(q.attribute) == q.value
             ? Answer::kYes
             : Answer::kNo;
}

bool consistent(const Scene& scene, int object, const Question& q, Answer a) {
  if (a == Answer::kNa) return true;
  return truth_answer(scene, object, q) == a;
}

std::string render_question(const Question& q, const Vocabulary& vocab) {
  if (!vocab.contains(q.attribute, q.value)) {
    std::ostringstream out;
    out << "Is the object's " << to_string(q.attribute) << " value #"
        << q.value << "?";
    return out.str();
  }
  const std::string name = vocab.value_name(q.attribute, q.value);
  switch (q.attribute) {
    case Attribute::kCategory:
      return std::string("Is the object ") +
             (starts_with_vowel(name) ? "an " : "a ") + name + "?";
    case Attribute::kColor:
    case Attribute::kSize: return "Is the object " + name + "?";
    case Attribute::kRow: return "Is the object in row " + name + "?";
    case Attribute::kCol: return "Is the object in column " + name + "?";
  }
  return "?";
}

QuestionSpace QuestionSpace::full(const Vocabulary& vocab) {
  std::vector<Question> qs;
  for (int a = 0; a < kNumAttributes; ++a) {
    const auto attr = static_cast<Attribute>(a);
    for (int v = 0; v < vocab.size_of(attr); ++v) qs.push_back({attr, v});
  }
  return QuestionSpace(std::move(qs));
}

QuestionSpace::QuestionSpace(std::vector<Question> questions)
    : questions_(std::move(questions)) {
  if (questions_.empty()) throw ConfigError("question space is empty");
}

int QuestionSpace::index_of(const Question& q) const {
  const auto it = std::find(questions_.begin(), questions_.end(), q);
  return it == questions_.end() ? -1
                                : static_cast<int>(it - questions_.begin());
}

GameRecord play_episode(AgentEpisode& agent, AnswererEpisode& answerer,
                        CoopLabel label, const Scene& scene, int max_rounds,
                        Rng& rng) {
  if (max_rounds < 1) throw ConfigError("max_rounds must be at least 1");
  GameRecord record;
  record.scene = scene;
  record.coop_label = label;
  record.strategy_tag = answerer.tag();
  record.turns.reserve(max_rounds);

  for (int round = 1; round <= max_rounds; ++round) {
    const Question q = agent.ask(round, rng);
    const int attr = static_cast<int>(q.attribute);
    if (attr < 0 || attr >= kNumAttributes ||
        (q.value != Question::kOutOfVocabulary &&
         !scene.vocab.contains(q.attribute, q.value))) {
      throw ProtocolError("question-agent produced a malformed question in round " +
                          std::to_string(round));
    }
    const Answer a = answerer.respond(record.turns, q, rng);
    const int ai = static_cast<int>(a);
    if (ai < 0 || ai >= kNumAnswers) {
      throw ProtocolError("answerer '" + record.strategy_tag +
                          "' produced a malformed answer in round " +
                          std::to_string(round));
    }
    record.turns.push_back({q, a, round});
    agent.observe(record.turns.back());
  }

  // Both guesses are read from the same final state; neither sees the other.
  const int object_guess = agent.guess_object();
  const CoopLabel coop_guess = agent.guess_cooperation();
  if (object_guess < 0 || object_guess >= scene.n_objects()) {
    throw ProtocolError("question-agent guessed object " +
                        std::to_string(object_guess) + " after round " +
                        std::to_string(max_rounds));
  }
  record.object_guess = object_guess;
  record.coop_guess = coop_guess;
  return record;
}

GameRecord run_episode(const QuestionAgent& agent, const Answerer& answerer,
                       const Scene& scene, int max_rounds, Rng& rng) {
  auto agent_episode = agent.begin(scene);
  auto answerer_episode = answerer.begin(scene, rng);
  return play_episode(*agent_episode, *answerer_episode, answerer.label(),
                      scene, max_rounds, rng);
}

}  // namespace ncd::game
