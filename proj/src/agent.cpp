#include "ncd/agent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>

namespace ncd::agent {

using game::Attribute;
using game::DialogueTurn;
using game::kNumAnswers;

namespace {

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

double yes_mass(const Scene& scene, const BeliefState& b, const Question& q) {
  double p = 0.0;
  for (int i = 0; i < b.size(); ++i) {
    if (game::truth_answer(scene, i, q) == Answer::kYes) p += b.probs[i];
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

BeliefState BeliefState::uniform(int n_objects, double lie_rate) {
  if (n_objects < 1) throw ConfigError("belief needs at least one object");
  if (!(lie_rate >= 0.0 && lie_rate <= 0.5)) {
    throw ConfigError("lie rate must lie in [0, 0.5]");
  }
  BeliefState b;
  b.probs.assign(n_objects, 1.0 / n_objects);
  b.lie_rate = lie_rate;
  return b;
}

double BeliefState::entropy() const {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

BeliefState belief_update(const BeliefState& b, const Scene& scene,
                          const Question& q, Answer a) {
  if (b.size() != scene.n_objects()) {
    throw PreconditionError("belief dimension does not match the scene");
  }
  BeliefState next = b;
  next.fallback = false;
  if (a == Answer::kNa || !scene.vocab.contains(q.attribute, q.value)) {
    return next;
  }
  const double eps = b.lie_rate;
  double total = 0.0;
  for (int i = 0; i < b.size(); ++i) {
    const double like = game::consistent(scene, i, q, a) ? 1.0 - eps : eps;
    next.probs[i] = b.probs[i] * like;
    total += next.probs[i];
  }
  if (!(total > 0.0)) {
    next.probs.assign(b.size(), 1.0 / b.size());
    next.fallback = true;
    return next;
  }
  for (auto& p : next.probs) p /= total;
  return next;
}

int policy_feature_dim(const QuestionSpace& space) { return space.size() + 3; }

std::vector<double> policy_features(const QuestionSpace& space, int q_index,
                                    const Scene& scene, const BeliefState& b,
                                    int round, int max_rounds) {
  std::vector<double> f(policy_feature_dim(space), 0.0);
  const int n = space.size();
  f[q_index] = 1.0;
  const double p_yes = yes_mass(scene, b, space.at(q_index));
  const double h = binary_entropy(p_yes);
  const double progress =
      max_rounds > 1 ? static_cast<double>(round - 1) / (max_rounds - 1) : 0.0;
  f[n] = h;
  f[n + 1] = h * progress;
  f[n + 2] = p_yes;
  return f;
}

namespace {

std::vector<std::vector<double>> all_policy_features(
    const QuestionSpace& space, const Scene& scene, const BeliefState& b,
    int round, int max_rounds) {
  std::vector<std::vector<double>> fs;
  fs.reserve(space.size());
  for (int q = 0; q < space.size(); ++q) {
    fs.push_back(policy_features(space, q, scene, b, round, max_rounds));
  }
  return fs;
}

std::vector<double> softmax_logits(const PolicyParams& p,
                                   const std::vector<std::vector<double>>& fs) {
  std::vector<double> logits(fs.size());
  for (std::size_t q = 0; q < fs.size(); ++q) {
    if (fs[q].size() != p.theta.size()) {
      throw ModelShapeError("policy theta has " +
                            std::to_string(p.theta.size()) +
                            " entries, features have " +
                            std::to_string(fs[q].size()));
    }
    logits[q] = std::inner_product(fs[q].begin(), fs[q].end(), p.theta.begin(),
                                   0.0);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (auto& l : logits) l /= z;
  return logits;
}

}  // namespace

std::vector<double> question_probabilities(const PolicyParams& p,
                                           const QuestionSpace& space,
                                           const Scene& scene,
                                           const BeliefState& b, int round,
                                           int max_rounds) {
  return softmax_logits(p,
                        all_policy_features(space, scene, b, round, max_rounds));
}

Selection select_question(const PolicyParams& p, const QuestionSpace& space,
                          const Scene& scene, const BeliefState& b, int round,
                          int max_rounds, SelectMode mode, Rng& rng) {
  if (round < 1 || round > max_rounds) {
    throw PreconditionError("round outside [1, max_rounds]");
  }
  const auto fs = all_policy_features(space, scene, b, round, max_rounds);
  const auto probs = softmax_logits(p, fs);

  int pick = 0;
  if (mode == SelectMode::kGreedy) {
    pick = static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                            probs.begin());
  } else {
    const double u = uniform01(rng);
    double acc = 0.0;
    pick = space.size() - 1;
    for (int q = 0; q < space.size(); ++q) {
      acc += probs[q];
      if (u < acc) {
        pick = q;
        break;
      }
    }
  }

  Selection s;
  s.index = pick;
  s.question = space.at(pick);
  s.log_prob = std::log(probs[pick]);
  s.score = fs[pick];
  for (int q = 0; q < space.size(); ++q) {
    for (std::size_t k = 0; k < s.score.size(); ++k) {
      s.score[k] -= probs[q] * fs[q][k];
    }
  }
  return s;
}

FeatureLayout::FeatureLayout(int n_questions, int max_rounds, int max_objects)
    : n_questions_(n_questions),
      max_rounds_(max_rounds),
      max_objects_(max_objects) {
  if (n_questions < 1 || max_rounds < 1 || max_objects < 2) {
    throw ConfigError("feature layout needs questions, rounds and >= 2 objects");
  }
  belief_ = 1 + max_rounds * (n_questions + kNumAnswers);
  entropy_ = belief_ + max_objects;
  counts_ = entropy_ + max_rounds + 1;
  dim_ = counts_ + 8;
}

int FeatureLayout::round_block(int round) const {
  return 1 + (round - 1) * (n_questions_ + kNumAnswers);
}

ConsistencyTally tally_consistency(const Scene& scene,
                                   std::span<const DialogueTurn> turns) {
  ConsistencyTally tally;
  tally.candidates.assign(scene.n_objects(), true);
  for (const auto& t : turns) {
    if (t.answer == Answer::kNa ||
        !scene.vocab.contains(t.question.attribute, t.question.value)) {
      continue;
    }
    std::vector<bool> next(scene.n_objects(), false);
    bool any = false;
    for (int i = 0; i < scene.n_objects(); ++i) {
      next[i] = tally.candidates[i] &&
                game::consistent(scene, i, t.question, t.answer);
      any |= next[i];
    }
    if (any) {
      ++tally.agreements;
      tally.candidates = std::move(next);
    } else {
      ++tally.contradictions;
    }
  }
  return tally;
}

DialogueFeatures extract_features(const game::GameRecord& record,
                                  std::span<const BeliefState> trace,
                                  const QuestionSpace& space,
                                  const FeatureLayout& layout) {
  const auto& turns = record.turns;
  const int n_turns = static_cast<int>(turns.size());
  const int n_objects = record.scene.n_objects();
  if (n_turns > layout.max_rounds()) {
    throw ConfigError("record has " + std::to_string(n_turns) +
                      " turns, layout allows " +
                      std::to_string(layout.max_rounds()));
  }
  if (n_objects > layout.max_objects()) {
    throw ConfigError("record has " + std::to_string(n_objects) +
                      " objects, layout allows " +
                      std::to_string(layout.max_objects()));
  }
  if (space.size() != layout.n_questions()) {
    throw ConfigError("question space does not match the feature layout");
  }
  if (trace.size() != turns.size() + 1) {
    throw PreconditionError("belief trace must have one entry per turn plus one");
  }

  DialogueFeatures x;
  auto& v = x.values;
  v.assign(layout.dim(), 0.0);
  v[layout.bias_index()] = 1.0;

  for (int t = 0; t < n_turns; ++t) {
    const int block = layout.round_block(t + 1);
    const int qi = space.index_of(turns[t].question);
    if (qi >= 0) v[block + qi] = 1.0;
    v[block + layout.n_questions() + static_cast<int>(turns[t].answer)] = 1.0;
  }

  // Sorted so the block does not depend on object order.
  auto final_belief = trace.back().probs;
  std::sort(final_belief.begin(), final_belief.end(), std::greater<>());
  std::copy(final_belief.begin(), final_belief.end(),
            v.begin() + layout.belief_block());

  for (int t = 0; t <= layout.max_rounds(); ++t) {
    const auto& b = trace[std::min<std::size_t>(t, trace.size() - 1)];
    v[layout.entropy_block() + t] = b.entropy();
  }

  const double norm = layout.max_rounds();
  std::array<int, kNumAnswers> counts{};
  for (const auto& t : turns) ++counts[static_cast<int>(t.answer)];
  for (int a = 0; a < kNumAnswers; ++a) {
    v[layout.answer_count_block() + a] = counts[a] / norm;
  }

  const auto tally = tally_consistency(record.scene, turns);
  v[layout.agreement_index()] = tally.agreements;
  v[layout.contradiction_index()] = tally.contradictions;
  const bool fell_back = std::any_of(trace.begin(), trace.end(),
                                     [](const auto& b) { return b.fallback; });
  v[layout.fallback_index()] = fell_back ? 1.0 : 0.0;
  const bool identical =
      n_turns > 0 && std::all_of(turns.begin(), turns.end(), [&](const auto& t) {
        return t.answer == turns.front().answer;
      });
  v[layout.all_identical_index()] = identical ? 1.0 : 0.0;
  const auto n_candidates =
      std::count(tally.candidates.begin(), tally.candidates.end(), true);
  v[layout.consistent_fraction_index()] =
      static_cast<double>(n_candidates) / n_objects;
  return x;
}

std::vector<std::vector<double>> object_features(
    const Scene& scene, std::span<const DialogueTurn> turns,
    const BeliefState& b) {
  std::vector<std::vector<double>> feats(scene.n_objects());
  for (int i = 0; i < scene.n_objects(); ++i) {
    int agree = 0;
    for (const auto& t : turns) {
      if (game::consistent(scene, i, t.question, t.answer)) ++agree;
    }
    const double frac =
        turns.empty() ? 1.0 : static_cast<double>(agree) / turns.size();
    feats[i] = {b.probs[i], std::log(b.probs[i] + 1e-12), frac};
  }
  return feats;
}

int guess_object(const GuesserParams& o,
                 std::span<const std::vector<double>> object_feats,
                 const BeliefState& b) {
  if (o.mode == GuesserParams::Mode::kBeliefArgmax) {
    return static_cast<int>(std::max_element(b.probs.begin(), b.probs.end()) -
                            b.probs.begin());
  }
  if (o.weights.size() != static_cast<std::size_t>(kObjectFeatureDim)) {
    throw ModelShapeError("linear guesser needs " +
                          std::to_string(kObjectFeatureDim) + " weights");
  }
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < object_feats.size(); ++i) {
    const double s = std::inner_product(o.weights.begin(), o.weights.end(),
                                        object_feats[i].begin(), 0.0);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double coop_score(const CoopClassifierParams& c, const DialogueFeatures& x) {
  if (c.weights.size() != x.values.size()) {
    throw ModelShapeError("cooperation classifier has " +
                          std::to_string(c.weights.size()) +
                          " weights, features have " +
                          std::to_string(x.values.size()));
  }
  return std::inner_product(c.weights.begin(), c.weights.end(),
                            x.values.begin(), 0.0);
}

CoopLabel classify_cooperation(const CoopClassifierParams& c,
                               const DialogueFeatures& x) {
  return coop_score(c, x) > c.threshold ? CoopLabel::kNC : CoopLabel::kCP;
}

AgentModel AgentModel::make(const AgentConfig& config) {
  return make(config, QuestionSpace::full(config.scene.vocab));
}

AgentModel AgentModel::make(const AgentConfig& config, QuestionSpace space) {
  if (config.max_rounds < 1) throw ConfigError("max_rounds must be at least 1");
  if (config.scene.n_objects < 2) throw ConfigError("n_objects must be >= 2");
  if (!(config.lie_rate >= 0.0 && config.lie_rate <= 0.5)) {
    throw ConfigError("lie rate must lie in [0, 0.5]");
  }
  AgentModel m{config, std::move(space), {}, {}, {}};
  m.policy.theta.assign(policy_feature_dim(m.space), 0.0);
  m.coop.weights.assign(m.layout().dim(), 0.0);
  return m;
}

FeatureLayout AgentModel::layout() const {
  return FeatureLayout(space.size(), config.max_rounds, config.scene.n_objects);
}

void AgentModel::check_shapes() const {
  if (policy.theta.size() != static_cast<std::size_t>(policy_feature_dim(space))) {
    throw ModelShapeError("policy theta does not match the question space");
  }
  if (coop.weights.size() != static_cast<std::size_t>(layout().dim())) {
    throw ModelShapeError("cooperation classifier does not match the layout");
  }
  if (guesser.mode == GuesserParams::Mode::kLinear &&
      guesser.weights.size() != static_cast<std::size_t>(kObjectFeatureDim)) {
    throw ModelShapeError("linear guesser has the wrong number of weights");
  }
}

PlayerEpisode::PlayerEpisode(const AgentModel& model, Scene scene,
                             SelectMode mode)
    : model_(model), scene_(std::move(scene)), mode_(mode) {
  if (scene_.n_objects() > model_.config.scene.n_objects) {
    throw ConfigError("scene has more objects than the agent was built for");
  }
  trace_.push_back(
      BeliefState::uniform(scene_.n_objects(), model_.config.lie_rate));
}

Question PlayerEpisode::ask(int round, Rng& rng) {
  selections_.push_back(select_question(model_.policy, model_.space, scene_,
                                        trace_.back(), round,
                                        model_.config.max_rounds, mode_, rng));
  return selections_.back().question;
}

void PlayerEpisode::observe(const DialogueTurn& turn) {
  turns_.push_back(turn);
  trace_.push_back(
      belief_update(trace_.back(), scene_, turn.question, turn.answer));
}

int PlayerEpisode::guess_object() const {
  const auto feats = object_features(scene_, turns_, trace_.back());
  return agent::guess_object(model_.guesser, feats, trace_.back());
}

CoopLabel PlayerEpisode::guess_cooperation() const {
  return classify_cooperation(model_.coop, features());
}

DialogueFeatures PlayerEpisode::features() const {
  game::GameRecord partial;
  partial.scene = scene_;
  partial.turns = turns_;
  return extract_features(partial, trace_, model_.space, model_.layout());
}

std::unique_ptr<game::AgentEpisode> QuestionPlayer::begin(
    const Scene& scene) const {
  return std::make_unique<PlayerEpisode>(*model_, scene, mode_);
}

namespace {

nlohmann::json config_json(const AgentModel& m) {
  nlohmann::json questions = nlohmann::json::array();
  for (const auto& q : m.space.questions()) {
    questions.push_back({{"attribute", game::to_string(q.attribute)},
                         {"value", q.value}});
  }
  const auto& v = m.config.scene.vocab;
  return {{"n_objects", m.config.scene.n_objects},
          {"vocab",
           {{"n_categories", v.n_categories},
            {"n_colors", v.n_colors},
            {"grid_dim", v.grid_dim}}},
          {"max_rounds", m.config.max_rounds},
          {"lie_rate", m.config.lie_rate},
          {"questions", questions}};
}

}  // namespace

std::string config_hash(const AgentModel& model) {
  // FNV-1a over the canonical config text.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_json(model).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json to_json(const AgentModel& model, std::uint64_t seed) {
  return {{"config", config_json(model)},
          {"config_hash", config_hash(model)},
          {"seed", seed},
          {"policy", {{"theta", model.policy.theta}}},
          {"guesser",
           {{"mode", model.guesser.mode == GuesserParams::Mode::kLinear
                         ? "linear"
                         : "belief_argmax"},
            {"weights", model.guesser.weights}}},
          {"coop",
           {{"weights", model.coop.weights},
            {"threshold", model.coop.threshold}}}};
}

AgentModel agent_from_json(const nlohmann::json& j) {
  try {
    const auto& c = j.at("config");
    AgentConfig config;
    config.scene.n_objects = c.at("n_objects").get<int>();
    config.scene.vocab.n_categories = c.at("vocab").at("n_categories").get<int>();
    config.scene.vocab.n_colors = c.at("vocab").at("n_colors").get<int>();
    config.scene.vocab.grid_dim = c.at("vocab").at("grid_dim").get<int>();
    config.max_rounds = c.at("max_rounds").get<int>();
    config.lie_rate = c.at("lie_rate").get<double>();
    std::vector<Question> qs;
    for (const auto& q : c.at("questions")) {
      qs.push_back({game::parse_attribute(q.at("attribute").get<std::string>()),
                    q.at("value").get<int>()});
    }
    AgentModel m = AgentModel::make(config, QuestionSpace(std::move(qs)));
    m.policy.theta = j.at("policy").at("theta").get<std::vector<double>>();
    const auto mode = j.at("guesser").at("mode").get<std::string>();
    m.guesser.mode = mode == "linear" ? GuesserParams::Mode::kLinear
                                      : GuesserParams::Mode::kBeliefArgmax;
    m.guesser.weights = j.at("guesser").at("weights").get<std::vector<double>>();
    m.coop.weights = j.at("coop").at("weights").get<std::vector<double>>();
    m.coop.threshold = j.at("coop").at("threshold").get<double>();
    m.check_shapes();
    if (j.contains("config_hash") &&
        j.at("config_hash").get<std::string>() != config_hash(m)) {
      throw DataError("checkpoint config hash does not match its config");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint JSON: ") + e.what());
  }
}

}  // namespace ncd::agent
