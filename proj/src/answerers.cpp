#include "ncd/answerers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace ncd::answerers {

using game::Attribute;
using game::kNumAnswers;
using game::kNumAttributes;
using game::kNumSizes;

namespace {

constexpr int kQuestionBlock = 1 + kNumAttributes + 1 + 1;
constexpr int kHistoryBlock = 3 + 4 + 1 + 2;

bool uses_history(FeatureMode m) {
  return m == FeatureMode::kQGoalHist || m == FeatureMode::kAll;
}
bool uses_image(FeatureMode m) {
  return m == FeatureMode::kQGoalImg || m == FeatureMode::kAll;
}

int attribute_block(const game::Vocabulary& v) {
  return v.n_categories + v.n_colors + kNumSizes + 2 * v.grid_dim;
}

// Writes a one-hot (or weighted) encoding of an object's attributes.
void add_object(std::vector<double>& out, std::size_t offset,
                const game::ObjectSpec& o, const game::Vocabulary& v,
                double weight) {
  std::size_t at = offset;
  out[at + o.category] += weight;
  at += v.n_categories;
  out[at + o.color] += weight;
  at += v.n_colors;
  out[at + o.size] += weight;
  at += kNumSizes;
  out[at + o.cell.row] += weight;
  at += v.grid_dim;
  out[at + o.cell.col] += weight;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

}  // namespace

const char* to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kQGoal: return "q_goal";
    case FeatureMode::kQGoalHist: return "q_goal_hist";
    case FeatureMode::kQGoalImg: return "q_goal_img";
    case FeatureMode::kAll: return "all";
  }
  return "?";
}

FeatureMode parse_feature_mode(const std::string& token) {
  for (auto m : {FeatureMode::kQGoal, FeatureMode::kQGoalHist,
                 FeatureMode::kQGoalImg, FeatureMode::kAll}) {
    if (token == to_string(m)) return m;
  }
  throw ConfigError("unknown feature mode '" + token + "'");
}

int answer_feature_dim(FeatureMode mode, const game::Vocabulary& vocab) {
  int dim = kQuestionBlock + attribute_block(vocab);
  if (uses_history(mode)) dim += kHistoryBlock;
  if (uses_image(mode)) dim += 3 + attribute_block(vocab);
  return dim;
}

std::vector<double> answer_features(FeatureMode mode, const Scene& scene,
                                    std::span<const DialogueTurn> history,
                                    const Question& q, int max_rounds) {
  const auto& v = scene.vocab;
  std::vector<double> f(answer_feature_dim(mode, v), 0.0);
  const bool oov = !v.contains(q.attribute, q.value);
  std::size_t at = 0;

  f[at++] = 1.0;
  f[at + static_cast<int>(q.attribute)] = 1.0;
  at += kNumAttributes;
  f[at++] = oov ? 1.0 : 0.0;
  f[at++] = game::truth_answer(scene, scene.goal, q) == Answer::kYes ? 1.0 : 0.0;
  add_object(f, at, scene.objects[scene.goal], v, 1.0);
  at += attribute_block(v);

  if (uses_history(mode)) {
    const double norm = std::max(1, max_rounds);
    std::array<int, kNumAnswers> counts{};
    for (const auto& t : history) ++counts[static_cast<int>(t.answer)];
    for (int a = 0; a < kNumAnswers; ++a) f[at++] = counts[a] / norm;
    const int last = history.empty() ? kNumAnswers
                                     : static_cast<int>(history.back().answer);
    f[at + last] = 1.0;
    at += 4;
    f[at++] = static_cast<double>(history.size() + 1) / norm;
    bool said_yes = false;
    bool said_no = false;
    for (const auto& t : history) {
      if (t.question == q) {
        said_yes |= t.answer == Answer::kYes;
        said_no |= t.answer == Answer::kNo;
      }
    }
    f[at++] = said_yes ? 1.0 : 0.0;
    f[at++] = said_no ? 1.0 : 0.0;
  }

  if (uses_image(mode)) {
    const int n = scene.n_objects();
    int matches = 0;
    int other_matches = 0;
    for (int i = 0; i < n; ++i) {
      if (game::truth_answer(scene, i, q) == Answer::kYes) {
        ++matches;
        if (i != scene.goal) ++other_matches;
      }
    }
    f[at++] = static_cast<double>(matches) / n;
    f[at++] = static_cast<double>(other_matches) / (n - 1);
    f[at++] = other_matches > 0 ? 1.0 : 0.0;
    for (const auto& o : scene.objects) add_object(f, at, o, v, 1.0 / n);
    at += attribute_block(v);
  }
  return f;
}

void LearnedNCParams::check_shape() const {
  const auto expected = static_cast<std::size_t>(kNumAnswers * dim());
  if (weights.size() != expected) {
    throw ModelShapeError("learned answerer has " +
                          std::to_string(weights.size()) + " weights, mode " +
                          to_string(mode) + " needs " +
                          std::to_string(expected));
  }
}

std::vector<double> LearnedNCParams::probabilities(
    std::span<const double> features) const {
  check_shape();
  const auto d = static_cast<std::size_t>(dim());
  if (features.size() != d) {
    throw ModelShapeError("feature vector has dimension " +
                          std::to_string(features.size()) + ", expected " +
                          std::to_string(d));
  }
  std::array<double, kNumAnswers> logits{};
  for (int a = 0; a < kNumAnswers; ++a) {
    logits[a] = std::inner_product(features.begin(), features.end(),
                                   weights.begin() + a * d, 0.0);
  }
  return softmax(logits);
}

nlohmann::json to_json(const LearnedNCParams& p) {
  return {{"feature_mode", to_string(p.mode)},
          {"vocab",
           {{"n_categories", p.vocab.n_categories},
            {"n_colors", p.vocab.n_colors},
            {"grid_dim", p.vocab.grid_dim}}},
          {"max_rounds", p.max_rounds},
          {"weights", p.weights}};
}

LearnedNCParams learned_nc_from_json(const nlohmann::json& j) {
  LearnedNCParams p;
  try {
    p.mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    const auto& v = j.at("vocab");
    p.vocab.n_categories = v.at("n_categories").get<int>();
    p.vocab.n_colors = v.at("n_colors").get<int>();
    p.vocab.grid_dim = v.at("grid_dim").get<int>();
    p.max_rounds = j.at("max_rounds").get<int>();
    p.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad learned answerer JSON: ") + e.what());
  }
  p.check_shape();
  return p;
}

AnswerStrategy AnswerStrategy::cooperative() {
  return AnswerStrategy(Kind::kCooperative);
}

AnswerStrategy AnswerStrategy::spam(Answer fixed) {
  const int v = static_cast<int>(fixed);
  if (v < 0 || v >= kNumAnswers) throw ConfigError("invalid spam answer");
  AnswerStrategy s(Kind::kSpam);
  s.spam_answer_ = fixed;
  return s;
}

AnswerStrategy AnswerStrategy::contradict() {
  return AnswerStrategy(Kind::kContradict);
}

AnswerStrategy AnswerStrategy::alternate_goal(DecoyRule rule) {
  AnswerStrategy s(Kind::kAlternateGoal);
  s.decoy_rule_ = rule;
  return s;
}

AnswerStrategy AnswerStrategy::learned(
    std::shared_ptr<const LearnedNCParams> params) {
  if (!params) throw ConfigError("learned answerer needs parameters");
  params->check_shape();
  AnswerStrategy s(Kind::kLearnedNC);
  s.learned_ = std::move(params);
  return s;
}

AnswerStrategy AnswerStrategy::mixture(
    std::vector<std::pair<double, AnswerStrategy>> members) {
  if (members.empty()) throw ConfigError("mixture needs at least one member");
  double total = 0.0;
  for (const auto& [w, m] : members) {
    if (!(w >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
    if (m.kind() == Kind::kCooperative || m.kind() == Kind::kMixtureNC) {
      throw ConfigError("mixture members must be plain non-cooperative kinds");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("mixture weights must sum to 1");
  }
  AnswerStrategy s(Kind::kMixtureNC);
  s.members_ = std::move(members);
  return s;
}

std::string AnswerStrategy::tag() const {
  switch (kind_) {
    case Kind::kCooperative: return "coop";
    case Kind::kSpam: return std::string("spam_") + game::to_string(spam_answer_);
    case Kind::kContradict: return "contradict";
    case Kind::kAlternateGoal: return "altgoal";
    case Kind::kLearnedNC:
      return std::string("learned_nc:") + to_string(learned_->mode);
    case Kind::kMixtureNC: return "mixture_nc";
  }
  return "?";
}

Answer negate(Answer a) {
  switch (a) {
    case Answer::kYes: return Answer::kNo;
    case Answer::kNo: return Answer::kYes;
    case Answer::kNa: return Answer::kNa;
  }
  return a;
}

int resolve_decoy(const AnswerStrategy& strategy, const Scene& scene,
                  Rng& rng) {
  const auto& rule = strategy.decoy_rule();
  if (rule.kind == DecoyRule::Kind::kFixed) {
    if (rule.fixed_index < 0 || rule.fixed_index >= scene.n_objects() ||
        rule.fixed_index == scene.goal) {
      throw ConfigError("fixed decoy must be a non-goal object of the scene");
    }
    return rule.fixed_index;
  }
  // Uniform over the n - 1 non-goal objects.
  const int k = uniform_index(rng, scene.n_objects() - 1);
  return k < scene.goal ? k : k + 1;
}

const AnswerStrategy& resolve_member(const AnswerStrategy& strategy,
                                     Rng& rng) {
  if (strategy.kind() != AnswerStrategy::Kind::kMixtureNC) return strategy;
  const auto& members = strategy.members();
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& [w, m] : members) {
    acc += w;
    if (u < acc) return m;
  }
  // Rounding left u just above the cumulative sum; take the last positive.
  for (auto it = members.rbegin(); it != members.rend(); ++it) {
    if (it->first > 0.0) return it->second;
  }
  return members.back().second;
}

Answer answer(const AnswerStrategy& strategy, const Scene& scene,
              std::span<const DialogueTurn> history, const Question& q,
              Rng& rng, int decoy) {
  using Kind = AnswerStrategy::Kind;
  switch (strategy.kind()) {
    case Kind::kCooperative: return game::truth_answer(scene, scene.goal, q);
    case Kind::kSpam: return strategy.spam_answer();
    case Kind::kContradict:
      return negate(game::truth_answer(scene, scene.goal, q));
    case Kind::kAlternateGoal:
      if (decoy < 0 || decoy >= scene.n_objects()) {
        throw PreconditionError("alternate-goal answer needs a resolved decoy");
      }
      return game::truth_answer(scene, decoy, q);
    case Kind::kLearnedNC: {
      const auto& params = strategy.learned_params();
      const auto f = answer_features(params.mode, scene, history, q,
                                     params.max_rounds);
      const auto p = params.probabilities(f);
      const double u = uniform01(rng);
      double acc = 0.0;
      for (int a = 0; a < kNumAnswers; ++a) {
        acc += p[a];
        if (u < acc) return static_cast<Answer>(a);
      }
      return Answer::kNa;
    }
    case Kind::kMixtureNC:
      throw PreconditionError("resolve the mixture member before answering");
  }
  return Answer::kNa;
}

namespace {

class StrategyEpisode : public game::AnswererEpisode {
 public:
  StrategyEpisode(const AnswerStrategy& strategy, const Scene& scene, int decoy)
      : strategy_(strategy), scene_(scene), decoy_(decoy) {}

  Answer respond(std::span<const DialogueTurn> history, const Question& q,
                 Rng& rng) override {
    return answer(strategy_, scene_, history, q, rng, decoy_);
  }
  std::string tag() const override { return strategy_.tag(); }

 private:
  const AnswerStrategy& strategy_;
  Scene scene_;
  int decoy_;
};

}  // namespace

std::unique_ptr<game::AnswererEpisode> StrategyAnswerer::begin(
    const Scene& scene, Rng& rng) const {
  const AnswerStrategy& member = resolve_member(strategy_, rng);
  int decoy = -1;
  if (member.kind() == AnswerStrategy::Kind::kAlternateGoal) {
    decoy = resolve_decoy(member, scene, rng);
  }
  return std::make_unique<StrategyEpisode>(member, scene, decoy);
}

std::pair<AnswerStrategy, CoopLabel> sample_answerer(double p_nc,
                                                     const StrategyPool& pool,
                                                     Rng& rng) {
  if (!(p_nc > 0.0 && p_nc < 1.0)) {
    throw ConfigError("p_nc must lie in the open interval (0, 1)");
  }
  if (pool.cooperative.kind() != AnswerStrategy::Kind::kCooperative) {
    throw ConfigError("pool's cooperative slot holds a non-cooperative strategy");
  }
  if (pool.non_cooperative.empty()) {
    throw ConfigError("pool needs at least one non-cooperative strategy");
  }
  for (const auto& s : pool.non_cooperative) {
    if (s.kind() == AnswerStrategy::Kind::kCooperative) {
      throw ConfigError("pool holds more than one cooperative strategy");
    }
  }
  if (!pool.weights.empty() &&
      pool.weights.size() != pool.non_cooperative.size()) {
    throw ConfigError("pool weights do not match its strategies");
  }

  if (!bernoulli(rng, p_nc)) return {pool.cooperative, CoopLabel::kCP};

  const int n = static_cast<int>(pool.non_cooperative.size());
  int pick = n - 1;
  if (pool.weights.empty()) {
    pick = uniform_index(rng, n);
  } else {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += pool.weights[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  return {pool.non_cooperative[pick], CoopLabel::kNC};
}

LearnedNCParams fit_learned_nc(const std::vector<game::GameRecord>& corpus,
                               FeatureMode mode, const FitHyper& hyper,
                               std::vector<double>* loss_curve) {
  if (corpus.empty()) throw DataError("insufficient data: empty corpus");
  if (hyper.epochs < 1 || !(hyper.learning_rate > 0.0)) {
    throw ConfigError("fit needs epochs >= 1 and a positive learning rate");
  }

  LearnedNCParams params;
  params.mode = mode;
  params.vocab = corpus.front().scene.vocab;
  params.max_rounds = hyper.max_rounds;
  const int d = params.dim();

  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (const auto& r : corpus) {
    if (r.coop_label != CoopLabel::kNC) {
      throw DataError("fit_learned_nc needs non-cooperative games only");
    }
    if (!(r.scene.vocab == params.vocab)) {
      throw DataError("corpus mixes scene vocabularies");
    }
    if (static_cast<int>(r.turns.size()) > hyper.max_rounds) {
      throw DataError("record has more turns than max_rounds");
    }
    for (std::size_t t = 0; t < r.turns.size(); ++t) {
      std::span<const DialogueTurn> history(r.turns.data(), t);
      xs.push_back(answer_features(mode, r.scene, history, r.turns[t].question,
                                   hyper.max_rounds));
      ys.push_back(static_cast<int>(r.turns[t].answer));
    }
  }
  if (xs.empty()) throw DataError("insufficient data: corpus has no turns");

  Rng rng(hyper.seed);
  params.weights.resize(static_cast<std::size_t>(kNumAnswers) * d);
  for (auto& w : params.weights) w = 0.01 * (uniform01(rng) - 0.5);

  const double n = static_cast<double>(xs.size());
  auto loss_and_grad = [&](const std::vector<double>& w,
                           std::vector<double>* grad) {
    double loss = 0.0;
    if (grad) grad->assign(w.size(), 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::array<double, kNumAnswers> logits{};
      for (int a = 0; a < kNumAnswers; ++a) {
        logits[a] = std::inner_product(xs[i].begin(), xs[i].end(),
                                       w.begin() + a * d, 0.0);
      }
      const auto p = softmax(logits);
      loss -= std::log(std::max(p[ys[i]], 1e-300));
      if (grad) {
        for (int a = 0; a < kNumAnswers; ++a) {
          const double r = p[a] - (a == ys[i] ? 1.0 : 0.0);
          if (r == 0.0) continue;
          for (int k = 0; k < d; ++k) (*grad)[a * d + k] += r * xs[i][k] / n;
        }
      }
    }
    return loss / n;
  };

  std::vector<double> grad;
  double loss = loss_and_grad(params.weights, &grad);
  double lr = hyper.learning_rate;
  if (loss_curve) loss_curve->assign(1, loss);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<double> trial(params.weights.size());
    double trial_loss = loss;
    bool accepted = false;
    for (int halvings = 0; halvings < 40; ++halvings) {
      for (std::size_t k = 0; k < trial.size(); ++k) {
        trial[k] = params.weights[k] - lr * grad[k];
      }
      trial_loss = loss_and_grad(trial, nullptr);
      if (trial_loss <= loss) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (accepted) {
      params.weights = std::move(trial);
      loss = loss_and_grad(params.weights, &grad);
    }
    if (loss_curve) loss_curve->push_back(loss);
  }
  return params;
}

}  // namespace ncd::answerers
