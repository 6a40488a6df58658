#include <set>

#include "doctest.h"
#include "ncd/agent.hpp"
#include "ncd/answerers.hpp"

using namespace ncd;
using namespace ncd::answerers;
using game::Answer;
using game::Attribute;
using game::CoopLabel;

namespace {

StrategyPool default_pool() {
  StrategyPool pool;
  pool.non_cooperative = {AnswerStrategy::spam(Answer::kNo),
                          AnswerStrategy::contradict(),
                          AnswerStrategy::alternate_goal()};
  return pool;
}

std::vector<game::GameRecord> corpus_of(const AnswerStrategy& s, int games,
                                        std::uint64_t seed) {
  Rng rng(seed);
  auto model = std::make_shared<agent::AgentModel>(
      agent::AgentModel::make(agent::AgentConfig{}));
  const agent::QuestionPlayer player(model, agent::SelectMode::kSample);
  const StrategyAnswerer answerer(s);
  std::vector<game::GameRecord> out;
  for (int i = 0; i < games; ++i) {
    const auto scene = game::generate_scene({}, rng);
    out.push_back(game::run_episode(player, answerer, scene, 5, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("sample_answerer validates p_nc and the pool") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_answerer(0.0, default_pool(), rng), ConfigError);
  CHECK_THROWS_AS(sample_answerer(1.0, default_pool(), rng), ConfigError);
  StrategyPool empty;
  CHECK_THROWS_AS(sample_answerer(0.5, empty, rng), ConfigError);
}

TEST_CASE("sample_answerer draws Z from Bernoulli(p_nc)") {
  Rng rng(2);
  const auto pool = default_pool();
  int nc = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto [s, z] = sample_answerer(0.5, pool, rng);
    nc += z == CoopLabel::kNC;
    CHECK(s.label() == z);
  }
  CHECK(std::abs(nc / 100000.0 - 0.5) <= 0.01);

  Rng a(3), b(3);
  const auto ra = sample_answerer(0.3, pool, a);
  const auto rb = sample_answerer(0.3, pool, b);
  CHECK(ra.first.tag() == rb.first.tag());
  CHECK(ra.second == rb.second);
}

TEST_CASE("scripted strategies answer as specified") {
  Rng rng(4);
  const auto scene = game::generate_scene({}, rng);
  const auto space = game::QuestionSpace::full(scene.vocab);
  const auto spam = AnswerStrategy::spam(Answer::kNo);
  const auto coop = AnswerStrategy::cooperative();
  const auto contra = AnswerStrategy::contradict();
  for (const auto& q : space.questions()) {
    const Answer truth = game::truth_answer(scene, scene.goal, q);
    CHECK(answer(spam, scene, {}, q, rng) == Answer::kNo);
    CHECK(answer(coop, scene, {}, q, rng) == truth);
    CHECK(answer(contra, scene, {}, q, rng) == negate(truth));
    CHECK(negate(negate(truth)) == truth);
  }
  CHECK(answer(contra, scene, {}, game::Question::oov(Attribute::kColor), rng) ==
        Answer::kNa);
}

TEST_CASE("alternate goal answers truthfully about the decoy") {
  Rng rng(5);
  auto scene = game::generate_scene({}, rng);
  scene.goal = 0;
  const auto alt = AnswerStrategy::alternate_goal({DecoyRule::Kind::kFixed, 2});
  const int decoy = resolve_decoy(alt, scene, rng);
  CHECK(decoy == 2);
  auto swapped = scene;
  swapped.goal = decoy;
  for (const auto& q : game::QuestionSpace::full(scene.vocab).questions()) {
    CHECK(answer(alt, scene, {}, q, rng, decoy) ==
          answer(AnswerStrategy::cooperative(), swapped, {}, q, rng));
  }
  const auto bad = AnswerStrategy::alternate_goal({DecoyRule::Kind::kFixed, 0});
  CHECK_THROWS_AS(resolve_decoy(bad, scene, rng), ConfigError);

  const auto uniform = AnswerStrategy::alternate_goal();
  for (int i = 0; i < 200; ++i) CHECK(resolve_decoy(uniform, scene, rng) != scene.goal);
}

TEST_CASE("mixtures validate their weights and report member tags") {
  CHECK_THROWS_AS(AnswerStrategy::mixture({{0.5, AnswerStrategy::contradict()}}),
                  ConfigError);
  CHECK_THROWS_AS(AnswerStrategy::mixture({{1.0, AnswerStrategy::cooperative()}}),
                  ConfigError);
  const auto mix = AnswerStrategy::mixture(
      {{0.5, AnswerStrategy::spam(Answer::kYes)}, {0.5, AnswerStrategy::contradict()}});
  CHECK(mix.label() == CoopLabel::kNC);
  CHECK(mix.tag() == "mixture_nc");
  Rng rng(6);
  std::set<std::string> tags;
  for (int i = 0; i < 50; ++i) tags.insert(resolve_member(mix, rng).tag());
  CHECK(tags == std::set<std::string>{"spam_yes", "contradict"});
}

TEST_CASE("fit_learned_nc on a pure spam corpus predicts no") {
  const auto corpus = corpus_of(AnswerStrategy::spam(Answer::kNo), 60, 7);
  std::vector<double> curve;
  FitHyper hyper;
  const auto params = fit_learned_nc(corpus, FeatureMode::kQGoal, hyper, &curve);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] + 1e-6);

  const auto held_out = corpus_of(AnswerStrategy::spam(Answer::kNo), 20, 8);
  for (const auto& r : held_out) {
    for (const auto& t : r.turns) {
      const auto f = answer_features(FeatureMode::kQGoal, r.scene, {}, t.question, 5);
      CHECK(params.probabilities(f)[static_cast<int>(Answer::kNo)] >= 0.95);
    }
  }
}

TEST_CASE("fit_learned_nc realizes contradiction from goal and question") {
  const auto corpus = corpus_of(AnswerStrategy::contradict(), 200, 9);
  FitHyper hyper;
  hyper.epochs = 400;
  const auto params = fit_learned_nc(corpus, FeatureMode::kQGoal, hyper);
  const auto held_out = corpus_of(AnswerStrategy::contradict(), 50, 10);
  int right = 0, total = 0;
  for (const auto& r : held_out) {
    for (const auto& t : r.turns) {
      const auto p = params.probabilities(
          answer_features(FeatureMode::kQGoal, r.scene, {}, t.question, 5));
      const int argmax = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      right += argmax == static_cast<int>(t.answer);
      ++total;
    }
  }
  CHECK(static_cast<double>(right) / total >= 0.9);
}

TEST_CASE("fit_learned_nc memorizes a single example and is deterministic") {
  auto corpus = corpus_of(AnswerStrategy::spam(Answer::kYes), 1, 11);
  corpus[0].turns.resize(1);
  FitHyper hyper;
  const auto a = fit_learned_nc(corpus, FeatureMode::kAll, hyper);
  const auto b = fit_learned_nc(corpus, FeatureMode::kAll, hyper);
  CHECK(a.weights == b.weights);
  const auto& t = corpus[0].turns[0];
  const auto p = a.probabilities(
      answer_features(FeatureMode::kAll, corpus[0].scene, {}, t.question, 5));
  CHECK(p[static_cast<int>(Answer::kYes)] > 0.5);
}

TEST_CASE("fit_learned_nc rejects empty or cooperative corpora") {
  FitHyper hyper;
  CHECK_THROWS_AS(fit_learned_nc({}, FeatureMode::kQGoal, hyper), DataError);
  auto corpus = corpus_of(AnswerStrategy::cooperative(), 2, 12);
  CHECK_THROWS_AS(fit_learned_nc(corpus, FeatureMode::kQGoal, hyper), DataError);
}

TEST_CASE("learned parameters check their shape and round-trip through JSON") {
  LearnedNCParams p;
  p.mode = FeatureMode::kQGoalImg;
  p.weights.assign(3 * p.dim(), 0.1);
  CHECK_NOTHROW(p.check_shape());
  const auto back = learned_nc_from_json(to_json(p));
  CHECK(back.weights == p.weights);
  CHECK(back.mode == p.mode);
  p.weights.pop_back();
  CHECK_THROWS_AS(p.check_shape(), ModelShapeError);
  CHECK(AnswerStrategy::learned(std::make_shared<LearnedNCParams>(back)).tag() ==
        "learned_nc:q_goal_img");
}

TEST_CASE("feature dimensions grow with information access") {
  game::Vocabulary v;
  const int q_goal = answer_feature_dim(FeatureMode::kQGoal, v);
  CHECK(answer_feature_dim(FeatureMode::kQGoalHist, v) > q_goal);
  CHECK(answer_feature_dim(FeatureMode::kQGoalImg, v) > q_goal);
  CHECK(answer_feature_dim(FeatureMode::kAll, v) >
        answer_feature_dim(FeatureMode::kQGoalImg, v));
}
