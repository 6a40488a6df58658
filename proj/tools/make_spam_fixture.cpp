// Writes the synthetic spam fixture: 100 games, exactly 20 of them all-"no"
// spam, plus a sidecar JSON with the counts it was built from.
//
//   make_spam_fixture <games.jsonl> <truth.json>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "ncd/answerers.hpp"
#include "ncd/record_io.hpp"

using namespace ncd;

namespace {

class UniformAsker : public game::AgentEpisode {
 public:
  explicit UniformAsker(const game::QuestionSpace& space) : space_(space) {}
  game::Question ask(int, Rng& rng) override {
    return space_.at(uniform_index(rng, space_.size()));
  }
  void observe(const game::DialogueTurn&) override {}
  int guess_object() const override { return 0; }
  game::CoopLabel guess_cooperation() const override { return game::CoopLabel::kCP; }

 private:
  const game::QuestionSpace& space_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_spam_fixture <games.jsonl> <truth.json>\n";
    return 2;
  }
  constexpr int kGames = 100;
  constexpr int kSpam = 20;
  Rng rng(20240611);
  game::SceneConfig cfg;
  const auto space = game::QuestionSpace::full(cfg.vocab);
  const answerers::StrategyAnswerer spam(
      answerers::AnswerStrategy::spam(game::Answer::kNo));
  const answerers::StrategyAnswerer coop(answerers::AnswerStrategy::cooperative());

  std::vector<game::GameRecord> records;
  long answers[3] = {0, 0, 0};
  std::map<int, int> lengths;
  std::set<std::pair<int, int>> questions;
  for (int g = 0; g < kGames; ++g) {
    const bool is_spam = g % 5 == 0;  // 20 of 100
    const int rounds = 2 + g % 4;     // 2..5 turns
    game::GameRecord rec;
    for (;;) {
      const auto scene = game::generate_scene(cfg, rng);
      UniformAsker asker(space);
      const auto& who = is_spam ? spam : coop;
      auto episode = who.begin(scene, rng);
      rec = game::play_episode(asker, *episode, who.label(), scene, rounds, rng);
      bool identical = true;
      for (const auto& t : rec.turns) identical &= t.answer == rec.turns[0].answer;
      if (identical == is_spam) break;  // resample accidental spam
    }
    rec.seed = static_cast<std::uint64_t>(g);
    for (const auto& t : rec.turns) {
      ++answers[static_cast<int>(t.answer)];
      questions.emplace(static_cast<int>(t.question.attribute), t.question.value);
    }
    ++lengths[static_cast<int>(rec.turns.size())];
    records.push_back(rec);
  }

  io::write_jsonl(argv[1], records);
  const long total = answers[0] + answers[1] + answers[2];
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [len, n] : lengths) hist[std::to_string(len)] = n;
  const nlohmann::json truth = {
      {"n_games", kGames},
      {"n_spam", kSpam},
      {"spam_fraction", static_cast<double>(kSpam) / kGames},
      {"answer_counts", {{"yes", answers[0]}, {"no", answers[1]}, {"na", answers[2]}}},
      {"n_questions", total},
      {"question_count_histogram", hist},
      {"n_unique_questions", questions.size()}};
  std::ofstream out(argv[2]);
  out << truth.dump(2) << "\n";
  return 0;
}
