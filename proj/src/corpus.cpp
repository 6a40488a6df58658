#include "ncd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "ncd/record_io.hpp"

namespace ncd::corpus {

using game::Answer;
using nlohmann::json;

bool detect_spam(std::span<const Answer> answers) {
  if (answers.empty()) throw DataError("spam check needs at least one turn");
  return std::all_of(answers.begin(), answers.end(),
                     [&](Answer a) { return a == answers.front(); });
}

bool detect_spam(const game::GameRecord& record) {
  std::vector<Answer> answers;
  for (const auto& t : record.turns) answers.push_back(t.answer);
  return detect_spam(answers);
}

CorpusFormat parse_corpus_format(const std::string& token) {
  if (token == "game-log" || token == "jsonl") return CorpusFormat::kGameLog;
  if (token == "guesswhat-json") return CorpusFormat::kGuessWhatJson;
  throw ConfigError("unknown corpus format '" + token + "'");
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

Answer parse_external_answer(const std::string& raw) {
  const std::string a = lower(raw);
  if (a == "yes") return Answer::kYes;
  if (a == "no") return Answer::kNo;
  if (a == "n/a" || a == "na") return Answer::kNa;
  throw DataError("unrecognized answer '" + raw + "'");
}

std::string id_string(const json& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

ExternalGame parse_guesswhat_game(const json& j) {
  std::string id = j.contains("id") ? id_string(j["id"]) : "<no id>";
  try {
    ExternalGame g;
    g.id = id_string(j.at("id"));
    g.image_id = id_string(j.at("image").at("id"));
    g.object_id = id_string(j.at("object_id"));
    g.status = j.at("status").get<std::string>();
    for (const auto& qa : j.at("qas")) {
      g.questions.push_back(qa.at("question").get<std::string>());
      g.answers.push_back(parse_external_answer(qa.at("answer").get<std::string>()));
    }
    return g;
  } catch (const json::exception& e) {
    throw DataError("game " + id + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("game " + id + ": " + e.what());
  }
}

void require_open(const std::ifstream& in, const std::string& path) {
  if (!in) throw DataError("cannot open " + path);
}

}  // namespace

std::vector<ExternalGame> ingest_external_corpus(std::istream& in,
                                                 CorpusFormat format) {
  if (format != CorpusFormat::kGuessWhatJson) {
    throw ConfigError("external corpora must use the guesswhat-json format");
  }
  std::vector<ExternalGame> games;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      games.push_back(parse_guesswhat_game(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return games;
}

std::vector<ExternalGame> ingest_external_corpus(const std::string& path,
                                                 CorpusFormat format) {
  std::ifstream in(path);
  require_open(in, path);
  return ingest_external_corpus(in, format);
}

namespace {

// Shared tail of both stats flavours.
struct Accumulator {
  std::array<long, game::kNumAnswers> answers{};
  long n_questions = 0;
  int spam = 0;
  int guessed = 0;
  int correct = 0;
  CorpusStats stats;

  void add_dialogue(std::span<const Answer> dialogue) {
    ++stats.n_games;
    ++stats.question_count_histogram[static_cast<int>(dialogue.size())];
    for (Answer a : dialogue) ++answers[static_cast<int>(a)];
    n_questions += static_cast<long>(dialogue.size());
    if (!dialogue.empty() && detect_spam(dialogue)) ++spam;
  }

  CorpusStats finish() {
    if (stats.n_games == 0) throw DataError("corpus holds no games");
    stats.n_questions = static_cast<int>(n_questions);
    for (int a = 0; a < game::kNumAnswers; ++a) {
      stats.answer_dist[a] =
          n_questions > 0 ? static_cast<double>(answers[a]) / n_questions : 0.0;
    }
    stats.spam_fraction = static_cast<double>(spam) / stats.n_games;
    if (guessed > 0) {
      stats.object_success_rate = static_cast<double>(correct) / guessed;
    }
    return stats;
  }
};

}  // namespace

CorpusStats compute_corpus_stats(const std::vector<game::GameRecord>& records) {
  Accumulator acc;
  std::set<std::string> scenes, goals;
  std::set<std::pair<int, int>> questions;
  for (const auto& r : records) {
    std::vector<Answer> dialogue;
    for (const auto& t : r.turns) {
      dialogue.push_back(t.answer);
      questions.emplace(static_cast<int>(t.question.attribute), t.question.value);
    }
    acc.add_dialogue(dialogue);
    const json objects = io::to_json(r.scene).at("objects");
    scenes.insert(objects.dump());
    goals.insert(objects.dump() + "#" + std::to_string(r.scene.goal));
    if (r.object_guess) {
      ++acc.guessed;
      acc.correct += *r.object_guess == r.scene.goal;
    }
  }
  acc.stats.n_unique_scenes = static_cast<int>(scenes.size());
  acc.stats.n_unique_goal_objects = static_cast<int>(goals.size());
  acc.stats.n_unique_questions = static_cast<int>(questions.size());
  return acc.finish();
}

CorpusStats compute_corpus_stats(const std::vector<ExternalGame>& games) {
  Accumulator acc;
  std::set<std::string> images, objects, words;
  for (const auto& g : games) {
    acc.add_dialogue(g.answers);
    images.insert(g.image_id);
    objects.insert(g.object_id);
    for (const auto& q : g.questions) {
      std::string word;
      for (char ch : q + " ") {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
          word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!word.empty()) {
          words.insert(word);
          word.clear();
        }
      }
    }
    ++acc.guessed;
    acc.correct += g.status == "success";
  }
  acc.stats.n_unique_scenes = static_cast<int>(images.size());
  acc.stats.n_unique_goal_objects = static_cast<int>(objects.size());
  acc.stats.n_unique_words = static_cast<int>(words.size());
  return acc.finish();
}

CorpusStats compute_corpus_stats(const std::string& path, CorpusFormat format) {
  if (format == CorpusFormat::kGuessWhatJson) {
    return compute_corpus_stats(ingest_external_corpus(path, format));
  }
  return compute_corpus_stats(io::read_jsonl(path));
}

json to_json(const CorpusStats& s) {
  json hist = json::object();
  for (const auto& [turns, games] : s.question_count_histogram) {
    hist[std::to_string(turns)] = games;
  }
  json j = {{"n_games", s.n_games},
            {"n_unique_scenes", s.n_unique_scenes},
            {"n_unique_goal_objects", s.n_unique_goal_objects},
            {"n_questions", s.n_questions},
            {"answer_dist",
             {{"yes", s.answer_dist[0]},
              {"no", s.answer_dist[1]},
              {"na", s.answer_dist[2]}}},
            {"question_count_histogram", hist},
            {"spam_fraction", s.spam_fraction}};
  j["n_unique_words"] = s.n_unique_words ? json(*s.n_unique_words) : json(nullptr);
  j["n_unique_questions"] =
      s.n_unique_questions ? json(*s.n_unique_questions) : json(nullptr);
  j["object_success_rate"] =
      s.object_success_rate ? json(*s.object_success_rate) : json(nullptr);
  return j;
}

}  // namespace ncd::corpus
