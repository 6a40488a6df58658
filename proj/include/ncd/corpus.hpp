#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncd/game.hpp"

namespace ncd::corpus {

// True iff every answer in the dialogue is the same. A single answer counts.
// Throws DataError for an empty dialogue.
bool detect_spam(std::span<const game::Answer> answers);
bool detect_spam(const game::GameRecord& record);

enum class CorpusFormat { kGameLog, kGuessWhatJson };
CorpusFormat parse_corpus_format(const std::string& token);

// One game of the public GuessWhat-style corpus, kept as text: no scene.
struct ExternalGame {
  std::string id;
  std::string image_id;
  std::string object_id;
  std::vector<std::string> questions;
  std::vector<game::Answer> answers;
  std::string status;
};

// One JSON object per line with id, image.id, object_id, qas[{question,
// answer}] and status. Errors name the line and the first offending game id.
std::vector<ExternalGame> ingest_external_corpus(std::istream& in,
                                                 CorpusFormat format);
std::vector<ExternalGame> ingest_external_corpus(const std::string& path,
                                                 CorpusFormat format);

struct CorpusStats {
  int n_games = 0;
  int n_unique_scenes = 0;
  int n_unique_goal_objects = 0;
  // Whitespace/punctuation tokens; only for corpora with question text.
  std::optional<int> n_unique_words;
  // Structured logs only.
  std::optional<int> n_unique_questions;
  int n_questions = 0;
  std::array<double, game::kNumAnswers> answer_dist{};  // yes, no, na
  std::map<int, int> question_count_histogram;          // turns -> games
  double spam_fraction = 0.0;
  // Fraction of games whose object guess was right; absent when no game
  // carries a guess.
  std::optional<double> object_success_rate;
};

// Zero-turn records are counted as non-spam here rather than rejected.
CorpusStats compute_corpus_stats(const std::vector<game::GameRecord>& records);
CorpusStats compute_corpus_stats(const std::vector<ExternalGame>& games);
// Throws DataError on empty or malformed files.
CorpusStats compute_corpus_stats(const std::string& path, CorpusFormat format);

nlohmann::json to_json(const CorpusStats& stats);

}  // namespace ncd::corpus
