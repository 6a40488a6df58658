#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncd/game.hpp"

namespace ncd::io {

using nlohmann::json;

json to_json(const game::Scene& scene);
game::Scene scene_from_json(const json& j);
json to_json(const game::Question& q);
game::Question question_from_json(const json& j);
json to_json(const game::GameRecord& record);
// Throws DataError on missing or mistyped fields.
game::GameRecord record_from_json(const json& j);

// One compact JSON object per line.
std::string to_jsonl_line(const game::GameRecord& record);
void write_jsonl(std::ostream& out, const std::vector<game::GameRecord>& records);
void write_jsonl(const std::string& path,
                 const std::vector<game::GameRecord>& records);
// Errors carry the 1-based line number.
std::vector<game::GameRecord> read_jsonl(std::istream& in);
std::vector<game::GameRecord> read_jsonl(const std::string& path);

}  // namespace ncd::io
