#include "ncd/record_io.hpp"

#include <fstream>
#include <sstream>

namespace ncd::io {

using namespace ncd::game;

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const Scene& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"id", o.id},
                       {"category", o.category},
                       {"color", o.color},
                       {"size", o.size},
                       {"row", o.cell.row},
                       {"col", o.cell.col}});
  }
  return {{"objects", objects},
          {"goal", scene.goal},
          {"vocab",
           {{"n_categories", scene.vocab.n_categories},
            {"n_colors", scene.vocab.n_colors},
            {"grid_dim", scene.vocab.grid_dim}}}};
}

Scene scene_from_json(const json& j) {
  Scene scene;
  const auto vocab = field<json>(j, "vocab");
  scene.vocab.n_categories = field<int>(vocab, "n_categories");
  scene.vocab.n_colors = field<int>(vocab, "n_colors");
  scene.vocab.grid_dim = field<int>(vocab, "grid_dim");
  for (const auto& o : field<json>(j, "objects")) {
    ObjectSpec spec;
    spec.id = field<int>(o, "id");
    spec.category = field<int>(o, "category");
    spec.color = field<int>(o, "color");
    spec.size = field<int>(o, "size");
    spec.cell = {field<int>(o, "row"), field<int>(o, "col")};
    scene.objects.push_back(spec);
  }
  scene.goal = field<int>(j, "goal");
  scene.validate();
  return scene;
}

json to_json(const Question& q) {
  return {{"attribute", to_string(q.attribute)}, {"value", q.value}};
}

Question question_from_json(const json& j) {
  return {parse_attribute(field<std::string>(j, "attribute")),
          field<int>(j, "value")};
}

json to_json(const GameRecord& record) {
  json turns = json::array();
  for (const auto& t : record.turns) {
    turns.push_back({{"question", to_json(t.question)},
                     {"answer", to_string(t.answer)},
                     {"round", t.round}});
  }
  json j;
  j["scene"] = to_json(record.scene);
  j["turns"] = turns;
  j["coop_label"] = to_string(record.coop_label);
  j["strategy_tag"] = record.strategy_tag;
  j["object_guess"] =
      record.object_guess ? json(*record.object_guess) : json(nullptr);
  j["coop_guess"] =
      record.coop_guess ? json(to_string(*record.coop_guess)) : json(nullptr);
  j["seed"] = record.seed;
  return j;
}

GameRecord record_from_json(const json& j) {
  GameRecord r;
  r.scene = scene_from_json(field<json>(j, "scene"));
  int last_round = 0;
  for (const auto& t : field<json>(j, "turns")) {
    DialogueTurn turn;
    turn.question = question_from_json(field<json>(t, "question"));
    turn.answer = parse_answer(field<std::string>(t, "answer"));
    turn.round = field<int>(t, "round");
    if (turn.round <= last_round) {
      throw DataError("dialogue rounds are not strictly increasing");
    }
    last_round = turn.round;
    r.turns.push_back(turn);
  }
  r.coop_label = parse_coop_label(field<std::string>(j, "coop_label"));
  r.strategy_tag = field<std::string>(j, "strategy_tag");
  const auto og = field<json>(j, "object_guess");
  if (!og.is_null()) {
    if (!og.is_number_integer()) throw DataError("object_guess must be an integer");
    r.object_guess = og.get<int>();
  }
  const auto cg = field<json>(j, "coop_guess");
  if (!cg.is_null()) {
    if (!cg.is_string()) throw DataError("coop_guess must be a string");
    r.coop_guess = parse_coop_label(cg.get<std::string>());
  }
  r.seed = field<std::uint64_t>(j, "seed");
  return r;
}

std::string to_jsonl_line(const GameRecord& record) {
  return to_json(record).dump();
}

void write_jsonl(std::ostream& out, const std::vector<GameRecord>& records) {
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
}

void write_jsonl(const std::string& path,
                 const std::vector<GameRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_jsonl(out, records);
}

std::vector<GameRecord> read_jsonl(std::istream& in) {
  std::vector<GameRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<GameRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_jsonl(in);
}

}  // namespace ncd::io
