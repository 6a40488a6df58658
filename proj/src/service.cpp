#include "ncd/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include "httplib.h"
#include "ncd/record_io.hpp"

namespace ncd::service {

using game::Answer;
using game::Attribute;
using game::CoopLabel;

struct SessionManager::Session {
  std::string id;
  std::string checkpoint;
  std::shared_ptr<const agent::AgentModel> model;
  game::Scene scene;
  std::uint64_t seed = 0;
  Role role = Role::kDeceive;
  std::string created_at;
  int max_rounds = 0;
  std::unique_ptr<agent::PlayerEpisode> episode;
  Rng rng;
  int round = 1;
  game::Question pending;
  bool finished = false;
  json result;
  std::mutex mutex;
};

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const char* role_name(Role r) { return r == Role::kDeceive ? "deceive" : "cooperate"; }

Role parse_role(const std::string& token) {
  if (token == "deceive") return Role::kDeceive;
  if (token == "cooperate") return Role::kCooperate;
  throw ServiceError(400, "invalid_role",
                     "role must be \"deceive\" or \"cooperate\", got \"" + token + "\"");
}

json question_json(const game::Question& q, const game::Vocabulary& vocab) {
  return {{"text", game::render_question(q, vocab)},
          {"attribute", game::to_string(q.attribute)},
          {"value", q.value}};
}

std::string describe(const game::ObjectSpec& o, const game::Vocabulary& v) {
  return v.value_name(Attribute::kSize, o.size) + " " +
         v.value_name(Attribute::kColor, o.color) + " " +
         v.value_name(Attribute::kCategory, o.category) + " at row " +
         std::to_string(o.cell.row + 1) + ", column " + std::to_string(o.cell.col + 1);
}

json scene_json(const game::Scene& scene) {
  json j = io::to_json(scene);
  json descriptions = json::array();
  for (const auto& o : scene.objects) descriptions.push_back(describe(o, scene.vocab));
  j["descriptions"] = descriptions;
  return j;
}

template <typename T>
T field(const json& request, const char* name, const T& fallback) {
  if (!request.contains(name) || request[name].is_null()) return fallback;
  try {
    return request[name].get<T>();
  } catch (const json::exception&) {
    throw ServiceError(400, "invalid_field", std::string("field '") + name +
                                                 "' has the wrong type");
  }
}

}  // namespace

SessionManager::SessionManager(
    std::map<std::string, std::shared_ptr<const agent::AgentModel>> checkpoints,
    ServiceConfig config)
    : checkpoints_(std::move(checkpoints)),
      config_(std::move(config)),
      rng_(derive_seed(config_.seed, std::random_device{}())) {
  if (checkpoints_.empty()) throw ConfigError("service needs at least one checkpoint");
  for (const auto& [name, model] : checkpoints_) {
    if (!model) throw ConfigError("checkpoint '" + name + "' is empty");
    model->check_shapes();
    if (config_.max_rounds > model->config.max_rounds) {
      throw ConfigError("round cap exceeds what checkpoint '" + name + "' was built for");
    }
  }
  if (config_.max_rounds < 0) throw ConfigError("round cap must be >= 0");
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Session> SessionManager::find(
    const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "not_found", "no session '" + id + "'");
  }
  return it->second;
}

json SessionManager::create_session(const json& request) {
  if (!request.is_object()) {
    throw ServiceError(400, "invalid_request", "request body must be a JSON object");
  }
  const auto checkpoint = field<std::string>(request, "checkpoint", "default");
  const auto it = checkpoints_.find(checkpoint);
  if (it == checkpoints_.end()) {
    throw ServiceError(404, "unknown_checkpoint", "no checkpoint '" + checkpoint + "'");
  }
  const auto& model = it->second;

  auto s = std::make_shared<Session>();
  s->checkpoint = checkpoint;
  s->model = model;
  s->role = parse_role(field<std::string>(request, "role", "deceive"));
  s->max_rounds = config_.max_rounds > 0 ? config_.max_rounds : model->config.max_rounds;
  {
    std::lock_guard lock(rng_mutex_);
    s->id = [&] {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(derive_seed(rng_(), ++counter_)));
      return std::string(buf);
    }();
    s->seed = request.contains("seed") && !request["seed"].is_null()
                  ? field<std::uint64_t>(request, "seed", 0)
                  : rng_();
  }

  game::SceneConfig scene_cfg = model->config.scene;
  const int n_objects = field<int>(request, "n_objects", scene_cfg.n_objects);
  if (n_objects < 2 || n_objects > scene_cfg.n_objects) {
    throw ServiceError(400, "invalid_field",
                       "n_objects must lie in [2, " +
                           std::to_string(scene_cfg.n_objects) + "]");
  }
  scene_cfg.n_objects = n_objects;
  Rng scene_rng(s->seed);
  s->scene = game::generate_scene(scene_cfg, scene_rng);
  s->rng = Rng(derive_seed(s->seed, 1));
  s->created_at = now_utc();
  s->episode = std::make_unique<agent::PlayerEpisode>(*model, s->scene,
                                                      agent::SelectMode::kGreedy);
  s->pending = s->episode->ask(1, s->rng);

  json out = snapshot(*s);
  std::unique_lock lock(sessions_mutex_);
  sessions_[s->id] = std::move(s);
  return out;
}

json SessionManager::post_answer(const std::string& id, const json& request) {
  const auto s = find(id);
  std::unique_lock lock(s->mutex, std::try_to_lock);
  if (!lock.owns_lock()) {
    throw ServiceError(409, "conflict", "another answer for this session is in flight");
  }
  if (s->finished) throw ServiceError(409, "finished", "session is already finished");
  if (!request.is_object() || !request.contains("answer") ||
      !request["answer"].is_string()) {
    throw ServiceError(400, "invalid_answer", "body needs an \"answer\" string");
  }
  const auto token = request["answer"].get<std::string>();
  Answer answer;
  if (token == "yes") {
    answer = Answer::kYes;
  } else if (token == "no") {
    answer = Answer::kNo;
  } else if (token == "na") {
    answer = Answer::kNa;
  } else {
    throw ServiceError(400, "invalid_answer",
                       "answer must be \"yes\", \"no\" or \"na\", got \"" + token + "\"");
  }
  const int round = field<int>(request, "round", s->round);
  if (round != s->round) {
    throw ServiceError(409, "round_mismatch",
                       "answer is for round " + std::to_string(round) +
                           " but the session is at round " + std::to_string(s->round));
  }

  s->episode->observe({s->pending, answer, s->round});
  if (s->round < s->max_rounds) {
    ++s->round;
    s->pending = s->episode->ask(s->round, s->rng);
    return snapshot(*s);
  }

  const int object_guess = s->episode->guess_object();
  const CoopLabel coop_guess = s->episode->guess_cooperation();
  const bool fooled = object_guess != s->scene.goal;
  s->finished = true;
  s->result = {{"object_guess", object_guess},
               {"coop_guess", game::to_string(coop_guess)},
               {"goal", s->scene.goal},
               {"human_won", s->role == Role::kDeceive ? fooled : !fooled}};

  game::GameRecord record;
  record.scene = s->scene;
  record.turns = s->episode->turns();
  record.coop_label = s->role == Role::kDeceive ? CoopLabel::kNC : CoopLabel::kCP;
  record.strategy_tag = std::string("human:") + role_name(s->role);
  record.object_guess = object_guess;
  record.coop_guess = coop_guess;
  record.seed = s->seed;
  append_log(record);
  return snapshot(*s);
}

json SessionManager::get_session(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return snapshot(*s);
}

json SessionManager::snapshot(const Session& s) const {
  json turns = json::array();
  for (const auto& t : s.episode->turns()) {
    turns.push_back({{"round", t.round},
                     {"question", question_json(t.question, s.scene.vocab)},
                     {"answer", game::to_string(t.answer)}});
  }
  json j = {{"session_id", s.id},
            {"checkpoint", s.checkpoint},
            {"role", role_name(s.role)},
            {"created_at", s.created_at},
            {"seed", s.seed},
            {"max_rounds", s.max_rounds},
            {"scene", scene_json(s.scene)},
            {"goal", s.scene.goal},
            {"transcript", turns},
            {"belief", s.episode->belief().probs}};
  if (s.finished) {
    j["state"] = "finished";
    j["result"] = s.result;
  } else {
    j["state"] = "awaiting_answer";
    j["round"] = s.round;
    j["question"] = question_json(s.pending, s.scene.vocab);
  }
  return j;
}

void SessionManager::append_log(const game::GameRecord& record) {
  const std::string line = io::to_jsonl_line(record);
  std::lock_guard lock(log_mutex_);
  log_lines_.push_back(line);
  if (!config_.log_path.empty()) {
    std::ofstream out(config_.log_path, std::ios::app);
    if (!out) throw ServiceError(500, "log_write", "cannot append to the game log");
    out << line << '\n';
  }
}

std::string SessionManager::logs() const {
  std::lock_guard lock(log_mutex_);
  std::string out;
  for (const auto& line : log_lines_) out += line + "\n";
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
void guarded(httplib::Response& res, int ok_status, const Handler& handler) {
  try {
    send_json(res, ok_status, handler());
  } catch (const ServiceError& e) {
    send_json(res, e.status(), e.body());
  } catch (const json::exception& e) {
    send_json(res, 400, {{"code", "invalid_json"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 201, [&] { return manager.create_session(parse_body(req)); });
  });
  server.Post(R"(/sessions/([0-9a-zA-Z]+)/answer)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, 200, [&] {
                  return manager.post_answer(req.matches[1], parse_body(req));
                });
              });
  server.Get(R"(/sessions/([0-9a-zA-Z]+))",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, 200, [&] { return manager.get_session(req.matches[1]); });
             });
  server.Get("/logs", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(manager.logs(), "application/x-ndjson");
  });
}

}  // namespace ncd::service
