#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncd/agent.hpp"

namespace httplib {
class Server;
}

// In-memory game sessions in which a person answers the question-player.
namespace ncd::service {

using nlohmann::json;

// Carries the HTTP status and the {code, message} body of a failed request.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  json body() const { return {{"code", code_}, {"message", what()}}; }

 private:
  int status_;
  std::string code_;
};

enum class Role { kDeceive, kCooperate };

struct ServiceConfig {
  // Finished games are appended here as JSONL; empty keeps them in memory only.
  std::string log_path;
  // Rounds per game; 0 means the checkpoint's own cap.
  int max_rounds = 0;
  std::uint64_t seed = 0;
};

class SessionManager {
 public:
  SessionManager(std::map<std::string, std::shared_ptr<const agent::AgentModel>>
                     checkpoints,
                 ServiceConfig config);
  ~SessionManager();

  // {"checkpoint": id, "seed": n?, "n_objects": n?, "role": "deceive"|"cooperate"}
  json create_session(const json& request);
  // {"answer": "yes"|"no"|"na", "round": n?}
  json post_answer(const std::string& id, const json& request);
  json get_session(const std::string& id) const;
  // Finished games in the game-log JSONL format.
  std::string logs() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  json snapshot(const Session& s) const;
  void append_log(const game::GameRecord& record);

  std::map<std::string, std::shared_ptr<const agent::AgentModel>> checkpoints_;
  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mutex_;
  Rng rng_;
  std::uint64_t counter_ = 0;
  mutable std::mutex log_mutex_;
  std::vector<std::string> log_lines_;
};

// POST /sessions, POST /sessions/{id}/answer, GET /sessions/{id}, GET /logs.
void register_routes(httplib::Server& server, SessionManager& manager);

}  // namespace ncd::service
