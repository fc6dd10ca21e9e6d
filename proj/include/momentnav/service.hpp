#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "momentnav/agent.hpp"
#include "momentnav/corpus.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/evalharness.hpp"
#include "momentnav/json.hpp"
#include "momentnav/nav_graph.hpp"

namespace momentnav {

struct ApiConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path corpus_path;
  std::filesystem::path graph_path;
  std::filesystem::path checkpoint_path;
  /// Optional query file; lets clients start simulated sessions by query_id.
  std::filesystem::path queries_path;
  int k = 3;
  int t_max = 7;
  int n_rec = 1;
  double simulator_epsilon = 0.1;
  std::uint64_t seed = 1;
  EngineConfig engine;

  void validate() const;
};

void to_json(json& j, const ApiConfig& c);
void from_json(const json& j, ApiConfig& c);

/// Reads a JSON config file (empty path = defaults), then applies
/// MOMENTNAV_HOST, MOMENTNAV_PORT, MOMENTNAV_CORPUS, MOMENTNAV_GRAPH,
/// MOMENTNAV_CHECKPOINT and MOMENTNAV_QUERIES when set.
ApiConfig load_api_config(const std::filesystem::path& path);
void apply_env_overrides(ApiConfig& cfg);

/// Everything a service instance reads but never mutates.
struct ServiceArtifacts {
  Corpus corpus;
  NavGraph graph;
  std::shared_ptr<const PolicyParams> params;
  std::vector<QuerySpec> queries;
  /// Empty when corpus, graph and checkpoint agree.
  std::string mismatch;
};

/// Loads artifacts and records (does not throw on) hash mismatches.
ServiceArtifacts load_artifacts(const ApiConfig& cfg);
/// Describes the first inconsistency between the three artifacts, or "".
std::string artifact_mismatch(const Corpus& corpus, const NavGraph& graph, const json& checkpoint_meta);

struct HttpRequest {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
};

struct HttpResponse {
  int status = 200;
  json body;
};

enum class SessionMode { human, simulated };
std::string to_string(SessionMode m);

struct HistoryEntry {
  int t = 0;  // round that produced this entry; 0 = choosing m0
  MomentId selected = 0;
  std::vector<Feedback> keywords;
  bool simulated_feedback = false;
  std::optional<int> distance;  // hops to the target when known
  std::optional<double> reward;
};

struct ApiSession {
  std::string id;
  SessionMode mode = SessionMode::human;
  int n_rec = 1;
  std::uint64_t created_at = 0;  // unix seconds
  std::uint64_t seed = 0;
  QuerySpec query;
  std::optional<MomentId> target;
  std::optional<MomentId> current;  // unset until m0 is chosen
  int t = 0;
  SessionStatus status = SessionStatus::running;
  Vec q0;
  Vec q;
  std::vector<MomentId> visited;
  std::vector<MomentId> recommendations;
  std::vector<HistoryEntry> history;
  std::set<std::string> nonces;
  Rng rng{0};

  mutable std::mutex mu;
};

/// Transport-free request handler; the HTTP server only forwards to handle().
class Service {
 public:
  Service(ApiConfig cfg, ServiceArtifacts artifacts);

  HttpResponse handle(const HttpRequest& req);
  /// handle() plus one JSON log line per request on `log` (when set).
  HttpResponse handle_logged(const HttpRequest& req);

  void set_log(std::ostream* log) { log_ = log; }
  const ApiConfig& config() const { return cfg_; }
  std::size_t session_count() const;

 private:
  HttpResponse create_session(const HttpRequest& req);
  HttpResponse post_feedback(const std::string& id, const HttpRequest& req);
  HttpResponse get_session(const std::string& id) const;
  HttpResponse get_moment(const std::string& id) const;
  HttpResponse get_vocab() const;
  HttpResponse health() const;

  std::shared_ptr<ApiSession> find(const std::string& id) const;
  json snapshot(const ApiSession& s) const;
  json recommendation_json(MomentId id) const;
  void refresh_recommendations(ApiSession& s) const;
  std::vector<Feedback> parse_keywords(const json& j) const;

  ApiConfig cfg_;
  ServiceArtifacts art_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions_;
  std::atomic<std::uint64_t> counter_{0};
  std::mutex log_mu_;
  std::ostream* log_ = nullptr;
};

/// HTTP transport over Service::handle_logged.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binds the configured address and serves until the process is stopped.
void run_http_server(Service& service);

}  // namespace momentnav
