#include "momentnav/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <regex>

#include <httplib.h>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"

namespace momentnav {

void ApiConfig::validate() const {
  if (port <= 0 || port > 65535) throw ConfigError("port out of range");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (n_rec < 1) throw ConfigError("n_rec must be >= 1");
  if (simulator_epsilon < 0.0 || simulator_epsilon > 1.0) throw ConfigError("simulator_epsilon must be in [0,1]");
  engine.validate();
}

void to_json(json& j, const ApiConfig& c) {
  j = json{{"host", c.host},
           {"port", c.port},
           {"corpus", c.corpus_path.string()},
           {"graph", c.graph_path.string()},
           {"checkpoint", c.checkpoint_path.string()},
           {"queries", c.queries_path.string()},
           {"k", c.k},
           {"t_max", c.t_max},
           {"n_rec", c.n_rec},
           {"simulator_epsilon", c.simulator_epsilon},
           {"seed", c.seed},
           {"engine", c.engine}};
}

void from_json(const json& j, ApiConfig& c) {
  ApiConfig d;
  c.host = j.value("host", d.host);
  c.port = j.value("port", d.port);
  c.corpus_path = j.value("corpus", std::string{});
  c.graph_path = j.value("graph", std::string{});
  c.checkpoint_path = j.value("checkpoint", std::string{});
  c.queries_path = j.value("queries", std::string{});
  c.k = j.value("k", d.k);
  c.t_max = j.value("t_max", d.t_max);
  c.n_rec = j.value("n_rec", d.n_rec);
  c.simulator_epsilon = j.value("simulator_epsilon", d.simulator_epsilon);
  c.seed = j.value("seed", d.seed);
  c.engine = j.contains("engine") ? j.at("engine").get<EngineConfig>() : d.engine;
}

void apply_env_overrides(ApiConfig& cfg) {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return (v && *v) ? v : nullptr;
  };
  if (auto v = env("MOMENTNAV_HOST")) cfg.host = v;
  if (auto v = env("MOMENTNAV_PORT")) {
    try {
      cfg.port = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MOMENTNAV_PORT is not a number: ") + v);
    }
  }
  if (auto v = env("MOMENTNAV_CORPUS")) cfg.corpus_path = v;
  if (auto v = env("MOMENTNAV_GRAPH")) cfg.graph_path = v;
  if (auto v = env("MOMENTNAV_CHECKPOINT")) cfg.checkpoint_path = v;
  if (auto v = env("MOMENTNAV_QUERIES")) cfg.queries_path = v;
}

ApiConfig load_api_config(const std::filesystem::path& path) {
  ApiConfig cfg;
  if (!path.empty()) cfg = read_json_file(path).get<ApiConfig>();
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

std::string artifact_mismatch(const Corpus& corpus, const NavGraph& graph, const json& meta) {
  const std::string ch = corpus_fingerprint(corpus);
  if (!graph.corpus_hash.empty() && graph.corpus_hash != ch) return "graph was built from a different corpus";
  if (graph.size() != corpus.size()) return "graph and corpus sizes differ";
  if (meta.contains("corpus_hash") && meta.at("corpus_hash").get<std::string>() != ch) {
    return "checkpoint was trained on a different corpus";
  }
  if (meta.contains("graph_hash") && meta.at("graph_hash").get<std::string>() != graph_fingerprint(graph)) {
    return "checkpoint was trained on a different graph";
  }
  return {};
}

ServiceArtifacts load_artifacts(const ApiConfig& cfg) {
  if (cfg.corpus_path.empty() || cfg.graph_path.empty() || cfg.checkpoint_path.empty()) {
    throw ConfigError("corpus, graph and checkpoint paths are required");
  }
  ServiceArtifacts a;
  a.corpus = load_corpus(cfg.corpus_path);
  a.graph = load_graph(cfg.graph_path);
  json meta;
  a.params = std::make_shared<const PolicyParams>(load_policy(cfg.checkpoint_path, &meta));
  if (!cfg.queries_path.empty()) a.queries = load_queries(cfg.queries_path, a.corpus);
  a.mismatch = artifact_mismatch(a.corpus, a.graph, meta);
  return a;
}

std::string to_string(SessionMode m) { return m == SessionMode::human ? "human" : "simulated"; }

namespace {

HttpResponse error(int status, const std::string& code, const std::string& message) {
  return {status, json{{"code", code}, {"message", message}}};
}

// thrown inside handlers, turned into an error body by handle()
struct ApiError {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(int status, const std::string& code, const std::string& message) {
  throw ApiError{status, code, message};
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) fail(400, "bad_json", "request body is not valid JSON");
  if (!j.is_object()) fail(400, "bad_json", "request body must be a JSON object");
  return j;
}

std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 10);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(400, "bad_request", std::string("invalid ") + what + ": " + s);
  }
}

MomentId moment_from_json(const json& j, const Corpus& corpus, const char* field) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail(400, "bad_request", std::string(field) + " must be a moment id");
  const auto id = j.get<unsigned long long>();
  if (id >= corpus.size()) fail(400, "unknown_moment", std::string(field) + " is not a moment id: " + std::to_string(id));
  return static_cast<MomentId>(id);
}

ConceptId concept_from_json(const json& j, const Corpus& corpus) {
  if (j.is_string()) {
    auto id = corpus.vocab().find(j.get<std::string>());
    if (!id) fail(400, "unknown_concept", "unknown concept: " + j.get<std::string>());
    return *id;
  }
  if (j.is_number_integer() && j.get<long long>() >= 0 && j.get<unsigned long long>() < corpus.vocab().size()) {
    return static_cast<ConceptId>(j.get<unsigned long long>());
  }
  fail(400, "unknown_concept", "unknown concept: " + j.dump());
}

json feedback_json(const Feedback& f, const Corpus& corpus) {
  return json{{"concept", f.concept_id}, {"name", corpus.vocab().name(f.concept_id)}, {"sign", f.sign}};
}

}  // namespace

Service::Service(ApiConfig cfg, ServiceArtifacts artifacts) : cfg_(std::move(cfg)), art_(std::move(artifacts)) {
  cfg_.validate();
  if (!art_.params) throw ConfigError("service needs a policy");
  if (art_.params->config.vocab_size != art_.corpus.vocab().size() ||
      art_.params->config.feature_dim != art_.corpus.config().feature_dim) {
    if (art_.mismatch.empty()) art_.mismatch = "checkpoint dimensions do not match the corpus";
  }
}

std::size_t Service::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

std::shared_ptr<ApiSession> Service::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

HttpResponse Service::handle(const HttpRequest& req) {
  static const std::regex session_re("^/api/sessions/([^/]+)$");
  static const std::regex feedback_re("^/api/sessions/([^/]+)/feedback$");
  static const std::regex moment_re("^/api/moments/([^/]+)$");
  try {
    std::smatch m;
    const std::string& p = req.path;
    if (p == "/api/sessions") {
      if (req.method != "POST") return error(405, "method_not_allowed", "use POST");
      return create_session(req);
    }
    if (std::regex_match(p, m, feedback_re)) {
      if (req.method != "POST") return error(405, "method_not_allowed", "use POST");
      return post_feedback(m[1].str(), req);
    }
    if (std::regex_match(p, m, session_re)) {
      if (req.method != "GET") return error(405, "method_not_allowed", "use GET");
      return get_session(m[1].str());
    }
    if (std::regex_match(p, m, moment_re)) {
      if (req.method != "GET") return error(405, "method_not_allowed", "use GET");
      return get_moment(m[1].str());
    }
    if (p == "/api/vocab" && req.method == "GET") return get_vocab();
    if (p == "/api/health" && req.method == "GET") return health();
    return error(404, "not_found", "no route for " + req.method + " " + p);
  } catch (const ApiError& e) {
    return error(e.status, e.code, e.message);
  } catch (const json::exception& e) {
    return error(400, "bad_request", e.what());
  } catch (const ArgumentError& e) {
    return error(400, "bad_request", e.what());
  } catch (const ValidationError& e) {
    return error(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

HttpResponse Service::handle_logged(const HttpRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  HttpResponse res = handle(req);
  if (log_) {
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    json line{{"ts", unix_now()}, {"method", req.method}, {"path", req.path}, {"status", res.status}, {"ms", ms}};
    if (res.body.is_object() && res.body.contains("session_id")) line["session_id"] = res.body["session_id"];
    if (res.status >= 400 && res.body.is_object()) line["error"] = res.body.value("code", "");
    std::lock_guard lock(log_mu_);
    *log_ << line.dump() << '\n';
    log_->flush();
  }
  return res;
}

std::vector<Feedback> Service::parse_keywords(const json& j) const {
  if (!j.is_array()) fail(400, "bad_request", "keywords must be an array");
  std::vector<Feedback> out;
  for (const auto& k : j) {
    if (!k.is_object() || !k.contains("concept")) fail(400, "bad_request", "keyword needs {concept, sign}");
    Feedback f;
    f.concept_id = concept_from_json(k.at("concept"), art_.corpus);
    const json sign = k.value("sign", json(1));
    if (sign.is_string()) {
      const auto s = sign.get<std::string>();
      if (s == "+") f.sign = 1;
      else if (s == "-") f.sign = -1;
      else fail(400, "bad_request", "sign must be +1 or -1");
    } else if (sign.is_number_integer() && (sign.get<int>() == 1 || sign.get<int>() == -1)) {
      f.sign = sign.get<int>();
    } else {
      fail(400, "bad_request", "sign must be +1 or -1");
    }
    out.push_back(f);
  }
  return out;
}

void Service::refresh_recommendations(ApiSession& s) const {
  s.recommendations.clear();
  std::vector<MomentId> excluded = s.visited;
  std::sort(excluded.begin(), excluded.end());
  const ObservationWindow window = observation_window(art_.graph, *s.current, cfg_.k, excluded);
  if (window.members.empty()) {
    s.status = SessionStatus::dead_end;
    return;
  }
  const ActionScores scores = score_actions(*art_.params, s.q, window, art_.corpus);
  std::vector<std::size_t> idx(scores.candidates.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(s.n_rec), idx.size());
  for (std::size_t i = 0; i < n; ++i) s.recommendations.push_back(scores.candidates[idx[i]]);
}

json Service::recommendation_json(MomentId id) const {
  const Moment& m = art_.corpus.moment(id);
  json top = json::array();
  const std::size_t n = std::min<std::size_t>(8, m.profile.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = m.profile.entries[i];
    top.push_back({{"concept", e.concept_id}, {"name", art_.corpus.vocab().name(e.concept_id)}, {"prob", e.prob}});
  }
  return {{"id", id}, {"video_id", m.video_id}, {"clip_index", m.clip_index}, {"top_concepts", top}};
}

json Service::snapshot(const ApiSession& s) const {
  json recs = json::array();
  for (MomentId r : s.recommendations) recs.push_back(recommendation_json(r));
  json bag = json::array();
  for (const auto& c : s.query.concept_bag) {
    bag.push_back({{"concept", c.concept_id}, {"name", art_.corpus.vocab().name(c.concept_id)}, {"weight", c.weight}});
  }
  json hist = json::array();
  for (const auto& h : s.history) {
    json kw = json::array();
    for (const auto& f : h.keywords) kw.push_back(feedback_json(f, art_.corpus));
    json e{{"t", h.t}, {"selected", h.selected}, {"keywords", kw}, {"simulated_feedback", h.simulated_feedback}};
    if (h.distance) e["distance"] = *h.distance;
    if (h.reward) e["reward"] = *h.reward;
    hist.push_back(std::move(e));
  }
  json state{{"t", s.t},
             {"t_max", cfg_.t_max},
             {"status", to_string(s.status)},
             {"current", s.current ? json(*s.current) : json(nullptr)},
             {"visited", s.visited},
             {"phase", s.current ? "navigate" : "choose_m0"}};
  json out{{"session_id", s.id},
           {"mode", to_string(s.mode)},
           {"n_rec", s.n_rec},
           {"created_at", s.created_at},
           {"query", {{"id", s.query.id}, {"concept_bag", bag}}},
           {"state", state},
           {"recommendations", recs},
           {"history", hist},
           {"done", s.status != SessionStatus::running},
           {"success", s.status == SessionStatus::success}};
  if (s.target) out["target"] = *s.target;
  return out;
}

HttpResponse Service::create_session(const HttpRequest& req) {
  if (!art_.mismatch.empty()) fail(409, "artifact_mismatch", art_.mismatch);
  const json body = parse_body(req.body);
  if (!body.contains("query") || !body.at("query").is_object()) fail(400, "bad_request", "query object is required");
  const json& qj = body.at("query");

  const std::uint64_t n = counter_.fetch_add(1);
  auto s = std::make_shared<ApiSession>();
  s->created_at = unix_now();
  s->n_rec = body.value("n_rec", cfg_.n_rec);
  if (s->n_rec < 1) fail(400, "bad_request", "n_rec must be >= 1");

  if (auto it = req.headers.find("x-seed"); it != req.headers.end()) {
    s->seed = parse_u64(it->second, "X-Seed");
  } else if (body.contains("seed")) {
    s->seed = body.at("seed").get<std::uint64_t>();
  } else {
    s->seed = derive_seed(cfg_.seed, {n});
  }
  s->rng = Rng(derive_seed(s->seed, {0x51u}));
  s->id = hex64(derive_seed(cfg_.seed, {n, 0x5e55u}));

  if (qj.contains("query_id")) {
    const auto qid = qj.at("query_id").get<std::uint64_t>();
    auto it = std::find_if(art_.queries.begin(), art_.queries.end(), [&](const QuerySpec& q) { return q.id == qid; });
    if (it == art_.queries.end()) fail(400, "unknown_query", "unknown query_id " + std::to_string(qid));
    s->query = *it;
    s->target = it->target;
    s->mode = SessionMode::simulated;
  } else if (qj.contains("concept_bag")) {
    const json& bag = qj.at("concept_bag");
    if (!bag.is_array() || bag.empty()) fail(400, "bad_request", "concept_bag must be a non-empty array");
    for (const auto& c : bag) {
      WeightedConcept w;
      if (c.is_object()) {
        w.concept_id = concept_from_json(c.at("concept"), art_.corpus);
        w.weight = c.value("weight", 1.0);
      } else {
        w.concept_id = concept_from_json(c, art_.corpus);
        w.weight = 1.0;
      }
      if (!(w.weight > 0.0)) fail(400, "bad_request", "concept weights must be positive");
      s->query.concept_bag.push_back(w);
    }
    s->query.id = static_cast<std::uint32_t>(n);
    if (qj.contains("target")) {
      // lets demos and tests run a bag query with a server-side target
      s->target = moment_from_json(qj.at("target"), art_.corpus, "target");
      s->query.target = *s->target;
      s->mode = SessionMode::simulated;
    }
  } else {
    fail(400, "bad_request", "query needs concept_bag or query_id");
  }

  s->q0 = encode_query(*art_.params, s->query);
  s->q = s->q0;

  if (body.contains("m0") && !body.at("m0").is_null()) {
    const MomentId m0 = moment_from_json(body.at("m0"), art_.corpus, "m0");
    s->current = m0;
    s->visited.push_back(m0);
    if (s->target && *s->target == m0) {
      s->status = SessionStatus::success;
    } else {
      refresh_recommendations(*s);
    }
  } else {
    const auto order = engine_order(art_.corpus, s->query, cfg_.engine);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s->n_rec), order.size());
    s->recommendations.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }

  json out = snapshot(*s);
  {
    std::unique_lock lock(sessions_mu_);
    sessions_.emplace(s->id, s);
  }
  return {201, std::move(out)};
}

HttpResponse Service::post_feedback(const std::string& id, const HttpRequest& req) {
  auto sp = find(id);
  if (!sp) fail(404, "session_not_found", "no session " + id);
  const json body = parse_body(req.body);
  ApiSession& s = *sp;
  std::lock_guard lock(s.mu);

  if (s.status != SessionStatus::running) fail(410, "session_finished", "session is " + to_string(s.status));
  if (body.contains("nonce")) {
    const std::string nonce = body.at("nonce").is_string() ? body.at("nonce").get<std::string>() : body.at("nonce").dump();
    if (s.nonces.count(nonce)) fail(409, "duplicate_nonce", "request with this nonce was already applied");
  }

  MomentId selected = 0;
  if (body.contains("selected_moment")) {
    selected = moment_from_json(body.at("selected_moment"), art_.corpus, "selected_moment");
    if (std::find(s.recommendations.begin(), s.recommendations.end(), selected) == s.recommendations.end()) {
      fail(400, "not_recommended", "selected_moment is not among the last recommendations");
    }
  } else if (s.mode == SessionMode::simulated && !s.recommendations.empty()) {
    selected = s.recommendations.front();
  } else {
    fail(400, "bad_request", "selected_moment is required");
  }

  HistoryEntry h;
  h.selected = selected;
  const bool simulate = s.mode == SessionMode::simulated && !body.contains("keywords");
  if (!simulate && body.contains("keywords")) h.keywords = parse_keywords(body.at("keywords"));
  const bool found = body.value("found", false);
  if (body.contains("nonce")) {
    s.nonces.insert(body.at("nonce").is_string() ? body.at("nonce").get<std::string>() : body.at("nonce").dump());
  }

  const bool choosing_m0 = !s.current;
  const std::optional<MomentId> previous = s.current;
  if (!choosing_m0) ++s.t;
  h.t = s.t;
  s.current = selected;
  s.visited.push_back(selected);

  const bool hit = (s.target && *s.target == selected) || found;
  if (s.target) {
    h.distance = shortest_distance(art_.graph, selected, *s.target);
    if (previous) {
      const int d_prev = shortest_distance(art_.graph, *previous, *s.target);
      if (d_prev != kUnreachable && *h.distance != kUnreachable) {
        RewardConfig rc;
        rc.t_max = cfg_.t_max;
        h.reward = step_reward(rc, d_prev, *h.distance, s.t);
      }
    }
  }

  if (hit) {
    s.status = SessionStatus::success;
    s.recommendations.clear();
  } else {
    if (simulate) {
      if (auto fb = simulate_feedback(art_.corpus, selected, *s.target, cfg_.simulator_epsilon, s.rng)) {
        h.keywords.push_back(fb->feedback);
        h.simulated_feedback = true;
      }
    }
    s.q = update_query(*art_.params, s.q, s.q0, h.keywords);
    if (!choosing_m0 && s.t >= cfg_.t_max) {
      s.status = SessionStatus::exhausted;
      s.recommendations.clear();
    } else {
      refresh_recommendations(s);
    }
  }
  s.history.push_back(std::move(h));
  return {200, snapshot(s)};
}

HttpResponse Service::get_session(const std::string& id) const {
  auto sp = find(id);
  if (!sp) fail(404, "session_not_found", "no session " + id);
  std::lock_guard lock(sp->mu);
  return {200, snapshot(*sp)};
}

HttpResponse Service::get_moment(const std::string& id) const {
  const auto v = parse_u64(id, "moment id");
  if (v >= art_.corpus.size()) fail(404, "moment_not_found", "no moment " + id);
  const Moment& m = art_.corpus.moment(static_cast<MomentId>(v));
  json profile = json::array();
  for (const auto& e : m.profile.entries) {
    profile.push_back({{"concept", e.concept_id}, {"name", art_.corpus.vocab().name(e.concept_id)}, {"prob", e.prob}});
  }
  return {200, json{{"id", m.id},
                    {"video_id", m.video_id},
                    {"clip_index", m.clip_index},
                    {"time_span", {m.start_s, m.end_s}},
                    {"profile", profile}}};
}

HttpResponse Service::get_vocab() const { return {200, json{{"concepts", art_.corpus.vocab().names()}}}; }

HttpResponse Service::health() const {
  return {200, json{{"ok", art_.mismatch.empty()},
                    {"moments", art_.corpus.size()},
                    {"queries", art_.queries.size()},
                    {"k", cfg_.k},
                    {"t_max", cfg_.t_max},
                    {"n_rec", cfg_.n_rec},
                    {"sessions", session_count()}}};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      r.headers.emplace(key, v);
    }
    HttpResponse out = service.handle_logged(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  const std::string pattern = R"(/api/.*)";
  impl_->server.Get(pattern, forward);
  impl_->server.Post(pattern, forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw ConfigError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void run_http_server(Service& service) {
  HttpServer server(service);
  const auto& cfg = service.config();
  server.bind(cfg.host, cfg.port);
  server.listen();
}

}  // namespace momentnav
