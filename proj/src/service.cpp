#include "aid/service.hpp"

#include <cstdio>

#include <httplib.h>

#include "aid/error.hpp"
#include "aid/log.hpp"

namespace aid {

// --- SessionStore ---------------------------------------------------------

SessionStore::SessionStore(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

void SessionStore::put(std::shared_ptr<const Session> session) {
  std::lock_guard lock(mutex_);
  const auto id = session->session_id;
  if (auto it = index_.find(id); it != index_.end()) {
    lru_.erase(it->second);
    index_.erase(it);
  }
  lru_.emplace_front(id, std::move(session));
  index_[id] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
}

std::shared_ptr<const Session> SessionStore::get(const std::string &id) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end())
    return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->second;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

// --- request parsing ------------------------------------------------------

namespace {

/// Client error carrying its HTTP status.
struct RequestError {
  int status;
  std::string message;
};

QueryService::Response error_response(int status, const std::string &message) {
  return {status, {{"error", message}}};
}

std::optional<std::size_t> get_count(const nlohmann::json &obj, const char *key) {
  if (!obj.contains(key) || obj[key].is_null())
    return std::nullopt;
  const auto &v = obj[key];
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw RequestError{400, std::string("'") + key + "' must be a non-negative integer"};
  return static_cast<std::size_t>(v.get<long long>());
}

std::optional<double> get_real(const nlohmann::json &obj, const char *key) {
  if (!obj.contains(key) || obj[key].is_null())
    return std::nullopt;
  if (!obj[key].is_number())
    throw RequestError{400, std::string("'") + key + "' must be a number"};
  return obj[key].get<double>();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

// --- QueryService ---------------------------------------------------------

QueryService::QueryService(std::shared_ptr<const FeatureStore> store,
                           std::optional<TopicLabels> labels, ServiceOptions options)
    : store_(std::move(store)), labels_(std::move(labels)), options_(std::move(options)),
      sessions_(options_.max_sessions) {
  if (!store_)
    throw InvalidArgument("service needs a feature store");
  if (labels_)
    labels_->validate(store_->n());
  options_.rerank.validate();
}

std::string QueryService::next_session_id() {
  std::uint64_t counter;
  {
    std::lock_guard lock(id_mutex_);
    counter = ++id_counter_;
  }
  // splitmix64 is a bijection, so distinct counters give distinct ids.
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(splitmix64(counter ^ splitmix64(options_.seed))));
  return buf;
}

nlohmann::json QueryService::item_json(std::size_t index) const {
  nlohmann::json j{{"index", index}};
  if (auto id = store_->id(index)) {
    j["id"] = *id;
    if (options_.images_dir && std::filesystem::is_regular_file(*options_.images_dir / *id))
      j["image"] = "/images/" + *id;
  }
  if (labels_) {
    nlohmann::json topics = nlohmann::json::array();
    for (auto t : labels_->assignments[index])
      topics.push_back(labels_->topics[t]);
    j["topics"] = std::move(topics);
  }
  return j;
}

QueryService::Response QueryService::query(const nlohmann::json &request) {
  try {
    if (!request.is_object())
      throw RequestError{400, "request body must be a JSON object"};
    const bool has_item = request.contains("item_index") && !request["item_index"].is_null();
    const bool has_vector = request.contains("vector") && !request["vector"].is_null();
    if (has_item == has_vector)
      throw RequestError{400, "exactly one of 'item_index' or 'vector' is required"};

    const nlohmann::json params =
        request.contains("params") && request["params"].is_object() ? request["params"]
                                                                    : nlohmann::json::object();
    const std::size_t m = get_count(params, "m").value_or(options_.m);
    DisambiguationParams dp = options_.disambiguation;
    if (auto eta = get_real(params, "eta"))
      dp.eta = *eta;
    dp.cap = get_count(params, "cap").value_or(dp.cap);
    dp.r = get_count(params, "r").value_or(dp.r);
    dp.seed = get_count(params, "seed").value_or(options_.seed);
    if (params.contains("cap_mode"))
      dp.cap_mode = cap_mode_from_string(params["cap_mode"].get<std::string>());
    if (m < 1 || dp.cap < 1 || dp.r < 1)
      throw RequestError{400, "m, cap and r must be >= 1"};
    if (dp.eta && !(*dp.eta > 0.0))
      throw RequestError{400, "eta must be > 0"};

    Query query;
    if (has_item) {
      const auto index = get_count(request, "item_index");
      if (!index)
        throw RequestError{400, "'item_index' must be a non-negative integer"};
      if (*index >= store_->n())
        throw RequestError{404, "item index " + std::to_string(*index) + " not found"};
      const bool exclude = params.value("exclude_self", true);
      query = query_from_item(*store_, *index, exclude);
    } else {
      if (!request["vector"].is_array())
        throw RequestError{400, "'vector' must be an array of numbers"};
      std::vector<double> v;
      for (const auto &x : request["vector"]) {
        if (!x.is_number())
          throw RequestError{400, "'vector' must be an array of numbers"};
        v.push_back(x.get<double>());
      }
      if (v.size() != store_->d())
        throw RequestError{400, "vector has dimension " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(store_->d())};
      query.vector = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    auto session = std::make_shared<Session>();
    session->session_id = next_session_id();
    session->query = std::move(query);
    session->neighbors = knn(*store_, session->query, m);
    auto result = disambiguate(session->neighbors, dp);
    session->clusters = std::move(result.clusters);
    session->diagnostics = std::move(result.diagnostics);
    session->diagnostics.affinity.resize(0, 0);
    session->created_at = std::chrono::system_clock::now();

    nlohmann::json clusters = nlohmann::json::array();
    for (std::size_t c = 0; c < session->clusters.k(); ++c) {
      nlohmann::json previews = nlohmann::json::array();
      for (const auto &p : session->clusters.previews[c]) {
        auto item = item_json(p.index);
        item["distance"] = p.delta;
        previews.push_back(std::move(item));
      }
      std::size_t size = 0;
      for (auto a : session->clusters.assignments)
        size += a == c ? 1 : 0;
      clusters.push_back({{"id", c}, {"size", size}, {"previews", std::move(previews)}});
    }

    nlohmann::json body{{"session_id", session->session_id},
                        {"k", session->clusters.k()},
                        {"m", session->neighbors.m()},
                        {"clusters", std::move(clusters)},
                        {"eigengap", session->diagnostics.eigenvalues},
                        {"diagnostics", diagnostics_to_json(session->diagnostics)}};
    sessions_.put(std::move(session));
    return {200, std::move(body)};
  } catch (const RequestError &e) {
    return error_response(e.status, e.message);
  } catch (const nlohmann::json::exception &e) {
    return error_response(400, e.what());
  } catch (const Error &e) {
    return error_response(400, e.what());
  }
}

QueryService::Response QueryService::feedback(const std::string &session_id,
                                              const nlohmann::json &request) {
  try {
    auto session = sessions_.get(session_id);
    if (!session)
      throw RequestError{404, "unknown session '" + session_id + "'"};
    if (!request.is_object())
      throw RequestError{400, "request body must be a JSON object"};

    std::vector<std::size_t> ids;
    if (request.contains("selected") && !request["selected"].is_null()) {
      if (!request["selected"].is_array())
        throw RequestError{400, "'selected' must be an array of cluster ids"};
      for (const auto &v : request["selected"]) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw RequestError{400, "cluster ids must be non-negative integers"};
        ids.push_back(static_cast<std::size_t>(v.get<long long>()));
      }
    }
    const FeedbackSelection selection(std::move(ids));
    for (auto id : selection.selected)
      if (id >= session->clusters.k())
        throw RequestError{400, "cluster id " + std::to_string(id) + " out of range [0, " +
                                    std::to_string(session->clusters.k()) + ")"};

    RerankParams rp = options_.rerank;
    if (auto g = get_real(request, "gamma"))
      rp.gamma = *g;
    if (auto b = get_real(request, "beta"))
      rp.beta = *b;
    rp.validate();

    const std::size_t offset = get_count(request, "offset").value_or(0);
    const std::size_t limit = get_count(request, "limit").value_or(options_.default_page_size);

    const RankedList ranked = rerank(*store_, session->query, session->clusters, selection, rp);
    const std::size_t total = ranked.order.size();
    const std::size_t begin = std::min(offset, total);
    const std::size_t end = begin + std::min(limit, total - begin);

    nlohmann::json items = nlohmann::json::array();
    for (std::size_t pos = begin; pos < end; ++pos) {
      const auto i = ranked.order[pos];
      auto item = item_json(i);
      item["rank"] = pos;
      item["delta"] = ranked.delta[i];
      item["sigma"] = ranked.sigma[i];
      item["delta_tilde"] = ranked.delta_tilde[i];
      items.push_back(std::move(item));
    }
    return {200,
            {{"total", total},
             {"offset", begin},
             {"limit", limit},
             {"refined", ranked.refined},
             {"selected", selection.selected},
             {"gamma", rp.gamma},
             {"beta", ranked.beta},
             {"items", std::move(items)}}};
  } catch (const RequestError &e) {
    return error_response(e.status, e.message);
  } catch (const nlohmann::json::exception &e) {
    return error_response(400, e.what());
  } catch (const Error &e) {
    return error_response(400, e.what());
  }
}

QueryService::Response QueryService::health() const {
  return {200,
          {{"status", "ok"},
           {"n", store_->n()},
           {"d", store_->d()},
           {"has_labels", labels_.has_value()},
           {"has_ids", store_->ids().has_value()},
           {"sessions", sessions_.size()}}};
}

// --- HTTP -----------------------------------------------------------------

struct HttpServer::Impl {
  QueryService &service;
  httplib::Server server;
};

namespace {

void send(httplib::Response &res, const QueryService::Response &r) {
  res.status = r.status;
  res.set_header("Access-Control-Allow-Origin", "*");
  res.set_content(r.body.dump(), "application/json");
}

std::optional<nlohmann::json> parse_body(const httplib::Request &req, httplib::Response &res) {
  try {
    return req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error &e) {
    send(res, {400, {{"error", std::string("invalid JSON: ") + e.what()}}});
    return std::nullopt;
  }
}

} // namespace

HttpServer::HttpServer(QueryService &service) : impl_(new Impl{service, {}}) {
  auto &srv = impl_->server;
  srv.Get("/api/health", [this](const httplib::Request &, httplib::Response &res) {
    send(res, impl_->service.health());
  });
  srv.Post("/api/query", [this](const httplib::Request &req, httplib::Response &res) {
    if (auto body = parse_body(req, res))
      send(res, impl_->service.query(*body));
  });
  srv.Post(R"(/api/sessions/([^/]+)/feedback)",
           [this](const httplib::Request &req, httplib::Response &res) {
             if (auto body = parse_body(req, res))
               send(res, impl_->service.feedback(req.matches[1].str(), *body));
           });
  srv.Options(R"(/api/.*)", [](const httplib::Request &, httplib::Response &res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });
  if (const auto &dir = service.options().images_dir) {
    if (!srv.set_mount_point("/images", dir->string()))
      warn("images directory " + dir->string() + " is not readable; serving placeholders only");
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string &host, int port) {
  if (port == 0)
    return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running())
    impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

} // namespace aid
