#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "aid/dataset.hpp"
#include "aid/disambiguation.hpp"
#include "aid/rerank.hpp"
#include "aid/retrieval.hpp"

namespace aid {

/// Result of one interactive query: immutable once created.
struct Session {
  std::string session_id;
  Query query;
  NeighborSet neighbors;
  ClusterSet clusters;
  EigengapDiagnostics diagnostics;
  std::chrono::system_clock::time_point created_at;
};

/// Bounded session map with least-recently-used eviction.
class SessionStore {
public:
  explicit SessionStore(std::size_t capacity = 1024);

  void put(std::shared_ptr<const Session> session);
  /// Marks the session as recently used. Null if unknown or evicted.
  std::shared_ptr<const Session> get(const std::string &id);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

private:
  using Entry = std::pair<std::string, std::shared_ptr<const Session>>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> lru_; // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

struct ServiceOptions {
  std::size_t max_sessions = 1024;
  std::uint64_t seed = 0;
  std::size_t m = 200;
  DisambiguationParams disambiguation;
  RerankParams rerank;
  std::size_t default_page_size = 50;
  std::optional<std::filesystem::path> images_dir;
};

/// HTTP-independent request handling for the interactive loop. Thread-safe.
class QueryService {
public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  QueryService(std::shared_ptr<const FeatureStore> store, std::optional<TopicLabels> labels,
               ServiceOptions options = {});

  /// POST /api/query
  Response query(const nlohmann::json &request);
  /// POST /api/sessions/{id}/feedback
  Response feedback(const std::string &session_id, const nlohmann::json &request);
  /// GET /api/health
  Response health() const;

  std::shared_ptr<const Session> session(const std::string &id) { return sessions_.get(id); }
  const FeatureStore &store() const { return *store_; }
  const ServiceOptions &options() const { return options_; }

private:
  nlohmann::json item_json(std::size_t index) const;
  std::string next_session_id();

  std::shared_ptr<const FeatureStore> store_;
  std::optional<TopicLabels> labels_;
  ServiceOptions options_;
  SessionStore sessions_;
  std::mutex id_mutex_;
  std::uint64_t id_counter_ = 0;
};

/// Routes a QueryService over cpp-httplib. Optionally serves images_dir
/// under /images/.
class HttpServer {
public:
  explicit HttpServer(QueryService &service);
  ~HttpServer();
  HttpServer(const HttpServer &) = delete;
  HttpServer &operator=(const HttpServer &) = delete;

  /// Binds to host:port (port 0 picks a free port); returns the bound port or -1.
  int bind(const std::string &host, int port);
  /// Blocks until stop() is called.
  bool listen();
  void stop();
  void wait_until_ready() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace aid
