#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "coda/edit.hpp"

namespace coda {

struct ServiceOptions {
  /// When set, applied commands are appended to its journal and current/ is refreshed.
  std::optional<std::filesystem::path> session_dir;
  /// Root under which the amira_coda_{random} folder is created.
  std::filesystem::path shared_root = std::filesystem::temp_directory_path();
  /// Name used for amira_vertex_{name}.csv / amira_edge_{name}.csv.
  std::string table_name = "features";
  std::chrono::milliseconds max_long_poll{30000};
  Exec exec = Exec::parallel;
};

/// HTTP+JSON front of one edit session.
///
///   GET  /graph                        vertices, edges, generations, components
///   GET  /features/vertices|edges      ?format=csv|json, ?selected=1 filters by the UI selection file
///   GET  /hints/cycle                  shortest cycle or null
///   GET  /hints/indegree               vertices with in-degree >= 2
///   GET  /proofread/next               ?from=<label>
///   GET  /query/descendants|ancestors|component   ?vertex=<label>
///   GET  /events                       ?after=<seq>&timeout_ms=<ms>, long poll
///   POST /edit                         {"base_revision": n, "command": {...}}
///   POST /selection                    {"kind": "vertex"|"edge", "rows": [...]}
///
/// Every GET carries the revision it reflects (JSON field and X-Coda-Revision).
class Service {
 public:
  Service(std::unique_ptr<EditSession> session, ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until stop() is called or the server fails.
  void wait();
  void stop();

  const std::filesystem::path& shared_folder() const;
  std::uint64_t revision() const;
  const EditSession& session() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coda
