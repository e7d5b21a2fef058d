#include "coda/service.hpp"

#include <charconv>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "coda/features.hpp"
#include "coda/linkproto.hpp"
#include "coda/session.hpp"

namespace coda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

json value_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>)
          return nullptr;
        else if constexpr (std::is_same_v<T, double>)
          return std::isfinite(x) ? json(x) : json(nullptr);
        else
          return x;
      },
      v);
}

json table_json(const FeatureTable& t) {
  json cols = json::array();
  for (const auto& c : t.columns()) {
    json values = json::array();
    for (const auto& v : c.values) values.push_back(value_json(v));
    cols.push_back({{"name", c.name}, {"values", std::move(values)}});
  }
  return {{"rows", t.rows()}, {"columns", std::move(cols)}};
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

json graph_json(const SessionState& s) {
  const auto gens = generations(s.graph);
  std::map<Label, int> indeg, outdeg;
  for (const auto& [k, e] : s.graph.edges()) {
    ++outdeg[e.source];
    ++indeg[e.target];
  }
  json verts = json::array();
  std::size_t row = 0;
  for (const auto& [v, st] : s.graph.vertices()) {
    auto g = gens.generation.find(v);
    verts.push_back({{"id", v},
                     {"row", row++},
                     {"state", to_string(st)},
                     {"generation", g == gens.generation.end() ? json(nullptr) : json(g->second)},
                     {"component", gens.component.at(v)},
                     {"in_degree", indeg[v]},
                     {"out_degree", outdeg[v]}});
  }
  json edges = json::array();
  row = 0;
  for (const auto& [k, e] : s.graph.edges()) {
    json j = e;
    j["row"] = row++;
    j["source_index"] = s.graph.vertex_index(e.source);
    j["target_index"] = s.graph.vertex_index(e.target);
    edges.push_back(std::move(j));
  }
  json cyclic = json::array();
  for (const auto& [c, flag] : gens.cyclic)
    if (flag) cyclic.push_back(c);
  return {{"revision", s.revision},
          {"vertices", std::move(verts)},
          {"edges", std::move(edges)},
          {"components", gens.cyclic.size()},
          {"cyclic_components", std::move(cyclic)}};
}

Rgb palette(int i) {
  static constexpr Rgb colors[] = {{0x1F, 0x77, 0xB4}, {0xFF, 0x7F, 0x0E}, {0x2C, 0xA0, 0x2C}, {0xD6, 0x27, 0x28},
                                   {0x94, 0x67, 0xBD}, {0x8C, 0x56, 0x4B}, {0xE3, 0x77, 0xC2}, {0xBC, 0xBD, 0x22},
                                   {0x17, 0xBE, 0xCF}};
  return colors[static_cast<std::size_t>(i) % std::size(colors)];
}

/// Vertices by generation (grey for cyclic components).
std::vector<Rgb> vertex_colors(const SkeletonGraph& g) {
  const auto gens = generations(g);
  std::vector<Rgb> out;
  for (const auto& [v, st] : g.vertices()) {
    auto it = gens.generation.find(v);
    out.push_back(it == gens.generation.end() ? Rgb{0x80, 0x80, 0x80} : palette(it->second));
  }
  return out;
}

/// Edges by proofreading status.
std::vector<Rgb> edge_colors(const SkeletonGraph& g) {
  std::vector<Rgb> out;
  for (const auto& [k, e] : g.edges()) {
    if (e.state == ProofState::good)
      out.push_back({0x2C, 0xA0, 0x2C});
    else if (e.low_confidence || !e.directed)
      out.push_back({0xFF, 0x7F, 0x0E});
    else
      out.push_back({0x80, 0x80, 0x80});
  }
  return out;
}

std::optional<std::uint64_t> param_u64(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw Error(std::string("parameter '") + name + "' is not a non-negative integer");
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  std::unique_ptr<EditSession> session;
  fs::path folder;
  std::unique_ptr<FolderWatcher> watcher;
  httplib::Server server;
  std::thread thread;
  std::mutex edit_mutex;

  struct Tables {
    std::uint64_t revision = 0;
    std::shared_ptr<const FeatureTable> vertices, edges;
  };
  std::mutex tables_mutex;
  std::optional<Tables> tables;

  std::mutex events_mutex;
  std::condition_variable events_cv;
  std::deque<json> events;
  std::uint64_t last_seq = 0;
  bool stopping = false;

  Tables tables_for(const std::shared_ptr<const SessionState>& s) {
    std::lock_guard lock(tables_mutex);
    if (!tables || tables->revision != s->revision) {
      Tables t;
      t.revision = s->revision;
      t.vertices = std::make_shared<const FeatureTable>(vertex_features(s->labels, s->graph, s->fits, opts.exec));
      t.edges = std::make_shared<const FeatureTable>(edge_features(s->graph, s->fits));
      tables = std::move(t);
    }
    return *tables;
  }

  void publish(const std::shared_ptr<const SessionState>& s) {
    const SharedFolder core(folder, Side::core);
    const Tables t = tables_for(s);
    core.publish(Role::vertex_table, opts.table_name, *t.vertices);
    core.publish(Role::edge_table, opts.table_name, *t.edges);
    core.publish(Role::vertex_colormap, colormap_table(vertex_colors(s->graph)));
    core.publish(Role::edge_colormap, colormap_table(edge_colors(s->graph)));
  }

  void push_event(json ev) {
    {
      std::lock_guard lock(events_mutex);
      ev["seq"] = ++last_seq;
      events.push_back(std::move(ev));
      while (events.size() > 1000) events.pop_front();
    }
    events_cv.notify_all();
  }

  static void reply(httplib::Response& res, int status, const json& body, std::optional<std::uint64_t> rev = {}) {
    res.status = status;
    if (rev) res.set_header("X-Coda-Revision", std::to_string(*rev));
    res.set_content(body.dump(), kJson);
  }

  static void fail(httplib::Response& res, int status, const std::string& error, const std::string& message,
                   std::optional<std::uint64_t> rev = {}) {
    json body = {{"error", error}, {"message", message}};
    if (rev) body["revision"] = *rev;
    reply(res, status, body, rev);
  }

  Label vertex_param(const httplib::Request& req, const SessionState& s, const char* name) {
    const auto v = param_u64(req, name);
    if (!v) throw Error(std::string("missing parameter '") + name + "'");
    const Label l = static_cast<Label>(*v);
    if (*v > std::numeric_limits<Label>::max() || !s.graph.has_vertex(l))
      throw Error("unknown vertex " + std::to_string(*v));
    return l;
  }

  void routes() {
    // Reads: each handler works on one snapshot so the body matches its revision.
    auto get = [this](const std::string& pattern, auto handler) {
      server.Get(pattern, [this, handler](const httplib::Request& req, httplib::Response& res) {
        const auto s = session->snapshot();
        try {
          handler(req, res, s);
        } catch (const std::exception& e) {
          fail(res, 400, "bad_request", e.what(), s->revision);
        }
      });
    };

    get("/graph", [](const httplib::Request&, httplib::Response& res, const auto& s) {
      reply(res, 200, graph_json(*s), s->revision);
    });

    get(R"(/features/(vertices|edges))", [this](const httplib::Request& req, httplib::Response& res, const auto& s) {
      const bool vertex = req.matches[1] == "vertices";
      const Tables t = tables_for(s);
      FeatureTable table = vertex ? *t.vertices : *t.edges;
      if (req.has_param("selected") && req.get_param_value("selected") == "1") {
        const SharedFolder ui(folder, Side::ui);
        const Role role = vertex ? Role::ui_vertex_selection : Role::ui_edge_selection;
        std::set<std::size_t> rows;
        if (ui.exists(role)) {
          const FeatureTable sel = ui.read(role);
          if (sel.rows() != table.rows()) {
            fail(res, 409, "stale_selection", "selection has " + std::to_string(sel.rows()) + " rows, table has " +
                                                  std::to_string(table.rows()), s->revision);
            return;
          }
          rows = selected_rows(sel);
        }
        table = select_rows(table, rows);
      }
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "csv";
      if (format == "csv") {
        res.set_header("X-Coda-Revision", std::to_string(s->revision));
        res.set_content(to_csv(table), "text/csv");
      } else if (format == "json") {
        json body = table_json(table);
        body["revision"] = s->revision;
        body["kind"] = vertex ? "vertex" : "edge";
        reply(res, 200, body, s->revision);
      } else {
        throw Error("format must be csv or json");
      }
    });

    get("/hints/cycle", [](const httplib::Request&, httplib::Response& res, const auto& s) {
      json body = {{"revision", s->revision}, {"cycle", nullptr}, {"edges", json::array()}};
      if (const auto cyc = shortest_cycle(s->graph)) {
        body["cycle"] = *cyc;
        for (std::size_t i = 0; i < cyc->size(); ++i) {
          const Edge* e = s->graph.find_edge((*cyc)[i], (*cyc)[(i + 1) % cyc->size()]);
          body["edges"].push_back({e->source, e->target});
        }
      }
      reply(res, 200, body, s->revision);
    });

    get("/hints/indegree", [](const httplib::Request&, httplib::Response& res, const auto& s) {
      reply(res, 200, {{"revision", s->revision}, {"vertices", indegree_violations(s->graph)}}, s->revision);
    });

    get("/proofread/next", [this](const httplib::Request& req, httplib::Response& res, const auto& s) {
      std::optional<Label> pick;
      if (req.has_param("from")) {
        const Label from = vertex_param(req, *s, "from");
        pick = nearest_unseen(*s, proofread_view(*s, from).centroid, {from});
      } else {
        for (const auto& [v, st] : s->graph.vertices())
          if (st == ProofState::unseen) {
            pick = v;
            break;
          }
      }
      std::size_t pending = 0;
      for (const auto& [v, st] : s->graph.vertices()) pending += st == ProofState::unseen;
      json body = {{"revision", s->revision}, {"pending", pending}, {"vertex", nullptr}};
      if (pick) {
        const ProofreadView view = proofread_view(*s, *pick);
        body["vertex"] = {{"id", view.vertex},
                          {"centroid", vec_json(view.centroid)},
                          {"axes", {vec_json(view.axes.col(0)), vec_json(view.axes.col(1)), vec_json(view.axes.col(2))}},
                          {"crop_radius", view.crop_radius}};
      }
      reply(res, 200, body, s->revision);
    });

    get(R"(/query/(descendants|ancestors|component))",
        [this](const httplib::Request& req, httplib::Response& res, const auto& s) {
          const Label v = vertex_param(req, *s, "vertex");
          std::set<Label> out;
          if (req.matches[1] == "descendants") {
            out = descendants(s->graph, v);
          } else if (req.matches[1] == "ancestors") {
            out = ancestors(s->graph, v);
          } else {
            const auto comp = components(s->graph);
            for (const auto& [u, c] : comp)
              if (c == comp.at(v)) out.insert(u);
          }
          json rows = json::array();
          for (const Label u : out) rows.push_back(s->graph.vertex_index(u));
          reply(res, 200, {{"revision", s->revision}, {"vertex", v}, {"vertices", out}, {"rows", rows}}, s->revision);
        });

    server.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const std::uint64_t after = param_u64(req, "after").value_or(0);
        const auto timeout = std::min<std::chrono::milliseconds>(
            std::chrono::milliseconds(param_u64(req, "timeout_ms").value_or(10000)), opts.max_long_poll);
        json out = json::array();
        std::uint64_t last = 0;
        {
          std::unique_lock lock(events_mutex);
          events_cv.wait_for(lock, timeout, [&] { return stopping || last_seq > after; });
          for (const auto& ev : events)
            if (ev["seq"].get<std::uint64_t>() > after) out.push_back(ev);
          last = last_seq;
        }
        const auto rev = session->snapshot()->revision;
        reply(res, 200, {{"revision", rev}, {"last_seq", last}, {"events", std::move(out)}}, rev);
      } catch (const std::exception& e) {
        fail(res, 400, "bad_request", e.what());
      }
    });

    server.Post("/edit", [this](const httplib::Request& req, httplib::Response& res) {
      EditCommand cmd;
      std::optional<std::uint64_t> base;
      try {
        const json body = json::parse(req.body);
        if (!body.is_object() || !body.contains("command")) throw Error("body needs a 'command' object");
        if (body.contains("base_revision")) base = body.at("base_revision").get<std::uint64_t>();
        cmd = command_from_json(body.at("command"));
      } catch (const std::exception& e) {
        fail(res, 400, "bad_request", e.what(), session->snapshot()->revision);
        return;
      }
      std::unique_lock lock(edit_mutex);
      EditOutcome out;
      try {
        out = session->apply(cmd, base);
      } catch (const RevisionConflict& e) {
        fail(res, 409, "conflict", e.what(), e.current_revision);
        return;
      } catch (const std::exception& e) {
        fail(res, 422, "rejected", e.what(), session->snapshot()->revision);
        return;
      }
      const auto s = session->snapshot();
      if (opts.session_dir) {
        append_journal(*opts.session_dir, session->journal().back());
        write_current(*opts.session_dir, *s);
      }
      publish(s);
      lock.unlock();
      push_event({{"type", "revision"}, {"revision", out.revision}});
      reply(res, 200, {{"revision", out.revision}, {"created", out.created}}, out.revision);
    });

    server.Post("/selection", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = session->snapshot();
      try {
        const json body = json::parse(req.body);
        const std::string kind = body.value("kind", "vertex");
        if (kind != "vertex" && kind != "edge") throw Error("kind must be vertex or edge");
        if (body.contains("base_revision") && body.at("base_revision").get<std::uint64_t>() != s->revision) {
          fail(res, 409, "conflict", "selection refers to another revision", s->revision);
          return;
        }
        const auto rows = body.at("rows").get<std::set<std::size_t>>();
        const std::size_t n = kind == "vertex" ? s->graph.vertex_count() : s->graph.edge_count();
        const SharedFolder ui(folder, Side::ui);
        const fs::path p =
            ui.publish(kind == "vertex" ? Role::ui_vertex_selection : Role::ui_edge_selection, selection_table(n, rows));
        reply(res, 200, {{"revision", s->revision}, {"file", p.filename().string()}, {"selected", rows.size()}},
              s->revision);
      } catch (const std::exception& e) {
        fail(res, 400, "bad_request", e.what(), s->revision);
      }
    });
  }
};

Service::Service(std::unique_ptr<EditSession> session, ServiceOptions opts) : impl_(std::make_unique<Impl>()) {
  impl_->opts = std::move(opts);
  impl_->session = std::move(session);
  impl_->folder = SharedFolder::create(impl_->opts.shared_root, Side::core).path();
  impl_->publish(impl_->session->snapshot());
  impl_->routes();
  impl_->watcher = std::make_unique<FolderWatcher>(impl_->folder, [this](const FolderEvent& ev) {
    impl_->push_event({{"type", "folder"}, {"change", to_string(ev.kind)}, {"file", file_name(ev.file)}});
  });
}

Service::~Service() {
  stop();
  impl_->watcher.reset();
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
  {
    std::lock_guard lock(impl_->events_mutex);
    impl_->stopping = true;
  }
  impl_->events_cv.notify_all();
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

const fs::path& Service::shared_folder() const { return impl_->folder; }
std::uint64_t Service::revision() const { return impl_->session->snapshot()->revision; }
const EditSession& Service::session() const { return *impl_->session; }

}  // namespace coda
