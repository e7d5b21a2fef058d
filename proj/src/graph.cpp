#include "coda/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <unordered_map>

#include <omp.h>

#include <nlohmann/json.hpp>

namespace coda {

std::string to_string(ProofState s) { return s == ProofState::good ? "good" : "unseen"; }

ProofState proof_state_from_string(const std::string& s) {
  if (s == "good") return ProofState::good;
  if (s == "unseen") return ProofState::unseen;
  throw Error("unknown proofread state '" + s + "'");
}

void Edge::flip() {
  std::swap(source, target);
  std::swap(source_point, target_point);
  std::swap(h_source, h_target);
  if (confidence) confidence = -*confidence;
  directed = true;
}

bool Edge::operator==(const Edge& o) const {
  return source == o.source && target == o.target && source_point == o.source_point &&
         target_point == o.target_point && contact_faces == o.contact_faces && contact_area == o.contact_area &&
         h_source == o.h_source && h_target == o.h_target && confidence == o.confidence && state == o.state &&
         directed == o.directed && low_confidence == o.low_confidence && missing_fit == o.missing_fit &&
         manual == o.manual;
}

// --- SkeletonGraph --------------------------------------------------------

void SkeletonGraph::add_vertex(Label v, ProofState s) {
  if (v == 0) throw Error("label 0 is background");
  vertices_.emplace(v, s);
}

void SkeletonGraph::remove_vertex(Label v) {
  vertices_.erase(v);
  std::erase_if(edges_, [v](const auto& kv) { return kv.first.first == v || kv.first.second == v; });
}

ProofState& SkeletonGraph::state(Label v) {
  auto it = vertices_.find(v);
  if (it == vertices_.end()) throw Error("unknown vertex " + std::to_string(v));
  return it->second;
}

ProofState SkeletonGraph::state(Label v) const {
  auto it = vertices_.find(v);
  if (it == vertices_.end()) throw Error("unknown vertex " + std::to_string(v));
  return it->second;
}

void SkeletonGraph::add_edge(Edge e) {
  if (e.source == e.target) throw Error("self-loop on " + std::to_string(e.source));
  if (!has_vertex(e.source) || !has_vertex(e.target))
    throw Error("edge " + std::to_string(e.source) + "-" + std::to_string(e.target) + " references unknown vertex");
  const auto key = edge_key(e.source, e.target);
  if (edges_.count(key)) throw Error("edge " + std::to_string(key.first) + "-" + std::to_string(key.second) + " exists");
  edges_.emplace(key, std::move(e));
}

Edge* SkeletonGraph::find_edge(Label a, Label b) {
  auto it = edges_.find(edge_key(a, b));
  return it == edges_.end() ? nullptr : &it->second;
}

const Edge* SkeletonGraph::find_edge(Label a, Label b) const {
  auto it = edges_.find(edge_key(a, b));
  return it == edges_.end() ? nullptr : &it->second;
}

const Edge* SkeletonGraph::find_directed(Label a, Label b) const {
  const Edge* e = find_edge(a, b);
  return e && e->source == a ? e : nullptr;
}

Edge SkeletonGraph::remove_edge(Label a, Label b) {
  auto it = edges_.find(edge_key(a, b));
  if (it == edges_.end()) throw Error("no edge " + std::to_string(a) + "-" + std::to_string(b));
  Edge e = std::move(it->second);
  edges_.erase(it);
  return e;
}

std::vector<Label> SkeletonGraph::out_neighbors(Label v) const {
  std::vector<Label> out;
  for (const auto& [k, e] : edges_)
    if (e.source == v) out.push_back(e.target);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Label> SkeletonGraph::in_neighbors(Label v) const {
  std::vector<Label> out;
  for (const auto& [k, e] : edges_)
    if (e.target == v) out.push_back(e.source);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Label> SkeletonGraph::neighbors(Label v) const {
  std::vector<Label> out;
  for (const auto& [k, e] : edges_) {
    if (k.first == v) out.push_back(k.second);
    if (k.second == v) out.push_back(k.first);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<const Edge*> SkeletonGraph::incident_edges(Label v) const {
  std::vector<const Edge*> out;
  for (const auto& [k, e] : edges_)
    if (k.first == v || k.second == v) out.push_back(&e);
  return out;
}

std::size_t SkeletonGraph::vertex_index(Label v) const {
  auto it = vertices_.find(v);
  if (it == vertices_.end()) throw Error("unknown vertex " + std::to_string(v));
  return static_cast<std::size_t>(std::distance(vertices_.begin(), it));
}

// --- RAG --------------------------------------------------------------------

namespace {

struct Contact {
  std::int64_t faces[3] = {0, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  std::int64_t lo_voxel = -1;  // voxel of the lower label
  std::int64_t hi_voxel = -1;

  void add(int axis, double dist, std::int64_t lo, std::int64_t hi) {
    ++faces[axis];
    consider(dist, lo, hi);
  }
  void consider(double dist, std::int64_t lo, std::int64_t hi) {
    if (dist < best || (dist == best && (lo < lo_voxel || (lo == lo_voxel && hi < hi_voxel)))) {
      best = dist;
      lo_voxel = lo;
      hi_voxel = hi;
    }
  }
  void merge(const Contact& o) {
    for (int a = 0; a < 3; ++a) faces[a] += o.faces[a];
    if (o.lo_voxel >= 0) consider(o.best, o.lo_voxel, o.hi_voxel);
  }
};

struct PairHash {
  std::size_t operator()(const EdgeKey& k) const {
    return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(k.first) << 32) | k.second);
  }
};

using ContactMap = std::unordered_map<EdgeKey, Contact, PairHash>;

void scan_slab(const LabelGrid& g, std::int64_t z, ContactMap& out) {
  const Dims d = g.dims();
  const Spacing sp = g.spacing();
  const double dist[3] = {sp.sx, sp.sy, sp.sz};
  const std::int64_t stride[3] = {1, d.nx, d.nx * d.ny};
  for (std::int64_t y = 0; y < d.ny; ++y)
    for (std::int64_t x = 0; x < d.nx; ++x) {
      const std::int64_t i = g.index(x, y, z);
      const Label a = g[i];
      if (a == 0) continue;
      const bool can[3] = {x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
      for (int ax = 0; ax < 3; ++ax) {
        if (!can[ax]) continue;
        const std::int64_t j = i + stride[ax];
        const Label b = g[j];
        if (b == 0 || b == a) continue;
        const bool a_lo = a < b;
        out[edge_key(a, b)].add(ax, dist[ax], a_lo ? i : j, a_lo ? j : i);
      }
    }
}

}  // namespace

SkeletonGraph build_rag(const LabelGrid& labels, Exec exec) {
  SkeletonGraph g;
  for (const Label l : labels.storage())
    if (l != 0) g.add_vertex(l);

  const std::int64_t nz = labels.dims().nz;
  ContactMap contacts;
  if (exec == Exec::parallel) {
    std::vector<ContactMap> partial(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel
    {
      ContactMap& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
      for (std::int64_t z = 0; z < nz; ++z) scan_slab(labels, z, mine);
    }
    for (const auto& part : partial)
      for (const auto& [k, c] : part) {
        auto [it, fresh] = contacts.try_emplace(k, c);
        if (!fresh) it->second.merge(c);
      }
  } else {
    for (std::int64_t z = 0; z < nz; ++z) scan_slab(labels, z, contacts);
  }

  const Spacing sp = labels.spacing();
  for (const auto& [k, c] : contacts) {
    Edge e;
    e.source = k.first;
    e.target = k.second;
    e.source_point = labels.center(c.lo_voxel);
    e.target_point = labels.center(c.hi_voxel);
    e.contact_faces = c.faces[0] + c.faces[1] + c.faces[2];
    e.contact_area = static_cast<double>(c.faces[0]) * sp.sy * sp.sz + static_cast<double>(c.faces[1]) * sp.sx * sp.sz +
                     static_cast<double>(c.faces[2]) * sp.sx * sp.sy;
    g.add_edge(std::move(e));
  }
  return g;
}

// --- orientation and pruning -------------------------------------------------

void orient_edge(Edge& e, const Parabola* source_fit, const Parabola* target_fit) {
  if (!source_fit || !target_fit) {
    e.missing_fit = true;
    e.directed = false;
    e.h_source.reset();
    e.h_target.reset();
    e.confidence.reset();
    return;
  }
  e.missing_fit = false;
  const double hs = height(*source_fit, e.source_point);
  const double ht = height(*target_fit, e.target_point);
  e.h_source = hs;
  e.h_target = ht;
  e.confidence = hs - ht;
  e.low_confidence = false;
  if (ht > hs) {
    e.flip();
  } else if (hs == ht) {
    if (e.target < e.source) e.flip();
    e.low_confidence = true;
    e.confidence = 0.0;
  }
  e.directed = true;
}

void orient_edges(SkeletonGraph& g, const std::map<Label, Parabola>& fits) {
  auto lookup = [&](Label l) -> const Parabola* {
    auto it = fits.find(l);
    return it == fits.end() ? nullptr : &it->second;
  };
  for (auto& [k, e] : g.edges()) orient_edge(e, lookup(e.source), lookup(e.target));
}

std::vector<Edge> prune_sibling_edges(SkeletonGraph& g) {
  std::vector<Edge> removed;
  std::vector<Label> order;
  for (const auto& [v, s] : g.vertices()) order.push_back(v);
  for (const Label a : order) {
    std::vector<Label> daughters;
    for (const auto& [k, e] : g.edges())
      if (e.directed && e.source == a) daughters.push_back(e.target);
    std::sort(daughters.begin(), daughters.end());
    for (std::size_t i = 0; i < daughters.size(); ++i)
      for (std::size_t j = i + 1; j < daughters.size(); ++j)
        if (g.has_edge(daughters[i], daughters[j])) removed.push_back(g.remove_edge(daughters[i], daughters[j]));
  }
  return removed;
}

// --- analytics -------------------------------------------------------------------

namespace {

struct Adjacency {
  std::map<Label, std::vector<Label>> undirected, out, in;

  explicit Adjacency(const SkeletonGraph& g) {
    for (const auto& [v, s] : g.vertices()) {
      undirected[v];
      out[v];
      in[v];
    }
    for (const auto& [k, e] : g.edges()) {
      undirected[k.first].push_back(k.second);
      undirected[k.second].push_back(k.first);
      out[e.source].push_back(e.target);
      in[e.target].push_back(e.source);
    }
    for (auto* m : {&undirected, &out, &in})
      for (auto& [v, list] : *m) std::sort(list.begin(), list.end());
  }
};

std::set<Label> reach(const std::map<Label, std::vector<Label>>& adj, Label v) {
  std::set<Label> seen{v};
  std::deque<Label> queue{v};
  while (!queue.empty()) {
    const Label u = queue.front();
    queue.pop_front();
    for (const Label w : adj.at(u))
      if (seen.insert(w).second) queue.push_back(w);
  }
  return seen;
}

}  // namespace

std::optional<std::vector<Label>> shortest_cycle(const SkeletonGraph& g) {
  const Adjacency adj(g);
  // girth by BFS from every vertex
  std::size_t girth = std::numeric_limits<std::size_t>::max();
  for (const auto& [s, _] : g.vertices()) {
    std::map<Label, std::size_t> dist{{s, 0}};
    std::map<Label, Label> parent{{s, 0}};
    std::deque<Label> queue{s};
    while (!queue.empty()) {
      const Label u = queue.front();
      queue.pop_front();
      for (const Label w : adj.undirected.at(u)) {
        auto it = dist.find(w);
        if (it == dist.end()) {
          dist[w] = dist[u] + 1;
          parent[w] = u;
          queue.push_back(w);
        } else if (parent[u] != w) {
          girth = std::min(girth, dist[u] + it->second + 1);
        }
      }
    }
  }
  if (girth == std::numeric_limits<std::size_t>::max()) return std::nullopt;

  // lexicographically smallest cycle of that length
  for (const auto& [s, _] : g.vertices()) {
    std::map<Label, std::size_t> dist{{s, 0}};
    std::deque<Label> queue{s};
    while (!queue.empty()) {
      const Label u = queue.front();
      queue.pop_front();
      for (const Label w : adj.undirected.at(u))
        if (w > s && !dist.count(w)) {
          dist[w] = dist[u] + 1;
          queue.push_back(w);
        }
    }
    std::vector<Label> path{s};
    std::set<Label> on_path{s};
    std::function<bool()> extend = [&]() -> bool {
      const Label last = path.back();
      if (path.size() == girth) {
        const auto& nb = adj.undirected.at(last);
        return std::binary_search(nb.begin(), nb.end(), s);
      }
      for (const Label w : adj.undirected.at(last)) {
        if (w <= s || on_path.count(w)) continue;
        auto it = dist.find(w);
        if (it == dist.end() || it->second > girth - path.size()) continue;
        path.push_back(w);
        on_path.insert(w);
        if (extend()) return true;
        on_path.erase(w);
        path.pop_back();
      }
      return false;
    };
    if (extend()) return path;
  }
  return std::nullopt;
}

std::vector<Label> indegree_violations(const SkeletonGraph& g) {
  std::map<Label, int> indeg;
  for (const auto& [k, e] : g.edges()) ++indeg[e.target];
  std::vector<Label> out;
  for (const auto& [v, d] : indeg)
    if (d >= 2) out.push_back(v);
  return out;
}

std::map<Label, int> components(const SkeletonGraph& g) {
  const Adjacency adj(g);
  std::map<Label, int> comp;
  int next = 0;
  for (const auto& [v, _] : g.vertices()) {
    if (comp.count(v)) continue;
    for (const Label u : reach(adj.undirected, v)) comp[u] = next;
    ++next;
  }
  return comp;
}

Generations generations(const SkeletonGraph& g) {
  const Adjacency adj(g);
  Generations out;
  out.component = components(g);
  std::map<int, std::vector<Label>> members;
  for (const auto& [v, c] : out.component) members[c].push_back(v);

  for (const auto& [c, verts] : members) {
    // Kahn's algorithm with longest-path depth
    std::map<Label, int> indeg, depth;
    for (const Label v : verts) indeg[v] = static_cast<int>(adj.in.at(v).size());
    std::deque<Label> ready;
    for (const Label v : verts)
      if (indeg[v] == 0) {
        ready.push_back(v);
        depth[v] = 0;
      }
    std::size_t done = 0;
    while (!ready.empty()) {
      const Label u = ready.front();
      ready.pop_front();
      ++done;
      for (const Label w : adj.out.at(u)) {
        depth[w] = std::max(depth.count(w) ? depth[w] : 0, depth[u] + 1);
        if (--indeg[w] == 0) ready.push_back(w);
      }
    }
    const bool cyclic = done != verts.size();
    out.cyclic[c] = cyclic;
    if (!cyclic)
      for (const Label v : verts) out.generation[v] = depth[v];
  }
  return out;
}

BuddingStats budding_stats(const SkeletonGraph& g) {
  BuddingStats s;
  if (g.vertices().empty()) return s;
  std::map<Label, int> outdeg;
  for (const auto& [v, _] : g.vertices()) outdeg[v] = 0;
  for (const auto& [k, e] : g.edges()) ++outdeg[e.source];
  std::vector<double> d;
  for (const auto& [v, k] : outdeg) d.push_back(k);
  std::sort(d.begin(), d.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
  };
  s.median = quantile(0.5);
  s.q75 = quantile(0.75);
  s.max = static_cast<int>(d.back());
  return s;
}

std::set<Label> descendants(const SkeletonGraph& g, Label v) {
  if (!g.has_vertex(v)) throw Error("unknown vertex " + std::to_string(v));
  return reach(Adjacency(g).out, v);
}

std::set<Label> ancestors(const SkeletonGraph& g, Label v) {
  if (!g.has_vertex(v)) throw Error("unknown vertex " + std::to_string(v));
  return reach(Adjacency(g).in, v);
}

// --- JSON --------------------------------------------------------------------------

namespace {
nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace

void to_json(nlohmann::json& j, const Edge& e) {
  j = {{"source", e.source},
       {"target", e.target},
       {"source_point", vec_json(e.source_point)},
       {"target_point", vec_json(e.target_point)},
       {"contact_faces", e.contact_faces},
       {"contact_area", e.contact_area},
       {"h_source", opt_json(e.h_source)},
       {"h_target", opt_json(e.h_target)},
       {"confidence", opt_json(e.confidence)},
       {"state", to_string(e.state)},
       {"directed", e.directed},
       {"low_confidence", e.low_confidence},
       {"missing_fit", e.missing_fit},
       {"manual", e.manual}};
}

void from_json(const nlohmann::json& j, Edge& e) {
  e.source = j.at("source").get<Label>();
  e.target = j.at("target").get<Label>();
  e.source_point = json_vec(j.at("source_point"));
  e.target_point = json_vec(j.at("target_point"));
  e.contact_faces = j.at("contact_faces").get<std::int64_t>();
  e.contact_area = j.at("contact_area").get<double>();
  e.h_source = json_opt(j.at("h_source"));
  e.h_target = json_opt(j.at("h_target"));
  e.confidence = json_opt(j.at("confidence"));
  e.state = proof_state_from_string(j.at("state").get<std::string>());
  e.directed = j.at("directed").get<bool>();
  e.low_confidence = j.at("low_confidence").get<bool>();
  e.missing_fit = j.at("missing_fit").get<bool>();
  e.manual = j.at("manual").get<bool>();
}

void to_json(nlohmann::json& j, const SkeletonGraph& g) {
  j = nlohmann::json::object();
  auto& verts = j["vertices"] = nlohmann::json::array();
  for (const auto& [v, s] : g.vertices()) verts.push_back({{"id", v}, {"state", to_string(s)}});
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& [k, e] : g.edges()) edges.push_back(e);
}

void from_json(const nlohmann::json& j, SkeletonGraph& g) {
  g = SkeletonGraph{};
  for (const auto& v : j.at("vertices"))
    g.add_vertex(v.at("id").get<Label>(), proof_state_from_string(v.at("state").get<std::string>()));
  for (const auto& e : j.at("edges")) g.add_edge(e.get<Edge>());
}

}  // namespace coda
