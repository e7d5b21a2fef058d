#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coda/grid.hpp"
#include "coda/parabola.hpp"

namespace coda {

enum class ProofState { unseen, good };

std::string to_string(ProofState s);
ProofState proof_state_from_string(const std::string& s);

struct Edge {
  Label source = 0;
  Label target = 0;
  Vec3 source_point = Vec3::Zero();  // touching point inside the source, mm
  Vec3 target_point = Vec3::Zero();  // touching point inside the target, mm
  std::int64_t contact_faces = 0;
  double contact_area = 0.0;  // mm²
  std::optional<double> h_source;
  std::optional<double> h_target;
  std::optional<double> confidence;  // h_source - h_target
  ProofState state = ProofState::unseen;
  bool directed = false;        // direction decided (heights, manual or flip)
  bool low_confidence = false;  // equal heights or re-attachment tie
  bool missing_fit = false;
  bool manual = false;

  double length() const { return (source_point - target_point).norm(); }

  /// Reverses the edge in place; heights and points travel with their vertex.
  void flip();

  bool operator==(const Edge& o) const;
};

using EdgeKey = std::pair<Label, Label>;  // (min, max)

inline EdgeKey edge_key(Label a, Label b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

/// Vertices are instance labels; at most one edge per unordered pair.
class SkeletonGraph {
 public:
  using VertexMap = std::map<Label, ProofState>;
  using EdgeMap = std::map<EdgeKey, Edge>;

  void add_vertex(Label v, ProofState s = ProofState::unseen);
  /// Removes the vertex and every incident edge.
  void remove_vertex(Label v);
  bool has_vertex(Label v) const { return vertices_.count(v) != 0; }
  ProofState& state(Label v);
  ProofState state(Label v) const;

  void add_edge(Edge e);
  bool has_edge(Label a, Label b) const { return edges_.count(edge_key(a, b)) != 0; }
  Edge* find_edge(Label a, Label b);
  const Edge* find_edge(Label a, Label b) const;
  /// The edge a→b if it exists with that direction.
  const Edge* find_directed(Label a, Label b) const;
  Edge remove_edge(Label a, Label b);

  const VertexMap& vertices() const { return vertices_; }
  const EdgeMap& edges() const { return edges_; }
  EdgeMap& edges() { return edges_; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  std::vector<Label> out_neighbors(Label v) const;
  std::vector<Label> in_neighbors(Label v) const;
  std::vector<Label> neighbors(Label v) const;
  std::vector<const Edge*> incident_edges(Label v) const;

  /// Row index of a vertex in ascending-label order.
  std::size_t vertex_index(Label v) const;

  bool operator==(const SkeletonGraph&) const = default;

 private:
  VertexMap vertices_;
  EdgeMap edges_;
};

/// Region adjacency graph over face (6-)adjacent label pairs. Touching
/// points are the face-adjacent voxel pair with the smallest center distance
/// (ties: smallest voxel indices); edges start as lower label → higher label
/// and undirected.
SkeletonGraph build_rag(const LabelGrid& labels, Exec exec = Exec::parallel);

/// Directs every edge so that h_source(x_source) >= h_target(x_target).
/// Equal heights go from the lower label and are flagged low-confidence.
/// Edges with a missing fit stay undirected and flagged.
void orient_edges(SkeletonGraph& g, const std::map<Label, Parabola>& fits);

/// Sets the edge direction from the two heights.
void orient_edge(Edge& e, const Parabola* source_fit, const Parabola* target_fit);

/// Removes every edge between two daughters of a common mother, triangles in
/// ascending (A, B1, B2) order. Returns the removed edges in removal order.
std::vector<Edge> prune_sibling_edges(SkeletonGraph& g);

/// Shortest cycle of the underlying undirected graph as a vertex sequence
/// starting at its smallest vertex; lexicographically smallest among ties.
std::optional<std::vector<Label>> shortest_cycle(const SkeletonGraph& g);

/// Vertices with in-degree >= 2, ascending.
std::vector<Label> indegree_violations(const SkeletonGraph& g);

/// Connected components of the undirected graph, numbered 0.. by their
/// smallest vertex.
std::map<Label, int> components(const SkeletonGraph& g);

struct Generations {
  std::map<Label, int> generation;  // only vertices of acyclic components
  std::map<int, bool> cyclic;       // component id -> has a directed cycle
  std::map<Label, int> component;
};

/// Longest-path depth from the in-degree-0 vertices, per component.
Generations generations(const SkeletonGraph& g);

struct BuddingStats {
  double median = 0.0;
  double q75 = 0.0;
  int max = 0;
};

/// Out-degree statistics over all vertices (linear-interpolated quantiles).
BuddingStats budding_stats(const SkeletonGraph& g);

/// v plus everything reachable along edge directions.
std::set<Label> descendants(const SkeletonGraph& g, Label v);
/// v plus everything that reaches v.
std::set<Label> ancestors(const SkeletonGraph& g, Label v);

void to_json(nlohmann::json& j, const Edge& e);
void from_json(const nlohmann::json& j, Edge& e);
void to_json(nlohmann::json& j, const SkeletonGraph& g);
void from_json(const nlohmann::json& j, SkeletonGraph& g);

}  // namespace coda
