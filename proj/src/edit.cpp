#include "coda/edit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace coda {
using nlohmann::json;

// --- command JSON -----------------------------------------------------------

namespace {

Vec3 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(std::string(what) + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
T pair_cmd(const json& j) {
  T c;
  c.source = j.at("source").get<Label>();
  c.target = j.at("target").get<Label>();
  return c;
}

}  // namespace

EditCommand command_from_json(const json& j) {
  try {
    if (!j.is_object()) throw Error("command must be a JSON object");
    EditCommand c;
    c.id = j.value("id", std::uint64_t{0});
    const std::string op = j.at("op").get<std::string>();
    if (op == "merge") {
      c.body = MergeCmd{j.at("labels").get<std::vector<Label>>()};
    } else if (op == "cut") {
      c.body = CutCmd{j.at("label").get<Label>(), vec_from(j.at("point"), "point"), vec_from(j.at("normal"), "normal")};
    } else if (op == "add_edge") {
      c.body = pair_cmd<AddEdgeCmd>(j);
    } else if (op == "remove_edge") {
      c.body = pair_cmd<RemoveEdgeCmd>(j);
    } else if (op == "flip_edge") {
      c.body = pair_cmd<FlipEdgeCmd>(j);
    } else if (op == "mark") {
      MarkCmd m;
      m.state = proof_state_from_string(j.at("state").get<std::string>());
      if (j.contains("vertex")) m.vertex = j["vertex"].get<Label>();
      if (j.contains("edge")) {
        const auto e = j["edge"].get<std::vector<Label>>();
        if (e.size() != 2) throw Error("mark: edge must be [source, target]");
        m.edge = EdgeKey{e[0], e[1]};
      }
      if (m.vertex.has_value() == m.edge.has_value()) throw Error("mark: give exactly one of vertex or edge");
      c.body = m;
    } else if (op == "undo") {
      c.body = UndoCmd{};
    } else {
      throw Error("unknown op '" + op + "'");
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed command: ") + e.what());
  }
}

json command_to_json(const EditCommand& c) {
  json j;
  if (c.id) j["id"] = c.id;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, MergeCmd>) {
          j["op"] = "merge";
          j["labels"] = b.labels;
        } else if constexpr (std::is_same_v<T, CutCmd>) {
          j["op"] = "cut";
          j["label"] = b.label;
          j["point"] = {b.point.x(), b.point.y(), b.point.z()};
          j["normal"] = {b.normal.x(), b.normal.y(), b.normal.z()};
        } else if constexpr (std::is_same_v<T, AddEdgeCmd>) {
          j["op"] = "add_edge";
          j["source"] = b.source;
          j["target"] = b.target;
        } else if constexpr (std::is_same_v<T, RemoveEdgeCmd>) {
          j["op"] = "remove_edge";
          j["source"] = b.source;
          j["target"] = b.target;
        } else if constexpr (std::is_same_v<T, FlipEdgeCmd>) {
          j["op"] = "flip_edge";
          j["source"] = b.source;
          j["target"] = b.target;
        } else if constexpr (std::is_same_v<T, MarkCmd>) {
          j["op"] = "mark";
          j["state"] = to_string(b.state);
          if (b.vertex) j["vertex"] = *b.vertex;
          if (b.edge) j["edge"] = {b.edge->first, b.edge->second};
        } else {
          j["op"] = "undo";
        }
      },
      c.body);
  return j;
}

// --- geometry helpers -----------------------------------------------------------

SessionState SessionState::make(LabelGrid labels, std::optional<MaskGrid> fit_mask, SkeletonGraph graph,
                                std::map<Label, Parabola> fits) {
  SessionState s;
  Label top = 0;
  for (const Label l : labels.storage()) top = std::max(top, l);
  for (const auto& [v, _] : graph.vertices()) top = std::max(top, v);
  s.labels = std::move(labels);
  s.fit_mask = std::move(fit_mask);
  s.graph = std::move(graph);
  s.fits = std::move(fits);
  s.next_label = top + 1;
  return s;
}

std::optional<Touching> face_contact(const LabelGrid& g, Label a, Label b) {
  const Dims d = g.dims();
  const Spacing sp = g.spacing();
  const double dist[3] = {sp.sx, sp.sy, sp.sz};
  const double face[3] = {sp.sy * sp.sz, sp.sx * sp.sz, sp.sx * sp.sy};
  const Label lo = std::min(a, b);
  Touching t;
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_lo = -1, best_hi = -1;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (g[i] != a && g[i] != b) continue;
    const auto c = g.coords(i);
    for (int ax = 0; ax < 3; ++ax) {
      Index3 n = c;
      if (++n[ax] >= (ax == 0 ? d.nx : ax == 1 ? d.ny : d.nz)) continue;
      const std::int64_t j = g.index(n[0], n[1], n[2]);
      if (g[j] == g[i] || (g[j] != a && g[j] != b)) continue;
      ++t.faces;
      t.area += face[ax];
      const std::int64_t vlo = g[i] == lo ? i : j;
      const std::int64_t vhi = g[i] == lo ? j : i;
      if (dist[ax] < best || (dist[ax] == best && (vlo < best_lo || (vlo == best_lo && vhi < best_hi)))) {
        best = dist[ax];
        best_lo = vlo;
        best_hi = vhi;
      }
    }
  }
  if (t.faces == 0) return std::nullopt;
  const std::int64_t va = a == lo ? best_lo : best_hi;
  const std::int64_t vb = a == lo ? best_hi : best_lo;
  t.point_a = g.center(va);
  t.point_b = g.center(vb);
  return t;
}

namespace {

bool on_surface(const LabelGrid& g, std::int64_t i) {
  const auto c = g.coords(i);
  for (int ax = 0; ax < 3; ++ax)
    for (int s = -1; s <= 1; s += 2) {
      Index3 n = c;
      n[ax] += s;
      if (!g.inside(n[0], n[1], n[2])) return true;
      if (g.at(n[0], n[1], n[2]) != g[i]) return true;
    }
  return false;
}

}  // namespace

Touching closest_pair(const LabelGrid& g, Label a, Label b) {
  std::vector<std::int64_t> va, vb;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (g[i] == a && on_surface(g, i)) va.push_back(i);
    if (g[i] == b && on_surface(g, i)) vb.push_back(i);
  }
  if (va.empty() || vb.empty()) throw Error("closest_pair: label missing from volume");
  double best = std::numeric_limits<double>::infinity();
  std::int64_t ba = -1, bb = -1;
  for (const std::int64_t i : va) {
    const Vec3 pi = g.center(i);
    for (const std::int64_t j : vb) {
      const double d = (g.center(j) - pi).squaredNorm();
      if (d < best) {
        best = d;
        ba = i;
        bb = j;
      }
    }
  }
  Touching t;
  t.point_a = g.center(ba);
  t.point_b = g.center(bb);
  if (const auto fc = face_contact(g, a, b)) {
    t.faces = fc->faces;
    t.area = fc->area;
  }
  return t;
}

namespace {

const Parabola* fit_of(const SessionState& s, Label l) {
  auto it = s.fits.find(l);
  return it == s.fits.end() ? nullptr : &it->second;
}

Parabola fit_label(const SessionState& s, Label l) {
  return fit_parabola(instance_points(s.labels, l, s.fit_mask ? &*s.fit_mask : nullptr));
}

void require_vertex(const SessionState& s, Label v) {
  if (!s.graph.has_vertex(v)) throw Error("unknown label " + std::to_string(v));
}

std::optional<double> height_at(const Parabola* p, const Vec3& x) {
  if (!p) return std::nullopt;
  return height(*p, x);
}

}  // namespace

// --- EditSession ---------------------------------------------------------------------

EditSession::EditSession(SessionState initial)
    : initial_(std::make_shared<const SessionState>(initial)),
      current_(std::make_shared<const SessionState>(std::move(initial))) {}

std::shared_ptr<const SessionState> EditSession::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return current_;
}

EditOutcome EditSession::apply(EditCommand cmd, std::optional<std::uint64_t> base_revision) {
  std::lock_guard writer(writer_mutex_);
  const auto current = snapshot();
  if (base_revision && *base_revision != current->revision) throw RevisionConflict(*base_revision, current->revision);
  auto next = std::make_shared<SessionState>(*current);
  EditOutcome out;
  if (std::holds_alternative<UndoCmd>(cmd.body)) {
    if (undo_.empty()) throw Error("nothing to undo");
    const UndoRecord& rec = undo_.back();
    for (auto it = rec.voxels.rbegin(); it != rec.voxels.rend(); ++it) next->labels[it->first] = it->second;
    next->graph = rec.graph;
    for (const auto& [l, fit] : rec.fits) {
      if (fit)
        next->fits[l] = *fit;
      else
        next->fits.erase(l);
    }
    undo_.pop_back();
  } else {
    undo_.push_back(apply_to(*next, cmd.body, out));
  }
  next->revision += 1;
  out.revision = next->revision;
  cmd.id = journal_.size() + 1;
  journal_.push_back(std::move(cmd));
  std::lock_guard lock(snapshot_mutex_);
  current_ = std::move(next);
  return out;
}

EditSession::UndoRecord EditSession::apply_to(SessionState& s, const CommandBody& body, EditOutcome& out) const {
  UndoRecord rec;
  rec.graph = s.graph;

  if (const auto* m = std::get_if<MergeCmd>(&body)) {
    std::set<Label> set(m->labels.begin(), m->labels.end());
    if (set.size() < 2) throw Error("merge needs at least two distinct labels");
    for (const Label l : set) require_vertex(s, l);
    const Label fresh = s.next_label++;
    for (std::int64_t i = 0; i < s.labels.size(); ++i)
      if (set.count(s.labels[i])) {
        rec.voxels.emplace_back(i, s.labels[i]);
        s.labels[i] = fresh;
      }

    std::vector<Edge> external;
    for (const auto& [k, e] : s.graph.edges()) {
      const bool in_s = set.count(e.source) != 0, in_t = set.count(e.target) != 0;
      if (in_s && in_t) continue;
      if (!in_s && !in_t) continue;
      Edge moved = e;
      if (in_s) moved.source = fresh;
      if (in_t) moved.target = fresh;
      external.push_back(std::move(moved));
    }
    for (const Label l : set) s.graph.remove_vertex(l);
    s.graph.add_vertex(fresh, ProofState::unseen);
    for (Edge& e : external) {
      Edge* dup = s.graph.find_edge(e.source, e.target);
      if (!dup) {
        s.graph.add_edge(std::move(e));
      } else if (e.confidence.value_or(-std::numeric_limits<double>::infinity()) >
                 dup->confidence.value_or(-std::numeric_limits<double>::infinity())) {
        *dup = std::move(e);
      }
    }
    for (const Label l : set) {
      rec.fits[l] = s.fits.count(l) ? std::optional<Parabola>(s.fits.at(l)) : std::nullopt;
      s.fits.erase(l);
    }
    rec.fits[fresh] = std::nullopt;
    s.fits[fresh] = fit_label(s, fresh);
    out.created = {fresh};
    return rec;
  }

  if (const auto* c = std::get_if<CutCmd>(&body)) {
    require_vertex(s, c->label);
    const double len = c->normal.norm();
    if (!(len > 0.0) || !std::isfinite(len)) throw Error("cut: normal must be nonzero");
    const Vec3 n = c->normal / len;
    std::vector<std::int64_t> plus, minus;
    for (std::int64_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels[i] != c->label) continue;
      ((s.labels.center(i) - c->point).dot(n) >= 0.0 ? plus : minus).push_back(i);
    }
    if (plus.empty() || minus.empty()) throw Error("cut: plane does not split label " + std::to_string(c->label));

    const Label lp = s.next_label++;
    const Label lm = s.next_label++;
    for (const std::int64_t i : plus) {
      rec.voxels.emplace_back(i, c->label);
      s.labels[i] = lp;
    }
    for (const std::int64_t i : minus) {
      rec.voxels.emplace_back(i, c->label);
      s.labels[i] = lm;
    }
    rec.fits[c->label] = s.fits.count(c->label) ? std::optional<Parabola>(s.fits.at(c->label)) : std::nullopt;
    rec.fits[lp] = std::nullopt;
    rec.fits[lm] = std::nullopt;
    s.fits.erase(c->label);
    s.fits[lp] = fit_label(s, lp);
    s.fits[lm] = fit_label(s, lm);

    std::vector<Edge> incident;
    for (const Edge* e : s.graph.incident_edges(c->label)) incident.push_back(*e);
    s.graph.remove_vertex(c->label);
    s.graph.add_vertex(lp, ProofState::unseen);
    s.graph.add_vertex(lm, ProofState::unseen);

    for (const Edge& e : incident) {
      const bool cut_is_source = e.source == c->label;
      const Label other = cut_is_source ? e.target : e.source;
      struct Option {
        Label half;
        Touching touch;  // point_a in `other`, point_b in the half
        double margin;
        double gap;
      };
      std::vector<Option> options;
      for (const Label half : {lp, lm}) {
        const auto fc = face_contact(s.labels, other, half);
        const Touching t = fc ? *fc : closest_pair(s.labels, other, half);
        const auto h_other = height_at(fit_of(s, other), t.point_a);
        const auto h_half = height_at(fit_of(s, half), t.point_b);
        double margin = 0.0;
        if (h_other && h_half) margin = cut_is_source ? *h_half - *h_other : *h_other - *h_half;
        options.push_back({half, t, margin, (t.point_a - t.point_b).norm()});
      }
      const bool tie = options[0].margin == options[1].margin;
      std::size_t pick = options[1].margin > options[0].margin ? 1 : 0;
      if (tie) pick = options[1].gap < options[0].gap ? 1 : 0;
      const Option& o = options[pick];

      Edge moved = e;
      moved.contact_faces = o.touch.faces;
      moved.contact_area = o.touch.area;
      if (cut_is_source) {
        moved.source = o.half;
        moved.source_point = o.touch.point_b;
        moved.target_point = o.touch.point_a;
      } else {
        moved.target = o.half;
        moved.target_point = o.touch.point_b;
        moved.source_point = o.touch.point_a;
      }
      moved.h_source = height_at(fit_of(s, moved.source), moved.source_point);
      moved.h_target = height_at(fit_of(s, moved.target), moved.target_point);
      moved.confidence.reset();
      if (moved.h_source && moved.h_target) moved.confidence = *moved.h_source - *moved.h_target;
      moved.low_confidence = e.low_confidence || tie;
      s.graph.add_edge(std::move(moved));
    }

    const auto fc = face_contact(s.labels, lp, lm);
    const Touching t = fc ? *fc : closest_pair(s.labels, lp, lm);
    Edge between;
    between.source = lp;
    between.target = lm;
    between.source_point = t.point_a;
    between.target_point = t.point_b;
    between.contact_faces = t.faces;
    between.contact_area = t.area;
    orient_edge(between, fit_of(s, lp), fit_of(s, lm));
    s.graph.add_edge(std::move(between));
    out.created = {lp, lm};
    return rec;
  }

  if (const auto* a = std::get_if<AddEdgeCmd>(&body)) {
    require_vertex(s, a->source);
    require_vertex(s, a->target);
    if (a->source == a->target) throw Error("add_edge: self-loop");
    if (s.graph.has_edge(a->source, a->target)) throw Error("add_edge: edge exists");
    const Touching t = closest_pair(s.labels, a->source, a->target);
    Edge e;
    e.source = a->source;
    e.target = a->target;
    e.source_point = t.point_a;
    e.target_point = t.point_b;
    e.contact_faces = t.faces;
    e.contact_area = t.area;
    e.h_source = height_at(fit_of(s, e.source), e.source_point);
    e.h_target = height_at(fit_of(s, e.target), e.target_point);
    if (e.h_source && e.h_target) e.confidence = *e.h_source - *e.h_target;
    e.directed = true;
    e.manual = true;
    s.graph.add_edge(std::move(e));
    return rec;
  }

  if (const auto* r = std::get_if<RemoveEdgeCmd>(&body)) {
    if (!s.graph.find_directed(r->source, r->target)) throw Error("remove_edge: no such edge");
    s.graph.remove_edge(r->source, r->target);
    return rec;
  }

  if (const auto* f = std::get_if<FlipEdgeCmd>(&body)) {
    if (!s.graph.find_directed(f->source, f->target)) throw Error("flip_edge: no such edge");
    s.graph.find_edge(f->source, f->target)->flip();
    return rec;
  }

  if (const auto* mk = std::get_if<MarkCmd>(&body)) {
    if (mk->vertex) {
      require_vertex(s, *mk->vertex);
      s.graph.state(*mk->vertex) = mk->state;
    } else {
      Edge* e = s.graph.find_edge(mk->edge->first, mk->edge->second);
      if (!e) throw Error("mark: no such edge");
      e->state = mk->state;
    }
    return rec;
  }

  throw Error("unsupported command");
}

std::unique_ptr<EditSession> EditSession::replay(SessionState initial, const std::vector<EditCommand>& journal) {
  auto session = std::make_unique<EditSession>(std::move(initial));
  for (const auto& c : journal) session->apply(c);
  return session;
}

// --- proofreading ------------------------------------------------------------------------

ProofreadView proofread_view(const SessionState& s, Label v) {
  ProofreadView view;
  view.vertex = v;
  std::vector<Vec3> pts;
  for (std::int64_t i = 0; i < s.labels.size(); ++i)
    if (s.labels[i] == v) pts.push_back(s.labels.center(i));
  if (pts.empty()) throw Error("label " + std::to_string(v) + " has no voxels");
  for (const auto& p : pts) view.centroid += p;
  view.centroid /= static_cast<double>(pts.size());
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p - view.centroid).norm());
  view.crop_radius = 1.5 * r;
  if (const Parabola* f = fit_of(s, v)) view.axes = f->rotation;
  return view;
}

std::optional<Label> nearest_unseen(const SessionState& s, const Vec3& cursor, const std::set<Label>& exclude) {
  std::map<Label, Vec3> sum;
  std::map<Label, std::int64_t> count;
  for (std::int64_t i = 0; i < s.labels.size(); ++i) {
    const Label l = s.labels[i];
    if (l == 0 || exclude.count(l)) continue;
    if (!s.graph.has_vertex(l) || s.graph.state(l) != ProofState::unseen) continue;
    auto [it, fresh] = sum.try_emplace(l, Vec3::Zero());
    it->second += s.labels.center(i);
    ++count[l];
  }
  std::optional<Label> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [l, total] : sum) {
    const double d = (total / static_cast<double>(count[l]) - cursor).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

ProofreadQueue::ProofreadQueue(std::shared_ptr<const SessionState> s) : state_(std::move(s)) {}

void ProofreadQueue::update(std::shared_ptr<const SessionState> s) { state_ = std::move(s); }

std::set<Label> ProofreadQueue::pending() const {
  std::set<Label> out;
  for (const auto& [v, st] : state_->graph.vertices())
    if (st == ProofState::unseen) out.insert(v);
  return out;
}

std::optional<ProofreadView> ProofreadQueue::next() {
  const auto todo = pending();
  if (todo.empty()) return std::nullopt;
  std::erase_if(visited_, [&](Label v) { return !todo.count(v); });
  if (visited_.size() == todo.size()) visited_.clear();  // wrap around

  std::optional<Label> pick;
  if (!cursor_) {
    for (const Label v : todo)
      if (!visited_.count(v)) {
        pick = v;
        break;
      }
  } else {
    pick = nearest_unseen(*state_, *cursor_, visited_);
  }
  if (!pick) return std::nullopt;
  visited_.insert(*pick);
  ProofreadView view = proofread_view(*state_, *pick);
  cursor_ = view.centroid;
  return view;
}

}  // namespace coda
