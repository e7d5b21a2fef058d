#include <doctest.h>

#include <nlohmann/json.hpp>

#include "coda/edit.hpp"
#include "fixtures.hpp"

using namespace coda;
using nlohmann::json;

namespace {

EditCommand cmd(const char* text) { return command_from_json(json::parse(text)); }

std::int64_t count_label(const LabelGrid& l, Label v) {
  return std::count(l.storage().begin(), l.storage().end(), v);
}

void check_same(const SessionState& a, const SessionState& b) {
  CHECK(a.labels == b.labels);
  CHECK(a.graph == b.graph);
  CHECK(a.next_label == b.next_label);
  CHECK(a.revision == b.revision);
  REQUIRE(a.fits.size() == b.fits.size());
  for (const auto& [l, p] : a.fits) {
    CHECK(b.fits.at(l).alpha == p.alpha);
    CHECK(b.fits.at(l).params == p.params);
  }
}

}  // namespace

TEST_CASE("fixture shape") {
  const auto s = fixture::three_blocks();
  CHECK(s.graph.vertex_count() == 3);
  CHECK(s.graph.edge_count() == 2);
  CHECK(s.next_label == 4);
  CHECK(s.fits.size() == 3);
}

TEST_CASE("merge relabels voxels and rewires edges") {
  EditSession session(fixture::three_blocks());
  const auto out = session.apply(cmd(R"({"op":"merge","labels":[1,2]})"));
  CHECK(out.revision == 1);
  CHECK(out.created == std::vector<Label>{4});
  const auto s = session.snapshot();
  CHECK(count_label(s->labels, 4) == 256);
  CHECK(count_label(s->labels, 1) == 0);
  CHECK_FALSE(s->graph.has_vertex(1));
  CHECK(s->graph.has_edge(4, 3));
  CHECK(s->graph.edge_count() == 1);
  CHECK(s->fits.count(4));
  CHECK_FALSE(s->fits.count(2));
  CHECK(s->next_label == 5);
}

TEST_CASE("cut splits a label with two fresh ids") {
  EditSession session(fixture::three_blocks());
  const auto out = session.apply(cmd(R"({"op":"cut","label":2,"point":[5.75,0,0],"normal":[1,0,0]})"));
  REQUIRE(out.created.size() == 2);
  const Label plus = out.created[0], minus = out.created[1];
  const auto s = session.snapshot();
  CHECK(count_label(s->labels, plus) == 64);  // x = 12..15 (centers 6.0..7.5)
  CHECK(count_label(s->labels, minus) == 64);
  CHECK(s->graph.has_edge(plus, minus));
  CHECK(s->graph.has_edge(1, minus));
  CHECK(s->graph.has_edge(plus, 3));
  CHECK(s->graph.edge_count() == 3);
  CHECK(s->graph.vertex_count() == 4);
}

TEST_CASE("cut that does not split is rejected and changes nothing") {
  EditSession session(fixture::three_blocks());
  const auto before = session.snapshot();
  CHECK_THROWS_AS(session.apply(cmd(R"({"op":"cut","label":2,"point":[100,0,0],"normal":[1,0,0]})")), Error);
  CHECK_THROWS_AS(session.apply(cmd(R"({"op":"cut","label":2,"point":[5,0,0],"normal":[0,0,0]})")), Error);
  CHECK(session.snapshot() == before);
  CHECK(session.journal().empty());
}

TEST_CASE("edge commands") {
  EditSession session(fixture::three_blocks());
  const Edge e12 = *session.snapshot()->graph.find_edge(1, 2);

  // add needs a missing pair
  CHECK_THROWS_AS(session.apply(cmd(R"({"op":"add_edge","source":1,"target":2})")), Error);
  session.apply(cmd(R"({"op":"add_edge","source":3,"target":1})"));
  const Edge* added = session.snapshot()->graph.find_directed(3, 1);
  REQUIRE(added);
  CHECK(added->manual);
  CHECK(added->directed);
  CHECK(added->length() == doctest::Approx(4.5));

  // flip and remove take the current direction
  const json flip = {{"op", "flip_edge"}, {"source", e12.source}, {"target", e12.target}};
  session.apply(command_from_json(flip));
  CHECK(session.snapshot()->graph.find_directed(e12.target, e12.source));
  CHECK_THROWS_AS(session.apply(command_from_json(flip)), Error);
  const json remove = {{"op", "remove_edge"}, {"source", e12.target}, {"target", e12.source}};
  session.apply(command_from_json(remove));
  CHECK_FALSE(session.snapshot()->graph.has_edge(1, 2));

  session.apply(cmd(R"({"op":"mark","vertex":2,"state":"good"})"));
  CHECK(session.snapshot()->graph.state(2) == ProofState::good);
  session.apply(cmd(R"({"op":"mark","edge":[3,2],"state":"good"})"));
  CHECK(session.snapshot()->graph.find_edge(2, 3)->state == ProofState::good);
  CHECK_THROWS_AS(session.apply(cmd(R"({"op":"mark","vertex":99,"state":"good"})")), Error);
  CHECK(session.snapshot()->revision == 5);
}

TEST_CASE("undo restores the previous state and is journaled") {
  const auto initial = fixture::three_blocks();
  EditSession session(initial);
  CHECK_THROWS_AS(session.undo(), Error);
  const auto r0 = session.snapshot();
  session.apply(cmd(R"({"op":"merge","labels":[2,3]})"));
  const auto r1 = session.snapshot();
  session.apply(cmd(R"({"op":"cut","label":4,"point":[9,0,0],"normal":[1,0,0]})"));
  session.undo();
  CHECK(session.snapshot()->labels == r1->labels);
  CHECK(session.snapshot()->graph == r1->graph);
  session.undo();
  CHECK(session.snapshot()->labels == r0->labels);
  CHECK(session.snapshot()->graph == r0->graph);
  CHECK(session.snapshot()->revision == 4);
  CHECK(session.journal().size() == 4);
  CHECK(std::holds_alternative<UndoCmd>(session.journal().back().body));
  CHECK_FALSE(session.can_undo());

  // fresh ids keep increasing after undo
  const auto out = session.apply(cmd(R"({"op":"merge","labels":[1,2]})"));
  CHECK(out.created == std::vector<Label>{7});
}

TEST_CASE("replay reproduces the state") {
  const auto initial = fixture::three_blocks();
  EditSession session(initial);
  session.apply(cmd(R"({"op":"cut","label":1,"point":[1.75,0,0],"normal":[1,0,0]})"));
  session.apply(cmd(R"({"op":"merge","labels":[2,5]})"));
  session.undo();
  session.apply(cmd(R"({"op":"mark","vertex":3,"state":"good"})"));
  const auto again = EditSession::replay(initial, session.journal());
  check_same(*again->snapshot(), *session.snapshot());
  CHECK(again->journal().size() == session.journal().size());
  for (std::size_t i = 0; i < session.journal().size(); ++i) CHECK(session.journal()[i].id == i + 1);
}

TEST_CASE("stale base revision is a conflict") {
  EditSession session(fixture::three_blocks());
  session.apply(cmd(R"({"op":"mark","vertex":1,"state":"good"})"), 0);
  try {
    session.apply(cmd(R"({"op":"mark","vertex":2,"state":"good"})"), 0);
    FAIL("expected a conflict");
  } catch (const RevisionConflict& e) {
    CHECK(e.current_revision == 1);
  }
  CHECK(session.snapshot()->revision == 1);
}

TEST_CASE("snapshots are immutable views") {
  EditSession session(fixture::three_blocks());
  const auto before = session.snapshot();
  session.apply(cmd(R"({"op":"merge","labels":[1,2,3]})"));
  CHECK(before->graph.vertex_count() == 3);
  CHECK(session.snapshot()->graph.vertex_count() == 1);
}

TEST_CASE("command json") {
  for (const char* text : {R"({"labels":[1,2],"op":"merge"})",
                           R"({"label":2,"normal":[0.0,0.0,1.0],"op":"cut","point":[1.0,2.0,3.0]})",
                           R"({"op":"add_edge","source":1,"target":2})",
                           R"({"op":"remove_edge","source":1,"target":2})",
                           R"({"op":"flip_edge","source":1,"target":2})",
                           R"({"op":"mark","state":"good","vertex":4})",
                           R"({"edge":[1,2],"op":"mark","state":"unseen"})",
                           R"({"id":3,"op":"undo"})"}) {
    CHECK(command_to_json(command_from_json(json::parse(text))) == json::parse(text));
  }
  CHECK_THROWS_AS(cmd(R"({"op":"explode"})"), Error);
  CHECK_THROWS_AS(cmd(R"({"op":"merge"})"), Error);
  CHECK_THROWS_AS(cmd(R"([1,2])"), Error);
  CHECK_THROWS_AS(cmd(R"({"op":"mark","state":"good"})"), Error);
  CHECK_THROWS_AS(cmd(R"({"op":"cut","label":1,"point":[1,2],"normal":[0,0,1]})"), Error);
  CHECK_THROWS_AS(cmd(R"({"op":"mark","vertex":1,"state":"maybe"})"), Error);
}

TEST_CASE("closest pair and face contact") {
  const auto s = fixture::three_blocks();
  const auto fc = face_contact(s.labels, 1, 2);
  REQUIRE(fc);
  CHECK(fc->faces == 16);
  CHECK(fc->area == doctest::Approx(4.0));
  CHECK_FALSE(face_contact(s.labels, 1, 3));
  const auto t = closest_pair(s.labels, 1, 3);
  CHECK(t.point_a == Vec3(3.5, 0, 0));
  CHECK(t.point_b == Vec3(8.0, 0, 0));
}

TEST_CASE("proofreading visits unseen vertices nearest first") {
  EditSession session(fixture::three_blocks());
  ProofreadQueue q(session.snapshot());
  CHECK(q.pending() == std::set<Label>{1, 2, 3});
  auto v = q.next();
  REQUIRE(v);
  CHECK(v->vertex == 1);
  CHECK(v->centroid.x() == doctest::Approx(1.75));
  CHECK(v->crop_radius > 0);
  CHECK(q.next()->vertex == 2);
  session.apply(cmd(R"({"op":"mark","vertex":3,"state":"good"})"));
  q.update(session.snapshot());
  CHECK(q.pending() == std::set<Label>{1, 2});
  CHECK(q.next()->vertex == 2);  // wrapped around; 2 is closest to itself
  q.set_cursor(Vec3(0, 0, 0));
  CHECK(nearest_unseen(*session.snapshot(), Vec3(11, 0, 0), {}) == Label{2});
  session.apply(cmd(R"({"op":"mark","vertex":1,"state":"good"})"));
  session.apply(cmd(R"({"op":"mark","vertex":2,"state":"good"})"));
  q.update(session.snapshot());
  CHECK_FALSE(q.next().has_value());
}
