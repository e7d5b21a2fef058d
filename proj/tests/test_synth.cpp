#include <doctest.h>

#include "coda/pipeline.hpp"
#include "coda/synth.hpp"

using namespace coda;

namespace {

std::set<EdgeKey> directed_pairs(const SkeletonGraph& g) {
  std::set<EdgeKey> out;
  for (const auto& [k, e] : g.edges()) out.insert({e.source, e.target});
  return out;
}

}  // namespace

TEST_CASE("one generation is one corallite") {
  ColonySpec spec;
  spec.generations = 1;
  const Colony c = generate(spec);
  CHECK(c.corallites.size() == 1);
  CHECK(c.truth.vertex_count() == 1);
  CHECK(c.truth.edge_count() == 0);
  CHECK(instance_set(c.calyx).size() == 1);
}

TEST_CASE("generation is deterministic in the seed") {
  ColonySpec spec;
  spec.seed = 99;
  const Colony a = generate(spec), b = generate(spec);
  CHECK(a.calyx == b.calyx);
  CHECK(a.skeleton == b.skeleton);
  CHECK(a.truth == b.truth);
  spec.seed = 100;
  CHECK_FALSE(generate(spec).calyx == a.calyx);
}

TEST_CASE("colony structure") {
  ColonySpec spec;
  spec.seed = 5;
  spec.generations = 4;
  const Colony c = generate(spec);
  CHECK(c.generations == 4);
  const auto gen = generations(c.truth);
  for (const auto& [l, cor] : c.corallites) {
    CHECK(gen.generation.at(l) == cor.generation);
    if (cor.mother) CHECK(c.truth.find_directed(cor.mother, l));
  }
  CHECK(indegree_violations(c.truth).empty());
  CHECK_FALSE(shortest_cycle(c.truth));
  for (std::int64_t i = 0; i < c.calyx.size(); ++i) CHECK_FALSE((c.calyx[i] != 0 && c.skeleton[i] != 0));
  const auto inst = instance_set(c.calyx);
  CHECK(inst.size() == c.corallites.size());
}

TEST_CASE("tree estimation recovers the truth") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    ColonySpec spec;
    spec.seed = seed;
    spec.generations = 3 + static_cast<int>(seed % 3);
    const Colony c = generate(spec);
    const TreeResult r = build_tree(c.calyx, c.skeleton, Exec::serial);
    CHECK(r.unreached == 0);
    CHECK(directed_pairs(r.graph) == directed_pairs(c.truth));
  }
}

TEST_CASE("joints add RAG edges that are not in the truth") {
  int with_joints = 0;
  for (std::uint64_t seed = 1; seed <= 40 && with_joints < 2; ++seed) {
    ColonySpec spec;
    spec.seed = seed;
    spec.joint_probability = 1.0;
    const Colony c = generate(spec);
    if (c.joints.empty()) continue;
    ++with_joints;
    const TreeResult r = build_tree(c.calyx, c.skeleton);
    for (const auto& [a, b] : c.joints) {
      CHECK_FALSE(c.truth.has_edge(a, b));
      CHECK(r.graph.has_edge(a, b));
    }
  }
  CHECK(with_joints == 2);
}

TEST_CASE("invalid specs are rejected") {
  ColonySpec spec;
  spec.generations = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.joint_probability = 1.5;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = {};
  spec.length = {5, 3};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.budding_weights = {};
  CHECK_THROWS_AS(spec.validate(), Error);
}
