#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "coda/volume.hpp"
#include "oracles.hpp"

using namespace coda;

namespace {

MaskGrid line_mask(std::initializer_list<int> v) {
  MaskGrid m({static_cast<std::int64_t>(v.size()), 1, 1}, {1, 1, 1}, 0);
  std::int64_t i = 0;
  for (int x : v) m[i++] = static_cast<std::uint8_t>(x);
  return m;
}

ScalarGrid line_field(std::initializer_list<float> v) {
  ScalarGrid f({static_cast<std::int64_t>(v.size()), 1, 1}, {1, 1, 1}, 0.0f);
  std::int64_t i = 0;
  for (float x : v) f[i++] = x;
  return f;
}

std::size_t label_count(const LabelGrid& l) { return instance_set(l).size(); }

ScalarGrid random_field(std::mt19937_64& rng, Dims d, int levels) {
  ScalarGrid f(d, {1, 1, 1}, 0.0f);
  std::uniform_int_distribution<int> v(0, levels);
  for (auto& x : f.storage()) x = static_cast<float>(v(rng));
  return f;
}

}  // namespace

TEST_SUITE("edt") {
  TEST_CASE("single foreground voxel between background") {
    const auto d = euclidean_distance_transform(line_mask({0, 1, 0}));
    CHECK(d[0] == 0.0f);
    CHECK(d[1] == 1.0f);
    CHECK(d[2] == 0.0f);
  }

  TEST_CASE("grid border is not background") {
    MaskGrid m({3, 3, 3}, {1, 1, 1}, 1);
    const auto d = euclidean_distance_transform(m);
    for (const float v : d.data()) CHECK(v == kUnreachable);
  }

  TEST_CASE("all background gives zeros") {
    MaskGrid m({4, 2, 3}, {0.5, 1, 2}, 0);
    const auto d = euclidean_distance_transform(m);
    for (const float v : d.data()) CHECK(v == 0.0f);
  }

  TEST_CASE("anisotropic spacing is honored") {
    MaskGrid m({3, 3, 1}, {2.0, 0.5, 1.0}, 1);
    m.at(0, 0, 0) = 0;
    const auto sq = squared_distance_transform(m);
    CHECK(sq[m.index(2, 0, 0)] == 16.0);
    CHECK(sq[m.index(0, 2, 0)] == 1.0);
    CHECK(sq[m.index(2, 2, 0)] == 17.0);
  }

  TEST_CASE("random 20^3 matches brute force exactly") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 2; ++rep) {
      const MaskGrid m = oracle::random_mask(rng, {20, 20, 20}, oracle::dyadic_spacing(rng), 0.9);
      const auto want = oracle::squared_edt(m);
      CHECK(squared_distance_transform(m, Exec::serial) == want);
      CHECK(squared_distance_transform(m, Exec::parallel) == want);
    }
  }

  TEST_CASE("random small grids, sparse and dense") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 40; ++rep) {
      const double density = rep % 2 ? 0.97 : 0.3;
      const MaskGrid m = oracle::random_mask(rng, oracle::random_dims(rng, 9), oracle::dyadic_spacing(rng), density);
      REQUIRE(squared_distance_transform(m) == oracle::squared_edt(m));
    }
  }
}

TEST_SUITE("watershed") {
  TEST_CASE("single peak gives one label") {
    const auto f = line_field({1, 2, 5, 3, 1});
    const auto l = persistence_watershed(f, line_mask({1, 1, 1, 1, 1}), 0.0);
    for (const Label v : l.data()) CHECK(v == 1);
  }

  TEST_CASE("two peaks 10 and 8 with saddle 3") {
    const auto f = line_field({10, 3, 8});
    const auto fg = line_mask({1, 1, 1});
    const auto a = persistence_watershed(f, fg, 4.0);
    CHECK(label_count(a) == 2);
    CHECK(a[0] == 1);
    CHECK(a[2] == 2);
    CHECK(label_count(persistence_watershed(f, fg, 6.0)) == 1);
  }

  TEST_CASE("empty foreground") {
    const auto l = persistence_watershed(line_field({1, 2, 3}), line_mask({0, 0, 0}), 1.0);
    for (const Label v : l.data()) CHECK(v == 0);
  }

  TEST_CASE("plateau maximum is one label at persistence 0") {
    const auto l = persistence_watershed(line_field({1, 4, 4, 4, 1}), line_mask({1, 1, 1, 1, 1}), 0.0);
    CHECK(label_count(l) == 1);
  }

  TEST_CASE("infinite persistence gives one label per component") {
    const auto f = line_field({3, 1, 5, 0, 2, 7, 2});
    const auto l = persistence_watershed(f, line_mask({1, 1, 1, 0, 1, 1, 1}), 1e30);
    CHECK(label_count(l) == 2);
    CHECK(l[5] == 1);  // highest maximum first
    CHECK(l[0] == 2);
  }

  TEST_CASE("negative persistence is rejected") {
    CHECK_THROWS_AS(persistence_watershed(line_field({1}), line_mask({1}), -1.0), Error);
  }

  TEST_CASE("random fields match the reference and label counts shrink with persistence") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 30; ++rep) {
      const Dims d = oracle::random_dims(rng, 8);
      const ScalarGrid f = random_field(rng, d, rep % 3 == 0 ? 3 : 50);
      const MaskGrid fg = oracle::random_mask(rng, d, {1, 1, 1}, 0.85);
      std::size_t prev = std::numeric_limits<std::size_t>::max();
      for (const double p : {0.0, 0.5, 2.0, 5.0, 10.0, 25.0, 1e9}) {
        const auto got = persistence_watershed(f, fg, p);
        REQUIRE(got == oracle::watershed(f, fg, p));
        const std::size_t n = label_count(got);
        CHECK(n <= prev);
        prev = n;
        for (std::int64_t i = 0; i < fg.size(); ++i) CHECK((got[i] != 0) == (fg[i] != 0));
      }
    }
  }
}

TEST_SUITE("propagate") {
  TEST_CASE("skeleton voxel next to label 3") {
    LabelGrid calyx({3, 1, 1}, {1, 1, 1}, 0);
    calyx[0] = 3;
    const auto r = propagate_labels(calyx, line_mask({0, 1, 0}));
    CHECK(r.labels[1] == 3);
    CHECK(r.labels[0] == 3);
    CHECK(r.labels[2] == 0);
    CHECK(r.unreached == 0);
  }

  TEST_CASE("equidistant labels resolve to the lower id") {
    LabelGrid calyx({3, 1, 1}, {1, 1, 1}, 0);
    calyx[0] = 7;
    calyx[2] = 2;
    CHECK(propagate_labels(calyx, line_mask({0, 1, 0})).labels[1] == 2);
  }

  TEST_CASE("no labels anywhere counts unreached voxels") {
    LabelGrid calyx({3, 1, 1}, {1, 1, 1}, 0);
    const auto r = propagate_labels(calyx, line_mask({1, 1, 0}));
    CHECK(r.unreached == 2);
    for (const Label v : r.labels.data()) CHECK(v == 0);
  }

  TEST_CASE("random 16^3 matches brute force and never shrinks an instance") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 3; ++rep) {
      const Spacing s = oracle::dyadic_spacing(rng);
      LabelGrid calyx({16, 16, 16}, s, 0);
      std::uniform_int_distribution<int> lab(1, 6);
      std::bernoulli_distribution seed(0.01);
      for (auto& v : calyx.storage()) v = seed(rng) ? static_cast<Label>(lab(rng)) : 0;
      const MaskGrid skel = oracle::random_mask(rng, calyx.dims(), s, 0.6);
      for (const Exec ex : {Exec::serial, Exec::parallel}) {
        const auto got = propagate_labels(calyx, skel, ex);
        const auto want = oracle::propagate(calyx, skel);
        REQUIRE(got.labels == want.labels);
        CHECK(got.unreached == want.unreached);
        for (std::int64_t i = 0; i < calyx.size(); ++i)
          if (calyx[i]) CHECK(got.labels[i] == calyx[i]);
      }
    }
  }

  TEST_CASE("geometry mismatch is an error") {
    LabelGrid calyx({3, 1, 1}, {1, 1, 1}, 0);
    CHECK_THROWS_AS(propagate_labels(calyx, MaskGrid({2, 1, 1}, {1, 1, 1}, 0)), Error);
  }
}

TEST_SUITE("volume io") {
  namespace fs = std::filesystem;

  TEST_CASE("round trip for every dtype") {
    const fs::path dir = fs::temp_directory_path() / "coda_volume_io_test";
    fs::create_directories(dir);
    std::mt19937_64 rng(1);
    MaskGrid m = oracle::random_mask(rng, {5, 4, 3}, {0.5, 0.25, 2.0}, 0.5);
    LabelGrid l(m.dims(), m.spacing(), 0);
    ScalarGrid f(m.dims(), m.spacing(), 0.0f);
    for (std::int64_t i = 0; i < m.size(); ++i) {
      l[i] = static_cast<Label>(rng() % 70000);
      f[i] = static_cast<float>(i) * 0.37f - 3.0f;
    }
    write_volume(dir / "m.json", m);
    write_volume(dir / "l.json", l);
    write_volume(dir / "f.json", f);
    CHECK(read_mask(dir / "m.json") == m);
    CHECK(read_labels(dir / "l.json") == l);
    CHECK(read_scalar(dir / "f.json") == f);
    CHECK(std::holds_alternative<LabelGrid>(read_volume(dir / "l.json")));
    const auto lm = read_mask(dir / "l.json");
    for (std::int64_t i = 0; i < l.size(); ++i) CHECK(lm[i] == (l[i] != 0 ? 1 : 0));
    CHECK_THROWS_AS(read_mask(dir / "f.json"), Error);
    CHECK_THROWS_AS(read_labels(dir / "f.json"), Error);

    CHECK(fs::file_size(dir / "l.raw") == static_cast<std::uintmax_t>(l.size()) * 4);
    fs::resize_file(dir / "l.raw", 7);
    CHECK_THROWS_AS(read_labels(dir / "l.json"), Error);
    fs::remove_all(dir);
  }

  TEST_CASE("instance set counts and boxes") {
    LabelGrid l({4, 1, 1}, {1, 1, 1}, 0);
    l[1] = 2;
    l[2] = 2;
    l[3] = 9;
    const auto s = instance_set(l);
    REQUIRE(s.size() == 2);
    CHECK(s.at(2).voxel_count == 2);
    CHECK(s.at(9).voxel_count == 1);
  }
}
