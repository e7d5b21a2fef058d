#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "coda/features.hpp"
#include "fixtures.hpp"

using namespace coda;

namespace {

double cell(const FeatureTable& t, const char* col, std::size_t row) {
  const Value& v = t.column(col).values.at(row);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

bool is_null(const FeatureTable& t, const char* col, std::size_t row) {
  return std::holds_alternative<std::monostate>(t.column(col).values.at(row));
}

}  // namespace

TEST_SUITE("morphology") {
  TEST_CASE("single 1 mm voxel") {
    LabelGrid l({3, 3, 3}, {1, 1, 1}, 0);
    l.at(1, 1, 1) = 1;
    const auto t = vertex_features(l, [] {
      SkeletonGraph g;
      g.add_vertex(1);
      return g;
    }(), {});
    CHECK(cell(t, "volume_mm3", 0) == 1.0);
    CHECK(cell(t, "surface_area_mm2", 0) == 6.0);
    CHECK(cell(t, "voxel_count", 0) == 1.0);
    CHECK(is_null(t, "length_mm", 0));
    CHECK(is_null(t, "alpha", 0));
  }

  TEST_CASE("1x1x2 bar") {
    LabelGrid l({1, 1, 2}, {1, 1, 1}, 4);
    const auto area = surface_areas(l);
    CHECK(area.at(4) == 10.0);
  }

  TEST_CASE("touching labels count their shared face on both sides") {
    LabelGrid l({2, 1, 1}, {0.5, 1, 2}, 0);
    l[0] = 1;
    l[1] = 2;
    const auto area = surface_areas(l);
    // faces: x 2 per voxel (area 2), y 2 (area 1), z 2 (area 0.5)
    CHECK(area.at(1) == doctest::Approx(7.0));
    CHECK(area.at(2) == doctest::Approx(7.0));
  }

  TEST_CASE("volumes sum to the labeled volume and merging only loses shared faces") {
    auto s = fixture::three_blocks();
    const auto t = vertex_features(s.labels, s.graph, s.fits);
    double total = 0;
    for (std::size_t r = 0; r < t.rows(); ++r) total += cell(t, "volume_mm3", r);
    CHECK(total == doctest::Approx(24 * 4 * 4 * 0.125));

    const auto before = surface_areas(s.labels);
    for (auto& v : s.labels.storage())
      if (v == 2) v = 1;
    const auto after = surface_areas(s.labels);
    const double shared = 16 * 0.25;
    CHECK(after.at(1) == doctest::Approx(before.at(1) + before.at(2) - 2 * shared));
  }

  TEST_CASE("serial and parallel surface areas agree") {
    std::mt19937_64 rng(1);
    LabelGrid l({17, 9, 13}, {0.25, 0.5, 0.75}, 0);
    for (auto& v : l.storage()) v = static_cast<Label>(rng() % 6);
    CHECK(surface_areas(l, Exec::serial) == surface_areas(l, Exec::parallel));
  }

  TEST_CASE("small instance filter") {
    LabelGrid l({10, 1, 1}, {0.5, 1, 1}, 0);
    l[0] = 1;                     // 0.5 mm³
    for (int i = 2; i < 10; ++i)  // 4 mm³
      l[i] = 2;
    const auto kept = remove_small_instances(l, 0.5);
    CHECK(kept[0] == 1);  // not below the threshold
    const auto dropped = remove_small_instances(l, 0.6);
    CHECK(dropped[0] == 0);
    CHECK(dropped[5] == 2);

    SkeletonGraph g;
    g.add_vertex(1);
    g.add_vertex(2);
    const auto t = vertex_features(l, g, {});
    CHECK(rows_below_volume(t, 0.6) == std::vector<std::size_t>{0});
  }
}

TEST_SUITE("tables") {
  TEST_CASE("vertex and edge rows for the fixture") {
    const auto s = fixture::three_blocks();
    const auto v = vertex_features(s.labels, s.graph, s.fits);
    REQUIRE(v.rows() == 3);
    CHECK(v.kind() == TableKind::vertex);
    for (const char* c : {"label", "voxel_count", "volume_mm3", "surface_area_mm2", "length_mm", "alpha", "t_min",
                          "t_max", "residual_mean", "residual_std", "residual_skew", "centroid_x", "centroid_y",
                          "centroid_z", "generation", "component", "in_degree", "out_degree", "state"})
      CHECK(v.has_column(c));
    CHECK(cell(v, "label", 2) == 3);
    CHECK(cell(v, "centroid_x", 1) == doctest::Approx(5.75));
    CHECK(cell(v, "length_mm", 0) > 0);
    CHECK(std::get<std::string>(v.column("state").values[0]) == "unseen");

    const auto e = edge_features(s.graph, s.fits);
    REQUIRE(e.rows() == 2);
    CHECK(e.kind() == TableKind::edge);
    for (std::size_t r = 0; r < 2; ++r) {
      const auto src = static_cast<std::size_t>(cell(e, "source_index", r));
      CHECK(cell(v, "label", src) == cell(e, "source_label", r));
      CHECK(cell(e, "contact_area_mm2", r) == doctest::Approx(4.0));
    }
  }

  TEST_CASE("angles") {
    CHECK(angle_deg(Vec3(1, 0, 0), Vec3(0, 2, 0)) == doctest::Approx(90.0));
    CHECK(angle_deg(Vec3(1, 0, 0), Vec3(1, 0, 0)) == 0.0);
    CHECK(angle_deg(Vec3(1, 1, 0), Vec3(1, 0, 0)) == doctest::Approx(45.0));
    Parabola mother, daughter;
    mother.t_min = 0;
    mother.t_max = 10;
    daughter.rotation = Eigen::AngleAxisd(M_PI / 6, Vec3::UnitZ()).toRotationMatrix();
    daughter.t_max = 3;
    CHECK(budding_angle_deg(mother, Vec3(4, 0, 0), daughter) == doctest::Approx(30.0));
  }

  TEST_CASE("format doubles") {
    CHECK(format_double(2.0) == "2.0");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-3.25) == "-3.25");
    CHECK(format_double(1e300) == "1e+300");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-INFINITY) == "-inf");
  }

  TEST_CASE("csv round trip keeps types, nulls and awkward strings") {
    FeatureTable t;
    t.add_column("id", {std::int64_t{1}, std::int64_t{-2}, std::monostate{}});
    t.add_column("x", {0.1, 2.0, 1e-300});
    t.add_column("name", {std::string("a,b"), std::string("say \"hi\"\nbye"), std::string("")});
    t.add_column("code", {std::string("007"), std::string("1.5"), std::monostate{}});
    t.add_column("empty", {std::monostate{}, std::monostate{}, std::monostate{}});
    const std::string text = to_csv(t);
    CHECK(text.substr(0, text.find('\n')) == "id,x,name,code,empty");
    const auto back = from_csv(text);
    CHECK(back.same_values(t));
    CHECK(to_csv(back) == text);
  }

  TEST_CASE("nan and inf survive as doubles") {
    const auto t = from_csv("v\nnan\ninf\n-inf\n1\n");
    const auto& v = t.column("v").values;
    CHECK(std::isnan(std::get<double>(v[0])));
    CHECK(std::get<double>(v[1]) == INFINITY);
    CHECK(std::get<double>(v[3]) == 1.0);
  }

  TEST_CASE("malformed csv") {
    CHECK_THROWS_AS(from_csv(""), Error);
    CHECK_THROWS_AS(from_csv("a,b\n1\n"), Error);
    CHECK_THROWS_AS(from_csv("a\n\"open\n"), Error);
    CHECK(from_csv("a,b\r\n1,2\r\n").rows() == 1);
    CHECK(from_csv("a,b\n1,2").rows() == 1);
  }

  TEST_CASE("column rules and row selection") {
    FeatureTable t;
    t.add_column("a", {std::int64_t{1}, std::int64_t{2}, std::int64_t{3}});
    CHECK_THROWS_AS(t.add_column("a", {1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(t.add_column("b", {1.0}), Error);
    CHECK_THROWS_AS(t.column("zzz"), Error);
    const auto s = select_rows(t, {0, 2});
    CHECK(s.column("a").values == std::vector<Value>{std::int64_t{1}, std::int64_t{3}});
    CHECK_THROWS_AS(select_rows(t, {3}), Error);
  }
}
