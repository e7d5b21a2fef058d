#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "coda/graph.hpp"
#include "coda/parabola.hpp"

namespace coda {

/// One CSV cell. monostate is the null marker (empty field).
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Column {
  std::string name;
  std::vector<Value> values;

  bool operator==(const Column&) const = default;
};

enum class TableKind { vertex, edge, other };

/// Named columns of equal length; rows are in ascending vertex/edge order.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(TableKind kind) : kind_(kind) {}

  TableKind kind() const { return kind_; }
  std::size_t rows() const { return columns_.empty() ? 0 : columns_.front().values.size(); }
  const std::vector<Column>& columns() const { return columns_; }

  /// Throws if the length differs from the existing columns or the name is taken.
  void add_column(std::string name, std::vector<Value> values);
  const Column& column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  /// Equal column names and cell values; kind is not compared.
  bool same_values(const FeatureTable& other) const { return columns_ == other.columns_; }

 private:
  TableKind kind_ = TableKind::other;
  std::vector<Column> columns_;
};

/// CSV dialect: UTF-8, comma separator, '\n' line endings, mandatory header.
/// Doubles are written as the shortest round-trip decimal (with ".0" added to
/// integral values so the type survives), null as an empty field.
std::string to_csv(const FeatureTable& t);
/// Column types are inferred: all-integer → int, all-numeric → double,
/// otherwise string; empty fields are null.
FeatureTable from_csv(const std::string& text, TableKind kind = TableKind::other);

std::string format_double(double v);

/// The given rows in ascending order, all columns kept.
FeatureTable select_rows(const FeatureTable& t, const std::set<std::size_t>& rows);

/// Per-vertex morphology: voxel_count, volume, surface area, parabola
/// length and shape, centroid, generation, component, degrees, state.
FeatureTable vertex_features(const LabelGrid& labels, const SkeletonGraph& graph,
                             const std::map<Label, Parabola>& fits, Exec exec = Exec::parallel);

/// Per-edge table with source_index/target_index row references into the
/// vertex table.
FeatureTable edge_features(const SkeletonGraph& graph, const std::map<Label, Parabola>& fits);

/// Exposed-face surface area per label (faces against background, other
/// labels or the grid border).
std::map<Label, double> surface_areas(const LabelGrid& labels, Exec exec = Exec::parallel);

/// Angle in degrees between two directions.
double angle_deg(const Vec3& a, const Vec3& b);

/// Budding angle of an edge: mother tangent at the source touching point vs
/// daughter tangent at its bottom (t_min).
double budding_angle_deg(const Parabola& mother, const Vec3& source_point, const Parabola& daughter);

/// Row indices whose volume_mm3 is below the threshold.
std::vector<std::size_t> rows_below_volume(const FeatureTable& vertices, double threshold_mm3 = 0.5);

/// Sets every instance smaller than the threshold to background.
LabelGrid remove_small_instances(const LabelGrid& labels, double threshold_mm3 = 0.5);

}  // namespace coda
