#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "coda/grid.hpp"

namespace coda {

/// Returned for foreground voxels that have no background voxel anywhere in
/// the grid. The grid border is not treated as background.
inline constexpr float kUnreachable = std::numeric_limits<float>::max();

/// Squared distances (mm²) from each foreground voxel center to the nearest
/// background voxel center. Background is 0, unreachable voxels are +inf.
///
/// Per-axis terms are accumulated as w_x·dx², then + w_y·dy², then + w_z·dz²
/// (w = spacing²), so a brute-force scan that sums in the same order agrees
/// bit for bit.
std::vector<double> squared_distance_transform(const MaskGrid& mask, Exec exec = Exec::parallel);

/// Euclidean distance transform in mm; unreachable voxels hold kUnreachable.
ScalarGrid euclidean_distance_transform(const MaskGrid& mask, Exec exec = Exec::parallel);

/// Persistence-simplified watershed on a scalar field restricted to a
/// foreground mask.
///
/// Voxels are swept in decreasing field order (ties: ascending linear index)
/// with 26-connectivity. Every non-maximum voxel joins the basin of its
/// highest-ordered processed neighbour. When superlevel components meet, the
/// younger maximum dies with persistence `peak - saddle`; its basin merges
/// into the elder's when that persistence is below `persistence` or is zero
/// (plateau pieces). Labels are 1..K ordered by decreasing seed value.
LabelGrid persistence_watershed(const ScalarGrid& field, const MaskGrid& foreground, double persistence);

struct PropagationResult {
  LabelGrid labels;
  /// Skeleton voxels that found no labeled voxel anywhere.
  std::int64_t unreached = 0;
};

/// Gives every skeleton voxel the label of the nearest labeled calyx voxel
/// (ties: lowest label). Calyx voxels keep their labels.
PropagationResult propagate_labels(const LabelGrid& calyx, const MaskGrid& skeleton, Exec exec = Exec::parallel);

// --- raw + JSON sidecar volume files -------------------------------------

enum class DType { u8, u32, f32 };

using AnyGrid = std::variant<MaskGrid, LabelGrid, ScalarGrid>;

/// Writes `<stem>.raw` next to the JSON header at `header_path`.
void write_volume(const std::filesystem::path& header_path, const MaskGrid& grid);
void write_volume(const std::filesystem::path& header_path, const LabelGrid& grid);
void write_volume(const std::filesystem::path& header_path, const ScalarGrid& grid);

AnyGrid read_volume(const std::filesystem::path& header_path);
MaskGrid read_mask(const std::filesystem::path& header_path);
LabelGrid read_labels(const std::filesystem::path& header_path);
ScalarGrid read_scalar(const std::filesystem::path& header_path);

}  // namespace coda
