#pragma once

#include <map>
#include <vector>

#include "coda/graph.hpp"
#include "coda/parabola.hpp"
#include "coda/volume.hpp"

namespace coda {

/// Mask → instances: distance transform followed by the persistence watershed.
LabelGrid segment(const MaskGrid& mask, double persistence, Exec exec = Exec::parallel);

struct TreeResult {
  LabelGrid corallites;
  MaskGrid fit_mask;  // calyx voxels
  SkeletonGraph graph;
  std::map<Label, Parabola> fits;
  std::vector<Edge> pruned;
  std::int64_t unreached = 0;
  std::size_t rag_edges = 0;
};

/// Calyx instances + skeleton mask → oriented, pruned skeleton graph.
/// Parabolas are fitted to the calyx voxels of each corallite.
TreeResult build_tree(const LabelGrid& calyx, const MaskGrid& skeleton, Exec exec = Exec::parallel);

}  // namespace coda
