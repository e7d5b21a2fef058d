#include "coda/pipeline.hpp"

namespace coda {

LabelGrid segment(const MaskGrid& mask, double persistence, Exec exec) {
  return persistence_watershed(euclidean_distance_transform(mask, exec), mask, persistence);
}

TreeResult build_tree(const LabelGrid& calyx, const MaskGrid& skeleton, Exec exec) {
  require_same_geometry(calyx, skeleton, "tree");
  TreeResult r;
  auto prop = propagate_labels(calyx, skeleton, exec);
  r.corallites = std::move(prop.labels);
  r.unreached = prop.unreached;
  r.fit_mask = MaskGrid(calyx.dims(), calyx.spacing(), 0);
  for (std::int64_t i = 0; i < calyx.size(); ++i) r.fit_mask[i] = calyx[i] != 0;
  r.graph = build_rag(r.corallites, exec);
  r.rag_edges = r.graph.edge_count();
  r.fits = fit_instances(r.corallites, &r.fit_mask, exec);
  orient_edges(r.graph, r.fits);
  r.pruned = prune_sibling_edges(r.graph);
  return r;
}

}  // namespace coda
