#pragma once

#include "coda/edit.hpp"
#include "coda/graph.hpp"
#include "coda/parabola.hpp"

namespace fixture {

/// Three 8×4×4 blocks side by side along x, labels 1, 2, 3, with the RAG
/// oriented by their fits.
inline coda::SessionState three_blocks() {
  using namespace coda;
  LabelGrid labels({24, 4, 4}, {0.5, 0.5, 0.5}, 0);
  for (std::int64_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(1 + labels.coords(i)[0] / 8);
  SkeletonGraph g = build_rag(labels);
  auto fits = fit_instances(labels);
  orient_edges(g, fits);
  return SessionState::make(std::move(labels), std::nullopt, std::move(g), std::move(fits));
}

}  // namespace fixture
