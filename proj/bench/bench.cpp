// Serial vs OpenMP timings of the volume kernels on a synthetic colony.
//
//   coda_bench [--seed N] [--generations N] [--repeat N]

#include <chrono>
#include <cstdio>
#include <functional>

#include <CLI11.hpp>
#include <omp.h>

#include "coda/features.hpp"
#include "coda/graph.hpp"
#include "coda/parabola.hpp"
#include "coda/synth.hpp"
#include "coda/volume.hpp"

using namespace coda;

namespace {

double best_of(int repeat, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, int repeat, const std::function<void(Exec)>& f) {
  const double s = best_of(repeat, [&] { f(Exec::serial); });
  const double p = best_of(repeat, [&] { f(Exec::parallel); });
  std::printf("%-14s %10.2f %10.2f %8.2fx\n", name, s * 1e3, p * 1e3, s / p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs parallel kernel timings"};
  ColonySpec spec;
  spec.generations = 5;
  int repeat = 3;
  app.add_option("--seed", spec.seed);
  app.add_option("--generations", spec.generations);
  app.add_option("--repeat", repeat)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const Colony c = generate(spec);
  MaskGrid solid(c.calyx.dims(), c.calyx.spacing(), 0);
  for (std::int64_t i = 0; i < solid.size(); ++i) solid[i] = c.calyx[i] != 0 || c.skeleton[i] != 0;
  const LabelGrid corallites = propagate_labels(c.calyx, c.skeleton).labels;
  MaskGrid fit_mask(c.calyx.dims(), c.calyx.spacing(), 0);
  for (std::int64_t i = 0; i < fit_mask.size(); ++i) fit_mask[i] = c.calyx[i] != 0;

  const auto d = solid.dims();
  std::printf("grid %lldx%lldx%lld, %zu corallites, %d threads\n", static_cast<long long>(d.nx),
              static_cast<long long>(d.ny), static_cast<long long>(d.nz), c.corallites.size(), omp_get_max_threads());
  std::printf("%-14s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  row("edt", repeat, [&](Exec e) { squared_distance_transform(solid, e); });
  row("propagate", repeat, [&](Exec e) { propagate_labels(c.calyx, c.skeleton, e); });
  row("rag", repeat, [&](Exec e) { build_rag(corallites, e); });
  row("fit", repeat, [&](Exec e) { fit_instances(corallites, &fit_mask, e); });
  row("surface", repeat, [&](Exec e) { surface_areas(corallites, e); });
  return 0;
}
