// Separable lower-envelope distance transforms (EDT and nearest-label
// propagation). One 1D pass per axis; lines are independent, so the passes
// parallelize over lines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "coda/volume.hpp"

namespace coda {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Breakpoint between two envelope parabolas, as the exact fraction
// num / (2 w den) with den > 0.
struct Breakpoint {
  double num = 0;
  double den = 1;
};

bool before(const Breakpoint& a, const Breakpoint& b) { return a.num * b.den < b.num * a.den; }

class LinePass {
 public:
  explicit LinePass(std::int64_t n) : v_(n), z_(n) {}

  // out[q] = min_p w (q - p)² + f[p]; labels (if given) pick the lowest label
  // among minimizers. f may contain +inf.
  void run(double w, const double* f, const Label* lab, double* out, Label* out_lab, std::int64_t n) {
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
      if (f[q] == kInf) continue;
      if (k < 0) {
        v_[0] = q;
        k = 0;
        continue;
      }
      const double hq = f[q] + w * static_cast<double>(q * q);
      Breakpoint s;
      for (;;) {
        const std::int64_t p = v_[k];
        s.num = hq - (f[p] + w * static_cast<double>(p * p));
        s.den = static_cast<double>(q - p);
        if (k > 0 && before(s, z_[k])) {
          --k;
          continue;
        }
        break;
      }
      ++k;
      v_[k] = q;
      z_[k] = s;
    }

    if (k < 0) {
      std::fill(out, out + n, kInf);
      if (out_lab) std::fill(out_lab, out_lab + n, Label{0});
      return;
    }

    const double two_w = 2.0 * w;
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
      // advance while breakpoint z[j+1] < q
      while (j < k && z_[j + 1].num < two_w * static_cast<double>(q) * z_[j + 1].den) ++j;
      auto eval = [&](std::int64_t p) { return w * static_cast<double>((q - p) * (q - p)) + f[p]; };
      double best = eval(v_[j]);
      Label best_lab = lab ? lab[v_[j]] : 0;
      // parabolas whose interval starts exactly at q tie there
      for (std::int64_t m = j + 1; m <= k; ++m) {
        if (z_[m].num != two_w * static_cast<double>(q) * z_[m].den) break;
        const double c = eval(v_[m]);
        const Label cl = lab ? lab[v_[m]] : 0;
        if (c < best || (c == best && cl < best_lab)) {
          best = c;
          best_lab = cl;
        }
      }
      out[q] = best;
      if (out_lab) out_lab[q] = best_lab;
    }
  }

 private:
  std::vector<std::int64_t> v_;
  std::vector<Breakpoint> z_;
};

// Runs the 1D pass along `axis` over every line of the grid, in place.
void pass_axis(const Dims& dims, int axis, double w, std::vector<double>& f, std::vector<Label>* labels, Exec exec) {
  const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
  const std::int64_t stride[3] = {1, dims.nx, dims.nx * dims.ny};
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::int64_t len = n[axis];
  const std::int64_t lines = n[a1] * n[a2];
  const bool with_labels = labels != nullptr;

  auto body = [&](LinePass& pass, std::vector<double>& in, std::vector<double>& out, std::vector<Label>& lin,
                  std::vector<Label>& lout, std::int64_t line) {
    const std::int64_t i1 = line % n[a1];
    const std::int64_t i2 = line / n[a1];
    const std::int64_t base = i1 * stride[a1] + i2 * stride[a2];
    const std::int64_t st = stride[axis];
    bool any = false;
    for (std::int64_t q = 0; q < len; ++q) {
      in[q] = f[base + q * st];
      any = any || in[q] != kInf;
      if (with_labels) lin[q] = (*labels)[base + q * st];
    }
    if (!any) return;
    pass.run(w, in.data(), with_labels ? lin.data() : nullptr, out.data(), with_labels ? lout.data() : nullptr, len);
    for (std::int64_t q = 0; q < len; ++q) {
      f[base + q * st] = out[q];
      if (with_labels) (*labels)[base + q * st] = lout[q];
    }
  };

  if (exec == Exec::parallel) {
#pragma omp parallel
    {
      LinePass pass(len);
      std::vector<double> in(len), out(len);
      std::vector<Label> lin(with_labels ? len : 0), lout(with_labels ? len : 0);
#pragma omp for schedule(static)
      for (std::int64_t line = 0; line < lines; ++line) body(pass, in, out, lin, lout, line);
    }
  } else {
    LinePass pass(len);
    std::vector<double> in(len), out(len);
    std::vector<Label> lin(with_labels ? len : 0), lout(with_labels ? len : 0);
    for (std::int64_t line = 0; line < lines; ++line) body(pass, in, out, lin, lout, line);
  }
}

void transform(const Dims& dims, const Spacing& sp, std::vector<double>& f, std::vector<Label>* labels, Exec exec) {
  pass_axis(dims, 0, sp.sx * sp.sx, f, labels, exec);
  pass_axis(dims, 1, sp.sy * sp.sy, f, labels, exec);
  pass_axis(dims, 2, sp.sz * sp.sz, f, labels, exec);
}

}  // namespace

std::vector<double> squared_distance_transform(const MaskGrid& mask, Exec exec) {
  std::vector<double> f(static_cast<std::size_t>(mask.size()));
  for (std::int64_t i = 0; i < mask.size(); ++i) f[i] = mask[i] ? kInf : 0.0;
  transform(mask.dims(), mask.spacing(), f, nullptr, exec);
  return f;
}

ScalarGrid euclidean_distance_transform(const MaskGrid& mask, Exec exec) {
  const auto sq = squared_distance_transform(mask, exec);
  ScalarGrid out(mask.dims(), mask.spacing(), 0.0f);
  const std::int64_t n = mask.size();
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out[i] = sq[i] == kInf ? kUnreachable : static_cast<float>(std::sqrt(sq[i]));
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[i] = sq[i] == kInf ? kUnreachable : static_cast<float>(std::sqrt(sq[i]));
  }
  return out;
}

PropagationResult propagate_labels(const LabelGrid& calyx, const MaskGrid& skeleton, Exec exec) {
  require_same_geometry(calyx, skeleton, "propagate_labels");
  const std::int64_t n = calyx.size();
  std::vector<double> f(static_cast<std::size_t>(n));
  std::vector<Label> lab(calyx.storage());
  for (std::int64_t i = 0; i < n; ++i) f[i] = calyx[i] != 0 ? 0.0 : kInf;
  transform(calyx.dims(), calyx.spacing(), f, &lab, exec);

  PropagationResult res{LabelGrid(calyx.dims(), calyx.spacing(), 0), 0};
  for (std::int64_t i = 0; i < n; ++i) {
    if (calyx[i] != 0) {
      res.labels[i] = calyx[i];
    } else if (skeleton[i]) {
      if (f[i] == kInf) {
        ++res.unreached;
      } else {
        res.labels[i] = lab[i];
      }
    }
  }
  return res;
}

}  // namespace coda
