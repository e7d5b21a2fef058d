#include "coda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Geometry>

namespace coda {

void ColonySpec::validate() const {
  auto check = [](const Range& r, const char* what) {
    if (!(r.lo > 0.0) || r.hi < r.lo) throw Error(std::string("invalid range for ") + what);
  };
  check(length, "length");
  check(radius_base, "radius_base");
  check(radius_top, "radius_top");
  check(budding_angle, "budding_angle");
  check(curvature, "curvature");
  if (generations < 1) throw Error("generations must be >= 1");
  if (budding_weights.empty() || std::any_of(budding_weights.begin(), budding_weights.end(),
                                             [](double w) { return !(w >= 0.0); }))
    throw Error("budding weights must be non-negative");
  if (!(joint_probability >= 0.0 && joint_probability <= 1.0)) throw Error("joint probability outside [0, 1]");
  if (!(calyx_fraction > 0.0 && calyx_fraction < 1.0)) throw Error("calyx fraction outside (0, 1)");
  if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) throw Error("spacing must be positive");
  if (!(joint_radius > 0.0) || !(joint_max_gap > 0.0)) throw Error("joint sizes must be positive");
  if (max_corallites < 1) throw Error("max_corallites must be >= 1");
}

Vec3 Corallite::point(double s) const {
  if (curvature == 0.0) return base + s * tangent;
  const double rho = 1.0 / curvature;
  return base + rho * (1.0 - std::cos(s * curvature)) * normal + rho * std::sin(s * curvature) * tangent;
}

Vec3 Corallite::direction(double s) const {
  return std::cos(s * curvature) * tangent + std::sin(s * curvature) * normal;
}

namespace {

constexpr double kStep = 0.1;  // axis sampling for clearance tests, mm

struct AxisProjection {
  double s = 0.0;  // arc parameter of the closest axis point
  double d = 0.0;  // distance to the axis
  bool inside_span = false;
};

AxisProjection project(const Corallite& c, const Vec3& x) {
  const Vec3 rel = x - c.base;
  const Vec3 binormal = c.tangent.cross(c.normal);
  const double a = rel.dot(c.tangent), b = rel.dot(c.normal), w = rel.dot(binormal);
  AxisProjection p;
  if (c.curvature == 0.0) {
    p.s = a;
    p.d = std::hypot(b, w);
  } else {
    const double rho = 1.0 / c.curvature;
    const double phi = std::atan2(a, rho - b);
    p.s = phi * rho;
    p.d = std::hypot(std::hypot(a, rho - b) - rho, w);
  }
  p.inside_span = p.s >= 0.0 && p.s <= c.length;
  return p;
}

std::vector<std::pair<Vec3, double>> samples(const Corallite& c) {
  std::vector<std::pair<Vec3, double>> out;
  const int n = std::max(2, static_cast<int>(std::ceil(c.length / kStep)) + 1);
  for (int i = 0; i < n; ++i) {
    const double s = c.length * i / (n - 1);
    out.emplace_back(c.point(s), c.radius(s));
  }
  return out;
}

/// Smallest gap between the two surfaces scaled by the given radius fractions.
double gap(const std::vector<std::pair<Vec3, double>>& a, const std::vector<std::pair<Vec3, double>>& b,
           double fa = 1.0, double fb = 1.0) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [pa, ra] : a)
    for (const auto& [pb, rb] : b) best = std::min(best, (pa - pb).norm() - fa * ra - fb * rb);
  return best;
}

Vec3 any_perpendicular(const Vec3& t) {
  const Vec3 h = std::abs(t.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  return (h - h.dot(t) * t).normalized();
}

struct Bar {
  Label a = 0, b = 0;
  Vec3 p, q;
};

double segment_distance(const Vec3& p, const Vec3& q, const Vec3& x) {
  const Vec3 d = q - p;
  const double t = std::clamp((x - p).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p + t * d - x).norm();
}

class Builder {
 public:
  explicit Builder(const ColonySpec& spec) : spec_(spec), rng_(spec.seed) {}

  Colony run() {
    Corallite root;
    root.label = 1;
    root.tangent = Vec3::UnitZ();
    const double az = uniform(0.0, 2.0 * std::numbers::pi);
    root.normal = Vec3(std::cos(az), std::sin(az), 0.0);
    fill_shape(root);
    add(root);

    std::vector<Label> current = {1};
    int realized = 1;
    for (int g = 1; g < spec_.generations && !current.empty(); ++g) {
      std::vector<Label> next;
      for (const Label m : current) {
        const int k = draw_budding();
        for (int i = 0; i < k; ++i)
          if (auto d = sprout(m, g)) next.push_back(*d);
      }
      // Keep the requested depth if the draws left this generation empty.
      for (std::size_t i = 0; next.empty() && i < current.size(); ++i)
        if (auto d = sprout(current[i], g)) next.push_back(*d);
      if (!next.empty()) realized = g + 1;
      current = std::move(next);
    }
    add_joints();
    return rasterize(realized);
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double uniform(const Range& r) { return r.lo == r.hi ? r.lo : uniform(r.lo, r.hi); }

  int draw_budding() {
    std::discrete_distribution<int> dist(spec_.budding_weights.begin(), spec_.budding_weights.end());
    return dist(rng_);
  }

  void fill_shape(Corallite& c) {
    c.length = uniform(spec_.length);
    c.radius_base = uniform(spec_.radius_base);
    c.radius_top = std::max(c.radius_base, uniform(spec_.radius_top));
    c.curvature = uniform(spec_.curvature);
  }

  void add(const Corallite& c) {
    shapes_[c.label] = c;
    sampled_[c.label] = samples(c);
  }

  bool related(Label a, Label b) const {
    const Corallite& ca = shapes_.at(a);
    const Corallite& cb = shapes_.at(b);
    return ca.mother == b || cb.mother == a;
  }

  std::optional<Label> sprout(Label mother, int generation) {
    if (static_cast<int>(shapes_.size()) >= spec_.max_corallites) return std::nullopt;
    const Corallite& m = shapes_.at(mother);
    const double margin = 2.0 * std::max({spec_.spacing.sx, spec_.spacing.sy, spec_.spacing.sz});
    for (int attempt = 0; attempt < 20; ++attempt) {
      Corallite d;
      d.label = static_cast<Label>(shapes_.size() + 1);
      d.mother = mother;
      d.generation = generation;
      fill_shape(d);
      const double s = uniform(0.67 * m.length, 0.92 * m.length);
      const Vec3 tm = m.direction(s);
      const Vec3 e1 = any_perpendicular(tm), e2 = tm.cross(e1);
      const double az = uniform(0.0, 2.0 * std::numbers::pi);
      const Vec3 out = std::cos(az) * e1 + std::sin(az) * e2;
      const double theta = uniform(spec_.budding_angle) * std::numbers::pi / 180.0;
      d.base = m.point(s) + 0.85 * m.radius(s) * out;
      d.tangent = (std::cos(theta) * tm + std::sin(theta) * out).normalized();
      const Vec3 up = Vec3::UnitZ() - Vec3::UnitZ().dot(d.tangent) * d.tangent;
      d.normal = up.norm() > 0.2 ? up.normalized() : any_perpendicular(d.tangent);

      const auto ds = samples(d);
      bool ok = true;
      for (const auto& [label, other] : shapes_) {
        if (label == mother) continue;
        const bool sibling = other.mother == mother;
        const double g = sibling ? gap(ds, sampled_.at(label), spec_.calyx_fraction, spec_.calyx_fraction)
                                 : gap(ds, sampled_.at(label));
        if (g < margin) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      add(d);
      return d.label;
    }
    return std::nullopt;
  }

  void add_joints() {
    if (spec_.joint_probability <= 0.0) return;
    const double margin = 2.0 * std::max({spec_.spacing.sx, spec_.spacing.sy, spec_.spacing.sz});
    std::set<EdgeKey> taken;
    for (const auto& [a, ca] : shapes_) {
      if (uniform(0.0, 1.0) >= spec_.joint_probability) continue;
      Label best = 0;
      double best_gap = std::numeric_limits<double>::infinity();
      for (const auto& [b, cb] : shapes_) {
        if (b == a || related(a, b) || ca.mother == cb.mother || taken.count(edge_key(a, b))) continue;
        const double g = gap(sampled_.at(a), sampled_.at(b));
        if (g < best_gap) {
          best_gap = g;
          best = b;
        }
      }
      if (best == 0 || best_gap > spec_.joint_max_gap) continue;
      // Closest axis sample pair.
      Vec3 p, q;
      double dmin = std::numeric_limits<double>::infinity();
      for (const auto& [pa, ra] : sampled_.at(a))
        for (const auto& [pb, rb] : sampled_.at(best))
          if (const double d = (pa - pb).norm() - ra - rb; d < dmin) {
            dmin = d;
            p = pa;
            q = pb;
          }
      bool clear = true;
      for (const auto& [c, cc] : shapes_) {
        if (c == a || c == best) continue;
        for (const auto& [pc, rc] : sampled_.at(c))
          if (segment_distance(p, q, pc) - rc - spec_.joint_radius < margin) {
            clear = false;
            break;
          }
        if (!clear) break;
      }
      if (!clear) continue;
      taken.insert(edge_key(a, best));
      bars_.push_back({a, best, p, q});
    }
  }

  Colony rasterize(int realized) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& [l, ss] : sampled_)
      for (const auto& [p, r] : ss) {
        lo = lo.cwiseMin(p - Vec3::Constant(r));
        hi = hi.cwiseMax(p + Vec3::Constant(r));
      }
    const Vec3 sp(spec_.spacing.sx, spec_.spacing.sy, spec_.spacing.sz);
    const Vec3 shift = -lo + 2.0 * sp;
    for (auto& [l, c] : shapes_) c.base += shift;
    for (auto& b : bars_) {
      b.p += shift;
      b.q += shift;
    }
    Dims dims;
    dims.nx = static_cast<std::int64_t>(std::ceil((hi.x() - lo.x()) / sp.x())) + 5;
    dims.ny = static_cast<std::int64_t>(std::ceil((hi.y() - lo.y()) / sp.y())) + 5;
    dims.nz = static_cast<std::int64_t>(std::ceil((hi.z() - lo.z()) / sp.z())) + 5;

    Colony col;
    col.calyx = LabelGrid(dims, spec_.spacing, 0);
    col.skeleton = MaskGrid(dims, spec_.spacing, 0);
    MaskGrid solid(dims, spec_.spacing, 0);
    std::vector<double> calyx_d(static_cast<std::size_t>(dims.count()), std::numeric_limits<double>::infinity());

    auto box = [&](Vec3 a, Vec3 b, auto&& fn) {
      std::int64_t lo3[3], hi3[3];
      const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
      for (int k = 0; k < 3; ++k) {
        lo3[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(a[k] / sp[k])), 0, n[k] - 1);
        hi3[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(b[k] / sp[k])), 0, n[k] - 1);
      }
      for (std::int64_t z = lo3[2]; z <= hi3[2]; ++z)
        for (std::int64_t y = lo3[1]; y <= hi3[1]; ++y)
          for (std::int64_t x = lo3[0]; x <= hi3[0]; ++x) fn(col.calyx.index(x, y, z));
    };

    for (const auto& [l, c] : shapes_) {
      Vec3 a = Vec3::Constant(std::numeric_limits<double>::infinity()), b = -a;
      for (const auto& [p, r] : samples(c)) {
        a = a.cwiseMin(p - Vec3::Constant(r));
        b = b.cwiseMax(p + Vec3::Constant(r));
      }
      box(a, b, [&](std::int64_t i) {
        const AxisProjection pr = project(c, col.calyx.center(i));
        if (!pr.inside_span) return;
        const double r = c.radius(pr.s);
        if (pr.d > r) return;
        solid[i] = 1;
        if (pr.d <= spec_.calyx_fraction * r && pr.d < calyx_d[static_cast<std::size_t>(i)]) {
          calyx_d[static_cast<std::size_t>(i)] = pr.d;
          col.calyx[i] = l;
        }
      });
    }
    for (const auto& bar : bars_) {
      const Vec3 rr = Vec3::Constant(spec_.joint_radius);
      box(bar.p.cwiseMin(bar.q) - rr, bar.p.cwiseMax(bar.q) + rr, [&](std::int64_t i) {
        if (segment_distance(bar.p, bar.q, col.calyx.center(i)) <= spec_.joint_radius) solid[i] = 1;
      });
      col.joints.push_back(edge_key(bar.a, bar.b));
    }
    for (std::int64_t i = 0; i < solid.size(); ++i) col.skeleton[i] = solid[i] && col.calyx[i] == 0;

    for (const auto& [l, c] : shapes_) col.truth.add_vertex(l);
    for (const auto& [l, c] : shapes_)
      if (c.mother != 0) {
        Edge e;
        e.source = c.mother;
        e.target = l;
        e.directed = true;
        col.truth.add_edge(e);
      }
    std::sort(col.joints.begin(), col.joints.end());
    col.corallites = shapes_;
    col.generations = realized;
    return col;
  }

  const ColonySpec& spec_;
  std::mt19937_64 rng_;
  std::map<Label, Corallite> shapes_;
  std::map<Label, std::vector<std::pair<Vec3, double>>> sampled_;
  std::vector<Bar> bars_;
};

}  // namespace

Colony generate(const ColonySpec& spec) {
  spec.validate();
  return Builder(spec).run();
}

}  // namespace coda
