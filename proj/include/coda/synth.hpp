#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "coda/graph.hpp"
#include "coda/grid.hpp"

namespace coda {

struct Range {
  double lo = 0.0, hi = 0.0;
};

/// Parameters of a procedural dendroid colony. Lengths in mm, angles in degrees.
struct ColonySpec {
  std::uint64_t seed = 1;
  int generations = 4;
  std::vector<double> budding_weights = {0.2, 0.4, 0.3, 0.1};  // P(k daughters), k = 0..
  Range length{3.0, 5.0};
  Range radius_base{0.5, 0.65};
  Range radius_top{0.85, 1.1};
  Range budding_angle{25.0, 50.0};
  Range curvature{0.02, 0.12};  // 1/mm of the bent axis
  double calyx_fraction = 0.55;  // calyx radius / outer radius
  double joint_probability = 0.0;
  double joint_radius = 0.3;
  double joint_max_gap = 3.0;
  int max_corallites = 60;
  Spacing spacing{0.25, 0.25, 0.25};

  /// Throws Error on invalid ranges or probabilities.
  void validate() const;
};

/// Circular-arc axis of one corallite with a linearly widening radius.
struct Corallite {
  Label label = 0;
  Label mother = 0;  // 0 for the root
  int generation = 0;
  Vec3 base = Vec3::Zero();
  Vec3 tangent = Vec3::UnitZ();  // unit, at the base
  Vec3 normal = Vec3::UnitX();   // unit, bending direction
  double curvature = 0.0;
  double length = 0.0;
  double radius_base = 0.0;
  double radius_top = 0.0;

  Vec3 point(double s) const;
  Vec3 direction(double s) const;
  double radius(double s) const { return radius_base + (radius_top - radius_base) * s / length; }
};

struct Colony {
  LabelGrid calyx;    // calyx labels
  MaskGrid skeleton;  // skeleton shell and joint bars, disjoint from calyx
  SkeletonGraph truth;  // mother→daughter edges
  std::vector<EdgeKey> joints;
  std::map<Label, Corallite> corallites;
  int generations = 0;  // realized
};

/// Deterministic in spec.seed.
Colony generate(const ColonySpec& spec);

}  // namespace coda
