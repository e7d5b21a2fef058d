#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "coda/grid.hpp"

namespace coda {

/// Spatial parabola γ(t) = R · (t, α t², 0)ᵀ + a fitted to an instance's
/// voxel centers, oriented so the parameter grows from bottom to top.
struct Parabola {
  Mat3 rotation = Mat3::Identity();
  Vec3 anchor = Vec3::Zero();
  double alpha = 0.0;  // 1/mm, >= 0 after fitting
  double t_min = 0.0;
  double t_max = 0.0;

  std::vector<double> params;     // closest-point parameter per input point
  std::vector<double> residuals;  // distance per input point, mm

  bool degenerate_line = false;
  bool low_point_count = false;

  /// Objective Σ‖γ(t_x) − x‖² after every parameter step of the alternation.
  std::vector<double> objective_history;

  Vec3 point(double t) const { return rotation * Vec3(t, alpha * t * t, 0.0) + anchor; }
  Vec3 tangent(double t) const { return rotation * Vec3(1.0, 2.0 * alpha * t, 0.0); }
  double t_mid() const { return 0.5 * (t_min + t_max); }
  bool collapsed() const { return !(t_max > t_min); }
};

struct FitOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-8;
  std::size_t min_points = 10;
  double min_eigen_ratio = 1e-12;
};

/// Parameter t minimizing (t − u)² + (α t² − v)², the squared distance from
/// the in-frame point (u, v) to the planar parabola v = α t². Ties go to the
/// smaller t.
double closest_parameter_in_frame(double alpha, double u, double v);

/// Closest-point parameter of a world-space point.
double closest_parameter(const Parabola& p, const Vec3& x);

Parabola fit_parabola(std::span<const Vec3> points, const FitOptions& opts = {});

/// 0 at the bottom (t ≤ t_min), 1 at the top (t ≥ t_max), linear between.
/// Collapsed parabolas return 0.5.
double height(const Parabola& p, const Vec3& x);

double arc_length(double alpha, double t0, double t1);
inline double arc_length(const Parabola& p) { return arc_length(p.alpha, p.t_min, p.t_max); }

struct ResidualStats {
  double mean = 0.0;
  double stddev = 0.0;  // n − 1 denominator
  double skew = 0.0;    // Fisher g1 = m3 / m2^{3/2}
};

ResidualStats residual_stats(std::span<const double> values);
inline ResidualStats residual_stats(const Parabola& p) { return residual_stats(p.residuals); }

/// Voxel centers of `label`, restricted to `fit_mask` when that leaves at
/// least one voxel.
std::vector<Vec3> instance_points(const LabelGrid& labels, Label label, const MaskGrid* fit_mask);

/// Fits every label of the volume. Instances are independent, so the
/// parallel path fits them concurrently.
std::map<Label, Parabola> fit_instances(const LabelGrid& labels, const MaskGrid* fit_mask = nullptr,
                                        Exec exec = Exec::parallel, const FitOptions& opts = {});

}  // namespace coda
