#include "coda/parabola.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

namespace coda {
namespace {

double cubic_residual(double a2, double lin, double u, double t) { return a2 * t * t * t + lin * t - u; }

// Newton polish on 2α²t³ + (1 − 2αv)t − u; keeps the step only if it helps.
double polish(double a2, double lin, double u, double t) {
  for (int i = 0; i < 3; ++i) {
    const double f = cubic_residual(a2, lin, u, t);
    const double df = 3.0 * a2 * t * t + lin;
    if (df == 0.0 || f == 0.0) break;
    const double next = t - f / df;
    if (!(std::abs(cubic_residual(a2, lin, u, next)) < std::abs(f))) break;
    t = next;
  }
  return t;
}

void orthonormal_pca_axes(const Mat3& cov, Vec3& e1, Vec3& e2, Vec3& e3, double& l1, double& l2) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  l1 = vals(2);
  l2 = vals(1);
  e1 = vecs.col(2);
  e2 = vecs.col(1);
  // deterministic signs: largest-magnitude component positive
  auto fix = [](Vec3& e) {
    Eigen::Index i;
    e.cwiseAbs().maxCoeff(&i);
    if (e(i) < 0) e = -e;
  };
  fix(e1);
  fix(e2);
  e3 = e1.cross(e2);
}

struct Frame {
  Mat3 rotation;
  Vec3 anchor;
  double alpha;
};

// Quadratic regression v = αu² + bu + c along in-plane axes (ex, ey), moved
// to vertex form so the anchor is the parabola apex. Nearly straight data
// falls back to a tilted line.
Frame regression_frame(std::span<const Vec3> pts, const Vec3& centroid, const Vec3& ex, const Vec3& ey,
                       const Vec3& ez) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd rhs(n);
  double extent = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d = pts[i] - centroid;
    const double u = ex.dot(d);
    A(i, 0) = u * u;
    A(i, 1) = u;
    A(i, 2) = 1.0;
    rhs(i) = ey.dot(d);
    extent = std::max(extent, std::abs(u));
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(rhs);
  const double alpha = coef(0), b = coef(1), c = coef(2);

  Frame f;
  if (alpha != 0.0) {
    const double u0 = -b / (2.0 * alpha);
    if (std::abs(u0) <= 1e4 * (extent + 1.0)) {
      const double v0 = c - b * b / (4.0 * alpha);
      f.rotation.col(0) = ex;
      f.rotation.col(1) = ey;
      f.rotation.col(2) = ez;
      f.anchor = centroid + u0 * ex + v0 * ey;
      f.alpha = alpha;
      return f;
    }
  }
  const Vec3 dir = (ex + b * ey).normalized();
  f.rotation.col(0) = dir;
  f.rotation.col(1) = ez.cross(dir);
  f.rotation.col(2) = ez;
  f.anchor = centroid + c * ey;
  f.alpha = 0.0;
  return f;
}

// In-plane direction across the symmetry axis, from a general conic fitted
// in the PC1–PC2 plane: the dominant eigenvector of its quadratic part.
std::optional<Vec3> conic_apex_direction(std::span<const Vec3> pts, const Vec3& centroid, const Vec3& e1,
                                         const Vec3& e2) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  double scale = 0.0;
  for (const auto& x : pts) scale = std::max(scale, (x - centroid).norm());
  if (!(scale > 0.0)) return std::nullopt;
  Eigen::MatrixXd A(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d = (pts[i] - centroid) / scale;
    const double u = e1.dot(d), v = e2.dot(d);
    A.row(i) << u * u, u * v, v * v, u, v, 1.0;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::VectorXd c = svd.matrixV().col(5);
  Eigen::Matrix2d q;
  q << c(0), 0.5 * c(1), 0.5 * c(1), c(2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(q);
  const auto& ev = es.eigenvalues();
  const int k = std::abs(ev(1)) >= std::abs(ev(0)) ? 1 : 0;
  if (ev(k) == 0.0) return std::nullopt;
  const Eigen::Vector2d w = es.eigenvectors().col(k);
  Vec3 dir = w(0) * e1 + w(1) * e2;
  if (dir.dot(e1) < 0) dir = -dir;
  return dir.normalized();
}

}  // namespace

double closest_parameter_in_frame(double alpha, double u, double v) {
  if (alpha == 0.0) return u;
  const double a2 = 2.0 * alpha * alpha;
  const double lin = 1.0 - 2.0 * alpha * v;
  auto dist2 = [&](double t) {
    const double du = t - u;
    const double dv = alpha * t * t - v;
    return du * du + dv * dv;
  };

  double roots[3];
  int count = 0;
  const double P = lin / a2;
  const double Q = -u / a2;
  if (!std::isfinite(P) || !std::isfinite(Q) || std::abs(P) > 1e100) {
    // α negligible next to the linear term
    roots[count++] = polish(a2, lin, u, lin != 0.0 ? u / lin : u);
  } else {
    const double disc = 0.25 * Q * Q + P * P * P / 27.0;
    if (disc >= 0.0) {
      const double A = -std::copysign(std::cbrt(0.5 * std::abs(Q) + std::sqrt(disc)), Q);
      const double B = A != 0.0 ? -P / (3.0 * A) : 0.0;
      roots[count++] = polish(a2, lin, u, A + B);
    } else {
      const double r = 2.0 * std::sqrt(-P / 3.0);
      const double arg = std::clamp(1.5 * Q / P * std::sqrt(-3.0 / P), -1.0, 1.0);
      const double phi = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k)
        roots[count++] = polish(a2, lin, u, r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0));
    }
  }

  double best = roots[0];
  double best_d = dist2(best);
  for (int k = 1; k < count; ++k) {
    const double d = dist2(roots[k]);
    if (d < best_d || (d == best_d && roots[k] < best)) {
      best = roots[k];
      best_d = d;
    }
  }
  return best;
}

double closest_parameter(const Parabola& p, const Vec3& x) {
  const Vec3 local = p.rotation.transpose() * (x - p.anchor);
  return closest_parameter_in_frame(p.alpha, local.x(), local.y());
}

Parabola fit_parabola(std::span<const Vec3> points, const FitOptions& opts) {
  if (points.empty()) throw Error("fit_parabola: no points");
  const std::size_t n = points.size();
  Parabola p;

  Vec3 centroid = Vec3::Zero();
  for (const auto& x : points) centroid += x;
  centroid /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& x : points) {
    const Vec3 d = x - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n);

  Vec3 e1, e2, e3;
  double l1 = 0, l2 = 0;
  orthonormal_pca_axes(cov, e1, e2, e3, l1, l2);

  p.low_point_count = n < opts.min_points;
  p.degenerate_line = p.low_point_count || !(l1 > 0.0) || l2 < opts.min_eigen_ratio * l1;

  std::vector<double>& t = p.params;
  t.resize(n);
  auto project_all = [&]() {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = closest_parameter(p, points[i]);
      sum += (p.point(t[i]) - points[i]).squaredNorm();
    }
    return sum;
  };

  if (p.degenerate_line) {
    if (l1 > 0.0) {
      p.rotation.col(0) = e1;
      p.rotation.col(1) = e2;
      p.rotation.col(2) = e3;
    }
    p.anchor = centroid;
    p.alpha = 0.0;
    p.objective_history.push_back(project_all());
  } else {
    // Two starts: regression along PC1, and along the conic's apex
    // direction. Keep the one with the lower objective.
    std::vector<Frame> starts{regression_frame(points, centroid, e1, e2, e3)};
    if (const auto dir = conic_apex_direction(points, centroid, e1, e2))
      starts.push_back(regression_frame(points, centroid, *dir, e3.cross(*dir), e3));
    double best = std::numeric_limits<double>::infinity();
    for (const Frame& f : starts) {
      Parabola trial;
      trial.rotation = f.rotation;
      trial.anchor = f.anchor;
      trial.alpha = f.alpha;
      double sum = 0.0;
      for (const auto& x : points) sum += (trial.point(closest_parameter(trial, x)) - x).squaredNorm();
      if (sum < best) {
        best = sum;
        p.rotation = f.rotation;
        p.anchor = f.anchor;
        p.alpha = f.alpha;
      }
    }

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
      const double objective = project_all();
      p.objective_history.push_back(objective);
      if (iter > 0) {
        const double prev = p.objective_history[p.objective_history.size() - 2];
        if (std::abs(prev - objective) <= opts.relative_tolerance * prev) break;
      }
      if (iter + 1 == opts.max_iterations) break;

      // (R, a) by orthogonal alignment of model points onto the data
      Vec3 mbar = Vec3::Zero(), xbar = Vec3::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        mbar += Vec3(t[i], p.alpha * t[i] * t[i], 0.0);
        xbar += points[i];
      }
      mbar /= static_cast<double>(n);
      xbar /= static_cast<double>(n);
      Mat3 H = Mat3::Zero();
      for (std::size_t i = 0; i < n; ++i)
        H += (Vec3(t[i], p.alpha * t[i] * t[i], 0.0) - mbar) * (points[i] - xbar).transpose();
      Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat3 R = svd.matrixV() * svd.matrixU().transpose();
      // The model is planar (z = 0), so flipping the null direction keeps
      // the optimum and gives det R = +1.
      if (R.determinant() < 0) {
        Mat3 V = svd.matrixV();
        V.col(2) = -V.col(2);
        R = V * svd.matrixU().transpose();
      }
      p.rotation = R;
      p.anchor = xbar - R * mbar;

      // α by 1D least squares
      const Vec3 ey = p.rotation.col(1);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t2 = t[i] * t[i];
        num += t2 * ey.dot(points[i] - p.anchor);
        den += t2 * t2;
      }
      if (den > 0.0) p.alpha = num / den;
    }
  }

  p.t_min = *std::min_element(t.begin(), t.end());
  p.t_max = *std::max_element(t.begin(), t.end());

  // Orientation: more points must project onto the upper half.
  const double mid = p.t_mid();
  const auto below = std::count_if(t.begin(), t.end(), [&](double v) { return v < mid; });
  if (below > static_cast<std::ptrdiff_t>(n) - below) {
    p.rotation.col(0) = -p.rotation.col(0);
    p.rotation.col(2) = -p.rotation.col(2);
    for (auto& v : t) v = -v;
    const double lo = -p.t_max;
    p.t_max = -p.t_min;
    p.t_min = lo;
  }
  if (p.alpha < 0.0) {
    p.rotation.col(1) = -p.rotation.col(1);
    p.rotation.col(2) = -p.rotation.col(2);
    p.alpha = -p.alpha;
  }

  p.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.residuals[i] = (p.point(t[i]) - points[i]).norm();
  return p;
}

double height(const Parabola& p, const Vec3& x) {
  if (p.collapsed()) return 0.5;
  const double t = closest_parameter(p, x);
  if (t < p.t_min) return 0.0;
  if (t > p.t_max) return 1.0;
  return (t - p.t_min) / (p.t_max - p.t_min);
}

double arc_length(double alpha, double t0, double t1) {
  if (!(t1 > t0)) return 0.0;
  if (alpha == 0.0) return t1 - t0;
  const double k = 2.0 * alpha;
  auto F = [k](double t) { return 0.5 * t * std::sqrt(1.0 + k * k * t * t) + std::asinh(k * t) / (2.0 * k); };
  return F(t1) - F(t0);
}

ResidualStats residual_stats(std::span<const double> values) {
  ResidualStats s;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  if (values.size() > 1) s.stddev = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  if (s.stddev > 0.0 && m2 > 0.0) s.skew = m3 / std::pow(m2, 1.5);
  return s;
}

std::vector<Vec3> instance_points(const LabelGrid& labels, Label label, const MaskGrid* fit_mask) {
  std::vector<Vec3> all, masked;
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != label) continue;
    all.push_back(labels.center(i));
    if (fit_mask && (*fit_mask)[i]) masked.push_back(labels.center(i));
  }
  return masked.empty() ? all : masked;
}

std::map<Label, Parabola> fit_instances(const LabelGrid& labels, const MaskGrid* fit_mask, Exec exec,
                                        const FitOptions& opts) {
  if (fit_mask) require_same_geometry(labels, *fit_mask, "fit_instances");
  const auto groups = voxels_by_label(labels);
  std::vector<Label> ids;
  std::vector<const std::vector<std::int64_t>*> voxels;
  for (const auto& [l, v] : groups) {
    ids.push_back(l);
    voxels.push_back(&v);
  }
  std::vector<Parabola> fits(ids.size());
  auto fit_one = [&](std::size_t k) {
    std::vector<Vec3> all, masked;
    for (const std::int64_t i : *voxels[k]) {
      all.push_back(labels.center(i));
      if (fit_mask && (*fit_mask)[i]) masked.push_back(labels.center(i));
    }
    fits[k] = fit_parabola(masked.empty() ? all : masked, opts);
  };
  const auto count = static_cast<std::int64_t>(ids.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < count; ++k) fit_one(static_cast<std::size_t>(k));
  } else {
    for (std::int64_t k = 0; k < count; ++k) fit_one(static_cast<std::size_t>(k));
  }
  std::map<Label, Parabola> out;
  for (std::size_t k = 0; k < ids.size(); ++k) out.emplace(ids[k], std::move(fits[k]));
  return out;
}

}  // namespace coda
