#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace coda {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Label = std::uint32_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Execution policy for the voxel kernels. `serial` is the reference path
/// the tests compare the OpenMP path against.
enum class Exec { serial, parallel };

struct Dims {
  std::int64_t nx = 0, ny = 0, nz = 0;

  std::int64_t count() const { return nx * ny * nz; }
  bool operator==(const Dims&) const = default;
};

/// Physical voxel size in mm.
struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;

  double voxel_volume() const { return sx * sy * sz; }
  bool operator==(const Spacing&) const = default;
};

using Index3 = std::array<std::int64_t, 3>;

/// Dense x-fastest voxel grid.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(Dims dims, Spacing spacing, T fill = T{}) : dims_(dims), spacing_(spacing) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw Error("grid dims must be positive");
    if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) throw Error("grid spacing must be positive");
    data_.assign(static_cast<std::size_t>(dims.count()), fill);
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + dims_.nx * (y + dims_.ny * z);
  }
  T& at(std::int64_t x, std::int64_t y, std::int64_t z) { return (*this)[index(x, y, z)]; }
  const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const { return (*this)[index(x, y, z)]; }

  Index3 coords(std::int64_t i) const {
    return {i % dims_.nx, (i / dims_.nx) % dims_.ny, i / (dims_.nx * dims_.ny)};
  }
  bool inside(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.nx && y < dims_.ny && z < dims_.nz;
  }

  /// Voxel center in mm; voxel (0,0,0) sits at the origin.
  Vec3 center(std::int64_t i) const {
    const auto c = coords(i);
    return {static_cast<double>(c[0]) * spacing_.sx, static_cast<double>(c[1]) * spacing_.sy,
            static_cast<double>(c[2]) * spacing_.sz};
  }

  template <class U>
  bool same_geometry(const Grid<U>& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  bool operator==(const Grid&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

using MaskGrid = Grid<std::uint8_t>;
using LabelGrid = Grid<Label>;
using ScalarGrid = Grid<float>;

template <class A, class B>
void require_same_geometry(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_geometry(b)) throw Error(std::string(what) + ": grids differ in dims or spacing");
}

struct InstanceInfo {
  std::int64_t voxel_count = 0;
  Index3 bbox_min{};
  Index3 bbox_max{};
};

/// Labels present in a volume with voxel counts and bounding boxes.
using InstanceSet = std::map<Label, InstanceInfo>;

InstanceSet instance_set(const LabelGrid& labels);

/// Linear indices of every voxel per label, ascending.
std::map<Label, std::vector<std::int64_t>> voxels_by_label(const LabelGrid& labels);

}  // namespace coda
