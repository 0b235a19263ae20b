// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace socc {

// Feature matrices are row-major: one row per voxel, one column per channel.
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVecX = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using Vec3d = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3d = Eigen::Matrix3d;
using Mat4d = Eigen::Matrix4d;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes (config 2, data 3, numeric 4).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ContractViolation : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Coordinates
// ---------------------------------------------------------------------------

// A lattice site of a sparse tensor: batch index plus three signed grid
// coordinates expressed in voxels at the tensor's stride.
struct Coordinate {
  std::int32_t b = 0;
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;

  friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

struct CoordHash {
  std::size_t operator()(const Coordinate& c) const noexcept {
    auto mix = [](std::uint64_t x) {
      x += 0x9e3779b97f4a7c15ull;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
      return x ^ (x >> 31);
    };
    std::uint64_t lo =
        (std::uint64_t(std::uint32_t(c.b)) << 32) | std::uint32_t(c.i);
    std::uint64_t hi =
        (std::uint64_t(std::uint32_t(c.j)) << 32) | std::uint32_t(c.k);
    return std::size_t(mix(lo ^ mix(hi)));
  }
};

// Spatial kernel offset (di, dj, dk).
using Offset = std::array<std::int32_t, 3>;

// Mathematical floor division; coordinates may be negative.
inline std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// ---------------------------------------------------------------------------
// Grid geometry
// ---------------------------------------------------------------------------

struct GridSpec {
  Vec3d lower{-40.0, -40.0, -1.0};
  Vec3d upper{40.0, 40.0, 5.4};
  double resolution = 0.4;
  Vec3i dims{200, 200, 16};

  static GridSpec defaults() { return GridSpec{}; }

  static GridSpec from_bounds(const Vec3d& lo, const Vec3d& up, double res) {
    GridSpec g;
    g.lower = lo;
    g.upper = up;
    g.resolution = res;
    for (int a = 0; a < 3; ++a)
      g.dims[a] = int(std::lround((up[a] - lo[a]) / res));
    g.validate();
    return g;
  }

  void validate() const {
    if (resolution <= 0.0) throw ConfigError("GridSpec: resolution must be > 0");
    for (int a = 0; a < 3; ++a) {
      if (dims[a] <= 0) throw ConfigError("GridSpec: dims must be positive");
      if (dims[a] != int(std::lround((upper[a] - lower[a]) / resolution)))
        throw ConfigError("GridSpec: dims inconsistent with bounds/resolution");
    }
  }

  Vec3i voxel_of(const Vec3d& p) const {
    return Vec3i(int(std::floor((p.x() - lower.x()) / resolution)),
                 int(std::floor((p.y() - lower.y()) / resolution)),
                 int(std::floor((p.z() - lower.z()) / resolution)));
  }

  Vec3d center_of(const Vec3i& v) const {
    return lower + (v.cast<double>() + Vec3d::Constant(0.5).eval()) * resolution;
  }

  bool in_bounds(const Vec3i& v) const {
    return v.x() >= 0 && v.x() < dims.x() && v.y() >= 0 && v.y() < dims.y() &&
           v.z() >= 0 && v.z() < dims.z();
  }

  std::int64_t cell_count() const {
    return std::int64_t(dims.x()) * dims.y() * dims.z();
  }
};

// ---------------------------------------------------------------------------
// Label set (16 semantic classes + others + free)
// ---------------------------------------------------------------------------

inline constexpr int kNumClasses = 18;
inline constexpr std::uint8_t kIgnoreLabel = 255;

inline const std::array<const char*, kNumClasses>& class_names() {
  static const std::array<const char*, kNumClasses> names = {
      "others",        "barrier",      "bicycle",    "bus",
      "car",           "construction", "motorcycle", "pedestrian",
      "traffic_cone",  "trailer",      "truck",      "driveable_surface",
      "other_flat",    "sidewalk",     "terrain",    "manmade",
      "vegetation",    "free"};
  return names;
}

inline constexpr std::uint8_t free_label(int num_classes = kNumClasses) {
  return std::uint8_t(num_classes - 1);
}

// ---------------------------------------------------------------------------
// Dense label grid, x-outer / y-middle / z-inner storage order.
// ---------------------------------------------------------------------------

struct OccupancyGrid {
  Vec3i dims{0, 0, 0};
  std::vector<std::uint8_t> labels;

  OccupancyGrid() = default;
  OccupancyGrid(const Vec3i& d, std::uint8_t fill)
      : dims(d), labels(std::size_t(d.x()) * d.y() * d.z(), fill) {}

  static OccupancyGrid all_free(const Vec3i& d, int num_classes = kNumClasses) {
    return OccupancyGrid(d, free_label(num_classes));
  }

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * dims.y() + j) * dims.z() + k;
  }
  std::uint8_t at(int i, int j, int k) const { return labels[index(i, j, k)]; }
  std::uint8_t& at(int i, int j, int k) { return labels[index(i, j, k)]; }

  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && i < dims.x() && j >= 0 && j < dims.y() && k >= 0 &&
           k < dims.z();
  }

  std::size_t count_label(std::uint8_t l) const {
    std::size_t n = 0;
    for (auto v : labels) n += (v == l);
    return n;
  }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;
};

}  // namespace socc
