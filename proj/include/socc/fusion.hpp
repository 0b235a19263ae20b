// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "socc/rng.hpp"
#include "socc/sparse_tensor.hpp"
#include "socc/types.hpp"

namespace socc {

// ---------------------------------------------------------------------------
// Sensor data types
// ---------------------------------------------------------------------------

struct CameraCalib {
  Mat3d K = Mat3d::Identity();           // zero-skew pinhole intrinsics
  Mat4d T_cam_lidar = Mat4d::Identity(); // rigid lidar -> camera transform
  int width = 0, height = 0;

  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  void validate() const;
};

struct LidarPoint {
  Vec3d p;
  float intensity = 0.f;
};

struct LidarScan {
  std::vector<LidarPoint> points;
};

// 8-bit RGB image with [0,1] float accessors.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3, 0) {}

  std::size_t offset(int x, int y) const {
    return (std::size_t(y) * width + x) * 3;
  }
  Vec3d pixel(int x, int y) const {
    const auto o = offset(x, y);
    return Vec3d(rgb[o] / 255.0, rgb[o + 1] / 255.0, rgb[o + 2] / 255.0);
  }
  void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
    const auto o = offset(x, y);
    rgb[o] = r;
    rgb[o + 1] = g;
    rgb[o + 2] = b;
  }
};

// One scaled per-pixel feature grid (width/scale x height/scale, C channels).
struct FeatureMap {
  int scale = 4;
  int channels = 0;
  int width = 0, height = 0;      // scaled dimensions
  std::vector<float> data;        // channel-major planes, each h x w row-major

  float at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
};

using FeatureMapStack = std::vector<FeatureMap>;

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

struct Projection {
  int index = 0;  // index into the source point list
  double u = 0, v = 0, depth = 0;
};

// Applies T then K; keeps points with positive camera-frame depth landing
// inside [0, W-1] x [0, H-1].
std::vector<Projection> project(const std::vector<Vec3d>& points,
                                const CameraCalib& calib);

// Inverse of project for a single pixel+depth (testing and diagnostics).
Vec3d unproject(double u, double v, double depth, const CameraCalib& calib);

// Standard 4-pixel bilinear interpolation; (u,v) must be in bounds.
Vec3d bilinear_sample(const Image& img, double u, double v);

// Samples a scaled feature map at full-resolution pixel coordinates; the
// scaled sample position is clamped to the map border.
VecX<float> bilinear_sample(const FeatureMap& fm, double u, double v);

// ---------------------------------------------------------------------------
// Fusion: project, sample, unproject
// ---------------------------------------------------------------------------

// Per-point feature layout: [R, G, B] ++ feature-map channels ++ [intensity].
// Points outside the camera frustum are excluded entirely.
std::vector<FeaturePoint<float>> fuse(const LidarScan& scan, const Image& image,
                                      const FeatureMapStack* feature_maps,
                                      const CameraCalib& calib,
                                      float intensity_max = 1.0f);

// ---------------------------------------------------------------------------
// Training-time augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  double noise_amplitude = 0.05;  // uniform noise on normalized features
  int translation_voxels = 4;     // per-frame integer translation in [-t, t]^3
  double mask_ratio = 0.10;       // fraction of occupied GT voxels freed
};

// Applies feature noise, one integer voxel translation to both points and
// ground truth, and random GT masking. Bit-reproducible for a fixed rng.
void augment(std::vector<FeaturePoint<float>>& points, OccupancyGrid& gt,
             const GridSpec& grid, const AugmentConfig& cfg, Rng& rng,
             int num_classes = kNumClasses);

}  // namespace socc
