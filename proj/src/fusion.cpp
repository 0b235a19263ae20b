// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace socc {

void CameraCalib::validate() const {
  if (fx() <= 0 || fy() <= 0)
    throw ConfigError("CameraCalib: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw ConfigError("CameraCalib: image dimensions must be positive");
  const Mat3d R = T_cam_lidar.topLeftCorner<3, 3>();
  if ((R * R.transpose() - Mat3d::Identity()).norm() > 1e-6)
    throw ConfigError("CameraCalib: extrinsic rotation not orthonormal");
  if (R.determinant() < 0)
    throw ConfigError("CameraCalib: extrinsic rotation must have det +1");
  if (std::abs(T_cam_lidar(3, 0)) + std::abs(T_cam_lidar(3, 1)) +
          std::abs(T_cam_lidar(3, 2)) > 0 ||
      T_cam_lidar(3, 3) != 1.0)
    throw ConfigError("CameraCalib: extrinsic bottom row must be [0 0 0 1]");
}

std::vector<Projection> project(const std::vector<Vec3d>& points,
                                const CameraCalib& calib) {
  calib.validate();
  std::vector<Projection> out;
  out.reserve(points.size());
  const Mat3d R = calib.T_cam_lidar.topLeftCorner<3, 3>();
  const Vec3d t = calib.T_cam_lidar.topRightCorner<3, 1>();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3d pc = R * points[i] + t;
    if (pc.z() <= 0) continue;
    const double u = calib.fx() * pc.x() / pc.z() + calib.cx();
    const double v = calib.fy() * pc.y() / pc.z() + calib.cy();
    if (u < 0 || u > calib.width - 1 || v < 0 || v > calib.height - 1)
      continue;
    out.push_back(Projection{int(i), u, v, pc.z()});
  }
  return out;
}

Vec3d unproject(double u, double v, double depth, const CameraCalib& calib) {
  const Vec3d pc((u - calib.cx()) * depth / calib.fx(),
                 (v - calib.cy()) * depth / calib.fy(), depth);
  const Mat3d R = calib.T_cam_lidar.topLeftCorner<3, 3>();
  const Vec3d t = calib.T_cam_lidar.topRightCorner<3, 1>();
  return R.transpose() * (pc - t);
}

namespace {

struct BilinearWeights {
  int x0, y0, x1, y1;
  double wx, wy;  // fractional weights toward (x1, y1)
};

BilinearWeights bilinear_setup(double u, double v, int w, int h) {
  if (u < 0 || v < 0 || u > w - 1 || v > h - 1)
    throw ContractViolation("bilinear_sample: coordinates out of bounds");
  BilinearWeights bw;
  bw.x0 = std::min(int(std::floor(u)), w - 2 >= 0 ? w - 2 : 0);
  bw.y0 = std::min(int(std::floor(v)), h - 2 >= 0 ? h - 2 : 0);
  bw.x1 = std::min(bw.x0 + 1, w - 1);
  bw.y1 = std::min(bw.y0 + 1, h - 1);
  bw.wx = u - bw.x0;
  bw.wy = v - bw.y0;
  return bw;
}

}  // namespace

Vec3d bilinear_sample(const Image& img, double u, double v) {
  const auto bw = bilinear_setup(u, v, img.width, img.height);
  return (1 - bw.wx) * (1 - bw.wy) * img.pixel(bw.x0, bw.y0) +
         bw.wx * (1 - bw.wy) * img.pixel(bw.x1, bw.y0) +
         (1 - bw.wx) * bw.wy * img.pixel(bw.x0, bw.y1) +
         bw.wx * bw.wy * img.pixel(bw.x1, bw.y1);
}

VecX<float> bilinear_sample(const FeatureMap& fm, double u, double v) {
  // Scaled maps cover the same field of view; clamp the border overhang.
  const double us =
      std::clamp(u / fm.scale, 0.0, double(fm.width - 1));
  const double vs =
      std::clamp(v / fm.scale, 0.0, double(fm.height - 1));
  const auto bw = bilinear_setup(us, vs, fm.width, fm.height);
  VecX<float> out(fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    out[c] = float((1 - bw.wx) * (1 - bw.wy) * fm.at(c, bw.y0, bw.x0) +
                   bw.wx * (1 - bw.wy) * fm.at(c, bw.y0, bw.x1) +
                   (1 - bw.wx) * bw.wy * fm.at(c, bw.y1, bw.x0) +
                   bw.wx * bw.wy * fm.at(c, bw.y1, bw.x1));
  }
  return out;
}

std::vector<FeaturePoint<float>> fuse(const LidarScan& scan, const Image& image,
                                      const FeatureMapStack* feature_maps,
                                      const CameraCalib& calib,
                                      float intensity_max) {
  if (intensity_max <= 0) throw ConfigError("fuse: intensity_max must be > 0");
  std::vector<Vec3d> pts;
  pts.reserve(scan.points.size());
  for (const auto& lp : scan.points) pts.push_back(lp.p);
  const auto projections = project(pts, calib);

  int fm_channels = 0;
  if (feature_maps)
    for (const auto& fm : *feature_maps) fm_channels += fm.channels;

  std::vector<FeaturePoint<float>> out;
  out.reserve(projections.size());
  for (const auto& pr : projections) {
    FeaturePoint<float> fp;
    fp.p = scan.points[std::size_t(pr.index)].p;
    fp.f.resize(3 + fm_channels + 1);
    const Vec3d rgb = bilinear_sample(image, pr.u, pr.v);
    fp.f[0] = float(rgb.x());
    fp.f[1] = float(rgb.y());
    fp.f[2] = float(rgb.z());
    Eigen::Index at = 3;
    if (feature_maps) {
      for (const auto& fm : *feature_maps) {
        fp.f.segment(at, fm.channels) = bilinear_sample(fm, pr.u, pr.v);
        at += fm.channels;
      }
    }
    fp.f[at] = scan.points[std::size_t(pr.index)].intensity / intensity_max;
    out.push_back(std::move(fp));
  }
  return out;
}

void augment(std::vector<FeaturePoint<float>>& points, OccupancyGrid& gt,
             const GridSpec& grid, const AugmentConfig& cfg, Rng& rng,
             int num_classes) {
  // Feature noise.
  if (cfg.noise_amplitude > 0) {
    for (auto& fp : points)
      for (Eigen::Index i = 0; i < fp.f.size(); ++i)
        fp.f[i] += float(rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude));
  }

  // One integer voxel translation per frame, applied to points (in meters)
  // and to the ground-truth grid alike.
  const int t = cfg.translation_voxels;
  Vec3i shift(0, 0, 0);
  if (t > 0)
    shift = Vec3i(int(rng.uniform_int(-t, t)), int(rng.uniform_int(-t, t)),
                  int(rng.uniform_int(-t, t)));
  if (shift != Vec3i::Zero()) {
    const Vec3d dp = shift.cast<double>() * grid.resolution;
    for (auto& fp : points) fp.p += dp;
    OccupancyGrid shifted = OccupancyGrid::all_free(gt.dims, num_classes);
    for (int i = 0; i < gt.dims.x(); ++i)
      for (int j = 0; j < gt.dims.y(); ++j)
        for (int k = 0; k < gt.dims.z(); ++k) {
          const int si = i - shift.x(), sj = j - shift.y(), sk = k - shift.z();
          if (gt.in_bounds(si, sj, sk)) shifted.at(i, j, k) = gt.at(si, sj, sk);
        }
    gt = std::move(shifted);
  }

  // Ground-truth voxel masking: free a uniformly selected fraction of the
  // occupied voxels.
  if (cfg.mask_ratio > 0) {
    const auto fl = free_label(num_classes);
    std::vector<std::size_t> occupied;
    for (std::size_t i = 0; i < gt.labels.size(); ++i)
      if (gt.labels[i] != fl && gt.labels[i] != kIgnoreLabel)
        occupied.push_back(i);
    const std::size_t n_mask =
        std::size_t(std::lround(cfg.mask_ratio * double(occupied.size())));
    // Partial Fisher-Yates: the first n_mask slots are a uniform sample.
    for (std::size_t i = 0; i < n_mask && i < occupied.size(); ++i) {
      const std::size_t j = std::size_t(
          rng.uniform_int(std::int64_t(i), std::int64_t(occupied.size()) - 1));
      std::swap(occupied[i], occupied[j]);
      gt.labels[occupied[i]] = fl;
    }
  }
}

}  // namespace socc
