// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "socc/dataio.hpp"
#include "socc/fusion.hpp"
#include "socc/types.hpp"

namespace socc {

// ---------------------------------------------------------------------------
// Desk-scale synthetic driving scenes: analytic primitives with exact
// ground-truth voxelization, ray-cast LiDAR, and a flat-shaded camera render.
// ---------------------------------------------------------------------------

struct Primitive {
  enum class Kind { Box, Cylinder };
  Kind kind = Kind::Box;
  Vec3d center = Vec3d::Zero();  // box center; cylinder axis (x, y)
  Vec3d half = Vec3d::Zero();    // box half extents
  double radius = 0;             // cylinder radius
  double z0 = 0, z1 = 0;         // cylinder z range
  std::uint8_t label = 0;

  bool contains(const Vec3d& p) const;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  GridSpec grid = GridSpec::defaults();

  // Primitive counts and metric size ranges; everything is placed in the
  // forward sector so the front camera sees it.
  int n_vehicles = 4;
  Vec3d vehicle_min_size{2.2, 1.6, 1.2};  // full extents
  Vec3d vehicle_max_size{3.6, 2.2, 1.8};
  int n_barriers = 2;
  Vec3d barrier_min_size{1.6, 0.4, 0.8};
  Vec3d barrier_max_size{4.0, 0.6, 1.2};
  int n_poles = 3;
  double pole_radius_min = 0.25, pole_radius_max = 0.45;
  double pole_height_min = 2.0, pole_height_max = 4.5;
  int n_vegetation = 2;
  double veg_radius_min = 0.8, veg_radius_max = 1.6;
  double veg_height_min = 1.5, veg_height_max = 3.0;

  double ground_forward = 22.0;  // road patch x range [ground_back, forward]
  double ground_back = -2.0;
  double ground_half_width = 10.0;
  double ground_z = -1.0;         // slab bottom
  double ground_thickness = 0.4;  // one voxel layer by default

  double place_min_x = 4.0, place_max_x = 20.0;
  double place_half_y = 7.0;

  std::uint8_t vehicle_label = 4;     // car
  std::uint8_t barrier_label = 1;     // barrier
  std::uint8_t pole_label = 15;       // manmade
  std::uint8_t vegetation_label = 16; // vegetation
  std::uint8_t ground_label = 11;     // driveable_surface

  // 32-beam forward-sector LiDAR.
  int beams = 32;
  double elevation_min_deg = -25.0, elevation_max_deg = 5.0;
  double azimuth_min_deg = -60.0, azimuth_max_deg = 60.0;
  double azimuth_step_deg = 1.0;
  double max_range = 60.0;
  Vec3d sensor_origin{0.0, 0.0, 0.4};
  double intensity_noise = 0.02;

  // Front pinhole camera.
  int image_width = 640, image_height = 384;
  double focal = 320.0;
  Vec3d camera_center{0.2, 0.0, 0.6};  // in the lidar frame
};

struct Scene {
  LidarScan scan;
  Image image;
  CameraCalib calib;
  OccupancyGrid gt;
  std::vector<Primitive> primitives;
};

// Deterministic in the spec seed: identical spec -> bit-identical outputs.
Scene generate_scene(const SceneSpec& spec);

// Per-class reflectivity constant used for LiDAR intensity.
float class_intensity(std::uint8_t label);

// Per-class render color.
Vec3d class_color(std::uint8_t label);

// Average-pooled RGB pyramids standing in for backbone feature maps.
FeatureMapStack make_feature_stack(const Image& image,
                                   const std::vector<int>& scales = {4, 8, 16});

// Convenience: generate `count` frames (seed + index each) and write a
// dataset under root. Frames with index < val_from get split "train", the
// rest "val"; val_from < 0 marks everything "train".
void synthesize_dataset(const SceneSpec& base, int count,
                        const std::filesystem::path& root, int val_from = -1,
                        bool with_features = false);

}  // namespace socc
