// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/synth.hpp"

#include <algorithm>
#include <cmath>

#include "socc/rng.hpp"

namespace socc {

namespace {

constexpr double kDeg = M_PI / 180.0;

// Closest-hit ray intersection, returns t > t_min or a negative value.
double ray_box(const Vec3d& o, const Vec3d& d, const Vec3d& c, const Vec3d& h,
               double t_min) {
  double t0 = t_min, t1 = 1e30;
  for (int a = 0; a < 3; ++a) {
    const double lo = c[a] - h[a], hi = c[a] + h[a];
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo || o[a] > hi) return -1;
      continue;
    }
    double ta = (lo - o[a]) / d[a];
    double tb = (hi - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1;
  }
  return t0 > t_min ? t0 : -1;
}

// Side-surface intersection of a vertical finite cylinder (caps ignored;
// rays that would only hit a cap simply miss).
double ray_cylinder(const Vec3d& o, const Vec3d& d, const Primitive& cyl,
                    double t_min) {
  const double ox = o.x() - cyl.center.x(), oy = o.y() - cyl.center.y();
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a < 1e-12) return -1;
  const double b = 2.0 * (ox * d.x() + oy * d.y());
  const double c = ox * ox + oy * oy - cyl.radius * cyl.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return -1;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
    if (t <= t_min) continue;
    const double z = o.z() + t * d.z();
    if (z >= cyl.z0 && z <= cyl.z1) return t;
  }
  return -1;
}

double ray_primitive(const Vec3d& o, const Vec3d& d, const Primitive& p,
                     double t_min) {
  return p.kind == Primitive::Kind::Box ? ray_box(o, d, p.center, p.half, t_min)
                                        : ray_cylinder(o, d, p, t_min);
}

struct Hit {
  double t = -1;
  const Primitive* prim = nullptr;
};

Hit closest_hit(const Vec3d& o, const Vec3d& d,
                const std::vector<Primitive>& prims, double t_min,
                double t_max) {
  Hit best;
  best.t = t_max;
  for (const auto& p : prims) {
    const double t = ray_primitive(o, d, p, t_min);
    if (t > 0 && t < best.t) {
      best.t = t;
      best.prim = &p;
    }
  }
  if (!best.prim) best.t = -1;
  return best;
}

void voxelize_gt(const std::vector<Primitive>& prims, const GridSpec& grid,
                 OccupancyGrid& gt) {
  for (const auto& p : prims) {
    Vec3d lo, hi;
    if (p.kind == Primitive::Kind::Box) {
      lo = p.center - p.half;
      hi = p.center + p.half;
    } else {
      lo = Vec3d(p.center.x() - p.radius, p.center.y() - p.radius, p.z0);
      hi = Vec3d(p.center.x() + p.radius, p.center.y() + p.radius, p.z1);
    }
    const Vec3i vmin = grid.voxel_of(lo) - Vec3i::Ones();
    const Vec3i vmax = grid.voxel_of(hi) + Vec3i::Ones();
    for (int i = std::max(0, vmin.x()); i <= std::min(grid.dims.x() - 1, vmax.x()); ++i)
      for (int j = std::max(0, vmin.y()); j <= std::min(grid.dims.y() - 1, vmax.y()); ++j)
        for (int k = std::max(0, vmin.z()); k <= std::min(grid.dims.z() - 1, vmax.z()); ++k)
          if (p.contains(grid.center_of(Vec3i(i, j, k))))
            gt.at(i, j, k) = p.label;
  }
}

}  // namespace

bool Primitive::contains(const Vec3d& p) const {
  if (kind == Kind::Box)
    return (p - center).cwiseAbs().x() <= half.x() &&
           (p - center).cwiseAbs().y() <= half.y() &&
           (p - center).cwiseAbs().z() <= half.z();
  const double dx = p.x() - center.x(), dy = p.y() - center.y();
  return dx * dx + dy * dy <= radius * radius && p.z() >= z0 && p.z() <= z1;
}

float class_intensity(std::uint8_t label) {
  // Simple per-class reflectivity in (0, 1).
  return 0.15f + 0.05f * float(label % 13);
}

Vec3d class_color(std::uint8_t label) {
  static const Vec3d palette[kNumClasses] = {
      {0.55, 0.55, 0.55},  // others
      {0.95, 0.55, 0.10},  // barrier
      {0.85, 0.15, 0.60},  // bicycle
      {0.90, 0.80, 0.20},  // bus
      {0.85, 0.10, 0.10},  // car
      {0.60, 0.40, 0.20},  // construction
      {0.70, 0.10, 0.85},  // motorcycle
      {0.20, 0.40, 0.95},  // pedestrian
      {0.95, 0.30, 0.30},  // traffic cone
      {0.55, 0.30, 0.65},  // trailer
      {0.75, 0.35, 0.10},  // truck
      {0.35, 0.35, 0.38},  // driveable surface
      {0.45, 0.30, 0.45},  // other flat
      {0.70, 0.50, 0.80},  // sidewalk
      {0.40, 0.70, 0.35},  // terrain
      {0.80, 0.75, 0.60},  // manmade
      {0.15, 0.60, 0.20},  // vegetation
      {0.00, 0.00, 0.00},  // free (never rendered)
  };
  return palette[label % kNumClasses];
}

Scene generate_scene(const SceneSpec& spec) {
  spec.grid.validate();
  Rng rng(spec.seed);
  Scene scene;

  // Ground slab.
  {
    Primitive g;
    g.kind = Primitive::Kind::Box;
    const double cx = 0.5 * (spec.ground_back + spec.ground_forward);
    g.center = Vec3d(cx, 0.0, spec.ground_z + 0.5 * spec.ground_thickness);
    g.half = Vec3d(0.5 * (spec.ground_forward - spec.ground_back),
                   spec.ground_half_width, 0.5 * spec.ground_thickness);
    g.label = spec.ground_label;
    if (g.half.x() > 0) scene.primitives.push_back(g);
  }

  const double ground_top = spec.ground_z + spec.ground_thickness;
  auto place_xy = [&](double margin) {
    return Vec3d(rng.uniform(spec.place_min_x + margin,
                             spec.place_max_x - margin),
                 rng.uniform(-spec.place_half_y + margin,
                             spec.place_half_y - margin),
                 0.0);
  };

  for (int i = 0; i < spec.n_vehicles; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    Vec3d size(rng.uniform(spec.vehicle_min_size.x(), spec.vehicle_max_size.x()),
               rng.uniform(spec.vehicle_min_size.y(), spec.vehicle_max_size.y()),
               rng.uniform(spec.vehicle_min_size.z(), spec.vehicle_max_size.z()));
    p.half = size / 2;
    p.center = place_xy(1.0);
    p.center.z() = ground_top + p.half.z();
    p.label = spec.vehicle_label;
    scene.primitives.push_back(p);
  }
  for (int i = 0; i < spec.n_barriers; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    Vec3d size(rng.uniform(spec.barrier_min_size.x(), spec.barrier_max_size.x()),
               rng.uniform(spec.barrier_min_size.y(), spec.barrier_max_size.y()),
               rng.uniform(spec.barrier_min_size.z(), spec.barrier_max_size.z()));
    // Half the barriers run along y.
    if (rng.uniform(0, 1) < 0.5) std::swap(size.x(), size.y());
    p.half = size / 2;
    p.center = place_xy(0.5);
    p.center.z() = ground_top + p.half.z();
    p.label = spec.barrier_label;
    scene.primitives.push_back(p);
  }
  for (int i = 0; i < spec.n_poles; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Cylinder;
    p.radius = rng.uniform(spec.pole_radius_min, spec.pole_radius_max);
    p.center = place_xy(0.5);
    p.z0 = ground_top;
    p.z1 = ground_top + rng.uniform(spec.pole_height_min, spec.pole_height_max);
    p.label = spec.pole_label;
    scene.primitives.push_back(p);
  }
  for (int i = 0; i < spec.n_vegetation; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Cylinder;
    p.radius = rng.uniform(spec.veg_radius_min, spec.veg_radius_max);
    p.center = place_xy(1.0);
    p.z0 = ground_top;
    p.z1 = ground_top + rng.uniform(spec.veg_height_min, spec.veg_height_max);
    p.label = spec.vegetation_label;
    scene.primitives.push_back(p);
  }

  // Exact ground truth.
  scene.gt = OccupancyGrid::all_free(spec.grid.dims);
  voxelize_gt(scene.primitives, spec.grid, scene.gt);

  // Camera: z forward, x right, y down; optical axis along lidar +x.
  scene.calib.width = spec.image_width;
  scene.calib.height = spec.image_height;
  scene.calib.K = Mat3d::Identity();
  scene.calib.K(0, 0) = spec.focal;
  scene.calib.K(1, 1) = spec.focal;
  scene.calib.K(0, 2) = (spec.image_width - 1) / 2.0;
  scene.calib.K(1, 2) = (spec.image_height - 1) / 2.0;
  Mat3d R;
  R << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  scene.calib.T_cam_lidar = Mat4d::Identity();
  scene.calib.T_cam_lidar.topLeftCorner<3, 3>() = R;
  scene.calib.T_cam_lidar.topRightCorner<3, 1>() = -R * spec.camera_center;

  // LiDAR sweep.
  if (spec.beams > 0 && spec.azimuth_step_deg > 0) {
    for (int b = 0; b < spec.beams; ++b) {
      const double el =
          spec.beams == 1
              ? spec.elevation_min_deg
              : spec.elevation_min_deg +
                    (spec.elevation_max_deg - spec.elevation_min_deg) * b /
                        (spec.beams - 1);
      for (double az = spec.azimuth_min_deg; az <= spec.azimuth_max_deg + 1e-9;
           az += spec.azimuth_step_deg) {
        const double ce = std::cos(el * kDeg), se = std::sin(el * kDeg);
        const Vec3d d(ce * std::cos(az * kDeg), ce * std::sin(az * kDeg), se);
        const Hit hit = closest_hit(spec.sensor_origin, d, scene.primitives,
                                    0.5, spec.max_range);
        if (hit.t <= 0) continue;
        LidarPoint pt;
        pt.p = spec.sensor_origin + hit.t * d;
        const float noise =
            float(rng.uniform(-spec.intensity_noise, spec.intensity_noise));
        pt.intensity = std::clamp(
            class_intensity(hit.prim->label) + noise, 0.0f, 1.0f);
        scene.scan.points.push_back(pt);
      }
    }
  }

  // Flat-shaded render by per-pixel ray casting (shares the intersection
  // code with the LiDAR, so colors and geometry agree exactly).
  scene.image = Image(spec.image_width, spec.image_height);
  const Vec3d sky(0.71, 0.78, 0.86);
  const Mat3d Rt = R.transpose();
  for (int y = 0; y < spec.image_height; ++y) {
    for (int x = 0; x < spec.image_width; ++x) {
      const Vec3d dir_cam((x - scene.calib.cx()) / spec.focal,
                          (y - scene.calib.cy()) / spec.focal, 1.0);
      const Vec3d d = (Rt * dir_cam).normalized();
      const Hit hit =
          closest_hit(spec.camera_center, d, scene.primitives, 0.05, 200.0);
      Vec3d c = sky;
      if (hit.prim) {
        // Distance shading keeps the image non-constant per class.
        const double shade = std::clamp(1.0 - hit.t / 80.0, 0.35, 1.0);
        c = class_color(hit.prim->label) * shade;
      }
      scene.image.set_pixel(x, y, std::uint8_t(std::lround(c.x() * 255)),
                            std::uint8_t(std::lround(c.y() * 255)),
                            std::uint8_t(std::lround(c.z() * 255)));
    }
  }
  return scene;
}

FeatureMapStack make_feature_stack(const Image& image,
                                   const std::vector<int>& scales) {
  FeatureMapStack stack;
  for (int s : scales) {
    FeatureMap fm;
    fm.scale = s;
    fm.channels = 3;
    fm.width = image.width / s;
    fm.height = image.height / s;
    if (fm.width == 0 || fm.height == 0)
      throw ConfigError("make_feature_stack: scale exceeds image size");
    fm.data.assign(std::size_t(fm.channels) * fm.height * fm.width, 0.f);
    for (int y = 0; y < fm.height; ++y)
      for (int x = 0; x < fm.width; ++x) {
        Vec3d acc = Vec3d::Zero();
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            acc += image.pixel(x * s + dx, y * s + dy);
        acc /= double(s) * s;
        for (int c = 0; c < 3; ++c) fm.at(c, y, x) = float(acc[c]);
      }
    stack.push_back(std::move(fm));
  }
  return stack;
}

void synthesize_dataset(const SceneSpec& base, int count,
                        const std::filesystem::path& root, int val_from,
                        bool with_features) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = base.seed + std::uint64_t(i);
    const Scene scene = generate_scene(spec);
    Frame frame;
    frame.scan = scene.scan;
    frame.image = scene.image;
    frame.calib = scene.calib;
    frame.gt = scene.gt;
    if (with_features) frame.features = make_feature_stack(scene.image);
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    save_frame(root, id, frame);
    rows.emplace_back(id, (val_from >= 0 && i >= val_from) ? "val" : "train");
  }
  write_index(root, rows);
}

}  // namespace socc
