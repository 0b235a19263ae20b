// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "socc/fusion.hpp"
#include "socc/types.hpp"

namespace socc {

// ---------------------------------------------------------------------------
// File formats (all little-endian):
//   .spcl  point cloud   "SPCL", count u32, then f32 x,y,z,intensity records
//   .sogt  label grid    "SOGT", dims u32 x3, u8 labels x-outer/y-mid/z-inner,
//                        255 = ignore
//   .calib calibration   UTF-8 key=value: K (9 floats row-major), T (16
//                        floats row-major), width, height
//   .ppm   image         binary P6, maxval 255
//   .sfmp  feature maps  "SFMP", count u32, per map: scale u32, channels u32,
//                        height u32, width u32, f32 channel-major planes
// ---------------------------------------------------------------------------

void write_spcl(const std::filesystem::path& path, const LidarScan& scan);
LidarScan read_spcl(const std::filesystem::path& path);

void write_sogt(const std::filesystem::path& path, const OccupancyGrid& grid);
OccupancyGrid read_sogt(const std::filesystem::path& path);

void write_calib(const std::filesystem::path& path, const CameraCalib& calib);
CameraCalib read_calib(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

void write_sfmp(const std::filesystem::path& path, const FeatureMapStack& maps);
FeatureMapStack read_sfmp(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset layout: <root>/index.txt ("<id> <split>" per line) and
// <root>/frames/<id>.{ppm,spcl,calib,sogt[,sfmp]}.
// ---------------------------------------------------------------------------

struct FrameRecord {
  std::string id;
  std::string split;  // "train" or "val"
  std::filesystem::path image, cloud, calib, gt;
  std::optional<std::filesystem::path> features;
};

struct Frame {
  LidarScan scan;
  Image image;
  CameraCalib calib;
  OccupancyGrid gt;
  std::optional<FeatureMapStack> features;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<FrameRecord> frames;

  std::vector<const FrameRecord*> split(const std::string& tag) const {
    std::vector<const FrameRecord*> out;
    for (const auto& f : frames)
      if (f.split == tag) out.push_back(&f);
    return out;
  }
};

// Parses index.txt, resolves paths, validates that every referenced file
// exists and has a well-formed header. Frames are ordered lexicographically
// by id. A missing or empty index yields an empty dataset with a warning.
Dataset open_dataset(const std::filesystem::path& root);

Frame load_frame(const FrameRecord& record);

// Writes all frame files under <root>/frames/. Feature maps are written only
// when present in the frame.
void save_frame(const std::filesystem::path& root, const std::string& id,
                const Frame& frame);

void write_index(const std::filesystem::path& root,
                 const std::vector<std::pair<std::string, std::string>>& rows);

}  // namespace socc
