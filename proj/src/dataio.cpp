// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/dataio.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iostream>
#include <sstream>

namespace socc {

static_assert(std::endian::native == std::endian::little,
              "socc binary formats are little-endian");

namespace {

namespace fs = std::filesystem;

// Binary reader that reports the byte offset of the first malformed field.
class BinReader {
 public:
  explicit BinReader(const fs::path& path)
      : path_(path.string()), f_(path, std::ios::binary) {
    if (!f_) throw DataError("cannot open file: " + path_);
  }

  void magic(const char expect[4]) {
    char m[4];
    raw(m, 4, "magic");
    if (std::memcmp(m, expect, 4) != 0)
      throw DataError(path_ + ": bad magic at byte offset 0, expected " +
                      std::string(expect, 4));
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  void raw(void* dst, std::size_t bytes, const char* what) {
    if (!f_.read(static_cast<char*>(dst), std::streamsize(bytes)))
      throw DataError(path_ + ": truncated " + what + " at byte offset " +
                      std::to_string(offset_));
    offset_ += bytes;
  }
  bool at_eof() {
    f_.peek();
    return f_.eof();
  }

 private:
  std::string path_;
  std::ifstream f_;
  std::size_t offset_ = 0;
};

class BinWriter {
 public:
  explicit BinWriter(const fs::path& path)
      : path_(path.string()), f_(path, std::ios::binary | std::ios::trunc) {
    if (!f_) throw DataError("cannot open file for writing: " + path_);
  }
  void magic(const char m[4]) { f_.write(m, 4); }
  void u32(std::uint32_t v) { f_.write(reinterpret_cast<const char*>(&v), 4); }
  void raw(const void* src, std::size_t bytes) {
    f_.write(static_cast<const char*>(src), std::streamsize(bytes));
  }
  void done() {
    if (!f_) throw DataError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream f_;
};

}  // namespace

// ---------------------------------------------------------------------------
// SPCL point clouds
// ---------------------------------------------------------------------------

void write_spcl(const fs::path& path, const LidarScan& scan) {
  BinWriter w(path);
  w.magic("SPCL");
  w.u32(std::uint32_t(scan.points.size()));
  for (const auto& p : scan.points) {
    const float rec[4] = {float(p.p.x()), float(p.p.y()), float(p.p.z()),
                          p.intensity};
    w.raw(rec, sizeof rec);
  }
  w.done();
}

LidarScan read_spcl(const fs::path& path) {
  BinReader r(path);
  r.magic("SPCL");
  const auto count = r.u32("point count");
  LidarScan scan;
  scan.points.resize(count);
  for (auto& p : scan.points) {
    float rec[4];
    r.raw(rec, sizeof rec, "point record");
    p.p = Vec3d(rec[0], rec[1], rec[2]);
    p.intensity = rec[3];
  }
  return scan;
}

// ---------------------------------------------------------------------------
// SOGT label grids
// ---------------------------------------------------------------------------

void write_sogt(const fs::path& path, const OccupancyGrid& grid) {
  BinWriter w(path);
  w.magic("SOGT");
  w.u32(std::uint32_t(grid.dims.x()));
  w.u32(std::uint32_t(grid.dims.y()));
  w.u32(std::uint32_t(grid.dims.z()));
  w.raw(grid.labels.data(), grid.labels.size());
  w.done();
}

OccupancyGrid read_sogt(const fs::path& path) {
  BinReader r(path);
  r.magic("SOGT");
  OccupancyGrid grid;
  grid.dims.x() = int(r.u32("dim x"));
  grid.dims.y() = int(r.u32("dim y"));
  grid.dims.z() = int(r.u32("dim z"));
  const std::int64_t cells =
      std::int64_t(grid.dims.x()) * grid.dims.y() * grid.dims.z();
  if (grid.dims.minCoeff() <= 0 || cells > (std::int64_t(1) << 31))
    throw DataError(path.string() + ": implausible grid dims");
  grid.labels.resize(std::size_t(cells));
  r.raw(grid.labels.data(), grid.labels.size(), "labels");
  return grid;
}

// ---------------------------------------------------------------------------
// Calibration text files
// ---------------------------------------------------------------------------

void write_calib(const fs::path& path, const CameraCalib& calib) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open file for writing: " + path.string());
  f.precision(17);
  f << "K=";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f << calib.K(r, c) << (r == 2 && c == 2 ? "" : " ");
  f << "\nT=";
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      f << calib.T_cam_lidar(r, c) << (r == 3 && c == 3 ? "" : " ");
  f << "\nwidth=" << calib.width << "\nheight=" << calib.height << "\n";
  if (!f) throw DataError("write failed: " + path.string());
}

CameraCalib read_calib(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open file: " + path.string());
  CameraCalib calib;
  bool got_k = false, got_t = false, got_w = false, got_h = false;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path.string() + ": malformed line " +
                      std::to_string(line_no));
    const std::string key = line.substr(0, eq);
    std::istringstream val(line.substr(eq + 1));
    if (key == "K") {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          if (!(val >> calib.K(r, c)))
            throw DataError(path.string() + ": bad K on line " +
                            std::to_string(line_no));
      got_k = true;
    } else if (key == "T") {
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          if (!(val >> calib.T_cam_lidar(r, c)))
            throw DataError(path.string() + ": bad T on line " +
                            std::to_string(line_no));
      got_t = true;
    } else if (key == "width") {
      val >> calib.width;
      got_w = true;
    } else if (key == "height") {
      val >> calib.height;
      got_h = true;
    } else {
      throw DataError(path.string() + ": unknown key '" + key + "' on line " +
                      std::to_string(line_no));
    }
  }
  if (!(got_k && got_t && got_w && got_h))
    throw DataError(path.string() + ": missing K/T/width/height");
  calib.validate();
  return calib;
}

// ---------------------------------------------------------------------------
// PPM (P6) images
// ---------------------------------------------------------------------------

void write_ppm(const fs::path& path, const Image& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open file for writing: " + path.string());
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.rgb.data()),
          std::streamsize(image.rgb.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Image read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path.string());
  auto next_token = [&]() -> std::string {
    std::string tok;
    while (f >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      return tok;
    }
    throw DataError(path.string() + ": truncated PPM header at byte offset " +
                    std::to_string(std::streamoff(f.tellg())));
  };
  if (next_token() != "P6")
    throw DataError(path.string() + ": not a binary P6 PPM (byte offset 0)");
  Image img;
  img.width = std::stoi(next_token());
  img.height = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw DataError(path.string() + ": unsupported PPM header");
  f.get();  // single whitespace after maxval
  img.rgb.resize(std::size_t(img.width) * img.height * 3);
  if (!f.read(reinterpret_cast<char*>(img.rgb.data()),
              std::streamsize(img.rgb.size())))
    throw DataError(path.string() + ": truncated pixel data at byte offset " +
                    std::to_string(std::streamoff(f.tellg())));
  return img;
}

// ---------------------------------------------------------------------------
// SFMP feature-map stacks
// ---------------------------------------------------------------------------

void write_sfmp(const fs::path& path, const FeatureMapStack& maps) {
  BinWriter w(path);
  w.magic("SFMP");
  w.u32(std::uint32_t(maps.size()));
  for (const auto& fm : maps) {
    w.u32(std::uint32_t(fm.scale));
    w.u32(std::uint32_t(fm.channels));
    w.u32(std::uint32_t(fm.height));
    w.u32(std::uint32_t(fm.width));
    w.raw(fm.data.data(), fm.data.size() * 4);
  }
  w.done();
}

FeatureMapStack read_sfmp(const fs::path& path) {
  BinReader r(path);
  r.magic("SFMP");
  const auto count = r.u32("map count");
  FeatureMapStack maps(count);
  for (auto& fm : maps) {
    fm.scale = int(r.u32("scale"));
    fm.channels = int(r.u32("channels"));
    fm.height = int(r.u32("height"));
    fm.width = int(r.u32("width"));
    if (fm.scale <= 0 || fm.channels <= 0 || fm.height <= 0 || fm.width <= 0)
      throw DataError(path.string() + ": implausible feature map header");
    fm.data.resize(std::size_t(fm.channels) * fm.height * fm.width);
    r.raw(fm.data.data(), fm.data.size() * 4, "feature data");
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Dataset index
// ---------------------------------------------------------------------------

namespace {

FrameRecord make_record(const fs::path& root, const std::string& id,
                        const std::string& split) {
  FrameRecord rec;
  rec.id = id;
  rec.split = split;
  const fs::path base = root / "frames" / id;
  rec.image = base;
  rec.image += ".ppm";
  rec.cloud = base;
  rec.cloud += ".spcl";
  rec.calib = base;
  rec.calib += ".calib";
  rec.gt = base;
  rec.gt += ".sogt";
  fs::path feat = base;
  feat += ".sfmp";
  if (fs::exists(feat)) rec.features = feat;
  return rec;
}

// Header-level parse to fail fast at open time.
void validate_record(const FrameRecord& rec) {
  for (const auto& p : {rec.image, rec.cloud, rec.calib, rec.gt})
    if (!fs::exists(p))
      throw DataError("dataset frame " + rec.id + ": missing file " +
                      p.string());
  (void)read_calib(rec.calib);
  {
    BinReader r(rec.cloud);
    r.magic("SPCL");
  }
  {
    BinReader r(rec.gt);
    r.magic("SOGT");
  }
  if (rec.features) {
    BinReader r(*rec.features);
    r.magic("SFMP");
  }
}

}  // namespace

Dataset open_dataset(const fs::path& root) {
  Dataset ds;
  ds.root = root;
  const fs::path index = root / "index.txt";
  if (!fs::exists(index)) {
    std::cerr << "[socc] warning: no index.txt under " << root.string()
              << ", dataset is empty\n";
    return ds;
  }
  std::ifstream f(index);
  if (!f) throw DataError("cannot open " + index.string());
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id, split;
    ss >> id >> split;
    if (id.empty())
      throw DataError(index.string() + ": malformed line " +
                      std::to_string(line_no));
    if (split.empty()) split = "train";
    if (split != "train" && split != "val")
      throw DataError(index.string() + ": unknown split '" + split +
                      "' on line " + std::to_string(line_no));
    ds.frames.push_back(make_record(root, id, split));
  }
  std::sort(ds.frames.begin(), ds.frames.end(),
            [](const FrameRecord& a, const FrameRecord& b) {
              return a.id < b.id;
            });
  for (std::size_t i = 1; i < ds.frames.size(); ++i)
    if (ds.frames[i].id == ds.frames[i - 1].id)
      throw DataError("dataset: duplicate frame id " + ds.frames[i].id);
  for (const auto& rec : ds.frames) validate_record(rec);
  if (ds.frames.empty())
    std::cerr << "[socc] warning: dataset at " << root.string()
              << " has no frames\n";
  return ds;
}

Frame load_frame(const FrameRecord& record) {
  Frame frame;
  frame.scan = read_spcl(record.cloud);
  frame.image = read_ppm(record.image);
  frame.calib = read_calib(record.calib);
  frame.gt = read_sogt(record.gt);
  if (record.features) frame.features = read_sfmp(*record.features);
  return frame;
}

void save_frame(const fs::path& root, const std::string& id,
                const Frame& frame) {
  fs::create_directories(root / "frames");
  const fs::path base = root / "frames" / id;
  auto with = [&](const char* ext) {
    fs::path p = base;
    p += ext;
    return p;
  };
  write_ppm(with(".ppm"), frame.image);
  write_spcl(with(".spcl"), frame.scan);
  write_calib(with(".calib"), frame.calib);
  write_sogt(with(".sogt"), frame.gt);
  if (frame.features) write_sfmp(with(".sfmp"), *frame.features);
}

void write_index(const fs::path& root,
                 const std::vector<std::pair<std::string, std::string>>& rows) {
  fs::create_directories(root);
  std::ofstream f(root / "index.txt", std::ios::trunc);
  if (!f) throw DataError("cannot write index.txt under " + root.string());
  for (const auto& [id, split] : rows) f << id << " " << split << "\n";
}

}  // namespace socc
