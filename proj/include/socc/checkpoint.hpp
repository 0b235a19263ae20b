// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "socc/layers.hpp"

namespace socc::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Checkpoint layout: magic "SOCC", version u32, then per-tensor records of
// (name_len u16, name bytes, rank u8, dims u32 each, f32 payload) until EOF.
// Payload order is the row-major order of the parameter storage.
template <class S>
void save_checkpoint(const std::string& path, const ParamRefs<S>& params) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write("SOCC", 4);
  const std::uint32_t version = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&version), 4);
  for (const Param<S>* p : params) {
    const std::uint16_t name_len = std::uint16_t(p->name.size());
    f.write(reinterpret_cast<const char*>(&name_len), 2);
    f.write(p->name.data(), name_len);
    const std::uint8_t rank = std::uint8_t(p->dims.size());
    f.write(reinterpret_cast<const char*>(&rank), 1);
    std::uint64_t numel = 1;
    for (std::uint32_t d : p->dims) {
      f.write(reinterpret_cast<const char*>(&d), 4);
      numel *= d;
    }
    if (std::int64_t(numel) != p->value.size())
      throw ShapeError("checkpoint: dims inconsistent with storage for " +
                       p->name);
    std::vector<float> buf(numel);
    const S* src = p->value.data();
    for (std::uint64_t i = 0; i < numel; ++i) buf[i] = float(src[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            std::streamsize(numel * 4));
  }
  if (!f) throw DataError("checkpoint write failed: " + path);
}

template <class S>
void load_checkpoint(const std::string& path, const ParamRefs<S>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "SOCC", 4) != 0)
    throw DataError("bad checkpoint magic (offset 0): " + path);
  std::uint32_t version = 0;
  if (!f.read(reinterpret_cast<char*>(&version), 4) ||
      version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version (offset 4): " + path);

  std::unordered_map<std::string, std::vector<float>> tensors;
  std::unordered_map<std::string, std::vector<std::uint32_t>> shapes;
  while (true) {
    std::uint16_t name_len = 0;
    if (!f.read(reinterpret_cast<char*>(&name_len), 2)) break;  // EOF
    const auto record_off = std::int64_t(f.tellg()) - 2;
    std::string name(name_len, '\0');
    std::uint8_t rank = 0;
    if (!f.read(name.data(), name_len) ||
        !f.read(reinterpret_cast<char*>(&rank), 1))
      throw DataError("truncated checkpoint record at byte offset " +
                      std::to_string(record_off));
    std::vector<std::uint32_t> dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      if (!f.read(reinterpret_cast<char*>(&d), 4))
        throw DataError("truncated checkpoint dims at byte offset " +
                        std::to_string(record_off));
      numel *= d;
    }
    std::vector<float> data(numel);
    if (!f.read(reinterpret_cast<char*>(data.data()),
                std::streamsize(numel * 4)))
      throw DataError("truncated checkpoint payload at byte offset " +
                      std::to_string(record_off));
    tensors.emplace(name, std::move(data));
    shapes.emplace(name, std::move(dims));
  }

  for (Param<S>* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end())
      throw DataError("checkpoint missing tensor: " + p->name);
    if (shapes[p->name] != p->dims)
      throw ShapeError("checkpoint shape mismatch for " + p->name);
    S* dst = p->value.data();
    const auto& buf = it->second;
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = S(buf[i]);
    tensors.erase(it);
  }
  if (!tensors.empty())
    throw DataError("checkpoint has unknown tensor: " +
                    tensors.begin()->first);
}

}  // namespace socc::nn
