// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace socc {

// Worker cap: SOCC_THREADS env var, 0 or unset = hardware concurrency.
inline unsigned worker_count() {
  static const unsigned n = [] {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("SOCC_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) return unsigned(v) < hw ? unsigned(v) : hw;
    }
    return hw;
  }();
  return n;
}

// Runs fn(i) for i in [begin, end). Iterations must write to disjoint state;
// results are then independent of the thread schedule.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
  const std::int64_t count = end - begin;
  const unsigned workers = worker_count();
  if (count <= 1 || workers <= 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const unsigned nt = unsigned(count < std::int64_t(workers) ? count : workers);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      for (std::int64_t i = begin + t; i < end; i += nt) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace socc
