// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace socc {

// Seedable RNG stream. Every stochastic component takes one of these
// explicitly so runs are reproducible from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }
  std::uint64_t next() { return eng_(); }

  // Derives an independent stream from the original seed, e.g. per frame or
  // per epoch. Does not advance this stream.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t x = seed_ ^ (salt + 0x9e3779b97f4a7c15ull + (seed_ << 6) +
                               (seed_ >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return Rng(x ^ (x >> 31));
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace socc
