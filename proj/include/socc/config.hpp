// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "socc/fusion.hpp"
#include "socc/network.hpp"
#include "socc/train.hpp"
#include "socc/types.hpp"

namespace socc {

// Merged run settings: UTF-8 "section.key=value" lines from an optional
// config file, overridden by command-line -D style pairs. Every key has a
// default; the effective config can be echoed for reproducibility.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::string& path);

  // "section.key=value" override; unknown keys are config errors.
  void set_pair(const std::string& pair);
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  // Typed views.
  nn::ModelConfig model() const;
  GridSpec grid() const;
  AugmentConfig augment() const;
  TrainConfig train() const;

  // Deterministic key=value dump of the effective config.
  void echo(std::ostream& os) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace socc
