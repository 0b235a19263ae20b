// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/config.hpp"

#include <fstream>
#include <sstream>

namespace socc {

RunConfig::RunConfig() {
  // Every key carries a default.
  kv_ = {
      {"model.num_classes", "18"},
      {"model.enc_widths", "32,64,128,256"},
      {"model.seg_widths", "64,128"},
      {"model.seg_bottleneck", "256"},
      {"model.se_reduction", "4"},
      {"model.kernel_size", "3"},
      {"model.lambda", "0.5"},
      {"model.beta", "0.9"},
      {"model.use_se", "true"},
      {"model.use_cb_loss", "true"},
      {"model.use_external_features", "false"},
      {"model.learnable_prune_bias", "false"},
      {"model.exclude_free_targets", "false"},
      {"train.lr", "1e-4"},
      {"train.batch_size", "10"},
      {"train.epochs", "50"},
      {"train.seed", "1"},
      {"train.patience", "10"},
      {"train.eval_every", "1"},
      {"aug.noise", "0.05"},
      {"aug.translation", "4"},
      {"aug.mask_ratio", "0.1"},
      {"grid.lower", "-40,-40,-1"},
      {"grid.upper", "40,40,5.4"},
      {"grid.resolution", "0.4"},
      {"data.root", "dataset"},
      {"data.intensity_max", "1.0"},
      {"out.dir", "out"},
  };
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    try {
      cfg.set_pair(line.substr(first));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

void RunConfig::set_pair(const std::string& pair) {
  const auto eq = pair.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected key=value, got '" + pair + "'");
  auto strip = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  set(strip(pair.substr(0, eq)), strip(pair.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

std::string RunConfig::str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const auto v = std::stoll(str(key), &pos);
    if (pos != str(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + str(key));
  }
}

double RunConfig::real(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const auto v = std::stod(str(key), &pos);
    if (pos != str(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + str(key));
  }
}

bool RunConfig::boolean(const std::string& key) const {
  const auto v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream ss(str(key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not an int list");
    }
  }
  if (out.empty())
    throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

nn::ModelConfig RunConfig::model() const {
  nn::ModelConfig m;
  m.num_classes = int(integer("model.num_classes"));
  m.enc_widths = int_list("model.enc_widths");
  m.seg_widths = int_list("model.seg_widths");
  m.seg_bottleneck = int(integer("model.seg_bottleneck"));
  m.se_reduction = int(integer("model.se_reduction"));
  m.kernel_size = int(integer("model.kernel_size"));
  m.lambda = real("model.lambda");
  m.beta = real("model.beta");
  m.use_se = boolean("model.use_se");
  m.use_cb_loss = boolean("model.use_cb_loss");
  m.use_external_features = boolean("model.use_external_features");
  m.learnable_prune_bias = boolean("model.learnable_prune_bias");
  m.exclude_free_targets = boolean("model.exclude_free_targets");
  m.validate();
  return m;
}

GridSpec RunConfig::grid() const {
  auto vec3 = [&](const std::string& key) {
    std::istringstream ss(str(key));
    Vec3d v;
    char comma;
    if (!(ss >> v.x() >> comma >> v.y() >> comma >> v.z()))
      throw ConfigError("config key '" + key + "' is not x,y,z");
    return v;
  };
  return GridSpec::from_bounds(vec3("grid.lower"), vec3("grid.upper"),
                               real("grid.resolution"));
}

AugmentConfig RunConfig::augment() const {
  AugmentConfig a;
  a.noise_amplitude = real("aug.noise");
  a.translation_voxels = int(integer("aug.translation"));
  a.mask_ratio = real("aug.mask_ratio");
  if (a.noise_amplitude < 0 || a.mask_ratio < 0 || a.mask_ratio > 1 ||
      a.translation_voxels < 0)
    throw ConfigError("augmentation parameters out of range");
  return a;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = real("train.lr");
  t.batch_size = int(integer("train.batch_size"));
  t.epochs = int(integer("train.epochs"));
  t.seed = std::uint64_t(integer("train.seed"));
  t.patience = int(integer("train.patience"));
  t.eval_every = int(integer("train.eval_every"));
  t.intensity_max = real("data.intensity_max");
  t.out_dir = str("out.dir");
  t.validate();
  return t;
}

void RunConfig::echo(std::ostream& os) const {
  for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
}

}  // namespace socc
