#pragma once

// Run configuration: INI text with [data], [model], [train] and [run]
// sections, built-in presets, and flat key overrides.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "leap/data.hpp"
#include "leap/training.hpp"

namespace leap {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  SyntheticSpec synthetic;
  std::string csv_path;
  std::string targets_path;
  double drop = 0.0;  // 0 keeps every observation
  std::uint64_t seed = 0;  // generation, dropping and splitting
  std::vector<double> split{0.7, 0.15, 0.15};
};

struct ModelConfig {
  ModelKind kind = ModelKind::leap;
  std::size_t width = 32;
  std::size_t e_dim = 32;
  std::size_t h_dim = 32;
  std::size_t z_dim = 32;
  std::size_t k_layers = 4;
  std::size_t g_layers = 4;
  std::size_t f_layers = 2;
  Activation k_hidden = Activation::relu;
  Activation g_hidden = Activation::relu;
  Activation f_hidden = Activation::relu;
  std::size_t m_layers = 1;
  DensityLift lift = DensityLift::affine;
};

struct RunConfig {
  TaskKind task = TaskKind::classify;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";

  // Task-dependent defaults: layer depths, alpha/beta, patience, metric.
  static RunConfig defaults(TaskKind task);
  // toy, toy_classify, toy_forecast, spiral_forecast
  static RunConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();

  // "section.key" -> value. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Every resolved setting as ordered "section.key" / value pairs.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_ini() const;

  void validate() const;

  Dataset load_dataset() const;
  Architecture architecture(const Dataset& data) const;
};

// A preset name, or a path to an INI file. Files may name a base preset with
// `preset = ...` under [run]; their remaining keys override it.
RunConfig load_config(const std::string& name_or_path);
RunConfig parse_config(const std::string& ini_text);

std::vector<std::uint64_t> parse_seed_list(const std::string& csv);
std::vector<double> parse_double_list(const std::string& csv);

}  // namespace leap
