#pragma once

// Irregular time-series samples, synthetic generators, observation dropping,
// CSV storage and deterministic splits.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "leap/vector_fields.hpp"

namespace leap {

struct TimeSeriesSample {
  std::string id;
  std::vector<double> times;                 // N + 1 strictly increasing
  std::vector<std::vector<double>> values;   // [N + 1][D]
  std::vector<std::vector<bool>> observed;   // [N + 1][D]
  int label = -1;                            // classification target
  std::vector<double> target_times;          // forecasting, after times.back()
  std::vector<std::vector<double>> target;   // [horizon][D]

  std::size_t length() const { return times.size(); }
  std::size_t dims() const { return values.empty() ? 0 : values.front().size(); }
  std::size_t observed_count(std::size_t channel) const;
  // Throws DataError when an invariant does not hold.
  void validate() const;
};

struct Dataset {
  TaskKind task = TaskKind::classify;
  std::size_t dims = 0;
  std::size_t classes = 0;  // classification
  std::size_t horizon = 0;  // forecasting
  std::vector<TimeSeriesSample> samples;

  std::size_t size() const { return samples.size(); }
  Dataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

enum class SyntheticKind { damped_oscillator, spiral, constant_levels };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string synthetic_kind_name(SyntheticKind k);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::damped_oscillator;
  std::size_t n_samples = 128;
  std::size_t length = 30;    // observed input points
  std::size_t horizon = 10;   // forecasting only
  std::size_t channels = 2;   // oscillator / levels; spirals are 2-D
  std::size_t classes = 2;
  double noise = 0.05;
  double time_span = 10.0;    // raw time covered by the input points
  std::uint64_t seed = 0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Marks floor(rate * (N + 1)) entries per sample and channel unobserved.
Dataset drop_observations(const Dataset& data, double rate, std::uint64_t seed);

// CSV schema: series_id,t,x_0,...,x_{D-1}[,label]; blank cell = missing.
// Forecast targets live in a parallel file without the label column.
Dataset load_csv(const std::string& path, const std::string& targets_path = "");
void write_csv(const Dataset& data, const std::string& path, const std::string& targets_path = "");

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

DatasetSplit split(std::size_t n, const std::vector<double>& fractions, std::uint64_t seed);

}  // namespace leap
