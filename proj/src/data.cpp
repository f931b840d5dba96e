#include "leap/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "leap/errors.hpp"

namespace leap {

std::size_t TimeSeriesSample::observed_count(std::size_t channel) const {
  std::size_t n = 0;
  for (const auto& row : observed) n += row.at(channel) ? 1 : 0;
  return n;
}

void TimeSeriesSample::validate() const {
  const std::string where = "series '" + id + "': ";
  if (times.size() < 2) throw DataError(where + "needs at least two time points");
  if (values.size() != times.size() || observed.size() != times.size())
    throw DataError(where + "values/mask length differs from time count");
  const std::size_t d = dims();
  if (d == 0) throw DataError(where + "has no channels");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (values[i].size() != d || observed[i].size() != d)
      throw DataError(where + "ragged channel count at index " + std::to_string(i));
    if (i > 0 && !(times[i] > times[i - 1]))
      throw DataError(where + "times are not strictly increasing at index " + std::to_string(i));
  }
  for (std::size_t c = 0; c < d; ++c)
    if (observed_count(c) < 2)
      throw DataError(where + "channel " + std::to_string(c) + " has fewer than two observations");
  for (double t : target_times)
    if (t <= times.back()) throw DataError(where + "target time overlaps the input window");
  for (const auto& row : target)
    if (row.size() != d) throw DataError(where + "target width differs from input width");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.task = task;
  out.dims = dims;
  out.classes = classes;
  out.horizon = horizon;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

void Dataset::validate() const {
  for (const TimeSeriesSample& s : samples) {
    s.validate();
    if (s.dims() != dims) throw DataError("series '" + s.id + "' has a different channel count");
    if (task == TaskKind::classify && (s.label < 0 || static_cast<std::size_t>(s.label) >= classes))
      throw DataError("series '" + s.id + "' has label outside [0, classes)");
    if (task == TaskKind::forecast && s.target.size() != horizon)
      throw DataError("series '" + s.id + "' has a target length different from the horizon");
  }
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "damped_oscillator" || name == "oscillator") return SyntheticKind::damped_oscillator;
  if (name == "spiral") return SyntheticKind::spiral;
  if (name == "constant_levels" || name == "levels") return SyntheticKind::constant_levels;
  throw ConfigError("unknown synthetic dataset kind '" + name + "'");
}

std::string synthetic_kind_name(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::damped_oscillator: return "damped_oscillator";
    case SyntheticKind::spiral: return "spiral";
    case SyntheticKind::constant_levels: return "constant_levels";
  }
  return "damped_oscillator";
}

namespace {

std::vector<double> uniform_times(std::size_t n, double dt, double start = 0.0) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = start + dt * static_cast<double>(i);
  return t;
}

TimeSeriesSample blank_sample(std::size_t index, std::vector<double> times, std::size_t d) {
  TimeSeriesSample s;
  s.id = "s" + std::to_string(index);
  const std::size_t n = times.size();
  s.times = std::move(times);
  s.values.assign(n, std::vector<double>(d, 0.0));
  s.observed.assign(n, std::vector<bool>(d, true));
  return s;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.length < 10) throw ContractError("synthetic series need length >= 10");
  if (spec.n_samples == 0) throw ContractError("synthetic dataset needs at least one sample");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double dt = spec.time_span / static_cast<double>(spec.length - 1);
  const double two_pi = 2.0 * std::numbers::pi;
  Dataset data;

  switch (spec.kind) {
    case SyntheticKind::damped_oscillator:
    case SyntheticKind::constant_levels: {
      if (spec.classes < 2) throw ContractError("classification data needs at least 2 classes");
      if (spec.channels == 0) throw ContractError("synthetic data needs at least one channel");
      data.task = TaskKind::classify;
      data.dims = spec.channels;
      data.classes = spec.classes;
      for (std::size_t n = 0; n < spec.n_samples; ++n) {
        const int k = static_cast<int>(n % spec.classes);
        TimeSeriesSample s = blank_sample(n, uniform_times(spec.length, dt), spec.channels);
        s.label = k;
        for (std::size_t c = 0; c < spec.channels; ++c) {
          const double phase = two_pi * unit(rng);
          for (std::size_t i = 0; i < spec.length; ++i) {
            const double t = s.times[i];
            double clean;
            if (spec.kind == SyntheticKind::damped_oscillator) {
              // class k completes 2(k+1) cycles over the window and decays faster
              const double omega = two_pi * 2.0 * (k + 1) / spec.time_span;
              const double gamma = 0.5 * (k + 1) / spec.time_span;
              clean = std::exp(-gamma * t) * std::sin(omega * t + phase);
            } else {
              clean = static_cast<double>(k) - 0.5 * static_cast<double>(spec.classes - 1);
            }
            s.values[i][c] = clean + spec.noise * gauss(rng);
          }
        }
        data.samples.push_back(std::move(s));
      }
      break;
    }
    case SyntheticKind::spiral: {
      if (spec.horizon < 1) throw ContractError("forecast horizon must be at least 1");
      data.task = TaskKind::forecast;
      data.dims = 2;
      data.horizon = spec.horizon;
      for (std::size_t n = 0; n < spec.n_samples; ++n) {
        const double r0 = 0.5 + unit(rng);
        const double decay = (0.5 + 1.5 * unit(rng)) / spec.time_span;
        const double omega = (unit(rng) < 0.5 ? -1.0 : 1.0) * two_pi * (0.5 + unit(rng)) / spec.time_span;
        const double phase = two_pi * unit(rng);
        auto point = [&](double t, std::size_t c) {
          const double r = r0 * std::exp(-decay * t);
          return c == 0 ? r * std::cos(omega * t + phase) : r * std::sin(omega * t + phase);
        };
        TimeSeriesSample s = blank_sample(n, uniform_times(spec.length, dt), 2);
        for (std::size_t i = 0; i < spec.length; ++i)
          for (std::size_t c = 0; c < 2; ++c) s.values[i][c] = point(s.times[i], c) + spec.noise * gauss(rng);
        s.target_times = uniform_times(spec.horizon, dt, s.times.back() + dt);
        for (double t : s.target_times) s.target.push_back({point(t, 0), point(t, 1)});
        data.samples.push_back(std::move(s));
      }
      break;
    }
  }
  return data;
}

Dataset drop_observations(const Dataset& data, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw ContractError("drop rate must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  Dataset out = data;
  for (TimeSeriesSample& s : out.samples) {
    const std::size_t n = s.length();
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
    if (n - count < 2)
      throw ContractError("dropping " + std::to_string(count) + " of " + std::to_string(n) +
                          " points leaves fewer than two observations");
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < s.dims(); ++c) {
      std::vector<bool> keep(n);
      for (std::size_t i = 0; i < n; ++i) keep[i] = s.observed[i][c];
      // Resample positions when an already sparse channel would fall below two points.
      bool ok = false;
      std::vector<bool> trial;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        trial = keep;
        for (std::size_t j = 0; j < count; ++j) trial[order[j]] = false;
        ok = std::count(trial.begin(), trial.end(), true) >= 2;
      }
      if (!ok) throw DataError("series '" + s.id + "' cannot keep two observations in channel " +
                               std::to_string(c));
      for (std::size_t i = 0; i < n; ++i) s.observed[i][c] = trial[i];
    }
  }
  return out;
}

// ---- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t line, const std::string& path) {
  const std::string f = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
    throw ParseError(path + ":" + std::to_string(line) + ": '" + f + "' is not a finite number");
  return v;
}

struct CsvTable {
  std::size_t dims = 0;
  bool has_label = false;
  // series id -> rows in file order
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<std::size_t, std::vector<std::string>>>> rows;
};

CsvTable read_table(const std::string& path, bool allow_label) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  std::vector<std::string> header = split_fields(line);
  for (auto& h : header) h = trim(h);
  CsvTable table;
  if (header.size() < 3 || header[0] != "series_id" || header[1] != "t")
    throw ParseError(path + ":1: header must start with series_id,t,x_0");
  table.has_label = header.back() == "label";
  if (table.has_label && !allow_label) throw ParseError(path + ":1: target file must not have a label column");
  table.dims = header.size() - 2 - (table.has_label ? 1 : 0);
  if (table.dims == 0) throw ParseError(path + ":1: no value columns");
  for (std::size_t c = 0; c < table.dims; ++c)
    if (header[2 + c] != "x_" + std::to_string(c))
      throw ParseError(path + ":1: expected column x_" + std::to_string(c) + ", found '" + header[2 + c] + "'");
  std::size_t lineno = 1;
  std::string previous;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(f.size()));
    const std::string id = trim(f[0]);
    if (id.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": empty series_id");
    if (id != previous && table.rows.count(id))
      throw DataError(path + ":" + std::to_string(lineno) + ": rows of series '" + id + "' are not contiguous");
    if (!table.rows.count(id)) table.order.push_back(id);
    table.rows[id].emplace_back(lineno, std::move(f));
    previous = id;
  }
  return table;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& targets_path) {
  CsvTable table = read_table(path, true);
  Dataset data;
  data.dims = table.dims;
  data.task = table.has_label ? TaskKind::classify : TaskKind::forecast;
  int max_label = -1;
  for (const std::string& id : table.order) {
    TimeSeriesSample s;
    s.id = id;
    for (const auto& [lineno, f] : table.rows.at(id)) {
      const double t = parse_number(f[1], lineno, path);
      if (!s.times.empty() && !(t > s.times.back()))
        throw DataError(path + ":" + std::to_string(lineno) + ": times of series '" + id +
                        "' are not strictly increasing");
      s.times.push_back(t);
      std::vector<double> v(table.dims, 0.0);
      std::vector<bool> m(table.dims, false);
      for (std::size_t c = 0; c < table.dims; ++c) {
        if (trim(f[2 + c]).empty()) continue;
        v[c] = parse_number(f[2 + c], lineno, path);
        m[c] = true;
      }
      s.values.push_back(std::move(v));
      s.observed.push_back(std::move(m));
      if (table.has_label) {
        const double raw = parse_number(f.back(), lineno, path);
        const int label = static_cast<int>(raw);
        if (raw != label || label < 0)
          throw ParseError(path + ":" + std::to_string(lineno) + ": label must be a non-negative integer");
        if (s.label >= 0 && s.label != label)
          throw DataError(path + ":" + std::to_string(lineno) + ": label changes within series '" + id + "'");
        s.label = label;
      }
    }
    max_label = std::max(max_label, s.label);
    data.samples.push_back(std::move(s));
  }
  if (data.task == TaskKind::classify) data.classes = static_cast<std::size_t>(max_label + 1);

  if (!targets_path.empty()) {
    CsvTable targets = read_table(targets_path, false);
    if (targets.dims != data.dims) throw DataError("target file has a different channel count");
    std::size_t horizon = 0;
    bool first = true;
    for (TimeSeriesSample& s : data.samples) {
      auto it = targets.rows.find(s.id);
      if (it == targets.rows.end()) throw DataError("no targets for series '" + s.id + "'");
      for (const auto& [lineno, f] : it->second) {
        const double t = parse_number(f[1], lineno, targets_path);
        if (!s.target_times.empty() && !(t > s.target_times.back()))
          throw DataError(targets_path + ":" + std::to_string(lineno) + ": target times not increasing");
        s.target_times.push_back(t);
        std::vector<double> v(data.dims);
        for (std::size_t c = 0; c < data.dims; ++c) {
          if (trim(f[2 + c]).empty())
            throw DataError(targets_path + ":" + std::to_string(lineno) + ": targets cannot be blank");
          v[c] = parse_number(f[2 + c], lineno, targets_path);
        }
        s.target.push_back(std::move(v));
      }
      if (first) horizon = s.target.size();
      if (s.target.size() != horizon) throw DataError("series have differing forecast horizons");
      first = false;
    }
    data.horizon = horizon;
    data.task = TaskKind::forecast;
  }
  data.validate();
  return data;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_header(std::ofstream& out, std::size_t dims, bool label) {
  out << "series_id,t";
  for (std::size_t c = 0; c < dims; ++c) out << ",x_" << c;
  if (label) out << ",label";
  out << '\n';
}

}  // namespace

void write_csv(const Dataset& data, const std::string& path, const std::string& targets_path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const bool label = data.task == TaskKind::classify;
  write_header(out, data.dims, label);
  for (const TimeSeriesSample& s : data.samples) {
    for (std::size_t i = 0; i < s.length(); ++i) {
      out << s.id << ',' << fmt(s.times[i]);
      for (std::size_t c = 0; c < data.dims; ++c) {
        out << ',';
        if (s.observed[i][c]) out << fmt(s.values[i][c]);
      }
      if (label) out << ',' << s.label;
      out << '\n';
    }
  }
  if (data.task != TaskKind::forecast || targets_path.empty()) return;
  std::ofstream tout(targets_path);
  if (!tout) throw DataError("cannot write '" + targets_path + "'");
  write_header(tout, data.dims, false);
  for (const TimeSeriesSample& s : data.samples)
    for (std::size_t i = 0; i < s.target.size(); ++i) {
      tout << s.id << ',' << fmt(s.target_times[i]);
      for (double v : s.target[i]) tout << ',' << fmt(v);
      tout << '\n';
    }
}

DatasetSplit split(std::size_t n, const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.size() != 3) throw ContractError("split needs (train, val, test) fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ContractError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions[2] * static_cast<double>(n)));
  if (n_val + n_test >= n || n_val == 0 || n_test == 0)
    throw ContractError("split of " + std::to_string(n) + " samples leaves an empty partition");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  DatasetSplit s;
  s.seed = seed;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val),
                perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), perm.end());
  return s;
}

}  // namespace leap
