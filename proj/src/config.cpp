#include "leap/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "leap/errors.hpp"

namespace leap {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(key + ": '" + value + "' is not a number");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(key + ": '" + value + "' is not a non-negative integer");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

SolverMethod parse_solver(const std::string& s) {
  if (s == "rk4") return SolverMethod::rk4;
  if (s == "euler") return SolverMethod::euler;
  throw ConfigError("unknown solver '" + s + "' (expected euler or rk4)");
}

std::string solver_name(SolverMethod m) { return m == SolverMethod::rk4 ? "rk4" : "euler"; }

InterpolationScheme parse_scheme(const std::string& s) {
  if (s == "natural_cubic" || s == "cubic") return InterpolationScheme::natural_cubic;
  if (s == "linear") return InterpolationScheme::linear;
  throw ConfigError("unknown interpolation '" + s + "'");
}

std::string scheme_name(InterpolationScheme s) {
  return s == InterpolationScheme::natural_cubic ? "natural_cubic" : "linear";
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string join(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (const std::string& s : split_csv(csv)) out.push_back(to_uint("seeds", s));
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  for (const std::string& s : split_csv(csv)) out.push_back(to_double("list", s));
  if (out.empty()) throw ConfigError("list is empty");
  return out;
}

RunConfig RunConfig::defaults(TaskKind task) {
  RunConfig c;
  c.task = task;
  const Architecture a = Architecture::defaults(task, 1, task == TaskKind::classify ? 2 : 1);
  c.model.k_layers = a.k_layers;
  c.model.g_layers = a.g_layers;
  c.model.f_layers = a.f_layers;
  c.model.k_hidden = a.k_hidden;
  c.model.g_hidden = a.g_hidden;
  c.model.f_hidden = a.f_hidden;
  if (task == TaskKind::classify) {
    c.data.synthetic.kind = SyntheticKind::damped_oscillator;
    c.train.alpha = c.train.beta = 1e-6;
    c.train.patience = 50;
    c.train.max_iter = 200;
    c.train.metric = Metric::accuracy;
  } else {
    c.data.synthetic.kind = SyntheticKind::spiral;
    c.train.alpha = c.train.beta = 1e-4;
    c.train.patience = 100;
    c.train.max_iter = 1000;
    c.train.metric = Metric::mse;
  }
  return c;
}

std::vector<std::string> RunConfig::preset_names() {
  return {"toy", "toy_classify", "toy_forecast", "spiral_forecast"};
}

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "toy" || name == "toy_classify") {
    RunConfig c = defaults(TaskKind::classify);
    const bool tiny = name == "toy";
    c.data.synthetic.n_samples = tiny ? 40 : 96;
    c.data.synthetic.length = tiny ? 12 : 20;
    c.data.synthetic.noise = 0.1;
    c.data.drop = 0.3;
    c.model.width = c.model.e_dim = c.model.h_dim = c.model.z_dim = tiny ? 8 : 16;
    c.train.max_iter = tiny ? 5 : 40;
    c.train.lr = 5e-3;
    c.train.solver.substeps = tiny ? 1 : 2;
    c.out_dir = "runs/" + name;
    return c;
  }
  if (name == "toy_forecast" || name == "spiral_forecast") {
    RunConfig c = defaults(TaskKind::forecast);
    const bool toy = name == "toy_forecast";
    c.data.synthetic.n_samples = toy ? 48 : 256;
    c.data.synthetic.length = 20;
    c.data.synthetic.horizon = toy ? 5 : 10;
    c.data.drop = 0.5;
    c.model.width = c.model.e_dim = c.model.h_dim = c.model.z_dim = toy ? 8 : 16;
    c.train.max_iter = toy ? 5 : 150;
    c.train.patience = toy ? 5 : 100;
    c.train.lr = 5e-3;
    c.train.solver.substeps = toy ? 1 : 2;
    c.out_dir = "runs/" + name;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto as_size = [&] { return static_cast<std::size_t>(to_uint(key, value)); };
  auto as_double = [&] { return to_double(key, value); };
  SyntheticSpec& syn = data.synthetic;

  if (key == "run.task") task = parse_task(value);
  else if (key == "run.seeds") seeds = parse_seed_list(value);
  else if (key == "run.out") out_dir = value;
  else if (key == "run.preset") throw ConfigError("run.preset can only appear in a config file");
  else if (key == "data.source") {
    if (value != "synthetic" && value != "csv") throw ConfigError("data.source must be synthetic or csv");
    data.source = value;
  } else if (key == "data.kind") syn.kind = parse_synthetic_kind(value);
  else if (key == "data.n_samples") syn.n_samples = as_size();
  else if (key == "data.length") syn.length = as_size();
  else if (key == "data.horizon") syn.horizon = as_size();
  else if (key == "data.channels") syn.channels = as_size();
  else if (key == "data.classes") syn.classes = as_size();
  else if (key == "data.noise") syn.noise = as_double();
  else if (key == "data.time_span") syn.time_span = as_double();
  else if (key == "data.csv") data.csv_path = value;
  else if (key == "data.targets") data.targets_path = value;
  else if (key == "data.drop") data.drop = as_double();
  else if (key == "data.seed") data.seed = to_uint(key, value);
  else if (key == "data.split") data.split = parse_double_list(value);
  else if (key == "model.kind") model.kind = parse_model_kind(value);
  else if (key == "model.width") model.width = as_size();
  else if (key == "model.e_dim") model.e_dim = as_size();
  else if (key == "model.h_dim") model.h_dim = as_size();
  else if (key == "model.z_dim") model.z_dim = as_size();
  else if (key == "model.k_layers") model.k_layers = as_size();
  else if (key == "model.g_layers") model.g_layers = as_size();
  else if (key == "model.f_layers") model.f_layers = as_size();
  else if (key == "model.k_hidden") model.k_hidden = parse_activation(value);
  else if (key == "model.g_hidden") model.g_hidden = parse_activation(value);
  else if (key == "model.f_hidden") model.f_hidden = parse_activation(value);
  else if (key == "model.m_layers") model.m_layers = as_size();
  else if (key == "model.lift") model.lift = parse_lift(value);
  else if (key == "train.alpha") train.alpha = as_double();
  else if (key == "train.beta") train.beta = as_double();
  else if (key == "train.lr") train.lr = as_double();
  else if (key == "train.batch_size") train.batch_size = as_size();
  else if (key == "train.max_iter") train.max_iter = as_size();
  else if (key == "train.patience") train.patience = as_size();
  else if (key == "train.solver") train.solver.method = parse_solver(value);
  else if (key == "train.substeps") train.solver.substeps = as_size();
  else if (key == "train.noise") train.noise.distribution = parse_noise(value);
  else if (key == "train.noise_samples") train.noise.samples_per_segment = as_size();
  else if (key == "train.interpolation") train.scheme = parse_scheme(value);
  else if (key == "train.metric") train.metric = parse_metric(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  const SyntheticSpec& s = data.synthetic;
  return {
      {"run.task", task_name(task)},
      {"run.seeds", join(seeds)},
      {"run.out", out_dir},
      {"data.source", data.source},
      {"data.kind", synthetic_kind_name(s.kind)},
      {"data.n_samples", fmt(s.n_samples)},
      {"data.length", fmt(s.length)},
      {"data.horizon", fmt(s.horizon)},
      {"data.channels", fmt(s.channels)},
      {"data.classes", fmt(s.classes)},
      {"data.noise", fmt(s.noise)},
      {"data.time_span", fmt(s.time_span)},
      {"data.csv", data.csv_path},
      {"data.targets", data.targets_path},
      {"data.drop", fmt(data.drop)},
      {"data.seed", std::to_string(data.seed)},
      {"data.split", join(data.split)},
      {"model.kind", model_kind_name(model.kind)},
      {"model.width", fmt(model.width)},
      {"model.e_dim", fmt(model.e_dim)},
      {"model.h_dim", fmt(model.h_dim)},
      {"model.z_dim", fmt(model.z_dim)},
      {"model.k_layers", fmt(model.k_layers)},
      {"model.g_layers", fmt(model.g_layers)},
      {"model.f_layers", fmt(model.f_layers)},
      {"model.k_hidden", activation_name(model.k_hidden)},
      {"model.g_hidden", activation_name(model.g_hidden)},
      {"model.f_hidden", activation_name(model.f_hidden)},
      {"model.m_layers", fmt(model.m_layers)},
      {"model.lift", lift_name(model.lift)},
      {"train.alpha", fmt(train.alpha)},
      {"train.beta", fmt(train.beta)},
      {"train.lr", fmt(train.lr)},
      {"train.batch_size", fmt(train.batch_size)},
      {"train.max_iter", fmt(train.max_iter)},
      {"train.patience", fmt(train.patience)},
      {"train.solver", solver_name(train.solver.method)},
      {"train.substeps", fmt(train.solver.substeps)},
      {"train.noise", noise_name(train.noise.distribution)},
      {"train.noise_samples", fmt(train.noise.samples_per_segment)},
      {"train.interpolation", scheme_name(train.scheme)},
      {"train.metric", metric_name(train.metric)},
  };
}

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const auto& [key, value] : entries()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seed list is empty");
  train.validate();
  if (data.source == "csv" && data.csv_path.empty()) throw ConfigError("data.csv is required for csv data");
  if (data.drop < 0.0 || data.drop >= 1.0) throw ConfigError("data.drop must lie in [0, 1)");
  if (data.split.size() != 3) throw ConfigError("data.split needs three fractions");
  if (model.width == 0 || model.e_dim == 0 || model.h_dim == 0 || model.z_dim == 0)
    throw ConfigError("model widths must be positive");
  if (train.metric == Metric::mse && task != TaskKind::forecast)
    throw ConfigError("mse metric needs a forecasting task");
  if (train.metric != Metric::mse && task == TaskKind::forecast)
    throw ConfigError("forecasting is scored by mse");
}

Dataset RunConfig::load_dataset() const {
  Dataset d;
  if (data.source == "csv") {
    d = load_csv(data.csv_path, data.targets_path);
  } else {
    SyntheticSpec s = data.synthetic;
    s.seed = data.seed;
    d = generate_synthetic(s);
  }
  if (d.task != task)
    throw DataError("dataset is a " + task_name(d.task) + " set but the run is configured for " + task_name(task));
  if (data.drop > 0.0) d = drop_observations(d, data.drop, data.seed ^ 0xd50bULL);
  return d;
}

Architecture RunConfig::architecture(const Dataset& d) const {
  const std::size_t out = task == TaskKind::classify ? d.classes : d.horizon * d.dims;
  Architecture a = Architecture::defaults(task, d.dims, out, model.width);
  a.horizon = task == TaskKind::forecast ? d.horizon : 0;
  a.e_dim = model.e_dim;
  a.h_dim = model.h_dim;
  a.z_dim = model.z_dim;
  a.k_layers = model.k_layers;
  a.g_layers = model.g_layers;
  a.f_layers = model.f_layers;
  a.k_hidden = model.k_hidden;
  a.g_hidden = model.g_hidden;
  a.f_hidden = model.f_hidden;
  a.m_layers = model.m_layers;
  a.lift = model.lift;
  a.validate();
  return a;
}

RunConfig parse_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [key, node] : tree)
    if (!node.data().empty() && node.empty())
      throw ConfigError("config key '" + key + "' must live in a section");

  RunConfig c;
  const std::string preset = tree.get<std::string>("run.preset", "");
  if (!preset.empty()) {
    c = RunConfig::preset(preset);
  } else {
    TaskKind task = TaskKind::classify;
    if (auto t = tree.get_optional<std::string>("run.task")) {
      task = parse_task(trim(*t));
    } else if (auto k = tree.get_optional<std::string>("data.kind")) {
      task = parse_synthetic_kind(trim(*k)) == SyntheticKind::spiral ? TaskKind::forecast : TaskKind::classify;
    }
    c = RunConfig::defaults(task);
  }
  for (const auto& [section, node] : tree)
    for (const auto& [key, leaf] : node) {
      if (section == "run" && key == "preset") continue;
      c.set(section + "." + key, leaf.data());
    }
  return c;
}

RunConfig load_config(const std::string& name_or_path) {
  for (const std::string& p : RunConfig::preset_names())
    if (p == name_or_path) return RunConfig::preset(p);
  if (!std::filesystem::exists(name_or_path))
    throw ConfigError("'" + name_or_path + "' is neither a preset nor a readable file");
  std::ifstream in(name_or_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace leap
