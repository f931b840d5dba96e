#include "leap/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "leap/errors.hpp"

namespace leap {

namespace {

std::vector<std::pair<std::string, std::string>> arch_entries(const Architecture& a) {
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {{"task", task_name(a.task)},
          {"x_dim", n(a.x_dim)},
          {"e_dim", n(a.e_dim)},
          {"h_dim", n(a.h_dim)},
          {"z_dim", n(a.z_dim)},
          {"width", n(a.width)},
          {"output_dim", n(a.output_dim)},
          {"horizon", n(a.horizon)},
          {"k_layers", n(a.k_layers)},
          {"g_layers", n(a.g_layers)},
          {"f_layers", n(a.f_layers)},
          {"k_hidden", activation_name(a.k_hidden)},
          {"g_hidden", activation_name(a.g_hidden)},
          {"f_hidden", activation_name(a.f_hidden)},
          {"m_layers", n(a.m_layers)},
          {"lift", lift_name(a.lift)}};
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v.front() == '-')
    throw ParseError("checkpoint: bad value '" + v + "' for " + key);
  return static_cast<std::size_t>(out);
}

void set_arch(Architecture& a, const std::string& key, const std::string& v) {
  if (key == "task") a.task = parse_task(v);
  else if (key == "x_dim") a.x_dim = to_size(key, v);
  else if (key == "e_dim") a.e_dim = to_size(key, v);
  else if (key == "h_dim") a.h_dim = to_size(key, v);
  else if (key == "z_dim") a.z_dim = to_size(key, v);
  else if (key == "width") a.width = to_size(key, v);
  else if (key == "output_dim") a.output_dim = to_size(key, v);
  else if (key == "horizon") a.horizon = to_size(key, v);
  else if (key == "k_layers") a.k_layers = to_size(key, v);
  else if (key == "g_layers") a.g_layers = to_size(key, v);
  else if (key == "f_layers") a.f_layers = to_size(key, v);
  else if (key == "k_hidden") a.k_hidden = parse_activation(v);
  else if (key == "g_hidden") a.g_hidden = parse_activation(v);
  else if (key == "f_hidden") a.f_hidden = parse_activation(v);
  else if (key == "m_layers") a.m_layers = to_size(key, v);
  else if (key == "lift") a.lift = parse_lift(v);
  else throw ParseError("checkpoint: unknown architecture key '" + key + "'");
}

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line))
    if (!line.empty()) return true;
  return false;
}

}  // namespace

void write_checkpoint(const ModelParams& params, std::ostream& out) {
  out << "leap-checkpoint " << kCheckpointVersion << "\n";
  out << "model " << model_kind_name(params.kind) << "\n";
  for (const auto& [k, v] : arch_entries(params.arch())) out << "arch " << k << " " << v << "\n";
  char buf[40];
  for (const auto& [name, t] : params.named_parameters()) {
    out << "tensor " << name;
    for (std::size_t d : t.shape()) out << " " << d;
    out << "\n";
    const auto values = t.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out << buf << (i + 1 == values.size() ? "\n" : " ");
    }
  }
  if (!out) throw Error("checkpoint: write failed");
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(params, out);
}

ModelParams read_checkpoint(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line != "leap-checkpoint " + std::to_string(kCheckpointVersion))
    throw ParseError("checkpoint: missing or unsupported header");
  if (!next_line(in, line) || line.rfind("model ", 0) != 0) throw ParseError("checkpoint: missing model line");
  const ModelKind kind = parse_model_kind(line.substr(6));

  Architecture arch;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> tensors;
  while (next_line(in, line)) {
    std::istringstream ls(line);
    std::string tag, key;
    ls >> tag >> key;
    if (tag == "arch") {
      std::string value;
      ls >> value;
      set_arch(arch, key, value);
    } else if (tag == "tensor") {
      std::vector<std::size_t> dims;
      std::size_t d = 0, count = 1;
      while (ls >> d) {
        dims.push_back(d);
        count *= d;
      }
      std::string values_line;
      if (!next_line(in, values_line)) throw ParseError("checkpoint: tensor " + key + " has no values");
      std::istringstream vs(values_line);
      std::vector<double> values;
      std::string tok;
      while (vs >> tok) {
        try {
          values.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw ParseError("checkpoint: bad number '" + tok + "' in tensor " + key);
        }
      }
      if (values.size() != count) throw ParseError("checkpoint: tensor " + key + " has the wrong value count");
      if (!tensors.emplace(key, std::make_pair(dims, std::move(values))).second)
        throw ParseError("checkpoint: duplicate tensor " + key);
    } else {
      throw ParseError("checkpoint: unexpected line '" + line + "'");
    }
  }

  arch.validate();
  ModelParams params = build_model(kind, arch, 0);
  const auto named = params.named_parameters();
  if (named.size() != tensors.size()) throw DataError("checkpoint: tensor count does not match the architecture");
  for (const auto& [name, t] : named) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint: missing tensor " + name);
    if (it->second.first != std::vector<std::size_t>(t.shape().begin(), t.shape().end()))
      throw DataError("checkpoint: tensor " + name + " has the wrong shape");
    Tensor leaf = t;
    std::copy(it->second.second.begin(), it->second.second.end(), leaf.mutable_data().begin());
  }
  return params;
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace leap
