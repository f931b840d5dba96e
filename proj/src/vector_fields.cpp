#include "leap/vector_fields.hpp"

#include <cmath>
#include <random>

#include "leap/errors.hpp"

namespace leap {

Activation parse_activation(const std::string& name) {
  if (name == "none") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
  }
  return "none";
}

TaskKind parse_task(const std::string& name) {
  if (name == "classify" || name == "classification") return TaskKind::classify;
  if (name == "forecast" || name == "forecasting") return TaskKind::forecast;
  throw ConfigError("unknown task '" + name + "'");
}

std::string task_name(TaskKind t) { return t == TaskKind::classify ? "classify" : "forecast"; }

namespace {

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::elu: return elu(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) throw ContractError("an MLP needs an input width and at least one layer");
  for (std::size_t w : layer_widths)
    if (w == 0) throw ContractError("MLP layer widths must be positive");
  if (reshape_to_matrix && reshape_to_matrix->first * reshape_to_matrix->second != output_dim())
    throw ContractError("reshape target " + std::to_string(reshape_to_matrix->first) + "x" +
                        std::to_string(reshape_to_matrix->second) + " does not match output width " +
                        std::to_string(output_dim()));
}

MlpSpec MlpSpec::affine(std::size_t in, std::size_t out, bool bias) {
  MlpSpec s;
  s.layer_widths = {in, out};
  s.hidden_activation = Activation::none;
  s.final_activation = Activation::none;
  s.bias = bias;
  return s;
}

Mlp::Mlp(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    const std::size_t in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    std::vector<double> w(in * out);
    for (double& v : w) v = u(rng);
    weights_.push_back(Tensor::parameter({in, out}, std::move(w)));
    if (spec_.bias) {
      std::vector<double> b(out);
      for (double& v : b) v = u(rng);
      biases_.push_back(Tensor::parameter({1, out}, std::move(b)));
    }
  }
}

Mlp Mlp::zeros(MlpSpec spec) {
  spec.validate();
  Mlp m;
  m.spec_ = std::move(spec);
  for (std::size_t l = 0; l < m.spec_.layers(); ++l) {
    const std::size_t in = m.spec_.layer_widths[l], out = m.spec_.layer_widths[l + 1];
    m.weights_.push_back(Tensor::parameter({in, out}, std::vector<double>(in * out, 0.0)));
    if (m.spec_.bias) m.biases_.push_back(Tensor::parameter({1, out}, std::vector<double>(out, 0.0)));
  }
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
  if (weights_.empty()) throw ContractError("evaluating an empty MLP");
  if (x.rank() != 2 || x.cols() != spec_.input_dim())
    throw DimensionError("MLP expects [B, " + std::to_string(spec_.input_dim()) + "] input, got " +
                         shape_str(x.shape()));
  Tensor y = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    y = matmul(y, weights_[l]);
    if (spec_.bias) y = add(y, biases_[l]);
    const bool last = l + 1 == weights_.size();
    y = activate(y, last ? spec_.final_activation : spec_.hidden_activation);
  }
  return y;
}

std::vector<std::pair<std::string, Tensor>> Mlp::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(prefix + "." + std::to_string(l) + ".weight", weights_[l]);
    if (spec_.bias) out.emplace_back(prefix + "." + std::to_string(l) + ".bias", biases_[l]);
  }
  return out;
}

bool Mlp::is_linear_no_bias() const {
  return spec_.layers() == 1 && !spec_.bias && spec_.final_activation == Activation::none;
}

namespace {

std::pair<std::size_t, std::size_t> matrix_shape(const Mlp& field) {
  if (!field.spec().reshape_to_matrix)
    throw ContractError("CDE field has no matrix reshape");
  return *field.spec().reshape_to_matrix;
}

}  // namespace

Tensor cde_apply(const Mlp& field, const Tensor& state, const Tensor& control_derivative) {
  auto [r, c] = matrix_shape(field);
  if (state.cols() != r) throw DimensionError("CDE field rows do not match state width");
  if (control_derivative.cols() != c)
    throw DimensionError("CDE field columns do not match control width");
  return bmv(field(state), control_derivative);
}

Tensor eval_cde_field(const Mlp& field, const Tensor& state) {
  auto [r, c] = matrix_shape(field);
  if (state.rows() != 1) throw DimensionError("eval_cde_field takes a single state row");
  return reshape(field(reshape(state, {1, state.numel()})), {r, c});
}

MapJacobian eval_map_and_jacobian(const Mlp& m, const Tensor& h) {
  const std::size_t d = m.spec().output_dim();
  const std::size_t b = h.rows();
  const bool record = grad_enabled();
  EnableGradGuard enable;
  // Outside of recording the Jacobian is taken on a detached leaf copy.
  Tensor input = (record && h.requires_grad()) ? h : h.detach_leaf();
  Tensor y = m(input);
  std::vector<Tensor> rows;
  rows.reserve(d);
  for (std::size_t r = 0; r < d; ++r) {
    std::vector<double> onehot(b * d, 0.0);
    for (std::size_t i = 0; i < b; ++i) onehot[i * d + r] = 1.0;
    rows.push_back(vjp(y, input, Tensor::from({b, d}, std::move(onehot)), record));
  }
  MapJacobian out;
  // Row b of the concatenation is J_b[0,:], J_b[1,:], ... i.e. row-major D x H.
  out.jacobian = concat(rows, 1);
  out.value = record ? y : y.detach();
  if (!record) out.jacobian = out.jacobian.detach();
  return out;
}

Tensor map_velocity(const Mlp& m, const Tensor& h, const Tensor& v) {
  if (m.is_linear_no_bias()) return matmul(v, m.weights()[0]);
  return bmv(eval_map_and_jacobian(m, h).jacobian, v);
}

// ---- parameter sets ----------------------------------------------------------

void Architecture::validate() const {
  if (x_dim == 0 || e_dim == 0 || h_dim == 0 || z_dim == 0 || width == 0)
    throw ConfigError("model dimensions must be positive");
  if (k_layers == 0 || g_layers == 0 || f_layers == 0)
    throw ConfigError("vector fields need at least one layer");
  if (task == TaskKind::classify && output_dim < 2)
    throw ContractError("classification needs at least 2 classes");
  if (task == TaskKind::forecast) {
    if (horizon < 1) throw ContractError("forecast horizon must be at least 1");
    if (output_dim != horizon * x_dim)
      throw ContractError("forecast output width must equal horizon * x_dim");
  }
  if (lift == DensityLift::identity && h_dim != x_dim)
    throw ConfigError("identity density lift requires h_dim == x_dim");
}

Architecture Architecture::defaults(TaskKind task, std::size_t x_dim, std::size_t output_dim,
                                    std::size_t width) {
  Architecture a;
  a.task = task;
  a.x_dim = x_dim;
  a.e_dim = a.h_dim = a.z_dim = a.width = width;
  a.output_dim = output_dim;
  if (task == TaskKind::forecast) {
    a.horizon = output_dim / x_dim;
    a.k_layers = 6;
    a.g_layers = 7;
    a.g_hidden = Activation::elu;
  }
  return a;
}

namespace {

MlpSpec cde_field_spec(std::size_t state, std::size_t control, std::size_t width,
                       std::size_t layers, Activation hidden) {
  MlpSpec s;
  s.layer_widths.push_back(state);
  for (std::size_t l = 0; l + 1 < layers; ++l) s.layer_widths.push_back(width);
  s.layer_widths.push_back(state * control);
  s.hidden_activation = hidden;
  s.final_activation = Activation::tanh;
  s.reshape_to_matrix = std::make_pair(state, control);
  return s;
}

MlpSpec decoder_spec(const Architecture& a) {
  MlpSpec s;
  s.layer_widths.push_back(a.h_dim + 1);
  for (std::size_t l = 0; l + 1 < a.f_layers; ++l) s.layer_widths.push_back(a.width);
  s.layer_widths.push_back(a.h_dim);
  s.hidden_activation = a.f_hidden;
  s.final_activation = Activation::tanh;
  return s;
}

MlpSpec map_spec(const Architecture& a) {
  if (a.m_layers <= 1) return MlpSpec::affine(a.h_dim, a.x_dim, false);
  MlpSpec s;
  s.layer_widths.push_back(a.h_dim);
  for (std::size_t l = 0; l + 1 < a.m_layers; ++l) s.layer_widths.push_back(a.width);
  s.layer_widths.push_back(a.x_dim);
  s.hidden_activation = Activation::relu;
  s.final_activation = Activation::none;
  return s;
}

void append(std::vector<std::pair<std::string, Tensor>>& out, const Mlp& m, const std::string& name) {
  auto p = m.named_parameters(name);
  out.insert(out.end(), p.begin(), p.end());
}

std::vector<Tensor> values_of(const std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

}  // namespace

LeapParams build_leap_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  // Each group gets its own stream so adding a group never perturbs the others.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1ea9u};
  std::vector<std::uint64_t> seeds(9);
  seq.generate(seeds.begin(), seeds.end());
  LeapParams p;
  p.arch = arch;
  p.theta_k = Mlp(cde_field_spec(arch.e_dim, arch.x_dim, arch.width, arch.k_layers, arch.k_hidden), seeds[0]);
  p.theta_f = Mlp(decoder_spec(arch), seeds[1]);
  p.theta_g = Mlp(cde_field_spec(arch.z_dim, arch.x_dim, arch.width, arch.g_layers, arch.g_hidden), seeds[2]);
  p.theta_m = Mlp(map_spec(arch), seeds[3]);
  p.phi_z = Mlp(MlpSpec::affine(arch.x_dim, arch.z_dim), seeds[4]);
  p.phi_h = Mlp(MlpSpec::affine(arch.e_dim, arch.h_dim), seeds[5]);
  p.phi_e = Mlp(MlpSpec::affine(arch.x_dim, arch.e_dim), seeds[6]);
  if (arch.lift == DensityLift::affine) p.psi = Mlp(MlpSpec::affine(arch.x_dim, arch.h_dim), seeds[7]);
  p.output_layer = Mlp(MlpSpec::affine(arch.z_dim, arch.output_dim), seeds[8]);
  return p;
}

std::vector<std::pair<std::string, Tensor>> LeapParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  append(out, theta_k, "theta_k");
  append(out, theta_f, "theta_f");
  append(out, theta_g, "theta_g");
  append(out, theta_m, "theta_m");
  append(out, phi_z, "phi_z");
  append(out, phi_h, "phi_h");
  append(out, phi_e, "phi_e");
  append(out, psi, "psi");
  append(out, output_layer, "output_layer");
  return out;
}

std::vector<Tensor> LeapParams::parameters() const { return values_of(named_parameters()); }

NcdeParams build_ncde_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9cdeu};
  std::vector<std::uint64_t> seeds(3);
  seq.generate(seeds.begin(), seeds.end());
  NcdeParams p;
  p.arch = arch;
  p.phi_z = Mlp(MlpSpec::affine(arch.x_dim, arch.z_dim), seeds[0]);
  p.field = Mlp(cde_field_spec(arch.z_dim, arch.x_dim, arch.width, arch.g_layers, arch.g_hidden), seeds[1]);
  p.output_layer = Mlp(MlpSpec::affine(arch.z_dim, arch.output_dim), seeds[2]);
  return p;
}

std::vector<std::pair<std::string, Tensor>> NcdeParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  append(out, phi_z, "phi_z");
  append(out, field, "field");
  append(out, output_layer, "output_layer");
  return out;
}

std::vector<Tensor> NcdeParams::parameters() const { return values_of(named_parameters()); }

DensityLift parse_lift(const std::string& s) {
  if (s == "affine") return DensityLift::affine;
  if (s == "identity") return DensityLift::identity;
  throw ConfigError("unknown density lift '" + s + "'");
}

std::string lift_name(DensityLift l) { return l == DensityLift::affine ? "affine" : "identity"; }

}  // namespace leap
