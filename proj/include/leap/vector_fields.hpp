#pragma once

// Multilayer perceptrons used as vector fields and as the small affine maps
// between latent spaces. Inputs are batched row-wise: [B, in] -> [B, out].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leap/tensor.hpp"

namespace leap {

enum class Activation { none, relu, elu, tanh };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

struct MlpSpec {
  // Input width followed by each layer's output width.
  std::vector<std::size_t> layer_widths;
  Activation hidden_activation = Activation::relu;
  Activation final_activation = Activation::tanh;
  bool bias = true;
  // Interpret the final output as a row-major (rows x cols) matrix.
  std::optional<std::pair<std::size_t, std::size_t>> reshape_to_matrix;

  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t output_dim() const { return layer_widths.back(); }
  std::size_t layers() const { return layer_widths.size() - 1; }
  void validate() const;

  // Single fully-connected layer with no activation.
  static MlpSpec affine(std::size_t in, std::size_t out, bool bias = true);
};

class Mlp {
 public:
  Mlp() = default;
  // Weights and biases drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(MlpSpec spec, std::uint64_t seed);

  static Mlp zeros(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  Tensor operator()(const Tensor& x) const;

  // weight[l] is [in, out] so that a layer computes x W + b.
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }
  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }

  // "<prefix>.<layer>.weight" / "<prefix>.<layer>.bias" pairs in a stable order.
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;

  // A single bias-free linear layer with no activation.
  bool is_linear_no_bias() const;

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Matrix-valued CDE field applied to a control derivative:
// out[b] = M(state[b]) v[b] with M reshaped to (rows x cols).
Tensor cde_apply(const Mlp& field, const Tensor& state, const Tensor& control_derivative);

// The field's matrix for a single state row, shaped [rows, cols].
Tensor eval_cde_field(const Mlp& field, const Tensor& state);

struct MapJacobian {
  Tensor value;     // [B, D]
  Tensor jacobian;  // [B, D*H]; row b is the row-major D x H Jacobian at h[b]
};

// Value of m and its Jacobian, one vjp per output coordinate. The result is
// differentiable when gradients are being recorded.
MapJacobian eval_map_and_jacobian(const Mlp& m, const Tensor& h);

// dY/dt = (dm/dh) v per row. Exact closed form for a bias-free linear m,
// Jacobian-based otherwise.
Tensor map_velocity(const Mlp& m, const Tensor& h, const Tensor& v);

// ---- model parameter sets --------------------------------------------------

enum class TaskKind { classify, forecast };

TaskKind parse_task(const std::string& name);
std::string task_name(TaskKind t);

// How an observation is lifted into decoder space to start a density segment.
enum class DensityLift { affine, identity };

DensityLift parse_lift(const std::string& name);
std::string lift_name(DensityLift l);

struct Architecture {
  TaskKind task = TaskKind::classify;
  std::size_t x_dim = 1;
  std::size_t e_dim = 32;
  std::size_t h_dim = 32;
  std::size_t z_dim = 32;
  std::size_t width = 32;
  std::size_t output_dim = 2;  // classes, or horizon * x_dim
  std::size_t horizon = 0;     // forecasting only
  // Layer counts for the CDE fields k and g and the decoder f.
  std::size_t k_layers = 4;
  std::size_t g_layers = 4;
  std::size_t f_layers = 2;
  Activation k_hidden = Activation::relu;
  Activation g_hidden = Activation::relu;
  Activation f_hidden = Activation::relu;
  // Hidden layers of m; 0 means the bias-free linear map.
  std::size_t m_layers = 1;
  DensityLift lift = DensityLift::affine;

  void validate() const;
  // Depth and activations of the reference architectures with the given widths.
  static Architecture defaults(TaskKind task, std::size_t x_dim, std::size_t output_dim,
                               std::size_t width = 32);
};

struct LeapParams {
  Architecture arch;
  Mlp theta_k;  // e -> e x x
  Mlp theta_f;  // (h, t) -> h
  Mlp theta_g;  // z -> z x y
  Mlp theta_m;  // h -> y, y-dim = x-dim
  Mlp phi_z;    // x -> z
  Mlp phi_h;    // e -> h
  Mlp phi_e;    // x -> e
  Mlp psi;      // x -> h (empty under the identity lift)
  Mlp output_layer;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

LeapParams build_leap_params(const Architecture& arch, std::uint64_t seed);

struct NcdeParams {
  Architecture arch;
  Mlp phi_z;  // x -> z
  Mlp field;  // z -> z x x
  Mlp output_layer;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

NcdeParams build_ncde_params(const Architecture& arch, std::uint64_t seed);

}  // namespace leap
