#pragma once

// LEAP forward pass and the plain NCDE baseline.
//
// Samples in a batch share one normalized knot grid; every state is a
// [B, dim] tensor. The encoder NCDE reads the spline path X, its final state
// seeds the decoder NODE h, and the task CDE z is driven by the learnt path
// Y = m(h) through dz/dt = g(z) (dY/dh) f(h, t), solved jointly with h.

#include <functional>
#include <vector>

#include "leap/data.hpp"
#include "leap/interpolation.hpp"
#include "leap/ode.hpp"
#include "leap/tensor.hpp"
#include "leap/vector_fields.hpp"

namespace leap {

struct Batch {
  std::vector<double> grid;  // normalized knot times shared by every sample
  std::vector<ControlPath> paths;
  std::vector<Tensor> x_knots;     // per knot, [B, D] values of X(t_i)
  std::vector<Tensor> mask_knots;  // per knot, [B, D]; 1 where observed
  std::vector<int> labels;         // classification
  Tensor targets;                  // forecasting, [B, horizon * D]

  std::size_t size() const { return paths.size(); }
  std::size_t dims() const { return paths.front().channels(); }
  double end_time() const { return grid.back(); }
  // [B, D] control value / derivative at a normalized time.
  Tensor control_value(double t) const;
  Tensor control_derivative(double t) const;
};

// Normalized knot times of a sample (raw times mapped onto [0, N]).
std::vector<double> sample_grid(const TimeSeriesSample& s);

// Throws ContractError when the selected samples do not share a grid.
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 InterpolationScheme scheme = InterpolationScheme::natural_cubic);

// Partitions indices into batches of at most batch_size whose samples share
// a grid, keeping the input order within each grid group.
std::vector<std::vector<std::size_t>> group_batches(const Dataset& data,
                                                    const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size);

// The knot grid with the method and substeps of `solver`.
SolveSpec knot_spec(const Batch& batch, const SolveSpec& solver);

using ControlFn = std::function<Tensor(double t)>;

// dz/dt = field(z) dX/dt on the grid of `spec`.
std::vector<Tensor> solve_ncde(const Mlp& field, const Tensor& z0, const ControlFn& control_derivative,
                               const SolveSpec& spec);

// f(h, t) with t appended as the last input column.
Tensor decoder_field(const Mlp& f, const Tensor& h, double t);
Tensor decoder_field(const Mlp& f, const Tensor& h, const Tensor& t_column);

Tensor encode(const Batch& batch, const LeapParams& params, const SolveSpec& solver);

struct AugmentedState {
  Tensor z;
  Tensor h;

  State pack() const { return {z, h}; }
  static AugmentedState unpack(const State& s) { return {s.at(0), s.at(1)}; }
};

AugmentedState init_states(const Batch& batch, const Tensor& e_final, const LeapParams& params);

struct JointTrajectory {
  std::vector<Tensor> z;  // per grid time, [B, z_dim]
  std::vector<Tensor> h;
  std::vector<Tensor> y;  // m(h), [B, x_dim]
};

JointTrajectory solve_joint(const AugmentedState& init, const LeapParams& params, const SolveSpec& spec);

// Decoder alone: h trajectory on the grid of `spec`.
std::vector<Tensor> solve_decoder(const Tensor& h0, const Mlp& f, const SolveSpec& spec);

struct ModelOutput {
  TaskKind kind = TaskKind::classify;
  Tensor values;                // [B, classes] logits or [B, horizon * D] forecasts
  std::vector<Tensor> y_knots;  // LEAP only: Y(t_i) per knot
};

ModelOutput forward(const Batch& batch, const LeapParams& params, const SolveSpec& solver);
ModelOutput ncde_baseline_forward(const Batch& batch, const NcdeParams& params, const SolveSpec& solver);

struct PathExport {
  std::vector<double> grid;              // normalized times
  std::vector<std::vector<double>> x;    // [G][D]
  std::vector<std::vector<double>> y;    // [G][D]
};

// X and the learnt Y on an increasing grid inside [0, T].
PathExport export_paths(const TimeSeriesSample& sample, const LeapParams& params,
                        const std::vector<double>& grid, const SolveSpec& solver,
                        InterpolationScheme scheme = InterpolationScheme::natural_cubic);

}  // namespace leap
