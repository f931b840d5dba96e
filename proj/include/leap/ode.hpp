#pragma once

// Fixed-step explicit solvers over differentiable vector fields. Gradients
// flow through the unrolled steps (discretize-then-optimize).

#include <functional>
#include <utility>
#include <vector>

#include "leap/tensor.hpp"

namespace leap {

enum class SolverMethod { euler, rk4 };

struct SolveSpec {
  SolverMethod method = SolverMethod::rk4;
  std::vector<double> t_grid;
  std::size_t substeps = 4;

  void validate() const;
};

// A state made of independent tensor blocks, e.g. {z, h} for a joint solve.
using State = std::vector<Tensor>;

using VectorField = std::function<State(const State& state, double t)>;
using TensorField = std::function<Tensor(const Tensor& state, double t)>;

// Returns the state derivative together with the value of a running
// integrand at the same (state, t). Both come from one field evaluation,
// which lets the integrand reuse intermediate graph nodes.
using FieldWithIntegrand = std::function<std::pair<State, Tensor>(const State& state, double t)>;

// States at every grid time; element 0 is the initial state.
std::vector<State> solve_ivp(const VectorField& field, const State& z0, const SolveSpec& spec);
std::vector<Tensor> solve_ivp(const TensorField& field, const Tensor& z0, const SolveSpec& spec);

struct QuadratureSolution {
  std::vector<State> trajectory;
  // Integral of the integrand over [t_grid.front(), t_grid.back()], same
  // scheme as the state.
  Tensor integral;
};

QuadratureSolution solve_with_quadrature(const FieldWithIntegrand& field, const State& z0,
                                         const SolveSpec& spec);

QuadratureSolution solve_with_quadrature(const TensorField& field,
                                         const std::function<Tensor(const Tensor&, double)>& integrand,
                                         const Tensor& z0, const SolveSpec& spec);

// Uniform grid helper: `intervals` equal steps over [t0, t1].
std::vector<double> uniform_grid(double t0, double t1, std::size_t intervals);

}  // namespace leap
