#include "leap/ode.hpp"

#include <string>

#include "leap/errors.hpp"

namespace leap {

void SolveSpec::validate() const {
  if (t_grid.size() < 2) throw ContractError("solve grid needs at least two times");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1]))
      throw ContractError("solve grid must be strictly increasing");
  }
  if (substeps < 1) throw ContractError("substeps must be at least 1");
}

namespace {

// One field evaluation: state derivative plus the integrand value.
struct Stage {
  State deriv;
  Tensor integrand;
};

State axpy(const State& z, double h, const State& k) {
  State out;
  out.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (k[i].shape() != z[i].shape())
      throw DimensionError("field output block " + std::to_string(i) + " has shape " +
                           shape_str(k[i].shape()) + ", state has " + shape_str(z[i].shape()));
    out.push_back(add(z[i], scale(k[i], h)));
  }
  return out;
}

class Stepper {
 public:
  Stepper(const FieldWithIntegrand& field, SolverMethod method, bool with_integral)
      : field_(field), method_(method), with_integral_(with_integral) {}

  // Advances (z, acc) by one step of size h starting at t.
  void step(State& z, Tensor& acc, double t, double h) const {
    Stage k1 = eval(z, t);
    // The accumulator takes the integrand's shape at the first evaluation.
    if (with_integral_ && !acc.defined()) acc = Tensor::zeros(k1.integrand.shape());
    if (method_ == SolverMethod::euler) {
      State next = axpy(z, h, k1.deriv);
      if (with_integral_) acc = add(acc, scale(k1.integrand, h));
      z = std::move(next);
      return;
    }
    Stage k2 = eval(axpy(z, 0.5 * h, k1.deriv), t + 0.5 * h);
    Stage k3 = eval(axpy(z, 0.5 * h, k2.deriv), t + 0.5 * h);
    Stage k4 = eval(axpy(z, h, k3.deriv), t + h);
    State next;
    next.reserve(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      Tensor incr = add(add(k1.deriv[i], k4.deriv[i]), scale(add(k2.deriv[i], k3.deriv[i]), 2.0));
      next.push_back(add(z[i], scale(incr, h / 6.0)));
    }
    if (with_integral_) {
      Tensor incr = add(add(k1.integrand, k4.integrand),
                        scale(add(k2.integrand, k3.integrand), 2.0));
      acc = add(acc, scale(incr, h / 6.0));
    }
    z = std::move(next);
  }

 private:
  Stage eval(const State& z, double t) const {
    auto [d, q] = field_(z, t);
    if (d.size() != z.size())
      throw DimensionError("field returned " + std::to_string(d.size()) + " blocks for a " +
                           std::to_string(z.size()) + "-block state");
    return {std::move(d), std::move(q)};
  }

  const FieldWithIntegrand& field_;
  SolverMethod method_;
  bool with_integral_;
};

QuadratureSolution integrate(const FieldWithIntegrand& field, const State& z0,
                             const SolveSpec& spec, bool with_integral) {
  spec.validate();
  Stepper stepper(field, spec.method, with_integral);
  QuadratureSolution out;
  out.trajectory.reserve(spec.t_grid.size());
  out.trajectory.push_back(z0);
  State z = z0;
  Tensor acc;
  for (std::size_t g = 0; g + 1 < spec.t_grid.size(); ++g) {
    const double t0 = spec.t_grid[g];
    const double h = (spec.t_grid[g + 1] - t0) / static_cast<double>(spec.substeps);
    for (std::size_t s = 0; s < spec.substeps; ++s) {
      const double t = t0 + h * static_cast<double>(s);
      try {
        stepper.step(z, acc, t, h);
      } catch (const NumericError& e) {
        throw DivergenceError(t, e.what());
      }
    }
    out.trajectory.push_back(z);
  }
  if (with_integral) out.integral = acc;
  return out;
}

}  // namespace

std::vector<State> solve_ivp(const VectorField& field, const State& z0, const SolveSpec& spec) {
  FieldWithIntegrand wrapped = [&field](const State& z, double t) {
    return std::make_pair(field(z, t), Tensor());
  };
  return integrate(wrapped, z0, spec, false).trajectory;
}

std::vector<Tensor> solve_ivp(const TensorField& field, const Tensor& z0, const SolveSpec& spec) {
  VectorField wrapped = [&field](const State& z, double t) { return State{field(z[0], t)}; };
  std::vector<State> traj = solve_ivp(wrapped, State{z0}, spec);
  std::vector<Tensor> out;
  out.reserve(traj.size());
  for (State& s : traj) out.push_back(std::move(s[0]));
  return out;
}

QuadratureSolution solve_with_quadrature(const FieldWithIntegrand& field, const State& z0,
                                         const SolveSpec& spec) {
  return integrate(field, z0, spec, true);
}

QuadratureSolution solve_with_quadrature(
    const TensorField& field, const std::function<Tensor(const Tensor&, double)>& integrand,
    const Tensor& z0, const SolveSpec& spec) {
  FieldWithIntegrand wrapped = [&](const State& z, double t) {
    return std::make_pair(State{field(z[0], t)}, integrand(z[0], t));
  };
  return integrate(wrapped, State{z0}, spec, true);
}

std::vector<double> uniform_grid(double t0, double t1, std::size_t intervals) {
  if (intervals < 1) throw ContractError("uniform_grid needs at least one interval");
  std::vector<double> g(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i)
    g[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(intervals);
  g.back() = t1;
  return g;
}

}  // namespace leap
