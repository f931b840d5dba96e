#include "leap/likelihood.hpp"

#include "leap/errors.hpp"

namespace leap {

NoiseDistribution parse_noise(const std::string& name) {
  if (name == "rademacher") return NoiseDistribution::rademacher;
  if (name == "gaussian") return NoiseDistribution::gaussian;
  throw ConfigError("unknown noise distribution '" + name + "'");
}

std::string noise_name(NoiseDistribution d) {
  return d == NoiseDistribution::rademacher ? "rademacher" : "gaussian";
}

Tensor sample_noise(NoiseDistribution d, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::vector<double> v(rows * cols);
  if (d == NoiseDistribution::rademacher) {
    std::bernoulli_distribution coin(0.5);
    for (double& x : v) x = coin(rng) ? 1.0 : -1.0;
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& x : v) x = g(rng);
  }
  return Tensor::from({rows, cols}, std::move(v));
}

TraceEval eval_with_trace(const std::function<Tensor(const Tensor&)>& f, const Tensor& state,
                          const Tensor& noise) {
  if (noise.shape() != state.shape())
    throw ContractError("noise shape " + shape_str(noise.shape()) + " differs from state shape " +
                        shape_str(state.shape()));
  const bool record = grad_enabled();
  EnableGradGuard enable;
  // A state that is not on the graph (or a no-grad caller) gets a leaf copy
  // so the Jacobian with respect to it can still be taken.
  Tensor input = (record && state.requires_grad()) ? state : state.detach_leaf();
  Tensor value = f(input);
  if (value.shape() != input.shape()) throw DimensionError("trace field must map a state to its own shape");
  Tensor trace = row_sum(mul(vjp(value, input, noise, record), noise));
  if (!record) return {value.detach(), trace.detach()};
  return {value, trace};
}

Tensor hutchinson_trace(const std::function<Tensor(const Tensor&)>& f, const Tensor& state,
                        const Tensor& noise) {
  return sum(eval_with_trace(f, state, noise).trace);
}

Tensor density_penalty(const Batch& batch, const LeapParams& params, const NoiseSpec& noise,
                       const SolveSpec& solver) {
  if (noise.samples_per_segment < 1) throw ContractError("samples_per_segment must be at least 1");
  const std::size_t b = batch.size();
  const std::size_t segments = batch.grid.size() - 1;
  const std::size_t reps = noise.samples_per_segment;
  const std::size_t rows = reps * segments * b;

  // Row layout: replicate-major, then segment, then sample.
  std::vector<Tensor> starts;
  starts.reserve(segments);
  for (std::size_t i = 0; i < segments; ++i) starts.push_back(batch.x_knots[i]);
  Tensor x_prev = concat(starts, 0);
  Tensor h0 = params.arch.lift == DensityLift::identity ? x_prev : params.psi(x_prev);
  if (reps > 1) h0 = concat(std::vector<Tensor>(reps, h0), 0);

  std::vector<double> t0(rows), dt(rows);
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < segments; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t row = (r * segments + i) * b + j;
        t0[row] = batch.grid[i];
        dt[row] = batch.grid[i + 1] - batch.grid[i];
      }
  const Tensor t0_col = Tensor::from({rows, 1}, std::move(t0));
  const Tensor dt_col = Tensor::from({rows, 1}, std::move(dt));

  std::mt19937_64 rng(noise.seed);
  const Tensor eps = sample_noise(noise.distribution, rows, h0.cols(), rng);

  // Each segment is integrated over local time s in [0, 1], t = t0 + s dt.
  FieldWithIntegrand field = [&](const State& st, double s) {
    Tensor t_col = add(t0_col, scale(dt_col, s));
    TraceEval te = eval_with_trace([&](const Tensor& h) { return decoder_field(params.theta_f, h, t_col); },
                                   st[0], eps);
    return std::make_pair(State{mul(te.value, dt_col)}, sum(mul(te.trace, dt_col)));
  };
  SolveSpec spec = solver;
  spec.t_grid = {0.0, 1.0};
  Tensor total = solve_with_quadrature(field, State{h0}, spec).integral;
  return reps > 1 ? scale(total, 1.0 / static_cast<double>(reps)) : total;
}

}  // namespace leap
