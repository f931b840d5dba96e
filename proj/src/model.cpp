#include "leap/model.hpp"

#include <cmath>
#include <map>

#include "leap/errors.hpp"

namespace leap {

namespace {

ControlPath fit_sample(const TimeSeriesSample& s, const std::vector<double>& grid,
                       InterpolationScheme scheme) {
  const std::size_t d = s.dims();
  std::vector<std::vector<double>> values(d, std::vector<double>(s.length()));
  std::vector<std::vector<bool>> observed(d, std::vector<bool>(s.length()));
  for (std::size_t i = 0; i < s.length(); ++i)
    for (std::size_t c = 0; c < d; ++c) {
      values[c][i] = s.values[i][c];
      observed[c][i] = s.observed[i][c];
    }
  return fit_path(scheme, grid, values, observed);
}

bool same_grid(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-9) return false;
  return true;
}

Batch batch_from_samples(const std::vector<const TimeSeriesSample*>& samples, TaskKind task,
                         InterpolationScheme scheme) {
  if (samples.empty()) throw ContractError("empty batch");
  Batch b;
  b.grid = sample_grid(*samples.front());
  const std::size_t d = samples.front()->dims();
  for (const TimeSeriesSample* s : samples) {
    if (s->dims() != d) throw DimensionError("batch mixes channel counts");
    if (!same_grid(sample_grid(*s), b.grid))
      throw ContractError("series '" + s->id + "' does not share the batch's time grid");
    b.paths.push_back(fit_sample(*s, b.grid, scheme));
    b.labels.push_back(s->label);
  }
  const std::size_t n = samples.size();
  for (std::size_t i = 0; i < b.grid.size(); ++i) {
    std::vector<double> x(n * d), m(n * d);
    for (std::size_t r = 0; r < n; ++r) {
      b.paths[r].value_into(b.grid[i], &x[r * d]);
      for (std::size_t c = 0; c < d; ++c) m[r * d + c] = samples[r]->observed[i][c] ? 1.0 : 0.0;
    }
    b.x_knots.push_back(Tensor::from({n, d}, std::move(x)));
    b.mask_knots.push_back(Tensor::from({n, d}, std::move(m)));
  }
  if (task == TaskKind::forecast) {
    const std::size_t h = samples.front()->target.size();
    std::vector<double> t;
    t.reserve(n * h * d);
    for (const TimeSeriesSample* s : samples) {
      if (s->target.size() != h) throw DimensionError("batch mixes forecast horizons");
      for (const auto& row : s->target) t.insert(t.end(), row.begin(), row.end());
    }
    if (h > 0) b.targets = Tensor::from({n, h * d}, std::move(t));
  }
  return b;
}

}  // namespace

Tensor Batch::control_value(double t) const {
  const std::size_t n = size(), d = dims();
  std::vector<double> v(n * d);
  for (std::size_t r = 0; r < n; ++r) paths[r].value_into(t, &v[r * d]);
  return Tensor::from({n, d}, std::move(v));
}

Tensor Batch::control_derivative(double t) const {
  const std::size_t n = size(), d = dims();
  std::vector<double> v(n * d);
  for (std::size_t r = 0; r < n; ++r) paths[r].derivative_into(t, &v[r * d]);
  return Tensor::from({n, d}, std::move(v));
}

std::vector<double> sample_grid(const TimeSeriesSample& s) { return normalize_times(s.times); }

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices, InterpolationScheme scheme) {
  std::vector<const TimeSeriesSample*> samples;
  samples.reserve(indices.size());
  for (std::size_t i : indices) samples.push_back(&data.samples.at(i));
  return batch_from_samples(samples, data.task, scheme);
}

std::vector<std::vector<std::size_t>> group_batches(const Dataset& data,
                                                    const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  std::vector<std::vector<double>> grids;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i : indices) {
    std::vector<double> g = sample_grid(data.samples.at(i));
    std::size_t k = 0;
    while (k < grids.size() && !same_grid(grids[k], g)) ++k;
    if (k == grids.size()) {
      grids.push_back(std::move(g));
      groups.emplace_back();
    }
    groups[k].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (const auto& group : groups)
    for (std::size_t s = 0; s < group.size(); s += batch_size)
      out.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(s),
                       group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), s + batch_size)));
  return out;
}

SolveSpec knot_spec(const Batch& batch, const SolveSpec& solver) {
  SolveSpec s = solver;
  s.t_grid = batch.grid;
  return s;
}

std::vector<Tensor> solve_ncde(const Mlp& field, const Tensor& z0, const ControlFn& control_derivative,
                               const SolveSpec& spec) {
  return solve_ivp([&](const Tensor& z, double t) { return cde_apply(field, z, control_derivative(t)); },
                   z0, spec);
}

Tensor decoder_field(const Mlp& f, const Tensor& h, double t) {
  return decoder_field(f, h, Tensor::full({h.rows(), 1}, t));
}

Tensor decoder_field(const Mlp& f, const Tensor& h, const Tensor& t_column) {
  return f(concat({h, t_column}, 1));
}

Tensor encode(const Batch& batch, const LeapParams& params, const SolveSpec& solver) {
  Tensor e0 = params.phi_e(batch.x_knots.front());
  ControlFn dx = [&batch](double t) { return batch.control_derivative(t); };
  return solve_ncde(params.theta_k, e0, dx, knot_spec(batch, solver)).back();
}

AugmentedState init_states(const Batch& batch, const Tensor& e_final, const LeapParams& params) {
  if (e_final.rows() != batch.size()) throw DimensionError("encoder state rows differ from batch size");
  return {params.phi_z(batch.x_knots.front()), params.phi_h(e_final)};
}

JointTrajectory solve_joint(const AugmentedState& init, const LeapParams& params, const SolveSpec& spec) {
  VectorField field = [&params](const State& s, double t) {
    const Tensor& z = s[0];
    const Tensor& h = s[1];
    Tensor fh = decoder_field(params.theta_f, h, t);
    Tensor y_dot = map_velocity(params.theta_m, h, fh);
    return State{cde_apply(params.theta_g, z, y_dot), fh};
  };
  std::vector<State> traj = solve_ivp(field, init.pack(), spec);
  JointTrajectory out;
  for (State& s : traj) {
    out.y.push_back(params.theta_m(s[1]));
    out.z.push_back(std::move(s[0]));
    out.h.push_back(std::move(s[1]));
  }
  return out;
}

std::vector<Tensor> solve_decoder(const Tensor& h0, const Mlp& f, const SolveSpec& spec) {
  return solve_ivp([&f](const Tensor& h, double t) { return decoder_field(f, h, t); }, h0, spec);
}

ModelOutput forward(const Batch& batch, const LeapParams& params, const SolveSpec& solver) {
  const SolveSpec spec = knot_spec(batch, solver);
  Tensor e = encode(batch, params, solver);
  JointTrajectory traj = solve_joint(init_states(batch, e, params), params, spec);
  ModelOutput out;
  out.kind = params.arch.task;
  out.values = params.output_layer(traj.z.back());
  out.y_knots = std::move(traj.y);
  return out;
}

ModelOutput ncde_baseline_forward(const Batch& batch, const NcdeParams& params, const SolveSpec& solver) {
  Tensor z0 = params.phi_z(batch.x_knots.front());
  ControlFn dx = [&batch](double t) { return batch.control_derivative(t); };
  std::vector<Tensor> traj = solve_ncde(params.field, z0, dx, knot_spec(batch, solver));
  ModelOutput out;
  out.kind = params.arch.task;
  out.values = params.output_layer(traj.back());
  return out;
}

PathExport export_paths(const TimeSeriesSample& sample, const LeapParams& params,
                        const std::vector<double>& grid, const SolveSpec& solver,
                        InterpolationScheme scheme) {
  if (grid.empty()) throw ContractError("export grid is empty");
  NoGradGuard no_grad;
  Batch batch = batch_from_samples({&sample}, params.arch.task, scheme);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || grid[i] > batch.end_time() + 1e-12)
      throw DomainError("export grid leaves [0, T]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ContractError("export grid must be increasing");
  }
  Tensor e = encode(batch, params, solver);
  Tensor h0 = params.phi_h(e);
  SolveSpec spec = solver;
  spec.t_grid = grid;
  const bool prepend = grid.front() > 0.0;
  if (prepend) spec.t_grid.insert(spec.t_grid.begin(), 0.0);
  std::vector<Tensor> h = spec.t_grid.size() > 1 ? solve_decoder(h0, params.theta_f, spec)
                                                 : std::vector<Tensor>{h0};
  PathExport out;
  out.grid = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.x.push_back(batch.paths.front().value(grid[i]));
    out.y.push_back(params.theta_m(h[i + (prepend ? 1 : 0)]).to_vector());
  }
  return out;
}

}  // namespace leap
