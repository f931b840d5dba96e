#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leap/checkpoint.hpp"
#include "leap/config.hpp"
#include "leap/errors.hpp"
#include "leap/interpolation.hpp"

namespace py = pybind11;
using namespace leap;

namespace {

py::array_t<double> to_array(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size(), c = rows.empty() ? 0 : rows.front().size();
  py::array_t<double> out({r, c});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

const std::vector<std::size_t>& split_indices(const DatasetSplit& s, const std::string& which,
                                              std::vector<std::size_t>& all, std::size_t n) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  if (which != "all") throw ConfigError("split must be train, val, test or all");
  all.resize(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

// A configured run: dataset, split and hyperparameters resolved once.
class Experiment {
 public:
  explicit Experiment(RunConfig config) : config_(std::move(config)) {
    config_.validate();
    data_ = config_.load_dataset();
    split_ = leap::split(data_.size(), config_.data.split, config_.data.seed);
  }

  const RunConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }

  ModelParams build(std::uint64_t seed) const {
    return build_model(config_.model.kind, config_.architecture(data_), seed);
  }

  py::dict fit(ModelParams& params, std::uint64_t seed) const {
    TrainConfig tc = config_.train;
    tc.seed = seed;
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(data_, split_.train, split_.val, params, tc);
    }
    py::list history;
    for (const EpochRecord& e : r.history)
      history.append(py::dict(py::arg("epoch") = e.epoch, py::arg("train_loss") = e.train_loss,
                              py::arg("val_metric") = e.val_metric));
    py::dict out;
    out["history"] = history;
    out["best_epoch"] = r.best_epoch;
    out["best_val_metric"] = r.best_val_metric;
    out["stopped_early"] = r.stopped_early;
    out["divergence"] = r.divergence ? py::object(py::str(*r.divergence)) : py::object(py::none());
    return out;
  }

  py::dict eval(const ModelParams& params, const std::string& which) const {
    std::vector<std::size_t> all;
    const auto& idx = split_indices(split_, which, all, data_.size());
    EvalResult r;
    {
      py::gil_scoped_release release;
      r = evaluate(data_, idx, params, config_.train);
    }
    py::dict out;
    out["n"] = r.n;
    out["metric"] = metric_name(config_.train.metric);
    out["value"] = r.metric(config_.train.metric);
    if (r.step_errors.empty()) {
      out["accuracy"] = r.accuracy;
      out["auroc"] = r.auroc ? py::object(py::float_(*r.auroc)) : py::object(py::none());
    } else {
      out["mse"] = r.mse;
      out["step_errors"] = to_array(r.step_errors);
    }
    return out;
  }

  py::dict paths(const ModelParams& params, const std::string& sample_id, std::size_t grid_size) const {
    if (params.kind != ModelKind::leap) throw ConfigError("export_paths needs a LEAP model");
    if (grid_size < 2) throw ConfigError("grid_size must be at least 2");
    for (const TimeSeriesSample& s : data_.samples) {
      if (s.id != sample_id) continue;
      const double T = static_cast<double>(s.length() - 1);
      std::vector<double> grid(grid_size);
      for (std::size_t i = 0; i < grid_size; ++i)
        grid[i] = T * static_cast<double>(i) / static_cast<double>(grid_size - 1);
      const PathExport e = export_paths(s, params.leap, grid, config_.train.solver, config_.train.scheme);
      py::dict out;
      out["t"] = to_array(e.grid);
      out["x"] = to_array(e.x);
      out["y"] = to_array(e.y);
      return out;
    }
    throw DataError("no sample with id '" + sample_id + "'");
  }

 private:
  RunConfig config_;
  Dataset data_;
  DatasetSplit split_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Learnable-path neural controlled differential equations";

  auto base = py::register_exception<Error>(m, "LeapError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def_static("preset", &RunConfig::preset, py::arg("name"))
      .def_static("preset_names", &RunConfig::preset_names)
      .def_static("load", &load_config, py::arg("name_or_path"))
      .def_static("parse", &parse_config, py::arg("ini_text"))
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("entries",
           [](const RunConfig& c) {
             py::dict d;
             for (const auto& [k, v] : c.entries()) d[py::str(k)] = v;
             return d;
           })
      .def("to_ini", &RunConfig::to_ini)
      .def("validate", &RunConfig::validate)
      .def_property_readonly("seeds", [](const RunConfig& c) { return c.seeds; });

  py::class_<ModelParams>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const ModelParams& p, const std::string& path) { save_checkpoint(p, path); }, py::arg("path"))
      .def_property_readonly("kind", [](const ModelParams& p) { return model_kind_name(p.kind); })
      .def("parameters",
           [](const ModelParams& p) {
             py::dict d;
             for (const auto& [name, t] : p.named_parameters()) {
               std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
               py::array_t<double> a(shape);
               std::copy(t.data().begin(), t.data().end(), a.mutable_data());
               d[py::str(name)] = a;
             }
             return d;
           });

  py::class_<Experiment>(m, "Experiment")
      .def(py::init<RunConfig>(), py::arg("config"))
      .def_property_readonly("config", &Experiment::config)
      .def_property_readonly("sample_ids",
                             [](const Experiment& e) {
                               std::vector<std::string> ids;
                               for (const auto& s : e.data().samples) ids.push_back(s.id);
                               return ids;
                             })
      .def("__len__", [](const Experiment& e) { return e.data().size(); })
      .def("build_model", &Experiment::build, py::arg("seed") = 0)
      .def("train", &Experiment::fit, py::arg("model"), py::arg("seed") = 0)
      .def("evaluate", &Experiment::eval, py::arg("model"), py::arg("split") = "test")
      .def("export_paths", &Experiment::paths, py::arg("model"), py::arg("sample_id"), py::arg("grid_size") = 100);

  m.def(
      "natural_cubic",
      [](const std::vector<double>& times, const std::vector<double>& values, const std::vector<double>& query) {
        const ControlPath p = fit_natural_cubic(times, {values}, {std::vector<bool>(times.size(), true)});
        std::vector<double> v, dv;
        for (double t : query) {
          v.push_back(p.value(t)[0]);
          dv.push_back(p.derivative(t)[0]);
        }
        return py::make_tuple(to_array(v), to_array(dv));
      },
      py::arg("times"), py::arg("values"), py::arg("query"),
      "Fit a natural cubic spline and return its values and derivatives at the query times.");

  m.def(
      "paired_ttest",
      [](const std::vector<double>& ours, const std::vector<double>& base) {
        const TTestResult r = paired_ttest(ours, base);
        return py::make_tuple(r.t, r.p);
      },
      py::arg("errors_ours"), py::arg("errors_base"),
      "One-sided paired t-test of mean(ours - base) < 0. Returns (t, p).");
  m.def("auroc", &auroc, py::arg("labels"), py::arg("scores"));
}
