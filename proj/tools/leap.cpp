// leap: dataset generation, training, evaluation, alpha/beta sweeps and path
// export for LEAP and plain NCDE models.
//
// Exit codes: 0 success, 1 usage or config, 2 data, 3 numeric divergence.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "leap/checkpoint.hpp"
#include "leap/config.hpp"
#include "leap/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct Overrides {
  std::string config = "toy";
  std::string seeds;
  std::optional<double> alpha, beta, lr, drop;
  std::string solver;
  std::optional<std::size_t> substeps, max_iter;
  std::string out;
  std::vector<std::string> set;  // section.key=value

  void attach(CLI::App* cmd, bool with_train_flags) {
    cmd->add_option("--config", config, "preset name or INI file")->capture_default_str();
    cmd->add_option("--seeds", seeds, "comma-separated model seeds");
    cmd->add_option("--drop", drop, "fraction of observations removed")->check(CLI::Range(0.0, 0.99));
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--set", set, "extra override, section.key=value");
    if (!with_train_flags) return;
    cmd->add_option("--alpha", alpha, "path-fit weight");
    cmd->add_option("--beta", beta, "density penalty weight");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--solver", solver, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
    cmd->add_option("--substeps", substeps, "solver steps per knot interval");
    cmd->add_option("--max-iter", max_iter, "maximum epochs");
  }

  leap::RunConfig resolve() const {
    leap::RunConfig c = leap::load_config(config);
    for (const std::string& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw leap::ConfigError("--set expects section.key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!seeds.empty()) c.seeds = leap::parse_seed_list(seeds);
    if (alpha) c.train.alpha = *alpha;
    if (beta) c.train.beta = *beta;
    if (lr) c.train.lr = *lr;
    if (drop) c.data.drop = *drop;
    if (!solver.empty()) c.set("train.solver", solver);
    if (substeps) c.train.solver.substeps = *substeps;
    if (max_iter) c.train.max_iter = *max_iter;
    if (!out.empty()) c.out_dir = out;
    c.validate();
    return c;
  }
};

json config_json(const leap::RunConfig& c) {
  json j = json::object();
  for (const auto& [key, value] : c.entries()) {
    const auto dot = key.find('.');
    j[key.substr(0, dot)][key.substr(dot + 1)] = value;
  }
  return j;
}

json optional_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const json& j, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw leap::Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw leap::ConfigError("output directory '" + dir.string() + "' is not writable");
}

struct Prepared {
  leap::Dataset data;
  leap::DatasetSplit split;
  leap::Architecture arch;
};

Prepared prepare(const leap::RunConfig& c) {
  Prepared p;
  p.data = c.load_dataset();
  p.split = leap::split(p.data.size(), c.data.split, c.data.seed);
  p.arch = c.architecture(p.data);
  return p;
}

json eval_json(const leap::EvalResult& r, leap::Metric metric) {
  json j = {{"n", r.n}, {"metric", leap::metric_name(metric)}};
  j["value"] = optional_number(r.metric(metric));
  if (!r.step_errors.empty()) {
    j["mse"] = optional_number(r.mse);
  } else {
    j["accuracy"] = r.accuracy;
    j["auroc"] = r.auroc ? json(*r.auroc) : json(nullptr);
  }
  return j;
}

struct SeedOutcome {
  double metric = 0.0;
  bool diverged = false;
};

SeedOutcome train_seed(const leap::RunConfig& c, const Prepared& p, std::uint64_t seed, const fs::path& dir) {
  ensure_dir(dir);
  const auto start = std::chrono::steady_clock::now();
  leap::ModelParams params = leap::build_model(c.model.kind, p.arch, seed);
  leap::TrainConfig tc = c.train;
  tc.seed = seed;
  const leap::TrainResult result = leap::train(p.data, p.split.train, p.split.val, params, tc);
  leap::save_checkpoint(params, (dir / "checkpoint.txt").string());

  {
    std::ofstream h(dir / "history.csv");
    h << "epoch,train_loss,val_metric\n";
    char buf[96];
    for (const leap::EpochRecord& e : result.history) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_metric);
      h << buf;
    }
  }

  SeedOutcome outcome;
  outcome.diverged = result.divergence.has_value();
  const leap::EvalResult test = leap::evaluate(p.data, p.split.test, params, tc);
  outcome.metric = test.metric(tc.metric);

  json m = {{"seed", seed},
            {"model", leap::model_kind_name(c.model.kind)},
            {"config", config_json(c)},
            {"best_epoch", result.best_epoch},
            {"best_val_metric", optional_number(result.best_val_metric)},
            {"epochs_run", result.history.size()},
            {"stopped_early", result.stopped_early},
            {"divergence", result.divergence ? json(*result.divergence) : json(nullptr)},
            {"test", eval_json(test, tc.metric)}};
  if (!test.step_errors.empty()) {
    json steps = json::array();
    const std::size_t h = test.step_errors.front().size();
    for (std::size_t s = 0; s < h; ++s) {
      double sum = 0.0;
      for (const auto& row : test.step_errors) sum += row[s];
      steps.push_back(sum / static_cast<double>(test.step_errors.size()));
    }
    m["test"]["mean_step_error"] = steps;
  }
  m["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(m, dir / "metrics.json");
  return outcome;
}

struct RunSummary {
  leap::Aggregate aggregate;
  bool diverged = false;
};

RunSummary run_training(const leap::RunConfig& c, const fs::path& out) {
  ensure_dir(out);
  const Prepared p = prepare(c);
  {
    std::ofstream ini(out / "config.ini");
    ini << c.to_ini();
  }
  std::vector<double> values;
  RunSummary s;
  for (std::uint64_t seed : c.seeds) {
    const SeedOutcome o = train_seed(c, p, seed, out / ("seed_" + std::to_string(seed)));
    values.push_back(o.metric);
    s.diverged = s.diverged || o.diverged;
    std::cerr << "seed " << seed << ": test " << leap::metric_name(c.train.metric) << " " << o.metric
              << (o.diverged ? " (diverged)" : "") << "\n";
  }
  s.aggregate = leap::aggregate(values);
  json per_seed = json::array();
  for (double v : values) per_seed.push_back(optional_number(v));
  json agg = {{"config", config_json(c)},
              {"metric", leap::metric_name(c.train.metric)},
              {"seeds", c.seeds},
              {"per_seed", per_seed},
              {"mean", optional_number(s.aggregate.mean)},
              {"std", optional_number(s.aggregate.std)},
              {"diverged", s.diverged}};
  write_json(agg, out / "aggregate.json");
  return s;
}

int cmd_generate(const Overrides& o) {
  const leap::RunConfig c = o.resolve();
  const fs::path out = c.out_dir;
  ensure_dir(out);
  const leap::Dataset d = c.load_dataset();
  const bool forecast = d.task == leap::TaskKind::forecast;
  leap::write_csv(d, (out / "data.csv").string(), forecast ? (out / "targets.csv").string() : "");
  std::ofstream ini(out / "config.ini");
  ini << c.to_ini();
  std::cerr << "wrote " << d.size() << " series to " << (out / "data.csv").string() << "\n";
  return 0;
}

int cmd_train(const Overrides& o) {
  const leap::RunConfig c = o.resolve();
  const RunSummary s = run_training(c, c.out_dir);
  std::cout << leap::metric_name(c.train.metric) << " " << s.aggregate.mean << " +- " << s.aggregate.std << "\n";
  return s.diverged ? kExitDivergence : 0;
}

void check_compatible(const leap::ModelParams& p, const leap::Dataset& d, const std::string& what) {
  const leap::Architecture& a = p.arch();
  if (a.task != d.task || a.x_dim != d.dims ||
      (d.task == leap::TaskKind::forecast ? a.horizon != d.horizon : a.output_dim != d.classes))
    throw leap::ContractError(what + " does not match the dataset (task, channels or output width)");
}

const std::vector<std::size_t>& pick_split(const leap::DatasetSplit& s, const std::string& which,
                                           std::vector<std::size_t>& all, std::size_t n) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  all.resize(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

int cmd_eval(const Overrides& o, const std::string& checkpoint, const std::string& compare,
             const std::string& which, const std::string& json_out) {
  const leap::RunConfig c = o.resolve();
  const leap::ModelParams params = leap::load_checkpoint(checkpoint);
  std::optional<leap::ModelParams> base;
  if (!compare.empty()) base = leap::load_checkpoint(compare);

  const leap::Dataset d = c.load_dataset();
  const leap::DatasetSplit s = leap::split(d.size(), c.data.split, c.data.seed);
  std::vector<std::size_t> all;
  const std::vector<std::size_t>& idx = pick_split(s, which, all, d.size());
  check_compatible(params, d, "checkpoint");
  if (base) check_compatible(*base, d, "comparison checkpoint");

  const leap::EvalResult r = leap::evaluate(d, idx, params, c.train);
  json j = {{"config", config_json(c)},
            {"checkpoint", checkpoint},
            {"model", leap::model_kind_name(params.kind)},
            {"split", which},
            {"result", eval_json(r, c.train.metric)}};

  if (base) {
    if (d.task != leap::TaskKind::forecast) throw leap::ConfigError("--compare needs a forecasting dataset");
    const leap::EvalResult rb = leap::evaluate(d, idx, *base, c.train);
    j["baseline"] = {{"checkpoint", compare},
                     {"model", leap::model_kind_name(base->kind)},
                     {"result", eval_json(rb, c.train.metric)}};
    json rows = json::array();
    for (std::size_t h = 0; h < d.horizon; ++h) {
      std::vector<double> ours, theirs;
      bool identical = true;
      for (std::size_t i = 0; i < r.step_errors.size(); ++i) {
        ours.push_back(r.step_errors[i][h]);
        theirs.push_back(rb.step_errors[i][h]);
        identical = identical && ours.back() == theirs.back();
      }
      json row = {{"horizon", h + 1}};
      if (identical) {
        row["t"] = 0.0;
        row["p"] = 0.5;
      } else {
        try {
          const leap::TTestResult t = leap::paired_ttest(ours, theirs);
          row["t"] = t.t;
          row["p"] = t.p;
        } catch (const leap::DegenerateVarianceError&) {
          row["t"] = nullptr;
          row["p"] = nullptr;
        }
      }
      rows.push_back(row);
    }
    j["ttest"] = rows;
  }

  if (json_out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    ensure_dir(fs::path(json_out).parent_path().empty() ? fs::path(".") : fs::path(json_out).parent_path());
    write_json(j, json_out);
  }
  return 0;
}

int cmd_export(const Overrides& o, const std::string& checkpoint, const std::string& sample_id, std::size_t grid_size,
               const std::string& csv_out) {
  const leap::RunConfig c = o.resolve();
  const leap::ModelParams params = leap::load_checkpoint(checkpoint);
  if (params.kind != leap::ModelKind::leap) throw leap::ConfigError("export-paths needs a LEAP checkpoint");
  if (grid_size < 2) throw leap::ConfigError("--grid must be at least 2");
  const leap::Dataset d = c.load_dataset();
  check_compatible(params, d, "checkpoint");

  const leap::TimeSeriesSample* sample = nullptr;
  for (const auto& s : d.samples)
    if (s.id == sample_id) sample = &s;
  if (!sample) throw leap::DataError("no sample with id '" + sample_id + "'");

  const double T = static_cast<double>(sample->length() - 1);
  std::vector<double> grid(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) grid[i] = T * static_cast<double>(i) / static_cast<double>(grid_size - 1);
  const leap::PathExport e = leap::export_paths(*sample, params.leap, grid, c.train.solver, c.train.scheme);

  std::ofstream file;
  if (!csv_out.empty()) {
    file.open(csv_out);
    if (!file) throw leap::Error("cannot write " + csv_out);
  }
  std::ostream& out = csv_out.empty() ? std::cout : file;
  out << "channel,t,x,y\n";
  char buf[128];
  for (std::size_t ch = 0; ch < d.dims; ++ch)
    for (std::size_t g = 0; g < e.grid.size(); ++g) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", ch, e.grid[g], e.x[g][ch], e.y[g][ch]);
      out << buf;
    }
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& alphas_csv, const std::string& betas_csv) {
  const leap::RunConfig base = o.resolve();
  const std::vector<double> alphas = leap::parse_double_list(alphas_csv);
  const std::vector<double> betas = leap::parse_double_list(betas_csv);
  const fs::path out = base.out_dir;
  ensure_dir(out);

  json means = json::array(), cells = json::array();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < betas.size(); ++j) {
      leap::RunConfig c = base;
      c.train.alpha = alphas[i];
      c.train.beta = betas[j];
      const fs::path dir = out / ("a" + std::to_string(i) + "_b" + std::to_string(j));
      c.out_dir = dir.string();
      json cell = {{"alpha", alphas[i]}, {"beta", betas[j]}, {"dir", dir.string()}};
      try {
        const RunSummary s = run_training(c, dir);
        const json mean = s.diverged ? json(nullptr) : optional_number(s.aggregate.mean);
        row.push_back(mean);
        cell["mean"] = mean;
        cell["std"] = s.diverged ? json(nullptr) : optional_number(s.aggregate.std);
        if (s.diverged) cell["error"] = "diverged";
      } catch (const leap::Error& e) {
        std::cerr << "cell alpha=" << alphas[i] << " beta=" << betas[j] << " failed: " << e.what() << "\n";
        row.push_back(nullptr);
        cell["mean"] = nullptr;
        cell["error"] = e.what();
      }
      cells.push_back(cell);
    }
    means.push_back(row);
  }
  json j = {{"config", config_json(base)},
            {"metric", leap::metric_name(base.train.metric)},
            {"alphas", alphas},
            {"betas", betas},
            {"mean", means},
            {"cells", cells}};
  write_json(j, out / "sweep.json");
  std::cout << (out / "sweep.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LEAP: learnable-path neural controlled differential equations"};
  app.require_subcommand(1);

  Overrides gen_o, train_o, eval_o, export_o, sweep_o;
  auto* gen = app.add_subcommand("generate", "write the configured synthetic dataset as CSV");
  gen_o.attach(gen, false);

  auto* tr = app.add_subcommand("train", "train one model per seed and aggregate test metrics");
  train_o.attach(tr, true);

  std::string checkpoint, compare, which = "test", json_out;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint, optionally against a baseline");
  eval_o.attach(ev, true);
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--compare", compare, "baseline checkpoint for per-horizon paired t-tests");
  ev->add_option("--split", which, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  ev->add_option("--json", json_out, "write the report here instead of stdout");

  std::string export_ckpt, sample_id, csv_out;
  std::size_t grid_size = 100;
  auto* ex = app.add_subcommand("export-paths", "sample X and the learnt path Y on a uniform grid");
  export_o.attach(ex, true);
  ex->add_option("--checkpoint", export_ckpt, "LEAP checkpoint file")->required();
  ex->add_option("--sample", sample_id, "series id")->required();
  ex->add_option("--grid", grid_size, "points per channel")->capture_default_str();
  ex->add_option("--csv", csv_out, "write here instead of stdout");

  std::string alphas, betas;
  auto* sw = app.add_subcommand("sweep", "train every (alpha, beta) cell of a grid");
  sweep_o.attach(sw, true);
  sw->add_option("--alphas", alphas, "comma-separated alpha values")->required();
  sw->add_option("--betas", betas, "comma-separated beta values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_o);
    if (tr->parsed()) return cmd_train(train_o);
    if (ev->parsed()) return cmd_eval(eval_o, checkpoint, compare, which, json_out);
    if (ex->parsed()) return cmd_export(export_o, export_ckpt, sample_id, grid_size, csv_out);
    if (sw->parsed()) return cmd_sweep(sweep_o, alphas, betas);
  } catch (const leap::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const leap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const leap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
