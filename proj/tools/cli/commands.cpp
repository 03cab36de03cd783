#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "tsae/errors.hpp"

namespace tsae::cli {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

std::string mv(double volts) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << volts * 1000.0 << " mV";
  return os.str();
}

struct Prepared {
  std::shared_ptr<const Dataset> raw;
  std::shared_ptr<const Dataset> normalized;
  WindowSet train;
  WindowSet validation;
  NormalizationStats stats;
};

/// Split, fit normalization on the training windows (unless `stats` is
/// given), and rebind both splits onto the normalized copy.
Prepared prepare(Dataset dataset, const RunConfig& cfg, const std::optional<NormalizationStats>& stats) {
  Prepared p;
  p.raw = std::make_shared<const Dataset>(std::move(dataset));
  SplitOptions split = cfg.split;
  split.n_a = cfg.train.n_a;
  split.n_b = cfg.train.n_b;
  const DatasetSplit s = split_dataset(p.raw, cfg.holdout, split);
  if (s.train.empty()) {
    throw ShapeError("training split is empty: cycles are shorter than n_a + n_b = " +
                     std::to_string(split.n_a + split.n_b) + " samples");
  }
  p.stats = stats ? *stats : fit_normalization(*p.raw, &s.train);
  p.normalized = std::make_shared<const Dataset>(apply_normalization(*p.raw, p.stats));
  p.train = s.train.rebind(p.normalized);
  p.validation = s.validation.rebind(p.normalized);
  return p;
}

void check_model_shape(const TrainConfig& checkpoint, const RunConfig& cfg) {
  if (!cfg.model_given) return;
  const TrainConfig& want = cfg.train;
  auto field = [](const char* name, std::size_t a, std::size_t b) {
    if (a != b) {
      throw ShapeError("config model." + std::string(name) + "=" + std::to_string(b) + " but the checkpoint has " +
                       std::to_string(a));
    }
  };
  field("n_a", checkpoint.n_a, want.n_a);
  field("n_b", checkpoint.n_b, want.n_b);
  field("n_xs", checkpoint.n_xs, want.n_xs);
  if (checkpoint.encoder_config().layers != want.encoder_config().layers) {
    throw ShapeError("config model.encoder_layers differ from the checkpoint's encoder");
  }
}

/// The evaluation cycles: held out by the config, or every cycle when no
/// holdout is configured.
Dataset evaluation_cycles(const Dataset& dataset, const HoldoutSpec& holdout) {
  const bool any = !holdout.cells.empty() || holdout.last_cycles > 0;
  if (!any) return dataset;
  const auto positions = holdout_positions(dataset, holdout);
  if (positions.empty()) throw ShapeError("holdout selects no cycles");
  return select_cycles(dataset, positions);
}

Dataset load_and_normalize(const RunConfig& cfg, const std::optional<fs::path>& data, const ModelBundle& bundle) {
  const Dataset raw = evaluation_cycles(load_dataset(cfg, data), cfg.holdout);
  return apply_normalization(raw, bundle.stats);
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg, const std::optional<fs::path>& data) {
  if (data) return load_csv(*data);
  if (cfg.source == "csv") return load_csv(cfg.path);
  return generate_dataset(cfg.sim, cfg.generate);
}

void cmd_generate(const RunConfig& cfg, const fs::path& out, const Console& console) {
  const Dataset ds = generate_dataset(cfg.sim, cfg.generate);
  write_csv(ds, out, true);
  if (console.quiet) return;
  console.out << "wrote " << ds.cycles.size() << " cycles (" << ds.total_samples() << " samples) to " << out.string()
              << '\n';
  console.out << "cycle,theta_q,theta_r,q_dis_pct\n";
  for (const auto& c : ds.cycles) {
    const double q = discharge_capacity(c.current_a, cfg.sim.dt_s, cfg.sim.q_nom_ah);
    console.out << c.cycle_index << ',' << std::fixed << std::setprecision(4) << c.truth->theta_q << ','
                << c.truth->theta_r << ',' << std::setprecision(3) << q << '\n';
  }
  console.out.unsetf(std::ios::floatfield);
  if (ds.cycles.size() > 1) {
    const double first = discharge_capacity(ds.cycles.front().current_a, cfg.sim.dt_s, cfg.sim.q_nom_ah);
    const double last = discharge_capacity(ds.cycles.back().current_a, cfg.sim.dt_s, cfg.sim.q_nom_ah);
    console.out << "capacity fade: " << std::fixed << std::setprecision(2) << first << "% -> " << last << "% ("
                << 100.0 * (first - last) / first << "% relative)\n";
    console.out.unsetf(std::ios::floatfield);
  }
}

std::vector<std::size_t> parse_sweep(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || spec.substr(0, eq) != "n_xs") {
    throw ConfigError("--sweep: expected n_xs=a..b or n_xs=a,b,..., got '" + spec + "'");
  }
  const std::string values = spec.substr(eq + 1);
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || v == 0) throw ConfigError("--sweep: bad n_xs value '" + s + "'");
    return static_cast<std::size_t>(v);
  };
  std::vector<std::size_t> out;
  if (const auto dots = values.find(".."); dots != std::string::npos) {
    const std::size_t a = number(values.substr(0, dots));
    const std::size_t b = number(values.substr(dots + 2));
    if (b < a) throw ConfigError("--sweep: empty range '" + values + "'");
    for (std::size_t v = a; v <= b; ++v) out.push_back(v);
  } else {
    std::stringstream ss(values);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(number(item));
  }
  if (out.empty()) throw ConfigError("--sweep: no values");
  return out;
}

fs::path checkpoint_path(const fs::path& run_dir) {
  std::string name = run_dir.lexically_normal().filename().string();
  if (name.empty() || name == "." || name == "..") name = "model";
  return run_dir / (name + ".ckpt");
}

void write_history_csv(const TrainHistory& history, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "epoch,train_pred,train_corr,val_pred\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.train_pred) << ',' << format_double(e.train_corr) << ','
        << format_double(e.val_pred) << '\n';
  }
  if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

namespace {

void train_one(RunConfig cfg, Dataset dataset, const fs::path& out_dir, const std::optional<fs::path>& resume,
               const Console& console) {
  std::optional<ModelBundle> previous;
  if (resume) {
    previous = load_checkpoint(*resume);
    if (cfg.model_given) {
      check_model_shape(previous->config, cfg);
    } else {
      // No model section: continue with the checkpoint's own settings.
      const std::size_t threads = cfg.train.threads;
      cfg.train = previous->config;
      cfg.train.threads = threads;
      cfg.split.n_a = cfg.train.n_a;
      cfg.split.n_b = cfg.train.n_b;
    }
  }
  ensure_dir(out_dir);
  write_run_config(cfg, out_dir / "config.json");
  const Prepared data =
      prepare(std::move(dataset), cfg, previous ? std::optional<NormalizationStats>(previous->stats) : std::nullopt);

  std::optional<TrainResult> start;
  if (previous) {
    AdamState adam = previous->optimizer ? *previous->optimizer : AdamState::for_params(previous->params);
    start = TrainResult{previous->model(), previous->history, std::move(adam)};
  }

  auto on_epoch = [&](const EpochRecord& r) {
    if (console.quiet) return;
    console.out << "epoch " << r.epoch << "  train_pred " << format_double(r.train_pred) << "  train_corr "
                << format_double(r.train_corr) << "  val_pred " << format_double(r.val_pred) << std::endl;
  };

  const TrainResult result = [&] {
    try {
      return train(data.train, data.validation, cfg.train, start ? &*start : nullptr, on_epoch);
    } catch (const NumericalError& e) {
      std::ofstream diag(out_dir / "diagnostics.txt", std::ios::binary | std::ios::trunc);
      diag << e.what() << '\n';
      throw;
    }
  }();

  ModelBundle bundle{cfg.train, data.stats, result.model.params(), result.optimizer, result.history};
  const fs::path ckpt = checkpoint_path(out_dir);
  save_checkpoint(bundle, ckpt);
  write_history_csv(result.history, out_dir / "history.csv");
  if (!console.quiet) {
    console.out << "best epoch " << result.history.best_epoch << ", checkpoint " << ckpt.string() << '\n';
  }
}

}  // namespace

void cmd_train(const RunConfig& cfg, const TrainOptions& options, const Console& console) {
  const Dataset dataset = load_dataset(cfg, options.data);
  if (options.sweep.empty()) {
    train_one(cfg, dataset, options.out_dir, options.resume, console);
    return;
  }
  if (options.resume) throw ConfigError("--resume cannot be combined with --sweep");
  const auto values = parse_sweep(options.sweep);
  ensure_dir(options.out_dir);
  std::ofstream summary(options.out_dir / "sweep.csv", std::ios::binary | std::ios::trunc);
  if (!summary) throw IoError("cannot write '" + (options.out_dir / "sweep.csv").string() + "'");
  summary << "n_xs,final_train_pred,best_val_pred\n";
  for (std::size_t n_xs : values) {
    RunConfig c = cfg;
    c.train.n_xs = n_xs;
    const fs::path dir = options.out_dir / ("n_xs_" + std::to_string(n_xs));
    if (!console.quiet) console.out << "== n_xs = " << n_xs << '\n';
    train_one(c, dataset, dir, std::nullopt, console);
    const ModelBundle b = load_checkpoint(checkpoint_path(dir));
    double best_val = b.history.epochs.empty() ? 0.0 : b.history.epochs.front().val_pred;
    for (const auto& e : b.history.epochs) best_val = std::min(best_val, e.val_pred);
    summary << n_xs << ',' << format_double(b.history.final_train_pred) << ',' << format_double(best_val)
            << '\n';
  }
}

PredictionReport cmd_eval(const RunConfig& cfg, const EvalOptions& options, const Console& console) {
  const ModelBundle bundle = load_checkpoint(options.checkpoint);
  check_model_shape(bundle.config, cfg);
  const Dataset normalized = load_and_normalize(cfg, options.data, bundle);
  const Model model = bundle.model();
  const std::size_t threads = std::max(bundle.config.threads, threads_from_env());

  Predictor predictor = model_predictor(model);
  if (options.oracle) predictor = [](const WindowSample& w) { return w.future_targets; };
  const PredictionReport report =
      rollout_metrics(predictor, normalized, bundle.config.n_a, bundle.config.n_b, threads);
  const auto latents = evaluation_latents(model, normalized, cfg.soc_proxy);

  ensure_dir(options.out_dir);
  RunConfig echo = cfg;
  echo.train = bundle.config;
  write_run_config(echo, options.out_dir / "config.json");
  export_report(report, latents, bundle.config.n_xs, options.out_dir);

  if (!console.quiet) {
    console.out << "cycles " << report.cycles.size() << ", horizon " << report.horizon << " steps\n";
    console.out << "RMSE " << mv(report.rmse_v) << ", max-abs " << mv(report.maxabs_v) << ", persistence RMSE "
                << mv(report.persistence_rmse_v) << '\n';
  }
  return report;
}

void cmd_inspect_latent(const RunConfig& cfg, const InspectOptions& options, const Console& console) {
  if (!options.soc && !options.cycle) throw ConfigError("inspect-latent: give --soc, --cycle or both");
  const ModelBundle bundle = load_checkpoint(options.checkpoint);
  check_model_shape(bundle.config, cfg);
  const Dataset normalized = apply_normalization(load_dataset(cfg, options.data), bundle.stats);
  const Model model = bundle.model();
  const std::size_t n_xs = bundle.config.n_xs;
  ensure_dir(options.out_dir);

  if (options.soc) {
    const auto points =
        latent_at_fixed_soc(model, normalized, *options.soc, cfg.soc_tolerance, cfg.soc_proxy, threads_from_env());
    write_latents_csv(points, n_xs, options.out_dir / "fixed_soc.csv");
    if (!console.quiet) {
      console.out << "fixed SOC " << *options.soc << ": " << points.size() << " cycles";
      if (points.front().has_truth) {
        console.out << ", |Spearman| vs cycle index " << std::setprecision(3) << cycle_ordering_strength(points);
      }
      console.out << '\n';
    }
  }
  if (options.cycle) {
    const auto it = std::find_if(normalized.cycles.begin(), normalized.cycles.end(),
                                 [&](const CycleSeries& c) { return c.cycle_index == *options.cycle; });
    if (it == normalized.cycles.end()) {
      throw ShapeError("inspect-latent: no cycle with index " + std::to_string(*options.cycle));
    }
    const auto position = static_cast<std::size_t>(it - normalized.cycles.begin());
    const auto trajectory = latent_across_soc(model, normalized, position, cfg.soc_proxy);
    write_latents_csv(trajectory, n_xs, options.out_dir / ("trajectory_cycle_" + std::to_string(*options.cycle) + ".csv"));
    if (!console.quiet) {
      console.out << "cycle " << *options.cycle << ": " << trajectory.size() << " windows, lag-1 autocorrelation";
      for (double r : trajectory_lag1(trajectory)) console.out << ' ' << std::setprecision(4) << r;
      console.out << '\n';
    }
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-scale-separating sequence autoencoder for battery cycling data", "tsae"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Override data.generate.seed and train.seed");
  app.add_flag("--quiet", quiet, "Only print errors");

  std::string gen_out = "dataset.csv";
  auto* gen = app.add_subcommand("generate", "Simulate a synthetic aging dataset");
  gen->add_option("--out", gen_out, "Output CSV")->capture_default_str();

  TrainOptions topt;
  std::optional<std::string> t_data, t_resume;
  std::string t_out = "run";
  auto* trn = app.add_subcommand("train", "Train a model and write a run directory");
  trn->add_option("--data", t_data, "Dataset CSV (defaults to the configured source)");
  trn->add_option("--out-dir", t_out, "Run directory")->capture_default_str();
  trn->add_option("--resume", t_resume, "Checkpoint to continue from");
  trn->add_option("--sweep", topt.sweep, "Train once per value, e.g. n_xs=1..5");

  EvalOptions eopt;
  std::string e_ckpt, e_out = "eval";
  std::optional<std::string> e_data;
  auto* evl = app.add_subcommand("eval", "Multi-step prediction metrics on held-out cycles");
  evl->add_option("--checkpoint", e_ckpt, "Checkpoint file")->required();
  evl->add_option("--data", e_data, "Dataset CSV (defaults to the configured source)");
  evl->add_option("--out-dir", e_out, "Report directory")->capture_default_str();
  evl->add_flag("--oracle", eopt.oracle, "Predict the targets themselves (harness check)");

  InspectOptions iopt;
  std::string i_ckpt, i_out = "latents";
  std::optional<std::string> i_data;
  auto* ins = app.add_subcommand("inspect-latent", "Write latent points at a fixed SOC and/or along one cycle");
  ins->add_option("--checkpoint", i_ckpt, "Checkpoint file")->required();
  ins->add_option("--data", i_data, "Dataset CSV (defaults to the configured source)");
  ins->add_option("--out-dir", i_out, "Output directory")->capture_default_str();
  ins->add_option("--soc", iopt.soc, "SOC target for the per-cycle latents");
  ins->add_option("--cycle", iopt.cycle, "Cycle index for the within-cycle trajectory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 4;
  }

  auto to_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
    if (!s) return std::nullopt;
    return fs::path(*s);
  };

  try {
    RunConfig cfg = config_path ? load_run_config(*config_path) : run_config_from_json(json::object());
    if (seed) {
      cfg.generate.seed = *seed;
      cfg.train.seed = *seed;
    }
    cfg.train.threads = threads_from_env();
    const Console console{out, quiet};

    if (gen->parsed()) {
      cmd_generate(cfg, gen_out, console);
    } else if (trn->parsed()) {
      topt.data = to_path(t_data);
      topt.resume = to_path(t_resume);
      topt.out_dir = t_out;
      cmd_train(cfg, topt, console);
    } else if (evl->parsed()) {
      eopt.checkpoint = e_ckpt;
      eopt.data = to_path(e_data);
      eopt.out_dir = e_out;
      cmd_eval(cfg, eopt, console);
    } else if (ins->parsed()) {
      iopt.checkpoint = i_ckpt;
      iopt.data = to_path(i_data);
      iopt.out_dir = i_out;
      cmd_inspect_latent(cfg, iopt, console);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace tsae::cli
