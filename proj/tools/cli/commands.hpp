#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cli/run_config.hpp"

namespace tsae::cli {

namespace fs = std::filesystem;

/// Output sink honouring --quiet. Errors always go to the error stream.
struct Console {
  std::ostream& out;
  bool quiet = false;
};

/// CSV path wins; otherwise the configured source (csv path or simulator).
Dataset load_dataset(const RunConfig& cfg, const std::optional<fs::path>& data);

void cmd_generate(const RunConfig& cfg, const fs::path& out, const Console& console);

struct TrainOptions {
  std::optional<fs::path> data;
  fs::path out_dir = "run";
  std::optional<fs::path> resume;
  std::string sweep;  // e.g. "n_xs=1..5" or "n_xs=1,2,4"
};

/// Parses "n_xs=a..b" / "n_xs=a,b,c".
std::vector<std::size_t> parse_sweep(const std::string& spec);

void cmd_train(const RunConfig& cfg, const TrainOptions& options, const Console& console);

struct EvalOptions {
  fs::path checkpoint;
  std::optional<fs::path> data;
  fs::path out_dir = "eval";
  bool oracle = false;  // predict the targets themselves (harness self-test)
};

PredictionReport cmd_eval(const RunConfig& cfg, const EvalOptions& options, const Console& console);

struct InspectOptions {
  fs::path checkpoint;
  std::optional<fs::path> data;
  fs::path out_dir = "latents";
  std::optional<double> soc;
  std::optional<std::size_t> cycle;  // cycle index (first cell carrying it)
};

void cmd_inspect_latent(const RunConfig& cfg, const InspectOptions& options, const Console& console);

/// `<run-name>.ckpt` inside the run directory, run-name being its last component.
fs::path checkpoint_path(const fs::path& run_dir);

void write_history_csv(const TrainHistory& history, const fs::path& path);

/// Full command line entry point; returns the process exit code
/// (0 ok, 2 I/O, 3 numerical, 4 shape/config).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsae::cli
