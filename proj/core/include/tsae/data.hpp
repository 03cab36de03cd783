#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsae/numerics.hpp"

namespace tsae {

/// Ground-truth slow states recorded by the simulator (or read from the
/// optional CSV columns). Aging factors are constant within a cycle.
struct SlowStateTruth {
  std::vector<double> soc;
  double theta_q = 1.0;
  double theta_r = 1.0;
};

struct CycleSeries {
  std::string cell_id;
  std::size_t cycle_index = 0;
  std::vector<double> time_s;
  std::vector<double> current_a;  // discharge positive
  std::vector<double> voltage_v;
  std::optional<SlowStateTruth> truth;
  bool truncated = false;  // SOC hit [0, 1] before the profile ended

  std::size_t size() const noexcept { return time_s.size(); }
  void validate() const;
};

/// First-order Thevenin equivalent circuit with a cubic open-circuit curve.
struct SimConfig {
  double q_nom_ah = 4.85;
  double r0_ohm = 0.030;
  double r1_ohm = 0.020;
  double c1_farad = 1000.0;
  std::vector<double> ocv_coefficients{3.2, 0.7, 0.0, 0.3};  // sum_k c_k soc^k
  double dt_s = 0.1;
  double noise_std_v = 0.002;
  std::uint64_t seed = 1;

  double tau_s() const noexcept { return r1_ohm * c1_farad; }
  double ocv(double soc) const noexcept;
  void validate() const;
};

/// Incremental simulator state; `emit` produces the sample for the current
/// state and `advance` integrates one step.
class EcmSimulator {
 public:
  EcmSimulator(const SimConfig& cfg, double theta_q, double theta_r, double soc_start, std::uint64_t noise_seed);

  double soc() const noexcept { return soc_; }
  double polarization_v() const noexcept { return v_rc_; }
  double terminal_voltage(double current_a);
  void advance(double current_a);

 private:
  SimConfig cfg_;
  double theta_q_;
  double theta_r_;
  double soc_;
  double v_rc_ = 0.0;
  Rng noise_;
};

/// Runs the profile sample by sample. The cycle ends early (and is flagged)
/// when the next SOC would leave [0, 1].
CycleSeries simulate_cycle(const SimConfig& cfg, double theta_q, double theta_r, double soc_start,
                           std::span<const double> current_profile);

struct FadeKnot {
  double fraction = 0.0;  // position in life, 0 = first cycle, 1 = last
  double theta_q = 1.0;
  double theta_r = 1.0;
};

/// Piecewise-linear aging trajectory over the cycle index.
struct FadeSchedule {
  std::vector<FadeKnot> knots{{0.0, 1.0, 1.0}, {1.0, 0.85, 1.3}};

  static FadeSchedule none() { return {{{0.0, 1.0, 1.0}, {1.0, 1.0, 1.0}}}; }
  FadeKnot at(std::size_t cycle, std::size_t total_cycles) const;
  void validate() const;
};

/// Pulsed drive-cycle stand-in: piecewise-constant pulses with random
/// duration and amplitude, occasional rests and regenerative pulses.
struct DriveProfileConfig {
  double min_pulse_s = 1.0;
  double max_pulse_s = 30.0;
  double max_c_rate = 2.0;
  double rest_probability = 0.1;
  double regen_probability = 0.1;
  double max_regen_c_rate = 0.5;

  void validate() const;
};

class DriveProfile {
 public:
  DriveProfile(const DriveProfileConfig& cfg, double q_nom_ah, double dt_s, std::uint64_t seed);
  double next();

 private:
  void new_pulse();

  DriveProfileConfig cfg_;
  double one_c_a_;
  double dt_s_;
  Rng rng_;
  double level_ = 0.0;
  std::size_t remaining_ = 0;
};

struct GenerateOptions {
  std::size_t cycles = 60;
  FadeSchedule fade;
  DriveProfileConfig profile;
  double soc_start = 0.8;
  double soc_end = 0.2;
  std::string cell_id = "SIM";
  std::uint64_t seed = 7;
  // Every cycle replays the same pulse schedule, the way a drive cycle is
  // repeated on a test bench; false draws a fresh schedule per cycle.
  bool repeat_profile = true;
};

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  bool constant = false;

  double forward(double x) const noexcept;
  double inverse(double z) const noexcept;
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Per-channel min-max map onto [-0.8, 0.8].
struct NormalizationStats {
  ChannelStats current;
  ChannelStats voltage;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

inline constexpr double kNormalizedHalfRange = 0.8;

enum class Provenance { synthetic, csv };

struct Dataset {
  std::vector<CycleSeries> cycles;
  std::optional<NormalizationStats> stats;  // set iff the values are normalized
  Provenance provenance = Provenance::synthetic;
  std::vector<std::string> warnings;

  std::vector<std::string> cell_ids() const;
  std::size_t total_samples() const noexcept;
};

Dataset generate_dataset(const SimConfig& cfg, const GenerateOptions& options);

/// Header: cell_id,cycle_index,time_s,current_a,voltage_v[,soc,theta_q,theta_r]
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& dataset, const std::filesystem::path& path, bool include_truth = true);

/// Percent of nominal capacity delivered: (sum I dt) / (Q_nom * 3600) * 100.
double discharge_capacity(std::span<const double> current_a, double dt_s, double q_nom_ah);

struct WindowRef {
  std::uint32_t cycle = 0;  // position in Dataset::cycles
  std::uint32_t start = 0;
  friend bool operator==(const WindowRef&, const WindowRef&) = default;
  friend auto operator<=>(const WindowRef&, const WindowRef&) = default;
};

/// n_a history samples of (current, voltage) followed by n_b future
/// currents and target voltages, all from one cycle.
struct WindowSample {
  RealMatrix history;  // [n_a x 2]
  std::vector<double> future_inputs;
  std::vector<double> future_targets;
  std::string cell_id;
  std::size_t cycle_index = 0;
  std::size_t start = 0;
};

/// Windows are stored as references into a shared dataset and materialized
/// on demand.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::shared_ptr<const Dataset> dataset, std::size_t n_a, std::size_t n_b, std::vector<WindowRef> refs);

  std::size_t size() const noexcept { return refs_.size(); }
  bool empty() const noexcept { return refs_.empty(); }
  std::size_t n_a() const noexcept { return n_a_; }
  std::size_t n_b() const noexcept { return n_b_; }
  const WindowRef& ref(std::size_t i) const { return refs_.at(i); }
  const std::vector<WindowRef>& refs() const noexcept { return refs_; }
  const Dataset& dataset() const { return *dataset_; }
  std::shared_ptr<const Dataset> dataset_ptr() const { return dataset_; }

  WindowSample sample(std::size_t i) const;
  /// Same references over another dataset with identical cycle layout
  /// (e.g. its normalized copy).
  WindowSet rebind(std::shared_ptr<const Dataset> dataset) const;

 private:
  std::shared_ptr<const Dataset> dataset_;
  std::size_t n_a_ = 0;
  std::size_t n_b_ = 0;
  std::vector<WindowRef> refs_;
};

/// floor((T - n_a - n_b) / stride) + 1 when T >= n_a + n_b, else 0.
std::size_t window_count(std::size_t length, std::size_t n_a, std::size_t n_b, std::size_t stride);

std::vector<WindowRef> window_refs(const Dataset& dataset, std::size_t n_a, std::size_t n_b, std::size_t stride,
                                   std::span<const std::size_t> cycle_positions = {});
WindowSet make_windows(std::shared_ptr<const Dataset> dataset, std::size_t n_a, std::size_t n_b, std::size_t stride);

/// Min/max over the samples touched by `windows` (every sample when null).
NormalizationStats fit_normalization(const Dataset& dataset, const WindowSet* windows = nullptr);
Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats);
std::pair<Dataset, NormalizationStats> normalize(const Dataset& dataset);
std::vector<double> denormalize(const ChannelStats& stats, std::span<const double> values);

struct HoldoutSpec {
  std::vector<std::string> cells;
  std::size_t last_cycles = 0;  // additionally hold out each cell's last N cycles
};

/// Ascending positions of the cycles selected by `holdout`; throws ShapeError
/// naming any holdout cell absent from the dataset.
std::vector<std::size_t> holdout_positions(const Dataset& dataset, const HoldoutSpec& holdout);

struct SplitOptions {
  std::size_t n_a = 500;
  std::size_t n_b = 200;
  double val_fraction = 0.2;
  std::size_t block_windows = 256;  // contiguous windows moved between splits together
  std::uint64_t seed = 11;
};

struct DatasetSplit {
  WindowSet train;
  WindowSet validation;
  std::vector<std::size_t> test_cycles;  // positions of held-out cycles
};

/// Held-out cycles go to test whole; the remaining stride-1 windows are cut
/// into contiguous blocks which are shuffled and divided by `val_fraction`.
DatasetSplit split_dataset(std::shared_ptr<const Dataset> dataset, const HoldoutSpec& holdout,
                           const SplitOptions& options);

Dataset select_cycles(const Dataset& dataset, std::span<const std::size_t> positions);

}  // namespace tsae
