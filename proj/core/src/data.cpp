#include "tsae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tsae/errors.hpp"

namespace tsae {

void CycleSeries::validate() const {
  const std::size_t n = time_s.size();
  if (n == 0) throw ShapeError("cycle " + std::to_string(cycle_index) + " of " + cell_id + " is empty");
  if (current_a.size() != n || voltage_v.size() != n || (truth && truth->soc.size() != n)) {
    throw ShapeError("cycle " + std::to_string(cycle_index) + " of " + cell_id + " has unequal sequence lengths");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(time_s[i] > time_s[i - 1])) {
      throw ShapeError("cycle " + std::to_string(cycle_index) + " of " + cell_id + ": time not increasing at sample " +
                       std::to_string(i));
    }
  }
}

// Simulator

double SimConfig::ocv(double soc) const noexcept {
  double v = 0.0;
  for (std::size_t k = ocv_coefficients.size(); k-- > 0;) v = v * soc + ocv_coefficients[k];
  return v;
}

void SimConfig::validate() const {
  if (!(q_nom_ah > 0.0) || !(r0_ohm > 0.0) || !(r1_ohm > 0.0) || !(c1_farad > 0.0) || !(dt_s > 0.0)) {
    throw ConfigError("simulator: physical parameters (q_nom, r0, r1, c1, dt) must be positive");
  }
  if (noise_std_v < 0.0) throw ConfigError("simulator: noise_std_v must be non-negative");
  if (ocv_coefficients.empty()) throw ConfigError("simulator: OCV coefficients are empty");
  const double tau = tau_s();
  if (tau < 1.0 || tau > 60.0) {
    throw ConfigError("simulator: RC time constant " + std::to_string(tau) + " s outside [1, 60] s");
  }
  if (dt_s >= tau) throw ConfigError("simulator: dt must be smaller than the RC time constant");
}

EcmSimulator::EcmSimulator(const SimConfig& cfg, double theta_q, double theta_r, double soc_start,
                           std::uint64_t noise_seed)
    : cfg_(cfg), theta_q_(theta_q), theta_r_(theta_r), soc_(soc_start), noise_(noise_seed) {
  cfg_.validate();
  if (!(soc_start > 0.0 && soc_start <= 1.0)) throw ConfigError("simulator: soc_start must be in (0, 1]");
  if (!(theta_q > 0.0) || !(theta_r > 0.0)) throw ConfigError("simulator: aging factors must be positive");
}

double EcmSimulator::terminal_voltage(double current_a) {
  double v = cfg_.ocv(soc_) - current_a * cfg_.r0_ohm * theta_r_ - v_rc_;
  if (cfg_.noise_std_v > 0.0) v += noise_.normal(0.0, cfg_.noise_std_v);
  return v;
}

void EcmSimulator::advance(double current_a) {
  soc_ -= cfg_.dt_s * current_a / (3600.0 * cfg_.q_nom_ah * theta_q_);
  v_rc_ = v_rc_ * (1.0 - cfg_.dt_s / cfg_.tau_s()) + cfg_.dt_s * current_a / cfg_.c1_farad;
}

CycleSeries simulate_cycle(const SimConfig& cfg, double theta_q, double theta_r, double soc_start,
                           std::span<const double> current_profile) {
  EcmSimulator sim(cfg, theta_q, theta_r, soc_start, cfg.seed);
  CycleSeries out;
  out.truth = SlowStateTruth{{}, theta_q, theta_r};
  for (std::size_t t = 0; t < current_profile.size(); ++t) {
    const double i = current_profile[t];
    if (!std::isfinite(i)) throw ConfigError("simulate_cycle: non-finite current at sample " + std::to_string(t));
    out.time_s.push_back(static_cast<double>(t) * cfg.dt_s);
    out.current_a.push_back(i);
    out.truth->soc.push_back(sim.soc());
    out.voltage_v.push_back(sim.terminal_voltage(i));
    sim.advance(i);
    if (sim.soc() < 0.0 || sim.soc() > 1.0) {
      out.truncated = t + 1 < current_profile.size();
      break;
    }
  }
  return out;
}

// Aging schedule and drive profile

FadeKnot FadeSchedule::at(std::size_t cycle, std::size_t total_cycles) const {
  validate();
  const double x = total_cycles <= 1 ? 0.0 : static_cast<double>(cycle) / static_cast<double>(total_cycles - 1);
  if (x <= knots.front().fraction) return {x, knots.front().theta_q, knots.front().theta_r};
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (x <= knots[k].fraction) {
      const auto& a = knots[k - 1];
      const auto& b = knots[k];
      const double w = (x - a.fraction) / (b.fraction - a.fraction);
      return {x, a.theta_q + w * (b.theta_q - a.theta_q), a.theta_r + w * (b.theta_r - a.theta_r)};
    }
  }
  return {x, knots.back().theta_q, knots.back().theta_r};
}

void FadeSchedule::validate() const {
  if (knots.empty()) throw ConfigError("fade schedule is empty");
  for (std::size_t k = 0; k < knots.size(); ++k) {
    if (knots[k].fraction < 0.0 || knots[k].fraction > 1.0) throw ConfigError("fade knot fraction outside [0, 1]");
    if (!(knots[k].theta_q > 0.0) || !(knots[k].theta_r > 0.0)) throw ConfigError("fade knot factors must be > 0");
    if (k > 0) {
      const auto& a = knots[k - 1];
      const auto& b = knots[k];
      if (!(b.fraction > a.fraction)) throw ConfigError("fade knot fractions must increase");
      if (b.theta_q > a.theta_q || b.theta_r < a.theta_r) {
        throw ConfigError("fade schedule must be monotone (theta_q non-increasing, theta_r non-decreasing)");
      }
    }
  }
}

void DriveProfileConfig::validate() const {
  if (!(min_pulse_s > 0.0) || max_pulse_s < min_pulse_s) throw ConfigError("drive profile: bad pulse durations");
  if (!(max_c_rate > 0.0) || max_regen_c_rate < 0.0) throw ConfigError("drive profile: bad C-rates");
  if (rest_probability < 0.0 || regen_probability < 0.0 || rest_probability + regen_probability >= 1.0) {
    throw ConfigError("drive profile: rest + regen probabilities must be in [0, 1)");
  }
}

DriveProfile::DriveProfile(const DriveProfileConfig& cfg, double q_nom_ah, double dt_s, std::uint64_t seed)
    : cfg_(cfg), one_c_a_(q_nom_ah), dt_s_(dt_s), rng_(seed) {
  cfg_.validate();
}

void DriveProfile::new_pulse() {
  const double duration = rng_.uniform(cfg_.min_pulse_s, cfg_.max_pulse_s);
  remaining_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration / dt_s_)));
  const double kind = rng_.uniform(0.0, 1.0);
  if (kind < cfg_.rest_probability) {
    level_ = 0.0;
  } else if (kind < cfg_.rest_probability + cfg_.regen_probability) {
    level_ = -rng_.uniform(0.0, cfg_.max_regen_c_rate) * one_c_a_;
  } else {
    level_ = rng_.uniform(0.0, cfg_.max_c_rate) * one_c_a_;
  }
}

double DriveProfile::next() {
  if (remaining_ == 0) new_pulse();
  --remaining_;
  return level_;
}

Dataset generate_dataset(const SimConfig& cfg, const GenerateOptions& options) {
  cfg.validate();
  options.fade.validate();
  options.profile.validate();
  if (options.cycles == 0) throw ConfigError("generate: cycle count must be >= 1");
  if (!(options.soc_end < options.soc_start)) throw ConfigError("generate: soc_end must be below soc_start");

  const Rng root(options.seed);
  // Hard cap: the slowest admissible discharge still ends well before this.
  const std::size_t max_samples = static_cast<std::size_t>(4.0 * 3600.0 * 24.0 / cfg.dt_s);

  Dataset ds;
  ds.provenance = Provenance::synthetic;
  for (std::size_t k = 0; k < options.cycles; ++k) {
    const FadeKnot aging = options.fade.at(k, options.cycles);
    DriveProfile profile(options.profile, cfg.q_nom_ah, cfg.dt_s, root.split(options.repeat_profile ? 0 : 2 * k).seed());
    EcmSimulator sim(cfg, aging.theta_q, aging.theta_r, options.soc_start, root.split(2 * k + 1).seed());

    CycleSeries c;
    c.cell_id = options.cell_id;
    c.cycle_index = k;
    c.truth = SlowStateTruth{{}, aging.theta_q, aging.theta_r};
    for (std::size_t t = 0; t < max_samples && sim.soc() > options.soc_end; ++t) {
      const double i = profile.next();
      c.time_s.push_back(static_cast<double>(t) * cfg.dt_s);
      c.current_a.push_back(i);
      c.truth->soc.push_back(sim.soc());
      c.voltage_v.push_back(sim.terminal_voltage(i));
      sim.advance(i);
      if (sim.soc() > 1.0) {
        c.truncated = true;
        break;
      }
    }
    ds.cycles.push_back(std::move(c));
  }
  return ds;
}

// Capacity

double discharge_capacity(std::span<const double> current_a, double dt_s, double q_nom_ah) {
  if (!(q_nom_ah > 0.0)) throw ConfigError("discharge_capacity: nominal capacity must be positive");
  if (!(dt_s > 0.0)) throw ConfigError("discharge_capacity: dt must be positive");
  // Neumaier-compensated sum keeps long constant-current integrals exact to rounding.
  double sum = 0.0;
  double comp = 0.0;
  for (double i : current_a) {
    const double t = sum + i;
    comp += std::abs(sum) >= std::abs(i) ? (sum - t) + i : (i - t) + sum;
    sum = t;
  }
  return (sum + comp) * dt_s / (q_nom_ah * 3600.0) * 100.0;
}

// Normalization

double ChannelStats::forward(double x) const noexcept {
  if (constant) return 0.0;
  return -kNormalizedHalfRange + 2.0 * kNormalizedHalfRange * (x - min) / (max - min);
}

double ChannelStats::inverse(double z) const noexcept {
  if (constant) return min;
  return min + (z + kNormalizedHalfRange) * (max - min) / (2.0 * kNormalizedHalfRange);
}

std::vector<std::string> Dataset::cell_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& c : cycles) {
    if (seen.insert(c.cell_id).second) ids.push_back(c.cell_id);
  }
  return ids;
}

std::size_t Dataset::total_samples() const noexcept {
  std::size_t n = 0;
  for (const auto& c : cycles) n += c.size();
  return n;
}

namespace {

ChannelStats make_channel(double lo, double hi) {
  ChannelStats s{lo, hi, false};
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) s.constant = true;
  return s;
}

}  // namespace

NormalizationStats fit_normalization(const Dataset& dataset, const WindowSet* windows) {
  double i_lo = INFINITY, i_hi = -INFINITY, v_lo = INFINITY, v_hi = -INFINITY;
  auto visit = [&](const CycleSeries& c, std::size_t from, std::size_t to) {
    for (std::size_t t = from; t < to; ++t) {
      i_lo = std::min(i_lo, c.current_a[t]);
      i_hi = std::max(i_hi, c.current_a[t]);
      v_lo = std::min(v_lo, c.voltage_v[t]);
      v_hi = std::max(v_hi, c.voltage_v[t]);
    }
  };
  if (windows == nullptr) {
    for (const auto& c : dataset.cycles) visit(c, 0, c.size());
  } else {
    // Per cycle, mark covered samples with a difference array.
    std::map<std::uint32_t, std::vector<int>> cover;
    const std::size_t span_len = windows->n_a() + windows->n_b();
    for (const auto& r : windows->refs()) {
      auto& d = cover[r.cycle];
      if (d.empty()) d.assign(dataset.cycles.at(r.cycle).size() + 1, 0);
      d[r.start] += 1;
      d[r.start + span_len] -= 1;
    }
    for (const auto& [cycle, d] : cover) {
      const auto& c = dataset.cycles[cycle];
      int running = 0;
      for (std::size_t t = 0; t < c.size(); ++t) {
        running += d[t];
        if (running > 0) visit(c, t, t + 1);
      }
    }
  }
  if (!(i_lo <= i_hi)) throw ShapeError("normalization: no samples to fit");
  return {make_channel(i_lo, i_hi), make_channel(v_lo, v_hi)};
}

Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats) {
  if (dataset.stats) throw ConfigError("dataset is already normalized");
  Dataset out = dataset;
  for (auto& c : out.cycles) {
    for (double& i : c.current_a) i = stats.current.forward(i);
    for (double& v : c.voltage_v) v = stats.voltage.forward(v);
  }
  out.stats = stats;
  return out;
}

std::pair<Dataset, NormalizationStats> normalize(const Dataset& dataset) {
  if (dataset.cycles.empty()) throw ShapeError("normalize: empty dataset");
  const NormalizationStats stats = fit_normalization(dataset);
  return {apply_normalization(dataset, stats), stats};
}

std::vector<double> denormalize(const ChannelStats& stats, std::span<const double> values) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double z) { return stats.inverse(z); });
  return out;
}

// Windows

std::size_t window_count(std::size_t length, std::size_t n_a, std::size_t n_b, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be >= 1");
  if (length < n_a + n_b) return 0;
  return (length - n_a - n_b) / stride + 1;
}

std::vector<WindowRef> window_refs(const Dataset& dataset, std::size_t n_a, std::size_t n_b, std::size_t stride,
                                   std::span<const std::size_t> cycle_positions) {
  if (n_a == 0 || n_b == 0) throw ConfigError("windows: n_a and n_b must be >= 1");
  std::vector<std::size_t> all;
  if (cycle_positions.empty()) {
    all.resize(dataset.cycles.size());
    std::iota(all.begin(), all.end(), 0);
    cycle_positions = all;
  }
  std::vector<WindowRef> refs;
  for (std::size_t pos : cycle_positions) {
    const std::size_t n = window_count(dataset.cycles.at(pos).size(), n_a, n_b, stride);
    for (std::size_t w = 0; w < n; ++w) {
      refs.push_back({static_cast<std::uint32_t>(pos), static_cast<std::uint32_t>(w * stride)});
    }
  }
  return refs;
}

WindowSet make_windows(std::shared_ptr<const Dataset> dataset, std::size_t n_a, std::size_t n_b, std::size_t stride) {
  auto refs = window_refs(*dataset, n_a, n_b, stride);
  return WindowSet(std::move(dataset), n_a, n_b, std::move(refs));
}

WindowSet::WindowSet(std::shared_ptr<const Dataset> dataset, std::size_t n_a, std::size_t n_b,
                     std::vector<WindowRef> refs)
    : dataset_(std::move(dataset)), n_a_(n_a), n_b_(n_b), refs_(std::move(refs)) {
  if (!dataset_) throw ConfigError("window set requires a dataset");
  for (const auto& r : refs_) {
    if (r.cycle >= dataset_->cycles.size() || r.start + n_a_ + n_b_ > dataset_->cycles[r.cycle].size()) {
      throw ShapeError("window reference outside its cycle");
    }
  }
}

WindowSample WindowSet::sample(std::size_t i) const {
  const WindowRef& r = refs_.at(i);
  const CycleSeries& c = dataset_->cycles[r.cycle];
  WindowSample w;
  w.history = RealMatrix(n_a_, 2);
  for (std::size_t t = 0; t < n_a_; ++t) {
    w.history(t, 0) = c.current_a[r.start + t];
    w.history(t, 1) = c.voltage_v[r.start + t];
  }
  const std::size_t f = r.start + n_a_;
  w.future_inputs.assign(c.current_a.begin() + f, c.current_a.begin() + f + n_b_);
  w.future_targets.assign(c.voltage_v.begin() + f, c.voltage_v.begin() + f + n_b_);
  w.cell_id = c.cell_id;
  w.cycle_index = c.cycle_index;
  w.start = r.start;
  return w;
}

WindowSet WindowSet::rebind(std::shared_ptr<const Dataset> dataset) const {
  if (!dataset || dataset->cycles.size() != dataset_->cycles.size()) {
    throw ShapeError("rebind: dataset layouts differ");
  }
  for (std::size_t c = 0; c < dataset->cycles.size(); ++c) {
    if (dataset->cycles[c].size() != dataset_->cycles[c].size()) throw ShapeError("rebind: cycle lengths differ");
  }
  return WindowSet(std::move(dataset), n_a_, n_b_, refs_);
}

// Splits

std::vector<std::size_t> holdout_positions(const Dataset& dataset, const HoldoutSpec& holdout) {
  const auto cells = dataset.cell_ids();
  for (const auto& h : holdout.cells) {
    if (std::find(cells.begin(), cells.end(), h) == cells.end()) {
      throw ShapeError("holdout cell '" + h + "' not found in dataset");
    }
  }

  // Per cell, the cycle indices that fall into the "last N" holdout.
  std::map<std::string, std::vector<std::size_t>> indices_by_cell;
  for (const auto& c : dataset.cycles) indices_by_cell[c.cell_id].push_back(c.cycle_index);
  std::map<std::string, std::size_t> threshold;
  for (auto& [cell, idx] : indices_by_cell) {
    std::sort(idx.begin(), idx.end());
    if (holdout.last_cycles > 0) {
      threshold[cell] = holdout.last_cycles >= idx.size() ? idx.front() : idx[idx.size() - holdout.last_cycles];
    }
  }

  std::vector<std::size_t> positions;
  for (std::size_t pos = 0; pos < dataset.cycles.size(); ++pos) {
    const auto& c = dataset.cycles[pos];
    const bool by_cell = std::find(holdout.cells.begin(), holdout.cells.end(), c.cell_id) != holdout.cells.end();
    const bool by_index = holdout.last_cycles > 0 && c.cycle_index >= threshold[c.cell_id];
    if (by_cell || by_index) positions.push_back(pos);
  }
  return positions;
}

DatasetSplit split_dataset(std::shared_ptr<const Dataset> dataset, const HoldoutSpec& holdout,
                           const SplitOptions& options) {
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0)) {
    throw ConfigError("split: val_fraction must be in (0, 1)");
  }
  if (options.block_windows == 0) throw ConfigError("split: block_windows must be >= 1");
  DatasetSplit split;
  split.test_cycles = holdout_positions(*dataset, holdout);
  std::vector<std::size_t> remaining;
  for (std::size_t pos = 0; pos < dataset->cycles.size(); ++pos) {
    if (!std::binary_search(split.test_cycles.begin(), split.test_cycles.end(), pos)) remaining.push_back(pos);
  }
  if (remaining.empty()) throw ConfigError("split: holdout removes every cycle; nothing left to train on");

  const auto refs = window_refs(*dataset, options.n_a, options.n_b, 1, remaining);
  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [begin, end) into refs
  for (std::size_t b = 0; b < refs.size();) {
    std::size_t e = b + 1;
    while (e < refs.size() && e - b < options.block_windows && refs[e].cycle == refs[b].cycle) ++e;
    blocks.emplace_back(b, e);
    b = e;
  }
  Rng rng(options.seed);
  std::shuffle(blocks.begin(), blocks.end(), rng.engine());

  const auto want_val = static_cast<std::size_t>(std::llround(options.val_fraction * static_cast<double>(refs.size())));
  std::vector<WindowRef> train, val;
  std::size_t taken = 0;
  for (const auto& [b, e] : blocks) {
    auto& dst = taken < want_val ? val : train;
    if (&dst == &val) taken += e - b;
    dst.insert(dst.end(), refs.begin() + static_cast<std::ptrdiff_t>(b), refs.begin() + static_cast<std::ptrdiff_t>(e));
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  split.train = WindowSet(dataset, options.n_a, options.n_b, std::move(train));
  split.validation = WindowSet(dataset, options.n_a, options.n_b, std::move(val));
  return split;
}

Dataset select_cycles(const Dataset& dataset, std::span<const std::size_t> positions) {
  Dataset out;
  out.stats = dataset.stats;
  out.provenance = dataset.provenance;
  for (std::size_t p : positions) out.cycles.push_back(dataset.cycles.at(p));
  return out;
}

// CSV

namespace {

const std::vector<std::string> kBaseColumns{"cell_id", "cycle_index", "time_s", "current_a", "voltage_v"};
const std::vector<std::string> kTruthColumns{"soc", "theta_q", "theta_r"};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t row, const std::string& column) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw IoError("csv row " + std::to_string(row) + ": column '" + column + "' is not a finite number: '" +
                  std::string(field) + "'");
  }
  return v;
}

std::size_t parse_index(std::string_view field, std::size_t row) {
  std::size_t v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw IoError("csv row " + std::to_string(row) + ": column 'cycle_index' is not a non-negative integer: '" +
                  std::string(field) + "'");
  }
  return v;
}

void append_fixed(std::string& out, double v, int precision) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  out.append(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset '" + path.string() + "' is empty (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(header[i])] = i;
  for (const auto& name : kBaseColumns) {
    if (!col.contains(name)) throw IoError("dataset '" + path.string() + "': missing column '" + name + "'");
  }
  const bool has_truth = std::all_of(kTruthColumns.begin(), kTruthColumns.end(),
                                     [&](const std::string& n) { return col.contains(n); });

  Dataset ds;
  ds.provenance = Provenance::csv;
  std::map<std::pair<std::string, std::size_t>, std::size_t> position;
  std::set<std::size_t> warned;
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw IoError("csv row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(f.size()));
    }
    std::string cell(f[col["cell_id"]]);
    const std::size_t cycle = parse_index(f[col["cycle_index"]], row);
    const double t = parse_double(f[col["time_s"]], row, "time_s");
    const double i = parse_double(f[col["current_a"]], row, "current_a");
    const double v = parse_double(f[col["voltage_v"]], row, "voltage_v");

    auto key = std::make_pair(cell, cycle);
    auto it = position.find(key);
    if (it == position.end()) {
      it = position.emplace(key, ds.cycles.size()).first;
      CycleSeries c;
      c.cell_id = cell;
      c.cycle_index = cycle;
      if (has_truth) c.truth = SlowStateTruth{};
      ds.cycles.push_back(std::move(c));
    }
    CycleSeries& c = ds.cycles[it->second];
    if (!c.time_s.empty()) {
      const double dt = t - c.time_s.back();
      if (!(dt > 0.0)) {
        throw IoError("csv row " + std::to_string(row) + ": time_s " + std::string(f[col["time_s"]]) +
                      " does not increase within cycle " + std::to_string(cycle) + " of cell " + cell);
      }
      if (std::abs(dt - 0.1) > 0.01 && warned.insert(it->second).second) {
        ds.warnings.push_back("cell " + cell + " cycle " + std::to_string(cycle) + ": sample spacing " +
                              std::to_string(dt) + " s deviates from 0.1 s by more than 10% (row " +
                              std::to_string(row) + ")");
      }
    }
    c.time_s.push_back(t);
    c.current_a.push_back(i);
    c.voltage_v.push_back(v);
    if (has_truth) {
      c.truth->soc.push_back(parse_double(f[col["soc"]], row, "soc"));
      c.truth->theta_q = parse_double(f[col["theta_q"]], row, "theta_q");
      c.truth->theta_r = parse_double(f[col["theta_r"]], row, "theta_r");
    }
  }
  if (ds.cycles.empty()) throw IoError("dataset '" + path.string() + "' has no data rows");
  return ds;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path, bool include_truth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset '" + path.string() + "'");
  const bool truth = include_truth && std::all_of(dataset.cycles.begin(), dataset.cycles.end(),
                                                  [](const CycleSeries& c) { return c.truth.has_value(); });
  std::string buf = "cell_id,cycle_index,time_s,current_a,voltage_v";
  if (truth) buf += ",soc,theta_q,theta_r";
  buf += '\n';
  for (const auto& c : dataset.cycles) {
    const std::string prefix = c.cell_id + "," + std::to_string(c.cycle_index) + ",";
    for (std::size_t t = 0; t < c.size(); ++t) {
      buf += prefix;
      append_fixed(buf, c.time_s[t], 3);
      buf += ',';
      append_fixed(buf, c.current_a[t], 6);
      buf += ',';
      append_fixed(buf, c.voltage_v[t], 6);
      if (truth) {
        buf += ',';
        append_fixed(buf, c.truth->soc[t], 9);
        buf += ',';
        append_fixed(buf, c.truth->theta_q, 6);
        buf += ',';
        append_fixed(buf, c.truth->theta_r, 6);
      }
      buf += '\n';
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    buf.clear();
  }
  if (!out) throw IoError("failed while writing dataset '" + path.string() + "'");
}

}  // namespace tsae
