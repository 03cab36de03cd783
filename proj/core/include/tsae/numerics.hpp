#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tsae {

/// Dense row-major matrix of doubles. Column vectors are `n x 1` matrices.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static RealMatrix column(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void fill(double v) noexcept;
  void resize(std::size_t rows, std::size_t cols);
  bool same_shape(const RealMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  RealMatrix transposed() const;
  bool all_finite() const noexcept;
  double squared_norm() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const RealMatrix&, const RealMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Numerically stable logistic function; separate branches for x >= 0 and x < 0.
double sigmoid(double x) noexcept;
double tanh_act(double x) noexcept;

/// Seedable generator. `split` derives an independent stream so that each
/// stochastic consumer can be handed its own reproducible source.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9E3779B97F4A7C15ULL))); }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() noexcept { return engine_; }

  static std::uint64_t mix(std::uint64_t x) noexcept;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Uniform Glorot initialization in +-sqrt(6 / (rows + cols)).
RealMatrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct ParamEntry {
  std::string name;
  RealMatrix value;
  RealMatrix grad;
};

/// Named, insertion-ordered parameter collection with paired gradient
/// buffers. Insertion order is the canonical order used by the optimizer,
/// gradient reductions and checkpoints.
class ParamStore {
 public:
  RealMatrix& add(std::string name, RealMatrix value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  const RealMatrix& value(std::string_view name) const { return entries_[index_of(name)].value; }
  RealMatrix& value(std::string_view name) { return entries_[index_of(name)].value; }
  const RealMatrix& grad(std::string_view name) const { return entries_[index_of(name)].grad; }
  RealMatrix& grad(std::string_view name) { return entries_[index_of(name)].grad; }

  std::size_t size() const noexcept { return entries_.size(); }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  ParamEntry& operator[](std::size_t i) { return entries_[i]; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  std::size_t scalar_count() const noexcept;
  void zero_grad() noexcept;
  void scale_grad(double factor) noexcept;
  /// Adds `other`'s gradients entry-by-entry; names and shapes must match.
  void accumulate_grad(const ParamStore& other);
  double grad_norm() const noexcept;
  double value_norm() const noexcept;
  bool same_layout(const ParamStore& other) const noexcept;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<RealMatrix> first_moment;
  std::vector<RealMatrix> second_moment;

  static AdamState for_params(const ParamStore& params, AdamConfig config = {});
};

/// One bias-corrected Adam update over every entry in store order.
void adam_step(ParamStore& params, AdamState& state);

/// Scales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

struct GradCheckOptions {
  std::size_t probe_count = 0;  // 0 = every coordinate
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric) noexcept;

/// Central-difference check of `params`' gradient buffers against `loss`.
GradCheckReport finite_diff_check(const std::function<double(const ParamStore&)>& loss,
                                  const ParamStore& params, const GradCheckOptions& options = {});

/// Same check for a loss over a flat vector (used for input/latent gradients).
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                  std::span<const double> point, std::span<const double> analytic,
                                  const GradCheckOptions& options = {});

/// Runs fn(0..n-1) on up to `threads` workers; the first exception (by index) is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Worker count from TSAE_THREADS (default 1).
std::size_t threads_from_env();

}  // namespace tsae
