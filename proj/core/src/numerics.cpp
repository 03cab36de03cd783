#include "tsae/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "tsae/errors.hpp"

namespace tsae {

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

RealMatrix RealMatrix::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return RealMatrix(n, 1, std::move(values));
}

void RealMatrix::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

void RealMatrix::resize(std::size_t rows, std::size_t cols) {
  rows_ = rows;
  cols_ = cols;
  data_.assign(rows * cols, 0.0);
}

RealMatrix RealMatrix::transposed() const {
  RealMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  }
  return out;
}

bool RealMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double RealMatrix::squared_norm() const noexcept {
  return std::inner_product(data_.begin(), data_.end(), data_.begin(), 0.0);
}

std::string RealMatrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double tanh_act(double x) noexcept { return std::tanh(x); }

std::uint64_t Rng::mix(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RealMatrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("glorot_init: dimensions must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  RealMatrix out(rows, cols);
  for (double& v : out.values()) v = rng.uniform(-bound, bound);
  return out;
}

// ParamStore

RealMatrix& ParamStore::add(std::string name, RealMatrix value) {
  if (index_.contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  RealMatrix grad(value.rows(), value.cols());
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return entries_.back().value;
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ShapeError("missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() noexcept {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamStore::scale_grad(double factor) noexcept {
  for (auto& e : entries_) {
    for (double& g : e.grad.values()) g *= factor;
  }
}

void ParamStore::accumulate_grad(const ParamStore& other) {
  if (!same_layout(other)) {
    throw ShapeError("accumulate_grad: parameter layouts differ");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].grad.values();
    auto src = other.entries_[i].grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

double ParamStore::grad_norm() const noexcept {
  double s = 0.0;
  for (const auto& e : entries_) s += e.grad.squared_norm();
  return std::sqrt(s);
}

double ParamStore::value_norm() const noexcept {
  double s = 0.0;
  for (const auto& e : entries_) s += e.value.squared_norm();
  return std::sqrt(s);
}

bool ParamStore::same_layout(const ParamStore& other) const noexcept {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        !entries_[i].value.same_shape(other.entries_[i].value)) {
      return false;
    }
  }
  return true;
}

// Adam

AdamState AdamState::for_params(const ParamStore& params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& e : params) {
    state.first_moment.emplace_back(e.value.rows(), e.value.cols());
    state.second_moment.emplace_back(e.value.rows(), e.value.cols());
  }
  return state;
}

void adam_step(ParamStore& params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state has " + std::to_string(state.first_moment.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params[i];
    if (!e.grad.same_shape(e.value) || !state.first_moment[i].same_shape(e.value) ||
        !state.second_moment[i].same_shape(e.value)) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + e.name + "' (value " +
                       e.value.shape_string() + ", grad " + e.grad.shape_string() + ")");
    }
  }

  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value.values();
    auto grad = params[i].grad.values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      value[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = params.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    params.scale_grad(max_norm / norm);
  }
  return norm;
}

// Gradient verification

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> choose_probes(std::size_t total, std::size_t probe_count, std::uint64_t seed) {
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  if (probe_count == 0 || probe_count >= total) return all;
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng.engine());
  all.resize(probe_count);
  std::sort(all.begin(), all.end());
  return all;
}

double checked(double v) {
  if (!std::isfinite(v)) throw NumericalError("finite_diff_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double(const ParamStore&)>& loss,
                                  const ParamStore& params, const GradCheckOptions& options) {
  if (options.step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  checked(loss(params));

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].value.size(); ++k) coords.emplace_back(p, k);
  }

  GradCheckReport report;
  ParamStore probe = params;
  for (std::size_t c : choose_probes(coords.size(), options.probe_count, options.seed)) {
    const auto [p, k] = coords[c];
    double& slot = probe[p].value[k];
    const double original = slot;
    slot = original + options.step;
    const double up = checked(loss(probe));
    slot = original - options.step;
    const double down = checked(loss(probe));
    slot = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = params[p].grad[k];
    const double err = relative_error(analytic, numeric);
    ++report.probes;
    if (err > report.max_relative_error || report.probes == 1) {
      report.max_relative_error = std::max(err, report.max_relative_error);
      report.worst_name = params[p].name;
      report.worst_index = k;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                  std::span<const double> point, std::span<const double> analytic,
                                  const GradCheckOptions& options) {
  if (options.step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  if (point.size() != analytic.size()) {
    throw ShapeError("finite_diff_check: point and gradient lengths differ");
  }
  checked(loss(point));

  GradCheckReport report;
  std::vector<double> probe(point.begin(), point.end());
  for (std::size_t k : choose_probes(point.size(), options.probe_count, options.seed)) {
    const double original = probe[k];
    probe[k] = original + options.step;
    const double up = checked(loss(probe));
    probe[k] = original - options.step;
    const double down = checked(loss(probe));
    probe[k] = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double err = relative_error(analytic[k], numeric);
    ++report.probes;
    if (err > report.max_relative_error || report.probes == 1) {
      report.max_relative_error = std::max(err, report.max_relative_error);
      report.worst_name = "x";
      report.worst_index = k;
      report.worst_analytic = analytic[k];
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const std::size_t workers = std::min(threads, n);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t threads_from_env() {
  const char* v = std::getenv("TSAE_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0' || n == 0) throw ConfigError(std::string("TSAE_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace tsae
