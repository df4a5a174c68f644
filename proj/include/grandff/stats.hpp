#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace grandff {

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultBatches = 20;
inline constexpr int kMinReliableBatches = 10;

struct SteadyStateEstimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% batch-means confidence half-width
  int batches = 0;          // nonempty batches used
  double warmup = 0.0;
  double horizon = 0.0;
  bool reliable = false;    // batches >= kMinReliableBatches
};

/// Holding-time weighted average of a piecewise-constant signal over
/// [warmup, horizon], split into equal-length batches.
class TimeAverager {
 public:
  TimeAverager() = default;
  TimeAverager(double warmup, double horizon, int batches = kDefaultBatches);

  /// Accumulates `value` held over [t0, t1); the part outside [warmup, horizon] is dropped.
  void add(double t0, double t1, double value);

  /// Lenient: flags estimates with fewer than kMinReliableBatches as unreliable.
  /// Throws InsufficientData only when fewer than two batches carry weight.
  SteadyStateEstimate estimate() const;
  double mean() const;

 private:
  double warmup_ = 0.0;
  double horizon_ = 0.0;
  double batch_length_ = 0.0;
  std::vector<double> weight_;
  std::vector<double> integral_;
};

/// A step of a piecewise-constant trajectory: `value` holds from `t` until the next step.
struct Step {
  double t = 0.0;
  double value = 0.0;
};

/// Strict variant: throws InsufficientData with fewer than kMinReliableBatches
/// nonempty batches. The last step holds until `horizon`.
SteadyStateEstimate time_average(std::span<const Step> trajectory, double warmup, double horizon,
                                 int batches = kDefaultBatches);

/// Default warmup: max(10 / min_mu, 0.1 * horizon).
double default_warmup(double min_mu, double horizon);

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
double t_quantile_975(int dof);

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n = 0;
};

/// Sample mean with a 95% t-interval across independent replications.
MeanCi mean_ci(std::span<const double> values);

inline constexpr double kDispersionLow = 0.85;
inline constexpr double kDispersionHigh = 1.15;
inline constexpr double kCorrelationCap = 0.1;
inline constexpr std::size_t kMinPoissonSamples = 500;

struct PoissonMarginal {
  double mean = 0.0;
  double variance = 0.0;
  double dispersion = 0.0;  // variance / mean
  double standard_error = 0.0;
  bool dispersion_ok = false;
};

struct PoissonMarginalReport {
  std::size_t samples = 0;
  std::vector<PoissonMarginal> types;
  double max_abs_correlation = 0.0;  // over distinct pairs of types
  bool correlation_ok = true;
  bool passed = false;
};

/// `samples[s][i]` is Y_i at the s-th spaced observation.
PoissonMarginalReport poisson_marginal_test(const std::vector<std::vector<double>>& samples);

struct BusyPeriodSummary {
  std::size_t count = 0;
  std::size_t censored = 0;  // servers still occupied at the horizon
  double mean = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  double emptying_rate = 0.0;  // 1 / mean
};

BusyPeriodSummary summarize_busy_periods(std::vector<double> durations, std::size_t censored = 0);

}  // namespace grandff
