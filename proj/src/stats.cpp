#include "grandff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/students_t.hpp>

namespace grandff {

TimeAverager::TimeAverager(double warmup, double horizon, int batches)
    : warmup_(warmup), horizon_(horizon) {
  if (!(horizon > warmup)) throw InsufficientData("horizon must exceed warmup");
  if (batches < 1) throw InsufficientData("need at least one batch");
  batch_length_ = (horizon - warmup) / batches;
  weight_.assign(batches, 0.0);
  integral_.assign(batches, 0.0);
}

void TimeAverager::add(double t0, double t1, double value) {
  t0 = std::max(t0, warmup_);
  t1 = std::min(t1, horizon_);
  if (!(t1 > t0)) return;
  const int n = static_cast<int>(weight_.size());
  int b = std::min(n - 1, static_cast<int>((t0 - warmup_) / batch_length_));
  while (t0 < t1) {
    const double end = b == n - 1 ? horizon_ : warmup_ + (b + 1) * batch_length_;
    const double stop = std::min(t1, end);
    if (stop > t0) {
      weight_[b] += stop - t0;
      integral_[b] += (stop - t0) * value;
    }
    t0 = stop;
    if (++b >= n) break;
  }
}

double TimeAverager::mean() const {
  double w = 0.0, s = 0.0;
  for (std::size_t b = 0; b < weight_.size(); ++b) {
    w += weight_[b];
    s += integral_[b];
  }
  return w > 0.0 ? s / w : 0.0;
}

SteadyStateEstimate TimeAverager::estimate() const {
  std::vector<double> means;
  double w = 0.0, s = 0.0;
  for (std::size_t b = 0; b < weight_.size(); ++b) {
    if (weight_[b] <= 0.0) continue;
    means.push_back(integral_[b] / weight_[b]);
    w += weight_[b];
    s += integral_[b];
  }
  if (means.size() < 2) throw InsufficientData("fewer than two nonempty batches");

  SteadyStateEstimate est;
  est.mean = s / w;
  est.batches = static_cast<int>(means.size());
  est.warmup = warmup_;
  est.horizon = horizon_;
  est.reliable = est.batches >= kMinReliableBatches;

  double bm = 0.0;
  for (double m : means) bm += m;
  bm /= means.size();
  double ss = 0.0;
  for (double m : means) ss += (m - bm) * (m - bm);
  const double sd = std::sqrt(ss / (means.size() - 1));
  est.half_width = t_quantile_975(est.batches - 1) * sd / std::sqrt(static_cast<double>(est.batches));
  return est;
}

SteadyStateEstimate time_average(std::span<const Step> trajectory, double warmup, double horizon,
                                 int batches) {
  TimeAverager avg(warmup, horizon, batches);
  for (std::size_t s = 0; s < trajectory.size(); ++s) {
    const double end = s + 1 < trajectory.size() ? trajectory[s + 1].t : horizon;
    avg.add(trajectory[s].t, end, trajectory[s].value);
  }
  auto est = avg.estimate();
  if (est.batches < kMinReliableBatches) {
    throw InsufficientData("only " + std::to_string(est.batches) + " nonempty batches");
  }
  return est;
}

double default_warmup(double min_mu, double horizon) {
  return std::max(10.0 / min_mu, 0.1 * horizon);
}

double t_quantile_975(int dof) {
  if (dof < 1) return std::numeric_limits<double>::infinity();
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  out.n = values.size();
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / values.size();
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / (values.size() - 1));
  out.half_width = t_quantile_975(static_cast<int>(values.size()) - 1) * sd /
                   std::sqrt(static_cast<double>(values.size()));
  return out;
}

PoissonMarginalReport poisson_marginal_test(const std::vector<std::vector<double>>& samples) {
  PoissonMarginalReport rep;
  rep.samples = samples.size();
  if (samples.empty()) return rep;
  const std::size_t types = samples.front().size();
  const double n = static_cast<double>(samples.size());

  std::vector<double> mean(types, 0.0);
  for (const auto& row : samples)
    for (std::size_t i = 0; i < types; ++i) mean[i] += row[i];
  for (auto& m : mean) m /= n;

  std::vector<double> cov(types * types, 0.0);
  for (const auto& row : samples)
    for (std::size_t i = 0; i < types; ++i)
      for (std::size_t j = 0; j < types; ++j)
        cov[i * types + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
  for (auto& c : cov) c /= (n - 1.0);

  bool all_ok = true;
  for (std::size_t i = 0; i < types; ++i) {
    PoissonMarginal m;
    m.mean = mean[i];
    m.variance = cov[i * types + i];
    m.dispersion = m.mean > 0.0 ? m.variance / m.mean : 0.0;
    m.standard_error = std::sqrt(m.variance / n);
    m.dispersion_ok = m.dispersion >= kDispersionLow && m.dispersion <= kDispersionHigh;
    all_ok = all_ok && m.dispersion_ok;
    rep.types.push_back(m);
  }
  for (std::size_t i = 0; i < types; ++i) {
    for (std::size_t j = i + 1; j < types; ++j) {
      const double denom = std::sqrt(cov[i * types + i] * cov[j * types + j]);
      const double corr = denom > 0.0 ? cov[i * types + j] / denom : 1.0;
      rep.max_abs_correlation = std::max(rep.max_abs_correlation, std::abs(corr));
    }
  }
  rep.correlation_ok = rep.max_abs_correlation <= kCorrelationCap;
  rep.passed = all_ok && rep.correlation_ok && rep.samples >= kMinPoissonSamples;
  return rep;
}

BusyPeriodSummary summarize_busy_periods(std::vector<double> durations, std::size_t censored) {
  BusyPeriodSummary out;
  out.count = durations.size();
  out.censored = censored;
  if (durations.empty()) return out;
  std::sort(durations.begin(), durations.end());
  double s = 0.0;
  for (double d : durations) s += d;
  out.mean = s / durations.size();
  const auto idx = static_cast<std::size_t>(std::ceil(0.99 * durations.size())) - 1;
  out.p99 = durations[std::min(idx, durations.size() - 1)];
  out.max = durations.back();
  out.emptying_rate = out.mean > 0.0 ? 1.0 / out.mean : 0.0;
  return out;
}

}  // namespace grandff
