#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grandff/engine.hpp"
#include "grandff/model.hpp"
#include "grandff/stats.hpp"

namespace grandff {

/// How an empty server is taken when the placement policy asks for one.
enum class EmptyRule { FirstFit, RandomHole, FreshServer };

std::string to_string(EmptyRule rule);
EmptyRule parse_rule(const std::string& name);  // "ff" | "random-hole" | "fresh"

/// Occupancy counts over ranks 1..capacity with order-statistic queries.
class RankIndex {
 public:
  void add(std::int64_t rank, int delta);
  /// Occupied ranks in [1, rank].
  std::int64_t prefix(std::int64_t rank) const;
  /// k-th smallest occupied rank, k >= 1.
  std::int64_t kth_occupied(std::int64_t k) const;
  /// k-th smallest unoccupied positive rank, k >= 1.
  std::int64_t kth_free(std::int64_t k) const;

 private:
  void grow(std::int64_t rank);
  std::int64_t capacity_ = 0;  // power of two
  std::vector<std::int32_t> tree_;
  std::vector<std::uint8_t> bits_;
};

/// What apply_event did to the physical servers.
struct RankChange {
  std::int64_t rank = 0;
  bool occupied = false;  // rank went from empty to occupied
  bool emptied = false;   // rank went from occupied to empty
};

/// Assignment of occupied configurations to integer ranks.
///
/// Holes are the unoccupied ranks below U. The watermark is the highest rank
/// ever occupied, which can exceed U after departures.
class RankedState {
 public:
  explicit RankedState(const ConfigurationSet& configs);

  std::int64_t U() const { return u_; }
  std::int64_t Q() const { return q_; }
  std::int64_t watermark() const { return watermark_; }
  std::int64_t hole_count() const { return u_ - q_; }
  std::vector<std::int64_t> holes() const;
  /// Configuration at a rank, or -1 if unoccupied.
  int config_at(std::int64_t rank) const;
  std::int64_t count(int config) const { return static_cast<std::int64_t>(by_config_[config].size()); }
  /// Occupied ranks holding `config`, ascending.
  std::span<const std::int64_t> ranks_of(int config) const { return by_config_[config]; }

  std::int64_t take_empty(EmptyRule rule, double u) const;

  /// Applies one rank-oblivious event; `event.u` picks the server among the
  /// eligible ones in ascending rank order (index floor(u * count)).
  RankChange apply_event(const EventRecord& event, EmptyRule rule);

  /// Places a server directly (tests and initial layouts).
  void occupy(std::int64_t rank, int config);

  /// G(N): occupied ranks <= N.
  std::int64_t occupied_leq(std::int64_t n) const;

  /// Rank lists match `state` configuration by configuration.
  bool matches(const OccupancyState& state) const;
  /// Internal invariants: partition of [1, U], U is the maximum occupied rank.
  bool consistent() const;

 private:
  void vacate(std::int64_t rank);
  std::int64_t select(int config, double u) const;

  std::shared_ptr<const ConfigurationSet> configs_;
  std::vector<std::vector<std::int64_t>> by_config_;
  std::vector<int> config_at_;  // index = rank
  RankIndex index_;
  std::int64_t u_ = 0;
  std::int64_t q_ = 0;
  std::int64_t watermark_ = 0;
};

RankChange apply_event(RankedState& ranked, const EventRecord& event, EmptyRule rule);
std::int64_t take_empty(const RankedState& ranked, EmptyRule rule, double u);
std::int64_t occupied_leq(const RankedState& ranked, std::int64_t n);

struct TrajectorySample {
  double t = 0.0;
  std::int64_t U = 0;
  std::int64_t Q = 0;
  std::int64_t G = 0;
};

struct TrackerOptions {
  double warmup = 0.0;
  double horizon = 0.0;
  int batches = kDefaultBatches;
  std::int64_t g_target = 0;   // rank N for G(N)
  double sample_dt = 0.0;      // > 0: sample U, Q, G on this grid
  bool record_q_path = false;  // Q after every event
  bool track_busy = false;     // per-rank occupied durations
};

/// Follows the rank-oblivious event stream under one empty-server rule.
class RankTracker : public EventSink {
 public:
  RankTracker(const ConfigurationSet& configs, EmptyRule rule, TrackerOptions options);

  void observe(const EventRecord& event);
  void finish();

  /// Ranks start empty; a non-empty initial state is rejected.
  void on_start(const OccupancyState& initial) override;
  void on_event(const EventRecord& event, const OccupancyState&) override { observe(event); }
  void on_finish(double, const OccupancyState&) override { finish(); }

  EmptyRule rule() const { return rule_; }
  const RankedState& state() const { return ranked_; }
  const TimeAverager& u_average() const { return u_avg_; }
  const TimeAverager& q_average() const { return q_avg_; }
  const TimeAverager& g_average() const { return g_avg_; }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  const std::vector<std::int64_t>& q_path() const { return q_path_; }
  const std::vector<double>& busy_durations() const { return busy_; }
  std::size_t censored() const { return censored_; }

 private:
  void hold_until(double t);

  EmptyRule rule_;
  TrackerOptions options_;
  RankedState ranked_;
  double last_t_ = 0.0;
  double next_sample_ = 0.0;
  TimeAverager u_avg_, q_avg_, g_avg_;
  std::vector<TrajectorySample> samples_;
  std::vector<std::int64_t> q_path_;
  std::vector<double> started_;  // index = rank; start of the current busy period
  std::vector<double> busy_;
  std::size_t censored_ = 0;
  bool finished_ = false;
};

/// Replays one event log under several rules; every rule consumes the same
/// decisions and ordinals.
std::vector<RankTracker> replay(const ConfigurationSet& configs, std::span<const EventRecord> events,
                                std::span<const EmptyRule> rules, const TrackerOptions& options);

/// Per-server occupied-interval summary from a First-Fit replay.
BusyPeriodSummary busy_period_stats(const ConfigurationSet& configs,
                                    std::span<const EventRecord> events, double warmup,
                                    double horizon);

}  // namespace grandff
