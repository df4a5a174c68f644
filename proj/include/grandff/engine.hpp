#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grandff/model.hpp"
#include "grandff/rng.hpp"
#include "grandff/stats.hpp"

namespace grandff {

/// Rank-oblivious state: how many servers are in each nonzero configuration.
class OccupancyState {
 public:
  OccupancyState() = default;
  explicit OccupancyState(const ConfigurationSet& configs);

  const ConfigurationSet& configs() const { return *configs_; }
  std::int64_t count(int config) const { return counts_[config]; }
  std::span<const std::int64_t> counts() const { return counts_; }

  /// Total customers.
  std::int64_t Z() const { return z_; }
  /// Occupied servers.
  std::int64_t Q() const { return q_; }
  /// Type-i customers.
  std::int64_t Y(int type) const { return y_[type]; }
  /// Occupied servers that can take one more type-i customer.
  std::int64_t available(int type) const { return available_[type]; }

  double t = 0.0;

  /// Moves `n` servers into (positive n) or out of (negative n) `config`.
  void adjust(int config, std::int64_t n);

  /// Recomputes Z, Q, Y and availability from the counts and compares.
  bool consistent() const;

 private:
  std::shared_ptr<const ConfigurationSet> configs_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> y_;
  std::vector<std::int64_t> available_;
  std::int64_t z_ = 0;
  std::int64_t q_ = 0;
};

/// GRAND(aZ): X_0 = ceil(a Z).
struct GrandAZ {
  double a = 0.1;
};

/// GRAND(Z^p): X_0 = ceil(Z^p).
struct GrandZP {
  double p = 0.9;
};

/// Any other rank-oblivious virtual-empty count.
struct CustomPolicy {
  std::string name;
  std::function<std::int64_t(const OccupancyState&)> x0;
};

using Policy = std::variant<GrandAZ, GrandZP, CustomPolicy>;

std::string describe(const Policy& policy);

/// Ceiling that ignores a floating-point excess of a few ulps above an integer.
std::int64_t stable_ceil(double v);

/// Number of virtual empty servers for a system holding Z customers.
std::int64_t x0(const Policy& policy, std::int64_t Z);
std::int64_t x0(const Policy& policy, const OccupancyState& state);

struct Decision {
  bool to_empty = true;
  int target = -1;       // configuration joined (k - e_i) when !to_empty
  double ordinal = 0.0;  // selects a server among the eligible ones, in rank order
};

/// GRAND placement of a type-`type` arrival. u1 decides empty vs occupied,
/// u2 picks the occupied configuration by cumulative-weight inversion; the
/// ordinal is the residual of whichever uniform made the decision.
Decision placement_decision(const Policy& policy, const OccupancyState& state, int type, double u1,
                            double u2);

enum class EventKind : std::uint8_t { Arrival, Departure };

/// One transition along an edge (k, i). For arrivals `config` is the
/// resulting configuration k (k == e_i means an empty server was taken); for
/// departures it is the configuration the server leaves.
struct EventRecord {
  double t = 0.0;
  EventKind kind = EventKind::Arrival;
  int type = 0;
  int config = 0;
  double u = 0.0;

  bool to_empty(const ConfigurationSet& configs) const {
    return kind == EventKind::Arrival && config == configs.unit(type);
  }
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct RateTable {
  std::vector<double> arrival;    // per type: lambda_i r
  std::vector<double> departure;  // per edge of configs.edges(): X_k k_i mu_i
  double total = 0.0;
};

RateTable event_rates(const OccupancyState& state, const Scenario& scenario);

/// Applies an event's count change. Throws CountMismatch if the source
/// configuration is empty.
void apply(OccupancyState& state, const EventRecord& event);

/// Gillespie step: exponential holding time at the total rate, event drawn
/// proportionally to its rate.
EventRecord step(OccupancyState& state, const Policy& policy, const Scenario& scenario, Rng& rng);

/// Receives the event stream of a run.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void on_start(const OccupancyState& /*initial*/) {}
  /// `after` is the state with the event applied; its clock is the event time.
  virtual void on_event(const EventRecord& /*event*/, const OccupancyState& /*after*/) {}
  virtual void on_finish(double /*horizon*/, const OccupancyState& /*final*/) {}
};

/// Writes `t,kind,type,config,u` rows; values round-trip exactly.
class CsvEventLog : public EventSink {
 public:
  explicit CsvEventLog(std::ostream& out);
  void on_event(const EventRecord& event, const OccupancyState& after) override;

 private:
  std::ostream& out_;
};

/// Collects events in memory.
class EventRecorder : public EventSink {
 public:
  void on_event(const EventRecord& event, const OccupancyState&) override { events.push_back(event); }
  std::vector<EventRecord> events;
};

std::vector<EventRecord> read_event_log(std::istream& in);

/// Independent Poisson(rho_i r) customers, each added to the fullest
/// occupied server that still fits it, else to a fresh server.
OccupancyState poisson_initial_state(const Scenario& scenario, Rng& rng);

struct SimulationOptions {
  double horizon = 0.0;
  std::optional<double> warmup;  // default: default_warmup(min mu, horizon)
  int batches = kDefaultBatches;
  std::optional<OccupancyState> initial;  // default: empty system
  bool poisson_start = false;
};

struct SimulationSummary {
  OccupancyState final_state;
  std::uint64_t events = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  std::uint64_t to_empty = 0;
  double warmup = 0.0;
  double horizon = 0.0;
  std::optional<SteadyStateEstimate> z;  // absent when horizon <= warmup
  std::optional<SteadyStateEstimate> q;
  std::vector<SteadyStateEstimate> y;
};

SimulationSummary simulate(const Scenario& scenario, const Policy& policy,
                           const SimulationOptions& options, std::uint64_t seed,
                           std::span<EventSink* const> sinks = {});

/// Samples Y_i at fixed times (first at `start`, then every `spacing`).
class SpacedSampler : public EventSink {
 public:
  SpacedSampler(double start, double spacing, std::size_t max_samples);
  void on_start(const OccupancyState& initial) override;
  void on_event(const EventRecord& event, const OccupancyState& after) override;
  void on_finish(double horizon, const OccupancyState& final) override;

  std::vector<std::vector<double>> samples;

 private:
  void catch_up(double until);
  double next_;
  double spacing_;
  std::size_t max_;
  std::vector<double> current_;
};

}  // namespace grandff
