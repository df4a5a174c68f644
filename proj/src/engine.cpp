#include "grandff/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace grandff {

OccupancyState::OccupancyState(const ConfigurationSet& configs)
    : configs_(std::make_shared<const ConfigurationSet>(configs)),
      counts_(configs.size(), 0),
      y_(configs.types(), 0),
      available_(configs.types(), 0) {}

void OccupancyState::adjust(int config, std::int64_t n) {
  const auto& set = *configs_;
  counts_[config] += n;
  q_ += n;
  const auto& k = set[config];
  for (int i = 0; i < set.types(); ++i) {
    y_[i] += n * k[i];
    z_ += n * k[i];
    if (set.up(config, i) != ConfigurationSet::kNone) available_[i] += n;
  }
}

bool OccupancyState::consistent() const {
  const auto& set = *configs_;
  std::int64_t z = 0, q = 0;
  std::vector<std::int64_t> y(set.types(), 0), avail(set.types(), 0);
  for (int c = 0; c < set.size(); ++c) {
    if (counts_[c] < 0) return false;
    q += counts_[c];
    for (int i = 0; i < set.types(); ++i) {
      y[i] += counts_[c] * set[c][i];
      if (set.up(c, i) != ConfigurationSet::kNone) avail[i] += counts_[c];
    }
  }
  for (auto v : y) z += v;
  return z == z_ && q == q_ && y == y_ && avail == available_ && q <= z;
}

std::string describe(const Policy& policy) {
  struct Visitor {
    std::string operator()(const GrandAZ& p) const {
      std::ostringstream s;
      s << "grand-az(a=" << p.a << ")";
      return s.str();
    }
    std::string operator()(const GrandZP& p) const {
      std::ostringstream s;
      s << "grand-zp(p=" << p.p << ")";
      return s.str();
    }
    std::string operator()(const CustomPolicy& p) const { return p.name; }
  };
  return std::visit(Visitor{}, policy);
}

std::int64_t stable_ceil(double v) {
  const double f = std::floor(v);
  if (v - f <= 1e-12 * std::max(1.0, std::abs(v))) return static_cast<std::int64_t>(f);
  return static_cast<std::int64_t>(std::ceil(v));
}

std::int64_t x0(const Policy& policy, std::int64_t Z) {
  if (Z <= 0) return 0;
  if (const auto* az = std::get_if<GrandAZ>(&policy)) {
    return stable_ceil(az->a * static_cast<double>(Z));
  }
  if (const auto* zp = std::get_if<GrandZP>(&policy)) {
    return stable_ceil(std::pow(static_cast<double>(Z), zp->p));
  }
  throw ValidationError("custom policies need the full state to compute X_0");
}

std::int64_t x0(const Policy& policy, const OccupancyState& state) {
  if (const auto* custom = std::get_if<CustomPolicy>(&policy)) {
    return std::max<std::int64_t>(0, custom->x0(state));
  }
  return x0(policy, state.Z());
}

namespace {

// Largest double below 1: ordinals live in [0, 1).
constexpr double kBelowOne = 1.0 - 0x1.0p-53;

double clamp_unit(double u) { return std::clamp(u, 0.0, kBelowOne); }

}  // namespace

Decision placement_decision(const Policy& policy, const OccupancyState& state, int type, double u1,
                            double u2) {
  const auto& configs = state.configs();
  const std::int64_t empty = x0(policy, state);
  const std::int64_t occupied = state.available(type);
  const std::int64_t total = empty + occupied;

  if (total == 0) return {true, -1, clamp_unit(u1)};
  const double scaled = u1 * static_cast<double>(total);
  if (scaled < static_cast<double>(empty)) {
    return {true, -1, clamp_unit(scaled / static_cast<double>(empty))};
  }

  const double w = u2 * static_cast<double>(occupied);
  double cum = 0.0;
  int last = -1;
  for (int c = 0; c < configs.size(); ++c) {
    if (configs.up(c, type) == ConfigurationSet::kNone) continue;
    const auto n = state.count(c);
    if (n == 0) continue;
    last = c;
    if (w < cum + static_cast<double>(n)) {
      return {false, c, clamp_unit((w - cum) / static_cast<double>(n))};
    }
    cum += static_cast<double>(n);
  }
  // Rounding pushed w past the final bucket.
  return {false, last, kBelowOne};
}

RateTable event_rates(const OccupancyState& state, const Scenario& scenario) {
  RateTable table;
  const auto& configs = state.configs();
  for (const auto& t : scenario.types) {
    table.arrival.push_back(t.lambda * scenario.r);
    table.total += table.arrival.back();
  }
  for (const auto& e : configs.edges()) {
    const double rate = static_cast<double>(state.count(e.config)) * configs[e.config][e.type] *
                        scenario.types[e.type].mu;
    table.departure.push_back(rate);
    table.total += rate;
  }
  return table;
}

void apply(OccupancyState& state, const EventRecord& event) {
  const auto& configs = state.configs();
  if (event.config < 0 || event.config >= configs.size() || event.type < 0 ||
      event.type >= configs.types()) {
    throw CountMismatch("event references an unknown configuration or type");
  }
  const int below = configs.down(event.config, event.type);
  if (below == ConfigurationSet::kNone) {
    throw CountMismatch("event is not along an edge of the configuration set");
  }
  if (event.kind == EventKind::Arrival) {
    if (below != ConfigurationSet::kZero) {
      if (state.count(below) == 0) throw CountMismatch("arrival joins an empty configuration class");
      state.adjust(below, -1);
    }
    state.adjust(event.config, +1);
  } else {
    if (state.count(event.config) == 0) throw CountMismatch("departure from an empty configuration class");
    state.adjust(event.config, -1);
    if (below != ConfigurationSet::kZero) state.adjust(below, +1);
  }
  state.t = event.t;
}

namespace {

// Draws the next event without applying it. Always consumes four uniforms.
EventRecord draw_event(const OccupancyState& state, const Policy& policy, const Scenario& scenario,
                       Rng& rng) {
  const auto& configs = state.configs();
  const double u_time = rng.uniform();
  const double u_pick = rng.uniform();
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();

  double total = 0.0;
  for (const auto& t : scenario.types) total += t.lambda * scenario.r;
  for (const auto& e : configs.edges()) {
    total += static_cast<double>(state.count(e.config)) * configs[e.config][e.type] *
             scenario.types[e.type].mu;
  }

  EventRecord ev;
  ev.t = state.t - std::log1p(-u_time) / total;

  const double target = u_pick * total;
  double acc = 0.0;
  for (int i = 0; i < scenario.type_count(); ++i) {
    acc += scenario.types[i].lambda * scenario.r;
    if (target < acc) {
      const auto d = placement_decision(policy, state, i, u1, u2);
      ev.kind = EventKind::Arrival;
      ev.type = i;
      ev.config = d.to_empty ? configs.unit(i) : configs.up(d.target, i);
      ev.u = d.ordinal;
      return ev;
    }
  }
  const Edge* chosen = nullptr;
  for (const auto& e : configs.edges()) {
    const double rate = static_cast<double>(state.count(e.config)) * configs[e.config][e.type] *
                        scenario.types[e.type].mu;
    if (rate <= 0.0) continue;
    chosen = &e;
    acc += rate;
    if (target < acc) break;
  }
  if (chosen == nullptr) {
    // Only reachable through rounding when no server is occupied.
    const int i = scenario.type_count() - 1;
    ev.kind = EventKind::Arrival;
    ev.type = i;
    ev.config = configs.unit(i);
    ev.u = u1;
    return ev;
  }
  ev.kind = EventKind::Departure;
  ev.type = chosen->type;
  ev.config = chosen->config;
  ev.u = u1;
  return ev;
}

}  // namespace

EventRecord step(OccupancyState& state, const Policy& policy, const Scenario& scenario, Rng& rng) {
  auto ev = draw_event(state, policy, scenario, rng);
  apply(state, ev);
  return ev;
}

CsvEventLog::CsvEventLog(std::ostream& out) : out_(out) { out_ << "t,kind,type,config,u\n"; }

void CsvEventLog::on_event(const EventRecord& event, const OccupancyState&) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g,%c,%d,%d,%.17g\n", event.t,
                event.kind == EventKind::Arrival ? 'A' : 'D', event.type, event.config, event.u);
  out_ << buf;
  if (!out_) throw std::runtime_error("failed writing event log");
}

std::vector<EventRecord> read_event_log(std::istream& in) {
  std::vector<EventRecord> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("t,", 0) == 0) continue;
    EventRecord ev;
    char kind = 0;
    if (std::sscanf(line.c_str(), "%lf,%c,%d,%d,%lf", &ev.t, &kind, &ev.type, &ev.config, &ev.u) != 5 ||
        (kind != 'A' && kind != 'D')) {
      throw ValidationError("malformed event log line " + std::to_string(lineno));
    }
    ev.kind = kind == 'A' ? EventKind::Arrival : EventKind::Departure;
    events.push_back(ev);
  }
  return events;
}

OccupancyState poisson_initial_state(const Scenario& scenario, Rng& rng) {
  const auto& configs = scenario.configs;
  OccupancyState state(configs);
  for (int i = 0; i < scenario.type_count(); ++i) {
    std::poisson_distribution<std::int64_t> dist(scenario.types[i].rho() * scenario.r);
    const auto n = dist(rng.engine());
    for (std::int64_t c = 0; c < n; ++c) {
      int best = -1;
      for (int k = 0; k < configs.size(); ++k) {
        if (state.count(k) == 0 || configs.up(k, i) == ConfigurationSet::kNone) continue;
        if (best < 0 || configs.total(k) > configs.total(best)) best = k;
      }
      if (best < 0) {
        state.adjust(configs.unit(i), +1);
      } else {
        state.adjust(best, -1);
        state.adjust(configs.up(best, i), +1);
      }
    }
  }
  return state;
}

SimulationSummary simulate(const Scenario& scenario, const Policy& policy,
                           const SimulationOptions& options, std::uint64_t seed,
                           std::span<EventSink* const> sinks) {
  if (options.horizon < 0.0) throw ValidationError("horizon must be non-negative");
  Rng rng(seed);
  OccupancyState state = options.initial ? *options.initial
                         : options.poisson_start ? poisson_initial_state(scenario, rng)
                                                 : OccupancyState(scenario.configs);

  SimulationSummary out;
  out.horizon = options.horizon;
  out.warmup = options.warmup.value_or(default_warmup(scenario.min_mu(), options.horizon));
  const bool averaging = options.horizon > out.warmup;

  TimeAverager z_avg, q_avg;
  std::vector<TimeAverager> y_avg;
  if (averaging) {
    z_avg = TimeAverager(out.warmup, options.horizon, options.batches);
    q_avg = TimeAverager(out.warmup, options.horizon, options.batches);
    y_avg.assign(scenario.type_count(), TimeAverager(out.warmup, options.horizon, options.batches));
  }
  auto hold = [&](double t0, double t1) {
    if (!averaging) return;
    z_avg.add(t0, t1, static_cast<double>(state.Z()));
    q_avg.add(t0, t1, static_cast<double>(state.Q()));
    for (int i = 0; i < scenario.type_count(); ++i) y_avg[i].add(t0, t1, static_cast<double>(state.Y(i)));
  };

  for (auto* sink : sinks) sink->on_start(state);
  while (options.horizon > 0.0) {
    auto ev = draw_event(state, policy, scenario, rng);
    if (ev.t > options.horizon) break;
    hold(state.t, ev.t);
    apply(state, ev);
    ++out.events;
    if (ev.kind == EventKind::Arrival) {
      ++out.arrivals;
      if (ev.to_empty(scenario.configs)) ++out.to_empty;
    } else {
      ++out.departures;
    }
    for (auto* sink : sinks) sink->on_event(ev, state);
  }
  hold(state.t, options.horizon);
  for (auto* sink : sinks) sink->on_finish(options.horizon, state);

  if (averaging) {
    out.z = z_avg.estimate();
    out.q = q_avg.estimate();
    for (const auto& avg : y_avg) out.y.push_back(avg.estimate());
  }
  out.final_state = std::move(state);
  return out;
}

SpacedSampler::SpacedSampler(double start, double spacing, std::size_t max_samples)
    : next_(start), spacing_(spacing), max_(max_samples) {}

void SpacedSampler::on_start(const OccupancyState& initial) {
  current_.clear();
  for (int i = 0; i < initial.configs().types(); ++i) current_.push_back(static_cast<double>(initial.Y(i)));
}

void SpacedSampler::catch_up(double until) {
  while (next_ < until && samples.size() < max_) {
    samples.push_back(current_);
    next_ += spacing_;
  }
}

void SpacedSampler::on_event(const EventRecord& event, const OccupancyState& after) {
  catch_up(event.t);
  for (int i = 0; i < after.configs().types(); ++i) current_[i] = static_cast<double>(after.Y(i));
}

void SpacedSampler::on_finish(double horizon, const OccupancyState&) { catch_up(horizon); }

}  // namespace grandff
