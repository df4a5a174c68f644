#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "grandff/engine.hpp"
#include "oracles.hpp"

using namespace grandff;

namespace {

Scenario make(std::vector<Configuration> gens, std::vector<CustomerType> types, double r) {
  ScenarioParams p;
  p.generators = std::move(gens);
  p.types = std::move(types);
  p.r = r;
  p.normalization = Normalization::Strict;
  return p.normalize();
}

Scenario mminf(double r) { return make({{1}}, {{1.0, 1.0}}, r); }
Scenario capacity2(double r, double mu = 1.0) { return make({{2}}, {{mu, mu}}, r); }
Scenario two_type(double r) { return make({{2, 0}, {0, 1}}, {{0.5, 1.0}, {0.5, 1.0}}, r); }

CustomPolicy fixed_empty(std::int64_t n) {
  return {"fixed", [n](const OccupancyState&) { return n; }};
}

}  // namespace

TEST(Rng, SplitMixReferenceValue) { EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL); }

TEST(Rng, ReplicationSeedsAreDistinctAndStable) {
  EXPECT_EQ(replication_seed(42, 3), splitmix64(splitmix64(42) ^ 3));
  EXPECT_NE(replication_seed(42, 0), replication_seed(42, 1));
  EXPECT_NE(replication_seed(42, 0), replication_seed(43, 0));
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng rng(9);
  double sum = 0.0;
  for (int j = 0; j < 100000; ++j) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(X0, GrandAZExamples) {
  EXPECT_EQ(x0(GrandAZ{0.1}, 100), 10);
  EXPECT_EQ(x0(GrandAZ{0.1}, 101), 11);
  EXPECT_EQ(x0(GrandAZ{0.1}, 0), 0);
  // 0.1 * 30 is 3.0000000000000004 in binary floating point.
  EXPECT_EQ(x0(GrandAZ{0.1}, 30), 3);
}

TEST(X0, GrandZPExamples) {
  EXPECT_EQ(x0(GrandZP{0.5}, 1024), 32);
  EXPECT_EQ(x0(GrandZP{0.97}, 1000), static_cast<std::int64_t>(std::ceil(std::exp(0.97 * std::log(1000.0)))));
  EXPECT_EQ(x0(GrandZP{0.97}, 1000), 813);
  EXPECT_EQ(x0(GrandZP{0.97}, 0), 0);
}

TEST(X0, GrandAZIsPositiveOnceOccupied) {
  for (double a : {1e-6, 0.01, 0.1, 0.5, 2.0})
    for (std::int64_t z : {1, 2, 7, 1000, 123457}) EXPECT_GE(x0(GrandAZ{a}, z), 1);
}

TEST(X0, CustomPolicySeesState) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  st.adjust(0, 4);
  CustomPolicy p{"servers", [](const OccupancyState& x) { return x.Q(); }};
  EXPECT_EQ(x0(p, st), 4);
}

TEST(Placement, EmptyWhenBelowThreshold) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  st.adjust(s.configs.unit(0), 30);
  const auto d = placement_decision(fixed_empty(10), st, 0, 0.2, 0.9);
  EXPECT_TRUE(d.to_empty);
  EXPECT_NEAR(d.ordinal, 0.8, 1e-12);

  const auto occ = placement_decision(fixed_empty(10), st, 0, 0.3, 0.5);
  EXPECT_FALSE(occ.to_empty);
  EXPECT_EQ(occ.target, s.configs.unit(0));
  EXPECT_NEAR(occ.ordinal, 0.5, 1e-12);
}

TEST(Placement, EmptySystemAlwaysTakesEmptyServer) {
  const auto s = two_type(10);
  OccupancyState st(s.configs);
  for (double u : {0.0, 0.5, 0.999999}) {
    EXPECT_TRUE(placement_decision(GrandAZ{0.1}, st, 0, u, u).to_empty);
    EXPECT_TRUE(placement_decision(GrandZP{0.9}, st, 1, u, u).to_empty);
  }
}

TEST(Placement, FullServersAreNotEligible) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  st.adjust(s.configs.index_of({2}), 5);
  // No server has room, so every arrival opens a new one.
  for (double u : {0.0, 0.5, 0.99}) EXPECT_TRUE(placement_decision(GrandAZ{0.1}, st, 0, u, u).to_empty);
}

TEST(Placement, CumulativeInversionFollowsIndexOrder) {
  const auto s = make({{3}}, {{1.0, 1.0}}, 10);
  OccupancyState st(s.configs);
  const int one = s.configs.index_of({1});
  const int two = s.configs.index_of({2});
  st.adjust(one, 1);
  st.adjust(two, 3);
  const auto policy = fixed_empty(0);
  auto at = [&](double u2) { return placement_decision(policy, st, 0, 0.5, u2); };
  EXPECT_EQ(at(0.0).target, one);
  EXPECT_EQ(at(0.2).target, one);
  EXPECT_NEAR(at(0.2).ordinal, 0.8, 1e-12);
  EXPECT_EQ(at(0.25).target, two);
  EXPECT_NEAR(at(0.5).ordinal, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(at(0.999999).target, two);
}

TEST(Placement, EmptyProbabilityMatchesRatio) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  st.adjust(s.configs.unit(0), 7);
  st.adjust(s.configs.index_of({2}), 5);
  const GrandAZ policy{0.1};  // Z = 17, X_0 = 2, X_(1) = 9
  Rng rng(1);
  int empty = 0;
  const int n = 200000;
  for (int j = 0; j < n; ++j) empty += placement_decision(policy, st, 0, rng.uniform(), rng.uniform()).to_empty;
  EXPECT_NEAR(static_cast<double>(empty) / n, 2.0 / 9.0, 0.005);
}

TEST(EventRates, Examples) {
  {
    const auto s = mminf(50);
    OccupancyState st(s.configs);
    st.adjust(0, 2);
    const auto t = event_rates(st, s);
    EXPECT_DOUBLE_EQ(t.arrival[0], 50.0);
    ASSERT_EQ(t.departure.size(), 1u);
    EXPECT_DOUBLE_EQ(t.departure[0], 2.0);
    EXPECT_DOUBLE_EQ(t.total, 52.0);
  }
  {
    const auto s = two_type(20);
    const auto t = event_rates(OccupancyState(s.configs), s);
    EXPECT_DOUBLE_EQ(t.total, 20.0);
  }
  {
    const auto s = capacity2(1, 2.0);
    OccupancyState st(s.configs);
    const int two = s.configs.index_of({2});
    st.adjust(two, 3);
    const auto t = event_rates(st, s);
    for (std::size_t e = 0; e < t.departure.size(); ++e) {
      if (s.configs.edges()[e].config == two) EXPECT_DOUBLE_EQ(t.departure[e], 12.0);
    }
  }
}

TEST(Apply, DepartureEmptiesLastServer) {
  const auto s = mminf(10);
  OccupancyState st(s.configs);
  st.adjust(0, 1);
  apply(st, {1.0, EventKind::Departure, 0, 0, 0.0});
  EXPECT_EQ(st.Q(), 0);
  EXPECT_EQ(st.Z(), 0);
  EXPECT_DOUBLE_EQ(st.t, 1.0);
}

TEST(Apply, ArrivalJoinsOccupiedServer) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  st.adjust(s.configs.index_of({1}), 1);
  apply(st, {0.5, EventKind::Arrival, 0, s.configs.index_of({2}), 0.0});
  EXPECT_EQ(st.count(s.configs.index_of({1})), 0);
  EXPECT_EQ(st.count(s.configs.index_of({2})), 1);
  EXPECT_EQ(st.Q(), 1);
  EXPECT_EQ(st.Z(), 2);
  EXPECT_EQ(st.available(0), 0);
}

TEST(Apply, RejectsInconsistentEvents) {
  const auto s = capacity2(10);
  OccupancyState st(s.configs);
  EXPECT_THROW(apply(st, {0.0, EventKind::Departure, 0, 0, 0.0}), CountMismatch);
  EXPECT_THROW(apply(st, {0.0, EventKind::Arrival, 0, s.configs.index_of({2}), 0.0}), CountMismatch);
  EXPECT_THROW(apply(st, {0.0, EventKind::Arrival, 3, 0, 0.0}), CountMismatch);
}

TEST(Step, ConservationAndInvariants) {
  for (const auto& s : {mminf(20), capacity2(20), two_type(20)}) {
    for (const Policy& policy : {Policy{GrandAZ{0.1}}, Policy{GrandZP{0.9}}}) {
      OccupancyState st(s.configs);
      Rng rng(17);
      std::int64_t arrivals = 0, departures = 0;
      double last = 0.0;
      for (int j = 0; j < 5000; ++j) {
        const auto z = st.Z();
        const auto ev = step(st, policy, s, rng);
        ASSERT_GT(ev.t, last);
        last = ev.t;
        ASSERT_EQ(std::abs(st.Z() - z), 1);
        (ev.kind == EventKind::Arrival ? arrivals : departures) += 1;
        ASSERT_TRUE(st.consistent());
        ASSERT_LE(st.Q(), st.Z());
      }
      EXPECT_EQ(arrivals - departures, st.Z());
    }
  }
}

TEST(Simulate, MMInfMeanLoad) {
  const auto s = mminf(50);
  SimulationOptions opts;
  opts.horizon = 2000;
  opts.warmup = 100;
  const auto sum = simulate(s, GrandAZ{0.1}, opts, 2024);
  ASSERT_TRUE(sum.z.has_value());
  const double se = sum.z->half_width / t_quantile_975(sum.z->batches - 1);
  EXPECT_LE(std::abs(sum.z->mean - 50.0), 3.0 * se);
  EXPECT_EQ(sum.arrivals - sum.departures, static_cast<std::uint64_t>(sum.final_state.Z()));
  // Every arrival needs a new server when servers hold one customer.
  EXPECT_EQ(sum.to_empty, sum.arrivals);
}

TEST(Simulate, ZeroHorizonReturnsInitialState) {
  const auto s = capacity2(10);
  EventRecorder rec;
  EventSink* sinks[] = {&rec};
  SimulationOptions opts;
  opts.horizon = 0.0;
  OccupancyState init(s.configs);
  init.adjust(0, 3);
  opts.initial = init;
  const auto sum = simulate(s, GrandAZ{0.1}, opts, 1, sinks);
  EXPECT_TRUE(rec.events.empty());
  EXPECT_EQ(sum.events, 0u);
  EXPECT_EQ(sum.final_state.count(0), 3);
  EXPECT_FALSE(sum.z.has_value());
}

TEST(Simulate, SameSeedSameLog) {
  const auto s = two_type(30);
  SimulationOptions opts;
  opts.horizon = 50;
  auto run = [&](std::uint64_t seed) {
    EventRecorder rec;
    EventSink* sinks[] = {&rec};
    simulate(s, GrandZP{0.95}, opts, seed, sinks);
    return rec.events;
  };
  const auto a = run(5);
  EXPECT_EQ(a, run(5));
  EXPECT_NE(a, run(6));
}

TEST(Simulate, CsvLogRoundTrips) {
  const auto s = capacity2(25);
  SimulationOptions opts;
  opts.horizon = 30;
  std::stringstream buf;
  CsvEventLog log(buf);
  EventRecorder rec;
  EventSink* sinks[] = {&log, &rec};
  simulate(s, GrandAZ{0.1}, opts, 3, sinks);
  EXPECT_EQ(buf.str().substr(0, 21), "t,kind,type,config,u\n");
  EXPECT_EQ(read_event_log(buf), rec.events);
}

TEST(Simulate, MalformedLogIsRejected) {
  std::stringstream buf("t,kind,type,config,u\n1.0,X,0,0,0.5\n");
  EXPECT_THROW(read_event_log(buf), ValidationError);
}

TEST(Simulate, PoissonStartIsConsistent) {
  const auto s = two_type(200);
  Rng rng(8);
  const auto st = poisson_initial_state(s, rng);
  EXPECT_TRUE(st.consistent());
  EXPECT_NEAR(static_cast<double>(st.Y(0)), 100.0, 50.0);
  // Type-1 customers pair up, so almost no (1,0) servers remain.
  EXPECT_LE(st.count(s.configs.index_of({1, 0})), 1);
}

TEST(SpacedSampler, TakesRequestedSamples) {
  const auto s = mminf(10);
  SpacedSampler sampler(10.0, 2.0, 20);
  EventSink* sinks[] = {&sampler};
  SimulationOptions opts;
  opts.horizon = 100.0;
  simulate(s, GrandAZ{0.1}, opts, 4, sinks);
  EXPECT_EQ(sampler.samples.size(), 20u);
}
