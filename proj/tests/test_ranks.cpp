#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "grandff/engine.hpp"
#include "grandff/ranks.hpp"
#include "oracles.hpp"

using namespace grandff;

namespace {

Scenario make(std::vector<Configuration> gens, std::vector<CustomerType> types, double r) {
  ScenarioParams p;
  p.generators = std::move(gens);
  p.types = std::move(types);
  p.r = r;
  return p.normalize();
}

const auto kMMInf = generate({{1}});

// Ranks 1..10 occupied except the holes {3, 7}, then 11 and 12 used and released.
RankedState holes_3_7() {
  RankedState st(kMMInf);
  for (std::int64_t r = 1; r <= 12; ++r)
    if (r != 3 && r != 7) st.occupy(r, 0);
  st.apply_event({1.0, EventKind::Departure, 0, 0, 0.999}, EmptyRule::FirstFit);
  st.apply_event({2.0, EventKind::Departure, 0, 0, 0.999}, EmptyRule::FirstFit);
  return st;
}

// Independent model of one event on the naive rank map.
void naive_apply(oracle::NaiveRanks& nr, const ConfigurationSet& set, const EventRecord& ev, EmptyRule rule) {
  const int below = set.down(ev.config, ev.type);
  auto pick = [&](int config) {
    const auto list = nr.ranks_of(config);
    const auto n = static_cast<std::int64_t>(list.size());
    return list[std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::floor(ev.u * n)))];
  };
  if (ev.kind == EventKind::Arrival) {
    if (below != ConfigurationSet::kZero) {
      nr.occupied[pick(below)] = ev.config;
      return;
    }
    std::int64_t rank = 0;
    if (rule == EmptyRule::FirstFit) {
      rank = 1;
      while (nr.occupied.count(rank)) ++rank;
    } else if (rule == EmptyRule::RandomHole) {
      const auto h = nr.holes();
      const auto n = static_cast<std::int64_t>(h.size());
      rank = h.empty() ? nr.U() + 1 : h[std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(ev.u * n))];
    } else {
      rank = nr.watermark + 1;
    }
    nr.occupied[rank] = ev.config;
    nr.watermark = std::max(nr.watermark, rank);
  } else {
    const auto rank = pick(ev.config);
    if (below == ConfigurationSet::kZero) nr.occupied.erase(rank);
    else nr.occupied[rank] = below;
  }
}

}  // namespace

TEST(TakeEmpty, FirstFitTakesLowestHole) {
  const auto st = holes_3_7();
  EXPECT_EQ(st.U(), 10);
  EXPECT_EQ(st.watermark(), 12);
  EXPECT_EQ(st.holes(), (std::vector<std::int64_t>{3, 7}));
  EXPECT_EQ(take_empty(st, EmptyRule::FirstFit, 0.9), 3);
}

TEST(TakeEmpty, FirstFitWithoutHolesExtends) {
  RankedState st(kMMInf);
  for (std::int64_t r = 1; r <= 10; ++r) st.occupy(r, 0);
  EXPECT_EQ(take_empty(st, EmptyRule::FirstFit, 0.0), 11);
  EXPECT_EQ(take_empty(st, EmptyRule::RandomHole, 0.5), 11);
}

TEST(TakeEmpty, FreshServerGoesPastWatermark) {
  EXPECT_EQ(take_empty(holes_3_7(), EmptyRule::FreshServer, 0.1), 13);
}

TEST(TakeEmpty, RandomHoleUsesOrdinal) {
  const auto st = holes_3_7();
  EXPECT_EQ(take_empty(st, EmptyRule::RandomHole, 0.0), 3);
  EXPECT_EQ(take_empty(st, EmptyRule::RandomHole, 0.49), 3);
  EXPECT_EQ(take_empty(st, EmptyRule::RandomHole, 0.6), 7);
}

TEST(ApplyEvent, LastDepartureEmptiesSystem) {
  RankedState st(kMMInf);
  st.occupy(1, 0);
  const auto ch = apply_event(st, {1.0, EventKind::Departure, 0, 0, 0.0}, EmptyRule::FirstFit);
  EXPECT_TRUE(ch.emptied);
  EXPECT_EQ(st.U(), 0);
  EXPECT_EQ(st.Q(), 0);
  EXPECT_TRUE(st.consistent());
}

TEST(ApplyEvent, DepartureAtMaximumLowersU) {
  RankedState st(kMMInf);
  st.occupy(1, 0);
  st.occupy(5, 0);
  const auto ch = apply_event(st, {1.0, EventKind::Departure, 0, 0, 0.6}, EmptyRule::FirstFit);
  EXPECT_EQ(ch.rank, 5);
  EXPECT_EQ(st.U(), 1);
  EXPECT_TRUE(st.holes().empty());
  EXPECT_EQ(st.watermark(), 5);
}

TEST(ApplyEvent, FirstFitFillsHole) {
  RankedState st(kMMInf);
  st.occupy(2, 0);
  const auto ch = apply_event(st, {1.0, EventKind::Arrival, 0, 0, 0.7}, EmptyRule::FirstFit);
  EXPECT_EQ(ch.rank, 1);
  EXPECT_EQ(st.config_at(1), 0);
  EXPECT_EQ(st.U(), 2);
}

TEST(ApplyEvent, CorruptedLogIsDetected) {
  RankedState st(generate({{2}}));
  EXPECT_THROW(apply_event(st, {1.0, EventKind::Departure, 0, 0, 0.0}, EmptyRule::FirstFit), CountMismatch);
  EXPECT_THROW(apply_event(st, {1.0, EventKind::Arrival, 0, 1, 0.0}, EmptyRule::FirstFit), CountMismatch);
  EXPECT_THROW(st.occupy(0, 0), CountMismatch);
}

TEST(OccupiedLeq, Examples) {
  RankedState st(kMMInf);
  for (std::int64_t r : {1, 2, 5}) st.occupy(r, 0);
  EXPECT_EQ(occupied_leq(st, 3), 2);
  EXPECT_EQ(occupied_leq(st, 0), 0);
  EXPECT_EQ(occupied_leq(st, 5), st.Q());
  EXPECT_EQ(occupied_leq(st, 500), st.Q());
}

TEST(RankedState, GrowsToLargeRanks) {
  RankedState st(kMMInf);
  st.occupy(5000, 0);
  st.occupy(70, 0);
  EXPECT_EQ(st.U(), 5000);
  EXPECT_EQ(st.occupied_leq(4999), 1);
  EXPECT_EQ(st.take_empty(EmptyRule::FirstFit, 0.0), 1);
  EXPECT_EQ(st.hole_count(), 4998);
  EXPECT_TRUE(st.consistent());
}

TEST(RankedState, MatchesNaiveModelOnSimulatedStreams) {
  const std::vector<Scenario> scenarios = {make({{1}}, {{1, 1}}, 15), make({{2}}, {{1, 1}}, 15),
                                           make({{2, 0}, {0, 1}}, {{0.5, 1}, {0.5, 1}}, 15),
                                           make({{2, 1}, {0, 3}}, {{1, 2}, {1, 1}}, 15)};
  for (const auto& s : scenarios) {
    for (auto rule : {EmptyRule::FirstFit, EmptyRule::RandomHole, EmptyRule::FreshServer}) {
      OccupancyState occ(s.configs);
      RankedState ranked(s.configs);
      oracle::NaiveRanks naive;
      Rng rng(31);
      for (int j = 0; j < 3000; ++j) {
        const auto ev = step(occ, GrandAZ{0.2}, s, rng);
        ranked.apply_event(ev, rule);
        naive_apply(naive, s.configs, ev, rule);
        ASSERT_EQ(ranked.U(), naive.U());
        ASSERT_EQ(ranked.Q(), naive.Q());
        ASSERT_EQ(ranked.watermark(), naive.watermark);
        ASSERT_TRUE(ranked.matches(occ));
        ASSERT_TRUE(ranked.consistent());
        if (j % 97 == 0) {
          ASSERT_EQ(ranked.holes(), naive.holes());
          for (int c = 0; c < s.configs.size(); ++c) {
            const auto r = ranked.ranks_of(c);
            ASSERT_EQ(std::vector<std::int64_t>(r.begin(), r.end()), naive.ranks_of(c));
          }
          const auto n = ranked.U() / 2;
          ASSERT_EQ(ranked.occupied_leq(n), naive.g(n));
        }
      }
    }
  }
}

TEST(RankedState, FirstFitHolesStayBelowU) {
  const auto s = make({{2}}, {{1, 1}}, 30);
  OccupancyState occ(s.configs);
  RankedState ranked(s.configs);
  Rng rng(2);
  for (int j = 0; j < 5000; ++j) {
    ranked.apply_event(step(occ, GrandAZ{0.1}, s, rng), EmptyRule::FirstFit);
    for (auto h : ranked.holes()) ASSERT_LT(h, ranked.U());
    ASSERT_EQ(ranked.config_at(ranked.U() + 1), -1);
  }
}

TEST(Replay, SameRuleTwiceIsIdentical) {
  const auto s = make({{2}}, {{1, 1}}, 40);
  EventRecorder rec;
  EventSink* sinks[] = {&rec};
  SimulationOptions opts;
  opts.horizon = 60;
  simulate(s, GrandAZ{0.1}, opts, 12, sinks);

  TrackerOptions topts;
  topts.warmup = 10;
  topts.horizon = 60;
  topts.sample_dt = 0.5;
  topts.g_target = 25;
  topts.record_q_path = true;
  const EmptyRule rules[] = {EmptyRule::FirstFit, EmptyRule::FirstFit};
  const auto tr = replay(s.configs, rec.events, rules, topts);
  ASSERT_EQ(tr[0].samples().size(), tr[1].samples().size());
  for (std::size_t j = 0; j < tr[0].samples().size(); ++j) {
    EXPECT_EQ(tr[0].samples()[j].U, tr[1].samples()[j].U);
    EXPECT_EQ(tr[0].samples()[j].G, tr[1].samples()[j].G);
  }
  EXPECT_EQ(tr[0].u_average().mean(), tr[1].u_average().mean());
  EXPECT_EQ(tr[0].samples().size(), 121u);
}

TEST(Replay, SingleArrivalGivesRankOne) {
  const std::vector<EventRecord> log = {{0.5, EventKind::Arrival, 0, 0, 0.3}};
  const EmptyRule rules[] = {EmptyRule::FirstFit, EmptyRule::RandomHole, EmptyRule::FreshServer};
  TrackerOptions topts;
  topts.horizon = 1.0;
  for (const auto& tr : replay(kMMInf, log, rules, topts)) EXPECT_EQ(tr.state().U(), 1);
}

TEST(Replay, QPathIsRuleIndependentAndFirstFitIsLowest) {
  const auto s = make({{1}}, {{1, 1}}, 50);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EventRecorder rec;
    EventSink* sinks[] = {&rec};
    SimulationOptions opts;
    opts.horizon = 100;
    simulate(s, GrandAZ{0.1}, opts, seed, sinks);
    TrackerOptions topts;
    topts.warmup = 20;
    topts.horizon = 100;
    topts.record_q_path = true;
    const EmptyRule rules[] = {EmptyRule::FirstFit, EmptyRule::RandomHole, EmptyRule::FreshServer};
    const auto tr = replay(s.configs, rec.events, rules, topts);
    EXPECT_EQ(tr[0].q_path(), tr[1].q_path());
    EXPECT_EQ(tr[0].q_path(), tr[2].q_path());
    EXPECT_LE(tr[0].u_average().mean(), tr[2].u_average().mean());
  }
}

TEST(Tracker, RejectsNonEmptyStart) {
  const auto s = make({{1}}, {{1, 1}}, 5);
  TrackerOptions topts;
  topts.horizon = 10;
  RankTracker tracker(s.configs, EmptyRule::FirstFit, topts);
  EventSink* sinks[] = {&tracker};
  SimulationOptions opts;
  opts.horizon = 10;
  opts.poisson_start = true;
  EXPECT_THROW(simulate(s, GrandAZ{0.1}, opts, 1, sinks), ValidationError);
}

TEST(BusyPeriods, SingleSlotServersLastOneServiceTime) {
  const auto s = make({{1}}, {{1, 1}}, 50);
  EventRecorder rec;
  EventSink* sinks[] = {&rec};
  SimulationOptions opts;
  opts.horizon = 400;
  simulate(s, GrandAZ{0.1}, opts, 77, sinks);
  const auto sum = busy_period_stats(s.configs, rec.events, 20, 400);
  EXPECT_GT(sum.count, 10000u);
  EXPECT_NEAR(sum.mean, 1.0, 0.05);
  EXPECT_NEAR(sum.emptying_rate, 1.0, 0.05);
  EXPECT_LE(sum.p99, sum.max);
  EXPECT_GT(sum.censored, 0u);
}

TEST(EmptyRule, ParsesNames) {
  EXPECT_EQ(parse_rule("ff"), EmptyRule::FirstFit);
  EXPECT_EQ(parse_rule("random-hole"), EmptyRule::RandomHole);
  EXPECT_EQ(parse_rule("fresh"), EmptyRule::FreshServer);
  EXPECT_THROW(parse_rule("best-fit"), ValidationError);
  for (auto r : {EmptyRule::FirstFit, EmptyRule::RandomHole, EmptyRule::FreshServer})
    EXPECT_EQ(parse_rule(to_string(r)), r);
}
