#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grandff/engine.hpp"
#include "grandff/model.hpp"
#include "grandff/ranks.hpp"
#include "grandff/stats.hpp"

namespace grandff {

struct ExperimentPlan {
  Scenario scenario;  // r is taken from r_grid
  Policy policy = GrandAZ{};
  std::vector<EmptyRule> rules{EmptyRule::FirstFit};
  std::vector<double> r_grid;
  std::optional<double> horizon;  // default: default_horizon(r)
  std::optional<double> warmup;   // default: default_warmup(min mu, horizon)
  int seeds = 10;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: hardware concurrency
};

/// max(200, 20 r^0.3).
double default_horizon(double r);

/// Non-fatal remarks about a plan, e.g. a GRAND(Z^p) exponent outside (1 - 1/(8 kappa), 1).
std::vector<std::string> plan_warnings(const ExperimentPlan& plan);

/// Seed of replication `replication` at grid point `grid_index`.
std::uint64_t run_seed(std::uint64_t master, std::size_t grid_index, std::size_t replication);

/// Runs fn(0..n-1) on up to `threads` workers. fn must only write to its own slot.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Per-replication time averages after warmup.
struct RunMetrics {
  std::uint64_t seed = 0;
  double u = 0.0;  // U / r
  double u_half_width = 0.0;
  double q = 0.0;  // Q / r
  double g_over_q = 0.0;
  double hole_mass = 0.0;      // (target - G(target)) / r
  double overflow_mass = 0.0;  // (Q - G(target)) / r
};

struct ConvergenceRow {
  double r = 0.0;
  double horizon = 0.0;
  double warmup = 0.0;
  std::int64_t g_target = 0;
  MeanCi u;
  MeanCi q;
  MeanCi g_over_q;
  MeanCi hole_mass;
  MeanCi overflow_mass;
  double q_star = 0.0;
  std::optional<double> q_star_a;  // GRAND(aZ) only
  std::vector<RunMetrics> runs;
};

struct ConvergenceTable {
  std::string policy;
  std::string rule;
  std::vector<ConvergenceRow> rows;
  std::vector<std::string> warnings;
};

/// One row per r in the grid under the plan's first rule. The G(N) target is
/// q^{*,a} r for GRAND(aZ) and q* r otherwise.
ConvergenceTable run_convergence(const ExperimentPlan& plan);

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table);

struct ReplaySeedResult {
  std::uint64_t seed = 0;
  std::vector<double> mean_u;  // per rule
  bool q_paths_identical = true;
  bool first_strictly_smallest = false;  // rule 0 below every other rule
};

struct ReplayComparison {
  std::vector<EmptyRule> rules;
  double r = 0.0;
  double horizon = 0.0;
  double warmup = 0.0;
  std::vector<ReplaySeedResult> seeds;
  std::vector<MeanCi> ensemble_u;  // per rule
  int first_strictly_smallest = 0;
  bool q_paths_identical = true;
};

/// One event log per seed at r_grid.front(), replayed under every rule.
ReplayComparison run_replay_compare(const ExperimentPlan& plan);

void write_replay_csv(std::ostream& out, const ReplayComparison& cmp);

struct LowerBoundRow {
  std::string label;
  double mean = 0.0;
  double half_width = 0.0;
};

struct LowerBoundVerdict {
  std::string label;
  double slack = 0.0;  // mean - (q* - 3 CI)
  bool pass = true;
};

/// Flags every row with mean U/r < q* - 3 CI.
std::vector<LowerBoundVerdict> check_lower_bound(std::span<const LowerBoundRow> rows, double q_star);

}  // namespace grandff
