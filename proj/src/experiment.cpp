#include "grandff/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "grandff/optim.hpp"

namespace grandff {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double horizon_for(const ExperimentPlan& plan, double r) { return plan.horizon.value_or(default_horizon(r)); }

double warmup_for(const ExperimentPlan& plan, double horizon) {
  const double w = plan.warmup.value_or(default_warmup(plan.scenario.min_mu(), horizon));
  if (!(w < horizon)) throw ValidationError("warmup must be shorter than the horizon");
  return w;
}

void validate_plan(const ExperimentPlan& plan) {
  if (plan.r_grid.empty()) throw ValidationError("r grid is empty");
  for (double r : plan.r_grid)
    if (!(r > 0.0)) throw ValidationError("r must be positive");
  if (plan.seeds < 1) throw ValidationError("need at least one seed");
  if (plan.rules.empty()) throw ValidationError("need at least one rule");
  if (plan.horizon && !(*plan.horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (const auto* az = std::get_if<GrandAZ>(&plan.policy); az && !(az->a > 0.0 && az->a < 1.0)) {
    throw ValidationError("parameter a must lie in (0, 1)");
  }
  if (const auto* zp = std::get_if<GrandZP>(&plan.policy); zp && !(zp->p > 0.0 && zp->p <= 1.0)) {
    throw ValidationError("exponent p must lie in (0, 1]");
  }
}

}  // namespace

double default_horizon(double r) { return std::max(200.0, 20.0 * std::pow(r, 0.3)); }

std::vector<std::string> plan_warnings(const ExperimentPlan& plan) {
  std::vector<std::string> out;
  if (const auto* zp = std::get_if<GrandZP>(&plan.policy)) {
    const int k = plan.scenario.configs.kappa();
    const double low = 1.0 - 1.0 / (8.0 * k);
    if (!(zp->p > low && zp->p < 1.0)) {
      out.push_back("p = " + fmt(zp->p) + " is outside (" + fmt(low) + ", 1) for kappa = " + std::to_string(k) +
                    "; convergence to q* is not guaranteed");
    }
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t master, std::size_t grid_index, std::size_t replication) {
  return replication_seed(replication_seed(master, grid_index), replication);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ConvergenceTable run_convergence(const ExperimentPlan& plan) {
  validate_plan(plan);
  const auto rho = plan.scenario.rho();
  const double q_star = solve_qstar(plan.scenario.configs, rho).q_star;
  std::optional<double> q_star_a;
  if (const auto* az = std::get_if<GrandAZ>(&plan.policy)) {
    XstarOptions opts;
    opts.cross_check = false;
    q_star_a = solve_xstar_a(plan.scenario.configs, rho, az->a, opts).q;
  }
  const double target_density = q_star_a.value_or(q_star);

  ConvergenceTable table;
  table.policy = describe(plan.policy);
  table.rule = to_string(plan.rules.front());
  table.warnings = plan_warnings(plan);

  for (std::size_t g = 0; g < plan.r_grid.size(); ++g) {
    const double r = plan.r_grid[g];
    const Scenario scenario = plan.scenario.with_r(r);
    ConvergenceRow row;
    row.r = r;
    row.horizon = horizon_for(plan, r);
    row.warmup = warmup_for(plan, row.horizon);
    row.g_target = std::llround(target_density * r);
    row.q_star = q_star;
    row.q_star_a = q_star_a;
    row.runs.resize(plan.seeds);

    parallel_for(plan.seeds, plan.threads, [&](std::size_t s) {
      const auto seed = run_seed(plan.master_seed, g, s);
      TrackerOptions topts;
      topts.warmup = row.warmup;
      topts.horizon = row.horizon;
      topts.g_target = row.g_target;
      RankTracker tracker(scenario.configs, plan.rules.front(), topts);
      EventSink* sinks[] = {&tracker};
      SimulationOptions sopts;
      sopts.horizon = row.horizon;
      sopts.warmup = row.warmup;
      simulate(scenario, plan.policy, sopts, seed, sinks);

      const auto u = tracker.u_average().estimate();
      const double q = tracker.q_average().mean();
      const double gq = tracker.g_average().mean();
      RunMetrics m;
      m.seed = seed;
      m.u = u.mean / r;
      m.u_half_width = u.half_width / r;
      m.q = q / r;
      m.g_over_q = q > 0.0 ? gq / q : 0.0;
      m.hole_mass = (static_cast<double>(row.g_target) - gq) / r;
      m.overflow_mass = (q - gq) / r;
      row.runs[s] = m;
    });

    auto column = [&](auto member) {
      std::vector<double> v;
      for (const auto& m : row.runs) v.push_back(m.*member);
      return mean_ci(v);
    };
    row.u = column(&RunMetrics::u);
    row.q = column(&RunMetrics::q);
    row.g_over_q = column(&RunMetrics::g_over_q);
    row.hole_mass = column(&RunMetrics::hole_mass);
    row.overflow_mass = column(&RunMetrics::overflow_mass);
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table) {
  out << "policy,rule,r,seeds,horizon,warmup,u_over_r,u_ci,q_over_r,q_ci,q_star,q_star_a,g_target,g_over_q,"
         "g_over_q_ci,hole_mass,hole_mass_ci,overflow_mass,overflow_mass_ci\n";
  for (const auto& row : table.rows) {
    out << table.policy << ',' << table.rule << ',' << fmt(row.r) << ',' << row.runs.size() << ','
        << fmt(row.horizon) << ',' << fmt(row.warmup) << ',' << fmt(row.u.mean) << ',' << fmt(row.u.half_width)
        << ',' << fmt(row.q.mean) << ',' << fmt(row.q.half_width) << ',' << fmt(row.q_star) << ','
        << (row.q_star_a ? fmt(*row.q_star_a) : std::string()) << ',' << row.g_target << ','
        << fmt(row.g_over_q.mean) << ',' << fmt(row.g_over_q.half_width) << ',' << fmt(row.hole_mass.mean) << ','
        << fmt(row.hole_mass.half_width) << ',' << fmt(row.overflow_mass.mean) << ','
        << fmt(row.overflow_mass.half_width) << '\n';
  }
}

ReplayComparison run_replay_compare(const ExperimentPlan& plan) {
  validate_plan(plan);
  ReplayComparison cmp;
  cmp.rules = plan.rules;
  cmp.r = plan.r_grid.front();
  cmp.horizon = horizon_for(plan, cmp.r);
  cmp.warmup = warmup_for(plan, cmp.horizon);
  const Scenario scenario = plan.scenario.with_r(cmp.r);
  cmp.seeds.resize(plan.seeds);

  parallel_for(plan.seeds, plan.threads, [&](std::size_t s) {
    ReplaySeedResult res;
    res.seed = run_seed(plan.master_seed, 0, s);
    EventRecorder log;
    EventSink* sinks[] = {&log};
    SimulationOptions sopts;
    sopts.horizon = cmp.horizon;
    sopts.warmup = cmp.warmup;
    simulate(scenario, plan.policy, sopts, res.seed, sinks);

    TrackerOptions topts;
    topts.warmup = cmp.warmup;
    topts.horizon = cmp.horizon;
    topts.record_q_path = true;
    const auto trackers = replay(scenario.configs, log.events, plan.rules, topts);
    for (const auto& t : trackers) {
      res.mean_u.push_back(t.u_average().mean());
      res.q_paths_identical = res.q_paths_identical && t.q_path() == trackers.front().q_path();
    }
    res.first_strictly_smallest = true;
    for (std::size_t k = 1; k < res.mean_u.size(); ++k) {
      if (plan.rules[k] == plan.rules.front()) continue;
      res.first_strictly_smallest = res.first_strictly_smallest && res.mean_u.front() < res.mean_u[k];
    }
    cmp.seeds[s] = std::move(res);
  });

  for (std::size_t k = 0; k < plan.rules.size(); ++k) {
    std::vector<double> v;
    for (const auto& res : cmp.seeds) v.push_back(res.mean_u[k] / cmp.r);
    cmp.ensemble_u.push_back(mean_ci(v));
  }
  for (const auto& res : cmp.seeds) {
    cmp.first_strictly_smallest += res.first_strictly_smallest ? 1 : 0;
    cmp.q_paths_identical = cmp.q_paths_identical && res.q_paths_identical;
  }
  return cmp;
}

void write_replay_csv(std::ostream& out, const ReplayComparison& cmp) {
  out << "seed,rule,r,horizon,warmup,mean_u,u_over_r,q_paths_identical\n";
  for (const auto& res : cmp.seeds) {
    for (std::size_t k = 0; k < cmp.rules.size(); ++k) {
      out << res.seed << ',' << to_string(cmp.rules[k]) << ',' << fmt(cmp.r) << ',' << fmt(cmp.horizon) << ','
          << fmt(cmp.warmup) << ',' << fmt(res.mean_u[k]) << ',' << fmt(res.mean_u[k] / cmp.r) << ','
          << (res.q_paths_identical ? 1 : 0) << '\n';
    }
  }
}

std::vector<LowerBoundVerdict> check_lower_bound(std::span<const LowerBoundRow> rows, double q_star) {
  std::vector<LowerBoundVerdict> out;
  for (const auto& row : rows) {
    LowerBoundVerdict v;
    v.label = row.label;
    v.slack = row.mean - (q_star - 3.0 * row.half_width);
    v.pass = v.slack >= 0.0;
    out.push_back(v);
  }
  return out;
}

}  // namespace grandff
