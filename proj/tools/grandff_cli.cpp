#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grandff/engine.hpp"
#include "grandff/experiment.hpp"
#include "grandff/fluid.hpp"
#include "grandff/model.hpp"
#include "grandff/optim.hpp"
#include "grandff/ranks.hpp"

using json = nlohmann::ordered_json;
using namespace grandff;

namespace {

struct Common {
  std::string scenario;
  std::string policy = "grand-az";
  double a = 0.1;
  double p = 0.97;
  std::string rule = "ff";
  std::vector<double> r_grid;
  double r = 0.0;
  double horizon = 0.0;
  double warmup = -1.0;
  int seeds = 10;
  std::uint64_t master_seed = 1;
  int threads = 0;
  std::string out;
  bool json_report = false;
  std::string log_events;
  std::string trajectory;
  double sample_dt = 1.0;
  long long g_target = -1;
  std::vector<double> grid{0.1, 0.01, 0.001, 1e-4};
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Scenario load(const Common& c) {
  if (c.scenario.empty()) throw ValidationError("--scenario is required");
  Scenario s = load_scenario(c.scenario).normalize();
  if (c.r > 0.0) s = s.with_r(c.r);
  return s;
}

Policy make_policy(const Common& c) {
  if (c.policy == "grand-az") {
    if (!(c.a > 0.0 && c.a < 1.0)) throw ValidationError("--a must lie in (0, 1)");
    return GrandAZ{c.a};
  }
  if (c.policy == "grand-zp") {
    if (!(c.p > 0.0 && c.p <= 1.0)) throw ValidationError("--p must lie in (0, 1]");
    return GrandZP{c.p};
  }
  throw ValidationError("unknown policy '" + c.policy + "'");
}

std::vector<EmptyRule> parse_rules(const std::string& list) {
  std::vector<EmptyRule> rules;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) rules.push_back(parse_rule(item));
  if (rules.empty()) throw ValidationError("no rule given");
  return rules;
}

ExperimentPlan make_plan(const Common& c) {
  ExperimentPlan plan;
  plan.scenario = load(c);
  plan.policy = make_policy(c);
  plan.rules = parse_rules(c.rule);
  plan.r_grid = c.r_grid.empty() ? std::vector<double>{plan.scenario.r} : c.r_grid;
  if (c.horizon > 0.0) plan.horizon = c.horizon;
  if (c.warmup >= 0.0) plan.warmup = c.warmup;
  plan.seeds = c.seeds;
  plan.master_seed = c.master_seed;
  plan.threads = c.threads;
  return plan;
}

// CSV goes to --out when given, else to stdout unless --json takes stdout.
void emit(const Common& c, const std::string& csv, const json& report) {
  if (!c.out.empty()) {
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + c.out);
    f << csv;
  }
  if (c.json_report) {
    std::cout << report.dump(2) << '\n';
  } else if (c.out.empty()) {
    std::cout << csv;
  }
}

json estimate_json(const SteadyStateEstimate& e) {
  return {{"mean", e.mean}, {"half_width", e.half_width}, {"batches", e.batches}, {"reliable", e.reliable}};
}

json ci_json(const MeanCi& m) { return {{"mean", m.mean}, {"half_width", m.half_width}, {"n", m.n}}; }

std::string config_label(const Configuration& k) {
  std::string s = "(";
  for (std::size_t i = 0; i < k.size(); ++i) s += (i ? " " : "") + std::to_string(k[i]);
  return s + ")";
}

void cmd_simulate(const Common& c) {
  const Scenario s = load(c);
  const Policy policy = make_policy(c);
  SimulationOptions opts;
  opts.horizon = c.horizon > 0.0 ? c.horizon : default_horizon(s.r);
  if (c.warmup >= 0.0) opts.warmup = c.warmup;
  const double warmup = opts.warmup.value_or(default_warmup(s.min_mu(), opts.horizon));
  if (!(warmup < opts.horizon)) throw ValidationError("warmup must be shorter than the horizon");
  const auto seed = run_seed(c.master_seed, 0, 0);

  TrackerOptions topts;
  topts.warmup = warmup;
  topts.horizon = opts.horizon;
  topts.g_target = c.g_target >= 0 ? c.g_target : 0;
  topts.sample_dt = c.trajectory.empty() ? 0.0 : c.sample_dt;
  RankTracker tracker(s.configs, parse_rule(c.rule), topts);

  std::vector<EventSink*> sinks{&tracker};
  std::ofstream log_file;
  std::optional<CsvEventLog> log;
  if (!c.log_events.empty()) {
    log_file.open(c.log_events, std::ios::binary);
    if (!log_file) throw ValidationError("cannot write " + c.log_events);
    log.emplace(log_file);
    sinks.push_back(&*log);
  }
  const auto sum = simulate(s, policy, opts, seed, sinks);
  const auto u = tracker.u_average().estimate();

  if (!c.trajectory.empty()) {
    std::ofstream f(c.trajectory, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + c.trajectory);
    f << "t,rule,U,Q,G_at_target\n";
    for (const auto& p : tracker.samples())
      f << num(p.t) << ',' << to_string(tracker.rule()) << ',' << p.U << ',' << p.Q << ',' << p.G << '\n';
  }

  std::ostringstream csv;
  csv << "seed,policy,rule,r,horizon,warmup,events,arrivals,departures,to_empty,z,z_ci,q,q_ci,u,u_ci";
  for (int i = 0; i < s.type_count(); ++i) csv << ",y" << i + 1 << ",y" << i + 1 << "_ci";
  csv << '\n';
  csv << seed << ',' << describe(policy) << ',' << to_string(tracker.rule()) << ',' << num(s.r) << ','
      << num(sum.horizon) << ',' << num(sum.warmup) << ',' << sum.events << ',' << sum.arrivals << ','
      << sum.departures << ',' << sum.to_empty << ',' << num(sum.z->mean) << ',' << num(sum.z->half_width) << ','
      << num(sum.q->mean) << ',' << num(sum.q->half_width) << ',' << num(u.mean) << ',' << num(u.half_width);
  for (const auto& y : sum.y) csv << ',' << num(y.mean) << ',' << num(y.half_width);
  csv << '\n';

  json report{{"seed", seed},
              {"policy", describe(policy)},
              {"rule", to_string(tracker.rule())},
              {"r", s.r},
              {"horizon", sum.horizon},
              {"warmup", sum.warmup},
              {"events", sum.events},
              {"to_empty", sum.to_empty},
              {"Z", estimate_json(*sum.z)},
              {"Q", estimate_json(*sum.q)},
              {"U", estimate_json(u)}};
  json ys = json::array();
  for (const auto& y : sum.y) ys.push_back(estimate_json(y));
  report["Y"] = ys;
  emit(c, csv.str(), report);
}

void cmd_qstar(const Common& c) {
  const Scenario s = load(c);
  const auto lp = solve_qstar(s.configs, s.rho());
  std::ostringstream csv;
  csv << "config,x\n";
  json xs = json::object();
  for (int k = 0; k < s.configs.size(); ++k) {
    csv << config_label(s.configs[k]) << ',' << num(lp.x.values[k]) << '\n';
    xs[config_label(s.configs[k])] = lp.x.values[k];
  }
  csv << "q_star," << num(lp.q_star) << '\n';
  json report{{"q_star", lp.q_star}, {"unique", lp.unique}, {"pivots", lp.pivots}, {"x", xs}, {"dual", lp.dual}};
  emit(c, csv.str(), report);
}

void cmd_xstar(const Common& c) {
  const Scenario s = load(c);
  const auto sol = solve_xstar_a(s.configs, s.rho(), c.a);
  std::ostringstream csv;
  csv << "config,x\n";
  json xs = json::object();
  for (int k = 0; k < s.configs.size(); ++k) {
    csv << config_label(s.configs[k]) << ',' << num(sol.x.values[k]) << '\n';
    xs[config_label(s.configs[k])] = sol.x.values[k];
  }
  csv << "q_star_a," << num(sol.q) << '\n';
  json report{{"a", c.a},
              {"q_star_a", sol.q},
              {"x", xs},
              {"eta", sol.eta},
              {"constraint_residual", sol.constraint_residual},
              {"kkt_residual", sol.kkt_residual},
              {"iterations", sol.iterations}};
  if (sol.oracle_gap) report["oracle_gap"] = *sol.oracle_gap;
  emit(c, csv.str(), report);
}

void cmd_asweep(const Common& c) {
  const Scenario s = load(c);
  const auto rows = a_sweep(s.configs, s.rho(), c.grid);
  const double q_star = solve_qstar(s.configs, s.rho()).q_star;
  std::ostringstream csv;
  csv << "a,q_star_a,q_star,distance\n";
  json arr = json::array();
  for (const auto& row : rows) {
    csv << num(row.a) << ',' << num(row.q_star_a) << ',' << num(q_star) << ',' << num(row.distance) << '\n';
    arr.push_back({{"a", row.a}, {"q_star_a", row.q_star_a}, {"distance", row.distance}});
  }
  emit(c, csv.str(), json{{"q_star", q_star}, {"rows", arr}});
}

void cmd_fluid_check(const Common& c) {
  const Scenario s = load(c);
  const auto rep = fluid_check(s.configs, s.types, c.a);
  std::ostringstream csv;
  csv << "a,dim,abscissa,lyapunov_max,identity_residual,linearization_residual,half_life,predicted_half_life,"
         "constant_c,stable\n";
  csv << num(rep.a) << ',' << rep.subspace_dim << ',' << num(rep.abscissa) << ',' << num(rep.lyapunov_max) << ','
      << num(rep.identity_residual) << ',' << num(rep.linearization_residual) << ','
      << (rep.half_life ? num(*rep.half_life) : std::string()) << ',' << num(rep.predicted_half_life) << ','
      << num(rep.constant_c) << ',' << (rep.stable ? 1 : 0) << '\n';
  json report{{"a", rep.a},
              {"subspace_dim", rep.subspace_dim},
              {"trivial", rep.trivial},
              {"spectral_abscissa", rep.trivial ? json(nullptr) : json(rep.abscissa)},
              {"lyapunov_max", rep.trivial ? json(nullptr) : json(rep.lyapunov_max)},
              {"identity_residual", rep.identity_residual},
              {"linearization_residual", rep.linearization_residual},
              {"half_life", rep.half_life ? json(*rep.half_life) : json(nullptr)},
              {"predicted_half_life", rep.predicted_half_life},
              {"constant_c", rep.constant_c},
              {"stable", rep.stable}};
  emit(c, csv.str(), report);
}

void cmd_convergence(const Common& c) {
  const auto plan = make_plan(c);
  for (const auto& w : plan_warnings(plan)) std::cerr << "warning: " << w << '\n';
  const auto table = run_convergence(plan);
  std::ostringstream csv;
  write_convergence_csv(csv, table);

  std::vector<LowerBoundRow> rows;
  for (const auto& row : table.rows) rows.push_back({"r=" + num(row.r), row.u.mean, row.u.half_width});
  const auto verdicts = check_lower_bound(rows, table.rows.front().q_star);

  json arr = json::array();
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    json j{{"r", row.r},
           {"horizon", row.horizon},
           {"warmup", row.warmup},
           {"U_over_r", ci_json(row.u)},
           {"Q_over_r", ci_json(row.q)},
           {"q_star", row.q_star},
           {"q_star_a", row.q_star_a ? json(*row.q_star_a) : json(nullptr)},
           {"g_target", row.g_target},
           {"G_over_Q", ci_json(row.g_over_q)},
           {"hole_mass", ci_json(row.hole_mass)},
           {"overflow_mass", ci_json(row.overflow_mass)},
           {"lower_bound_ok", verdicts[k].pass}};
    arr.push_back(j);
  }
  emit(c, csv.str(), json{{"policy", table.policy}, {"rule", table.rule}, {"warnings", table.warnings}, {"rows", arr}});
}

void cmd_replay_compare(const Common& c) {
  const auto plan = make_plan(c);
  const auto cmp = run_replay_compare(plan);
  std::ostringstream csv;
  write_replay_csv(csv, cmp);
  json ens = json::object();
  for (std::size_t k = 0; k < cmp.rules.size(); ++k) ens[to_string(cmp.rules[k])] = ci_json(cmp.ensemble_u[k]);
  emit(c, csv.str(),
       json{{"r", cmp.r},
            {"seeds", cmp.seeds.size()},
            {"rules", [&] {
               json r = json::array();
               for (auto rule : cmp.rules) r.push_back(to_string(rule));
               return r;
             }()},
            {"first_rule_strictly_smallest", cmp.first_strictly_smallest},
            {"q_paths_identical", cmp.q_paths_identical},
            {"ensemble_U_over_r", ens}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and numerical toolkit for GRAND placement with First-Fit ranks"};
  app.require_subcommand(1);
  Common c;

  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--scenario", c.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "Write CSV to this path");
    sub->add_flag("--json", c.json_report, "Print a JSON report on stdout");
  };
  auto add_policy = [&](CLI::App* sub) {
    sub->add_option("--policy", c.policy, "grand-az | grand-zp")->check(CLI::IsMember({"grand-az", "grand-zp"}));
    sub->add_option("--a", c.a, "GRAND(aZ) parameter, in (0, 1)");
    sub->add_option("--p", c.p, "GRAND(Z^p) exponent");
    sub->add_option("--horizon", c.horizon, "Simulated time (default max(200, 20 r^0.3))");
    sub->add_option("--warmup", c.warmup, "Discarded initial time (default max(10/min mu, horizon/10))");
    sub->add_option("--master-seed", c.master_seed, "Master seed");
  };

  auto* sim = app.add_subcommand("simulate", "Run one replication");
  add_scenario(sim);
  add_policy(sim);
  sim->add_option("--r", c.r, "Override the scenario's r");
  sim->add_option("--rule", c.rule, "ff | random-hole | fresh");
  sim->add_option("--log-events", c.log_events, "Write the event log as CSV");
  sim->add_option("--trajectory", c.trajectory, "Write sampled (t, rule, U, Q, G) rows");
  sim->add_option("--sample-dt", c.sample_dt, "Trajectory sampling interval");
  sim->add_option("--g-target", c.g_target, "Rank N for G(N)");

  auto* qs = app.add_subcommand("qstar", "Solve the server-minimizing LP");
  add_scenario(qs);

  auto* xs = app.add_subcommand("xstar", "Solve the convex program at parameter a");
  add_scenario(xs);
  xs->add_option("--a", c.a, "Parameter a in (0, 1)");

  auto* sw = app.add_subcommand("asweep", "q^{*,a} and distance to the LP face along a decreasing grid");
  add_scenario(sw);
  sw->add_option("--grid", c.grid, "Decreasing values of a")->delimiter(',');

  auto* fl = app.add_subcommand("fluid-check", "Stability diagnostics of the local fluid limit");
  add_scenario(fl);
  fl->add_option("--a", c.a, "Parameter a in (0, 1)");

  auto* cv = app.add_subcommand("convergence", "Steady-state U/r and Q/r along an r grid");
  add_scenario(cv);
  add_policy(cv);
  cv->add_option("--rule", c.rule, "ff | random-hole | fresh");
  cv->add_option("--r-grid", c.r_grid, "Values of r")->delimiter(',');
  cv->add_option("--seeds", c.seeds, "Replications per r");
  cv->add_option("--threads", c.threads, "Worker threads (0: all cores)");

  auto* rc = app.add_subcommand("replay-compare", "Replay shared event logs under several empty-server rules");
  add_scenario(rc);
  add_policy(rc);
  c.rule = "ff,random-hole,fresh";
  rc->add_option("--rule", c.rule, "Comma-separated rules; the first is compared against the rest");
  rc->add_option("--r-grid", c.r_grid, "Value of r (first entry used)")->delimiter(',');
  rc->add_option("--seeds", c.seeds, "Number of event logs");
  rc->add_option("--threads", c.threads, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!rc->parsed() && c.rule == "ff,random-hole,fresh") c.rule = "ff";

  try {
    if (sim->parsed()) cmd_simulate(c);
    else if (qs->parsed()) cmd_qstar(c);
    else if (xs->parsed()) cmd_xstar(c);
    else if (sw->parsed()) cmd_asweep(c);
    else if (fl->parsed()) cmd_fluid_check(c);
    else if (cv->parsed()) cmd_convergence(c);
    else if (rc->parsed()) cmd_replay_compare(c);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const InsufficientData& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
