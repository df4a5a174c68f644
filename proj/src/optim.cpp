#include "grandff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace grandff {

namespace {

void check_a(double a) {
  if (!(a > 0.0 && a < 1.0)) {
    throw ValidationError("parameter a must lie in (0, 1) for the convex program, got " + std::to_string(a));
  }
}

void check_rho(const ConfigurationSet& configs, std::span<const double> rho) {
  if (static_cast<int>(rho.size()) != configs.types()) {
    throw ValidationError("rho has " + std::to_string(rho.size()) + " entries, expected " +
                          std::to_string(configs.types()));
  }
  for (double r : rho) {
    if (!(r > 0.0)) throw ValidationError("every rho_i must be positive");
  }
}

Eigen::VectorXd as_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double FluidVector::q() const { return std::accumulate(values.begin(), values.end(), 0.0); }

std::vector<double> FluidVector::loads(const ConfigurationSet& configs) const {
  std::vector<double> y(configs.types(), 0.0);
  for (int c = 0; c < configs.size(); ++c)
    for (int i = 0; i < configs.types(); ++i) y[i] += configs[c][i] * values[c];
  return y;
}

bool FluidVector::in_polytope(const ConfigurationSet& configs, std::span<const double> rho, double tol) const {
  if (static_cast<int>(values.size()) != configs.size()) return false;
  for (double v : values)
    if (v < -tol) return false;
  const auto y = loads(configs);
  for (int i = 0; i < configs.types(); ++i)
    if (std::abs(y[i] - rho[i]) > tol) return false;
  return true;
}

Eigen::MatrixXd constraint_matrix(const ConfigurationSet& configs) {
  Eigen::MatrixXd v(configs.types(), configs.size());
  for (int c = 0; c < configs.size(); ++c)
    for (int i = 0; i < configs.types(); ++i) v(i, c) = configs[c][i];
  return v;
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.cols();
  if (m.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = std::max<double>(m.rows(), n) * std::numeric_limits<double>::epsilon() *
                     (s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < s.size(); ++j)
    if (s(j) > tol) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

double c_factor(const Configuration& k) {
  double c = 1.0;
  for (int v : k)
    for (int j = 2; j <= v; ++j) c *= j;
  return c;
}

double eval_L(std::span<const double> x, const ConfigurationSet& configs, double a) {
  check_a(a);
  double sum = 0.0;
  for (int c = 0; c < configs.size(); ++c) {
    const double v = x[c];
    if (v < 0.0) throw ValidationError("L is defined on the non-negative orthant");
    if (v == 0.0) continue;
    sum += v * std::log(v * c_factor(configs[c]) / (std::exp(1.0) * a));
  }
  return sum / -std::log(a);
}

std::vector<double> grad_L(std::span<const double> x, const ConfigurationSet& configs, double a) {
  check_a(a);
  std::vector<double> g(configs.size());
  const double scale = 1.0 / -std::log(a);
  for (int c = 0; c < configs.size(); ++c) g[c] = scale * std::log(x[c] * c_factor(configs[c]) / a);
  return g;
}

// --- LP ---------------------------------------------------------------------------

LpSolution solve_qstar(const ConfigurationSet& configs, std::span<const double> rho) {
  check_rho(configs, rho);
  const int m = configs.types();
  const int n = configs.size();
  constexpr double kTol = 1e-12;

  // Tableau B^{-1} V with the unit-vector columns as the starting basis (B = I).
  std::vector<std::vector<double>> tab(m, std::vector<double>(n));
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < n; ++c) tab[i][c] = configs[c][i];
  std::vector<double> rhs(rho.begin(), rho.end());
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = configs.unit(i);
  // Reduced costs: 1 - sum_i (B^{-1}V)_{i,c} since every column costs 1.
  std::vector<double> reduced(n);
  auto refresh_reduced = [&] {
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += tab[i][c];
      reduced[c] = 1.0 - s;
    }
  };
  refresh_reduced();

  LpSolution sol;
  const int max_pivots = 50 * (n + m) + 1000;
  while (true) {
    int entering = -1;
    for (int c = 0; c < n; ++c) {
      if (reduced[c] < -kTol) {
        entering = c;  // Bland: lowest index
        break;
      }
    }
    if (entering < 0) break;
    int leaving = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (tab[i][entering] <= kTol) continue;
      const double ratio = rhs[i] / tab[i][entering];
      if (ratio < best - kTol || (std::abs(ratio - best) <= kTol && basis[i] < basis[leaving])) {
        best = ratio;
        leaving = i;
      }
    }
    if (leaving < 0) throw NumericalError("LP reported unbounded; the load polytope is bounded");
    if (++sol.pivots > max_pivots) throw NumericalError("simplex exceeded its pivot budget (degenerate cycling?)");

    const double p = tab[leaving][entering];
    for (int c = 0; c < n; ++c) tab[leaving][c] /= p;
    rhs[leaving] /= p;
    for (int i = 0; i < m; ++i) {
      if (i == leaving) continue;
      const double f = tab[i][entering];
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) tab[i][c] -= f * tab[leaving][c];
      rhs[i] -= f * rhs[leaving];
    }
    basis[leaving] = entering;
    refresh_reduced();
  }

  // Re-solve the basic system directly for a clean vertex.
  Eigen::MatrixXd b(m, m);
  const Eigen::MatrixXd v = constraint_matrix(configs);
  for (int i = 0; i < m; ++i) b.col(i) = v.col(basis[i]);
  const Eigen::VectorXd xb = b.fullPivLu().solve(as_vector(rho));

  sol.x.values.assign(n, 0.0);
  for (int i = 0; i < m; ++i) sol.x.values[basis[i]] = std::max(0.0, xb(i));
  sol.q_star = sol.x.q();
  sol.dual.resize(m);
  for (int i = 0; i < m; ++i) sol.dual[i] = 1.0 - reduced[configs.unit(i)];
  sol.unique = true;
  for (int c = 0; c < n; ++c) {
    if (std::find(basis.begin(), basis.end(), c) != basis.end()) continue;
    if (reduced[c] <= kTol) sol.unique = false;
  }
  return sol;
}

// --- Convex program ---------------------------------------------------------------

ConvexSolution solve_xstar_a(const ConfigurationSet& configs, std::span<const double> rho, double a,
                             const XstarOptions& options) {
  check_a(a);
  check_rho(configs, rho);
  const int m = configs.types();
  const int n = configs.size();
  const Eigen::MatrixXd v = constraint_matrix(configs);
  const Eigen::VectorXd target = as_vector(rho);
  Eigen::VectorXd log_coef(n);
  for (int c = 0; c < n; ++c) log_coef(c) = std::log(a / c_factor(configs[c]));

  auto primal = [&](const Eigen::VectorXd& eta) -> Eigen::VectorXd {
    return (log_coef + v.transpose() * eta).array().exp().matrix();
  };
  auto dual_objective = [&](const Eigen::VectorXd& eta) { return primal(eta).sum() - target.dot(eta); };

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd x = primal(eta);
  Eigen::VectorXd f = v * x - target;
  int iter = 0;
  while (f.cwiseAbs().maxCoeff() > options.tolerance) {
    if (++iter > options.max_iterations) {
      throw NumericalError("dual Newton did not converge: residual " + std::to_string(f.cwiseAbs().maxCoeff()));
    }
    const Eigen::MatrixXd jac = v * x.asDiagonal() * v.transpose();
    const Eigen::VectorXd dir = jac.ldlt().solve(-f);

    double step = 1.0;
    const double norm0 = f.norm();
    bool accepted = false;
    Eigen::VectorXd trial_eta, trial_x, trial_f;
    for (int h = 0; h < 60; ++h, step *= 0.5) {
      trial_eta = eta + step * dir;
      trial_x = primal(trial_eta);
      trial_f = v * trial_x - target;
      if (trial_f.allFinite() && trial_f.norm() < norm0) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Fall back to sufficient decrease of the dual objective, whose gradient is f.
      const double phi0 = dual_objective(eta);
      step = 1.0;
      for (int h = 0; h < 60; ++h, step *= 0.5) {
        trial_eta = eta + step * dir;
        const double phi = dual_objective(trial_eta);
        if (std::isfinite(phi) && phi <= phi0 + 1e-4 * step * f.dot(dir)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;  // stalled at machine precision
      trial_x = primal(trial_eta);
      trial_f = v * trial_x - target;
    }
    eta = trial_eta;
    x = trial_x;
    f = trial_f;
  }

  ConvexSolution sol;
  sol.x.values = as_std(x);
  sol.q = x.sum();
  sol.eta = as_std(eta);
  sol.iterations = iter;
  sol.constraint_residual = f.cwiseAbs().maxCoeff();
  if (sol.constraint_residual > 1e-10) {
    throw NumericalError("dual Newton stalled with residual " + std::to_string(sol.constraint_residual));
  }

  // Product form log(x_k c_k / a) = k . eta, and the reduced gradient of L.
  double kkt = 0.0;
  Eigen::VectorXd log_grad(n);
  for (int c = 0; c < n; ++c) {
    log_grad(c) = std::log(x(c) * c_factor(configs[c]) / a);
    kkt = std::max(kkt, std::abs(log_grad(c) - v.col(c).dot(eta)));
  }
  const Eigen::MatrixXd basis = null_space(v);
  if (basis.cols() > 0) kkt = std::max(kkt, (basis.transpose() * log_grad).cwiseAbs().maxCoeff());
  sol.kkt_residual = kkt;

  if (options.cross_check) {
    const auto oracle = projected_gradient_L(configs, rho, a);
    sol.oracle_gap = std::abs(eval_L(sol.x.values, configs, a) - oracle.value);
  }
  return sol;
}

ProjectedGradientResult projected_gradient_L(const ConfigurationSet& configs, std::span<const double> rho,
                                             double a, int max_iterations, double tolerance) {
  check_a(a);
  check_rho(configs, rho);
  const int n = configs.size();
  const Eigen::MatrixXd basis = null_space(constraint_matrix(configs));

  // Strictly positive feasible start: epsilon on every non-unit configuration.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<double> extra(configs.types(), 0.0);
  for (int c = 0; c < n; ++c) {
    if (configs.total(c) == 1) continue;
    for (int i = 0; i < configs.types(); ++i) extra[i] += configs[c][i];
  }
  double eps = std::numeric_limits<double>::infinity();
  for (int i = 0; i < configs.types(); ++i) eps = std::min(eps, rho[i] / (1.0 + extra[i]));
  eps *= 0.5;
  for (int c = 0; c < n; ++c) {
    if (configs.total(c) == 1) continue;
    x(c) = eps;
  }
  for (int i = 0; i < configs.types(); ++i) x(configs.unit(i)) = rho[i] - eps * extra[i];

  auto value = [&](const Eigen::VectorXd& p) {
    return eval_L(std::span<const double>(p.data(), p.size()), configs, a);
  };
  auto gradient = [&](const Eigen::VectorXd& p) {
    return as_vector(grad_L(std::span<const double>(p.data(), p.size()), configs, a));
  };

  ProjectedGradientResult res;
  if (basis.cols() == 0) {
    res.x.values = as_std(x);
    res.value = value(x);
    return res;
  }

  double fx = value(x);
  Eigen::VectorXd g = gradient(x);
  Eigen::VectorXd pg = basis * (basis.transpose() * g);
  double step = 1.0;
  Eigen::VectorXd prev_x, prev_pg;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    if (pg.norm() <= tolerance) break;
    const Eigen::VectorXd dir = -pg;
    if (iter > 0) {
      // Barzilai-Borwein initial step.
      const Eigen::VectorXd s = x - prev_x;
      const Eigen::VectorXd y = pg - prev_pg;
      const double sy = s.dot(y);
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    double limit = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c)
      if (dir(c) < 0.0) limit = std::min(limit, -0.99 * x(c) / dir(c));
    step = std::min(step, limit);

    Eigen::VectorXd trial;
    double ft = 0.0;
    bool accepted = false;
    for (int h = 0; h < 200; ++h, step *= 0.5) {
      trial = x + step * dir;
      ft = value(trial);
      if (ft <= fx - 1e-4 * step * pg.squaredNorm()) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    prev_x = x;
    prev_pg = pg;
    x = trial;
    fx = ft;
    g = gradient(x);
    pg = basis * (basis.transpose() * g);
  }
  res.x.values = as_std(x);
  res.value = fx;
  res.reduced_gradient = pg.norm();
  res.iterations = iter;
  return res;
}

double distance_to_optimal_face(const ConfigurationSet& configs, std::span<const double> rho,
                                std::span<const double> x, double q_star) {
  check_rho(configs, rho);
  const int m = configs.types();
  const int n = configs.size();
  Eigen::MatrixXd eq(m + 1, n);
  eq.topRows(m) = constraint_matrix(configs);
  eq.row(m).setOnes();
  Eigen::VectorXd rhs(m + 1);
  rhs.head(m) = as_vector(rho);
  rhs(m) = q_star;
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(eq);

  auto affine = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return p - cod.solve(eq * p - rhs);
  };

  // Dykstra's alternating projections onto {eq p = rhs} and the orthant.
  const Eigen::VectorXd start = as_vector(x);
  Eigen::VectorXd p = start;
  Eigen::VectorXd corr_a = Eigen::VectorXd::Zero(n), corr_b = Eigen::VectorXd::Zero(n);
  for (int iter = 0; iter < 200000; ++iter) {
    const Eigen::VectorXd ya = affine(p + corr_a);
    corr_a = p + corr_a - ya;
    const Eigen::VectorXd yb = (ya + corr_b).cwiseMax(0.0);
    corr_b = ya + corr_b - yb;
    const double change = (yb - p).norm();
    p = yb;
    if (change < 1e-15 && (eq * p - rhs).cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return (start - p).norm();
}

std::vector<SweepRow> a_sweep(const ConfigurationSet& configs, std::span<const double> rho,
                              std::span<const double> grid) {
  for (std::size_t j = 0; j < grid.size(); ++j) {
    check_a(grid[j]);
    if (j > 0 && !(grid[j] < grid[j - 1])) throw ValidationError("a-grid must be strictly decreasing");
  }
  const auto lp = solve_qstar(configs, rho);
  std::vector<SweepRow> rows;
  XstarOptions opts;
  opts.cross_check = false;
  for (double a : grid) {
    const auto sol = solve_xstar_a(configs, rho, a, opts);
    rows.push_back({a, sol.q, distance_to_optimal_face(configs, rho, sol.x.values, lp.q_star)});
  }
  return rows;
}

}  // namespace grandff
