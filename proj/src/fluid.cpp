#include "grandff/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "grandff/optim.hpp"

namespace grandff {

namespace {

std::vector<double> rho_of(std::span<const CustomerType> types) {
  std::vector<double> rho;
  for (const auto& t : types) rho.push_back(t.rho());
  return rho;
}

}  // namespace

Eigen::MatrixXd basis_tilde(const ConfigurationSet& configs) { return null_space(constraint_matrix(configs)); }

std::vector<double> fluid_drift(const ConfigurationSet& configs, std::span<const CustomerType> types,
                                double a, std::span<const double> x) {
  const int n = configs.size();
  double z = 0.0;
  for (int c = 0; c < n; ++c) z += configs.total(c) * x[c];
  const double x_empty = a * z;
  std::vector<double> avail(configs.types(), x_empty);
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < configs.types(); ++i)
      if (configs.up(c, i) != ConfigurationSet::kNone) avail[i] += x[c];

  std::vector<double> dx(n, 0.0);
  for (const auto& e : configs.edges()) {
    const int below = configs.down(e.config, e.type);
    const double source = below == ConfigurationSet::kZero ? x_empty : x[below];
    const double flow = types[e.type].lambda * source / avail[e.type] -
                        configs[e.config][e.type] * types[e.type].mu * x[e.config];
    dx[e.config] += flow;
    if (below != ConfigurationSet::kZero) dx[below] -= flow;
  }
  return dx;
}

LflMatrix build_lfl_matrix(const ConfigurationSet& configs, std::span<const CustomerType> types, double a,
                           std::span<const double> x_star) {
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("parameter a must lie in (0, 1)");
  const int n = configs.size();
  const int m = configs.types();

  LflMatrix lfl;
  lfl.a = a;
  lfl.x_star.assign(x_star.begin(), x_star.end());

  // d x_0 / d x = a * (total customers per configuration).
  Eigen::RowVectorXd grad_empty(n);
  double z = 0.0;
  for (int c = 0; c < n; ++c) {
    grad_empty(c) = a * configs.total(c);
    z += configs.total(c) * x_star[c];
  }
  lfl.x_empty = a * z;

  std::vector<Eigen::RowVectorXd> grad_avail(m, grad_empty);
  lfl.x_avail.assign(m, lfl.x_empty);
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < m; ++i) {
      if (configs.up(c, i) == ConfigurationSet::kNone) continue;
      grad_avail[i](c) += 1.0;
      lfl.x_avail[i] += x_star[c];
    }
  }
  for (int i = 0; i < m; ++i) {
    if (!(lfl.x_avail[i] > 1e-12)) {
      throw NumericalError("degenerate equilibrium: x_(" + std::to_string(i + 1) + ") is not positive");
    }
  }

  lfl.A = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : configs.edges()) {
    const int i = e.type;
    const int below = configs.down(e.config, i);
    const double lambda = types[i].lambda;
    const double avail = lfl.x_avail[i];
    const double source = below == ConfigurationSet::kZero ? lfl.x_empty : x_star[below];

    Eigen::RowVectorXd grad_source;
    if (below == ConfigurationSet::kZero) {
      grad_source = grad_empty;
    } else {
      grad_source = Eigen::RowVectorXd::Zero(n);
      grad_source(below) = 1.0;
    }
    Eigen::RowVectorXd grad_flow = (lambda / avail) * grad_source - (lambda * source / (avail * avail)) * grad_avail[i];
    grad_flow(e.config) -= configs[e.config][i] * types[i].mu;

    lfl.A.row(e.config) += grad_flow;
    if (below != ConfigurationSet::kZero) lfl.A.row(below) -= grad_flow;
  }

  lfl.basis = basis_tilde(configs);
  lfl.restricted = lfl.basis.transpose() * lfl.A * lfl.basis;
  return lfl;
}

double constraint_identity_residual(const LflMatrix& lfl, const ConfigurationSet& configs,
                                    std::span<const CustomerType> types) {
  const Eigen::MatrixXd v = constraint_matrix(configs);
  double worst = 0.0;
  for (int i = 0; i < configs.types(); ++i) {
    const Eigen::RowVectorXd lhs = v.row(i) * lfl.A + types[i].mu * v.row(i);
    worst = std::max(worst, lhs.cwiseAbs().maxCoeff());
  }
  return worst;
}

double spectral_abscissa(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalue computation did not converge");
  return solver.eigenvalues().real().maxCoeff();
}

Eigen::MatrixXd lyapunov_form(double a, std::span<const double> x_star) {
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("parameter a must lie in (0, 1)");
  const auto n = static_cast<Eigen::Index>(x_star.size());
  Eigen::VectorXd diag(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    if (!(x_star[c] > 0.0)) throw NumericalError("Hessian of L needs a strictly positive equilibrium");
    diag(c) = 1.0 / (-std::log(a) * x_star[c]);
  }
  return diag.asDiagonal();
}

LyapunovResult lyapunov_check(const Eigen::MatrixXd& A, const Eigen::MatrixXd& basis, const Eigen::MatrixXd& H) {
  LyapunovResult res;
  if (basis.cols() == 0) {
    res.trivial = true;
    res.max_rayleigh = -std::numeric_limits<double>::infinity();
    return res;
  }
  const Eigen::MatrixXd m = basis.transpose() * H * A * basis;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigenvalue computation did not converge");
  res.max_rayleigh = solver.eigenvalues().maxCoeff();
  return res;
}

OdeTrajectory integrate_ode(const Eigen::MatrixXd& A, const Eigen::VectorXd& x0, double horizon, double dt,
                            const Eigen::MatrixXd& basis) {
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  const bool tracked = basis.rows() > 0;
  auto off_subspace = [&](const Eigen::VectorXd& x) {
    if (!tracked) return 0.0;
    if (basis.cols() == 0) return x.cwiseAbs().maxCoeff();
    return (x - basis * (basis.transpose() * x)).cwiseAbs().maxCoeff();
  };

  Eigen::VectorXd x = x0;
  if (tracked && off_subspace(x) > 1e-12) {
    x = basis.cols() == 0 ? Eigen::VectorXd::Zero(x.size()).eval() : (basis * (basis.transpose() * x)).eval();
  }

  OdeTrajectory out;
  const double norm0 = x.norm();
  out.times.push_back(0.0);
  out.norms.push_back(norm0);
  const auto steps = static_cast<long>(std::ceil(horizon / dt - 1e-9));
  for (long s = 0; s < steps; ++s) {
    const Eigen::VectorXd k1 = A * x;
    const Eigen::VectorXd k2 = A * (x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = A * (x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = A * (x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double nrm = x.norm();
    if (!std::isfinite(nrm) || (norm0 > 0.0 && nrm > 1e6 * norm0)) {
      throw NumericalError("ODE integration blew up; reduce the step size");
    }
    out.times.push_back((s + 1) * dt);
    out.norms.push_back(nrm);
    out.max_subspace_residual = std::max(out.max_subspace_residual, off_subspace(x));
  }

  if (norm0 > 0.0) {
    for (double v : out.norms) out.constant_c = std::max(out.constant_c, v / norm0);
    // Scan backwards for the last sample above half the initial norm.
    std::size_t j = out.norms.size();
    while (j > 0 && out.norms[j - 1] <= 0.5 * norm0) --j;
    if (j < out.norms.size()) out.half_time = out.times[j];
  } else {
    out.half_time = 0.0;
  }
  out.final_state = x;
  return out;
}

FluidCheckReport fluid_check(const ConfigurationSet& configs, std::span<const CustomerType> types, double a) {
  const auto rho = rho_of(types);
  XstarOptions opts;
  opts.cross_check = false;
  const auto sol = solve_xstar_a(configs, rho, a, opts);
  const auto lfl = build_lfl_matrix(configs, types, a, sol.x.values);

  FluidCheckReport rep;
  rep.a = a;
  rep.subspace_dim = static_cast<int>(lfl.basis.cols());
  rep.identity_residual = constraint_identity_residual(lfl, configs, types);

  // Forward differences of the nonlinear drift, step 1e-6.
  constexpr double kDelta = 1e-6;
  const auto base = fluid_drift(configs, types, a, sol.x.values);
  for (int c = 0; c < configs.size(); ++c) {
    auto shifted = sol.x.values;
    shifted[c] += kDelta;
    const auto moved = fluid_drift(configs, types, a, shifted);
    for (int k = 0; k < configs.size(); ++k) {
      rep.linearization_residual =
          std::max(rep.linearization_residual, std::abs((moved[k] - base[k]) / kDelta - lfl.A(k, c)));
    }
  }

  const auto lyap = lyapunov_check(lfl.A, lfl.basis, lyapunov_form(a, sol.x.values));
  rep.lyapunov_max = lyap.max_rayleigh;
  rep.trivial = lyap.trivial;
  rep.abscissa = spectral_abscissa(lfl.restricted);

  if (rep.trivial) {
    rep.stable = true;
    rep.half_life = 0.0;
    return rep;
  }
  rep.predicted_half_life = std::log(2.0) / std::abs(rep.abscissa);

  // Start on the slowest mode when it is real; otherwise on the first basis vector.
  Eigen::EigenSolver<Eigen::MatrixXd> eig(lfl.restricted);
  if (eig.info() != Eigen::Success) throw NumericalError("eigenvalue computation did not converge");
  Eigen::Index slow = 0;
  eig.eigenvalues().real().maxCoeff(&slow);
  Eigen::VectorXd start_reduced;
  if (std::abs(eig.eigenvalues()(slow).imag()) < 1e-12) {
    start_reduced = eig.eigenvectors().col(slow).real();
  } else {
    start_reduced = Eigen::VectorXd::Unit(lfl.basis.cols(), 0);
  }
  Eigen::VectorXd x0 = lfl.basis * start_reduced;
  x0.normalize();

  const double spectral_radius = lfl.A.cwiseAbs().rowwise().sum().maxCoeff();
  const double dt = std::min(1e-3, 0.05 / std::max(1.0, spectral_radius)) * std::min(1.0, rep.predicted_half_life);
  const auto traj = integrate_ode(lfl.A, x0, 4.0 * rep.predicted_half_life, dt, lfl.basis);
  rep.half_life = traj.half_time;
  rep.constant_c = traj.constant_c;
  rep.subspace_residual = traj.max_subspace_residual;
  rep.stable = rep.abscissa < 0.0 && rep.lyapunov_max < 0.0;
  return rep;
}

}  // namespace grandff
