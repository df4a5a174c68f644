#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grandff/model.hpp"

namespace grandff {

/// Linear generator of the local fluid limit around x^{*,a}.
struct LflMatrix {
  Eigen::MatrixXd A;           // |K| x |K|
  Eigen::MatrixXd basis;       // orthonormal columns spanning the zero-load subspace
  Eigen::MatrixXd restricted;  // basis^T A basis
  std::vector<double> x_star;
  std::vector<double> x_avail;  // x_(i) at the equilibrium: x_0 + servers with room for type i
  double x_empty = 0.0;         // x_0 = a * z
  double a = 0.0;
};

/// Zero-load subspace {x : sum_k k_i x_k = 0 for all i}; orthonormal columns.
Eigen::MatrixXd basis_tilde(const ConfigurationSet& configs);

/// Fluid drift of GRAND(aZ) at x: per edge (k, i) the net flow
/// lambda_i x_{k-e_i} / x_(i) - k_i mu_i x_k, with x_0 = a z and
/// x_(i) = x_0 + sum over configurations with room for type i.
std::vector<double> fluid_drift(const ConfigurationSet& configs, std::span<const CustomerType> types,
                                double a, std::span<const double> x);

/// Assembles A edge by edge from the linearized flows. Throws NumericalError
/// (degenerate equilibrium) when some x_(i) is not positive.
LflMatrix build_lfl_matrix(const ConfigurationSet& configs, std::span<const CustomerType> types, double a,
                           std::span<const double> x_star);

/// max_i || v_i^T A + mu_i v_i^T ||_inf with v_i the load functional of type i.
double constraint_identity_residual(const LflMatrix& lfl, const ConfigurationSet& configs,
                                    std::span<const CustomerType> types);

/// Largest real part of the eigenvalues; -infinity for an empty matrix.
double spectral_abscissa(const Eigen::MatrixXd& m);

/// Hessian of L^(a) at x^{*,a}: diag([-log a]^{-1} / x_k).
Eigen::MatrixXd lyapunov_form(double a, std::span<const double> x_star);

struct LyapunovResult {
  double max_rayleigh = 0.0;  // max eigenvalue of sym(B^T H A B)
  bool trivial = false;       // zero-dimensional subspace
};

LyapunovResult lyapunov_check(const Eigen::MatrixXd& A, const Eigen::MatrixXd& basis, const Eigen::MatrixXd& H);

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<double> norms;
  std::optional<double> half_time;  // first T with ||x(t)|| <= ||x(0)||/2 for every later sample
  double constant_c = 1.0;          // max_t ||x(t)|| / ||x(0)||
  double max_subspace_residual = 0.0;
  Eigen::VectorXd final_state;
};

/// Classical RK4 for x' = A x on [0, horizon]. When `basis` has rows, x0 is
/// projected onto its span if it is off by more than 1e-12 and the distance
/// to the span is tracked. Aborts (NumericalError) if the norm exceeds 1e6
/// times its initial value.
OdeTrajectory integrate_ode(const Eigen::MatrixXd& A, const Eigen::VectorXd& x0, double horizon, double dt,
                            const Eigen::MatrixXd& basis = {});

struct FluidCheckReport {
  double a = 0.0;
  int subspace_dim = 0;
  double abscissa = 0.0;
  double lyapunov_max = 0.0;
  bool trivial = false;
  double identity_residual = 0.0;
  double linearization_residual = 0.0;  // A against finite differences of fluid_drift
  std::optional<double> half_life;      // measured on the slowest mode
  double predicted_half_life = 0.0;     // ln 2 / |abscissa|
  double constant_c = 1.0;
  double subspace_residual = 0.0;
  bool stable = false;
};

/// Full stability diagnosis of the local fluid limit at parameter a.
FluidCheckReport fluid_check(const ConfigurationSet& configs, std::span<const CustomerType> types, double a);

}  // namespace grandff
