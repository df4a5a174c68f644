#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grandff/model.hpp"

namespace grandff {

/// A point of R_+^{|K|} indexed like the configuration set.
struct FluidVector {
  std::vector<double> values;

  double q() const;
  /// y_i = sum_k k_i x_k.
  std::vector<double> loads(const ConfigurationSet& configs) const;
  /// Every load equals rho_i within `tol` and no coordinate is negative.
  bool in_polytope(const ConfigurationSet& configs, std::span<const double> rho, double tol = 1e-10) const;
};

/// V with V(i, k) = k_i.
Eigen::MatrixXd constraint_matrix(const ConfigurationSet& configs);

/// Orthonormal basis of the null space of `m` (columns); may have zero columns.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& m);

/// c_k = prod_i k_i!.
double c_factor(const Configuration& k);

/// L^(a)(x) = [-log a]^{-1} sum_k x_k log(x_k c_k / (e a)), with 0 log 0 = 0.
/// Throws ValidationError for a outside (0, 1) or negative x.
double eval_L(std::span<const double> x, const ConfigurationSet& configs, double a);

/// Gradient of L^(a); coordinates must be positive.
std::vector<double> grad_L(std::span<const double> x, const ConfigurationSet& configs, double a);

struct LpSolution {
  double q_star = 0.0;
  FluidVector x;            // an optimal vertex
  std::vector<double> dual; // y with reduced costs 1 - sum_i k_i y_i >= 0
  bool unique = false;      // every nonbasic reduced cost strictly positive
  int pivots = 0;
};

/// min sum_k x_k s.t. sum_k k_i x_k = rho_i, x >= 0. Dense tableau simplex
/// from the unit-vector basis, Bland's rule.
LpSolution solve_qstar(const ConfigurationSet& configs, std::span<const double> rho);

struct XstarOptions {
  int max_iterations = 200;
  double tolerance = 1e-13;  // on max_i |F_i|
  bool cross_check = true;   // run the projected-gradient oracle
};

struct ConvexSolution {
  FluidVector x;
  double q = 0.0;
  std::vector<double> eta;          // dual multipliers
  double constraint_residual = 0.0; // max_i |sum_k k_i x_k - rho_i|
  double kkt_residual = 0.0;        // product form and reduced gradient, log units
  int iterations = 0;
  std::optional<double> oracle_gap; // |L(x) - L(projected-gradient x)|
};

/// Unique minimizer of L^(a) over the load polytope, by damped Newton on the
/// dual system sum_k k_i (a / c_k) exp(k . eta) = rho_i.
ConvexSolution solve_xstar_a(const ConfigurationSet& configs, std::span<const double> rho, double a,
                             const XstarOptions& options = {});

struct ProjectedGradientResult {
  FluidVector x;
  double value = 0.0;
  double reduced_gradient = 0.0;
  int iterations = 0;
};

/// Independent primal route: gradient descent on L^(a) projected onto the
/// affine hull of the polytope, with Armijo backtracking kept strictly inside
/// the orthant. Slow but shares nothing with the dual solver.
ProjectedGradientResult projected_gradient_L(const ConfigurationSet& configs, std::span<const double> rho,
                                             double a, int max_iterations = 200000,
                                             double tolerance = 1e-11);

/// Euclidean distance from x to the LP-optimal face {x in polytope : sum x = q*}.
double distance_to_optimal_face(const ConfigurationSet& configs, std::span<const double> rho,
                                std::span<const double> x, double q_star);

struct SweepRow {
  double a = 0.0;
  double q_star_a = 0.0;
  double distance = 0.0;  // to the LP-optimal face
};

/// One row per a; the grid must be strictly decreasing inside (0, 1).
std::vector<SweepRow> a_sweep(const ConfigurationSet& configs, std::span<const double> rho,
                              std::span<const double> grid);

}  // namespace grandff
