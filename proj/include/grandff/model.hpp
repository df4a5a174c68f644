#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "grandff/error.hpp"

namespace grandff {

/// Counts of customers of each type packed into one server.
using Configuration = std::vector<int>;

struct CustomerType {
  double lambda = 1.0;  // arrival-rate density, per unit time and unit r
  double mu = 1.0;      // service rate

  double rho() const { return lambda / mu; }
};

/// Result of validating a candidate configuration family.
class ConfigurationError : public ValidationError {
 public:
  enum class Kind { NotMonotone, MissingUnitVector, ZeroInNonzeroSet, DimensionMismatch, Empty };

  ConfigurationError(Kind kind, std::string message, Configuration witness = {})
      : ValidationError(std::move(message)), kind_(kind), witness_(std::move(witness)) {}

  Kind kind() const { return kind_; }
  /// For NotMonotone, the missing configuration below some member.
  /// For MissingUnitVector, the missing e_i.
  const Configuration& witness() const { return witness_; }

 private:
  Kind kind_;
  Configuration witness_;
};

/// An edge (k, i): the transition between configuration k and k - e_i.
struct Edge {
  int config = 0;  // index of k in the nonzero set
  int type = 0;    // i, zero-based
};

/// A validated, monotone family of server configurations.
///
/// Only nonzero configurations are stored; the empty configuration is
/// implicit. Indices 0..size()-1 are stable and shared by every downstream
/// consumer (LP columns, ODE coordinates, event logs). Ordering is by total
/// customer count, then reverse-lexicographic, so e_1..e_I occupy indices
/// 0..I-1.
class ConfigurationSet {
 public:
  static constexpr int kZero = -1;  // down() result for the empty configuration
  static constexpr int kNone = -2;  // no such configuration

  ConfigurationSet() = default;

  int types() const { return types_; }
  int size() const { return static_cast<int>(configs_.size()); }
  const Configuration& operator[](int index) const { return configs_[index]; }
  const std::vector<Configuration>& nonzero() const { return configs_; }
  /// Nonzero configurations plus the zero vector (last).
  std::vector<Configuration> all() const;

  /// Index of k, kZero for the zero vector, kNone if absent.
  int index_of(const Configuration& k) const;
  /// Index of k + e_i, or kNone.
  int up(int config, int type) const { return up_[config * types_ + type]; }
  /// Index of k - e_i, kZero if that is the empty configuration, kNone if k_i == 0.
  int down(int config, int type) const { return down_[config * types_ + type]; }
  /// Index of e_i.
  int unit(int type) const { return unit_[type]; }
  int total(int config) const { return totals_[config]; }

  const std::vector<Edge>& edges() const { return edges_; }
  /// 1 + max_k sum_i k_i.
  int kappa() const { return kappa_; }

  friend ConfigurationSet validate(const std::vector<Configuration>& candidates, int types);

 private:
  int types_ = 0;
  std::vector<Configuration> configs_;
  std::vector<int> totals_;
  std::vector<int> up_;
  std::vector<int> down_;
  std::vector<int> unit_;
  std::vector<Edge> edges_;
  int kappa_ = 1;
};

/// Downward closure of the generators, including the zero vector.
/// Throws ConfigurationError on empty input, negative entries, or mixed dimension.
std::vector<Configuration> close_monotone(const std::vector<Configuration>& generators);

/// Checks a full family (zero vector included or implied) for monotonicity and
/// unit vectors, and builds the indexed set.
ConfigurationSet validate(const std::vector<Configuration>& candidates, int types);

/// Builds from a list that must not contain the zero vector.
ConfigurationSet from_nonzero(const std::vector<Configuration>& nonzero, int types);

/// Convenience: validate(close_monotone(generators)).
ConfigurationSet generate(const std::vector<Configuration>& generators);

int kappa(const ConfigurationSet& configs);

enum class Normalization { Strict, Rescale };

/// Scenario after normalization: sum_i rho_i == 1.
struct Scenario {
  std::vector<CustomerType> types;
  ConfigurationSet configs;
  double r = 1.0;

  int type_count() const { return static_cast<int>(types.size()); }
  std::vector<double> rho() const;
  double min_mu() const;
  Scenario with_r(double new_r) const;
};

/// Raw scenario as read from file, before normalization.
struct ScenarioParams {
  std::vector<CustomerType> types;
  std::vector<Configuration> generators;
  double r = 1.0;
  Normalization normalization = Normalization::Rescale;

  /// Strict: requires |sum rho - 1| <= 1e-12. Rescale: r *= sum rho,
  /// lambda_i /= sum rho (so rho_i /= sum rho, arrival rates unchanged).
  Scenario normalize() const;
};

ScenarioParams parse_scenario(const std::string& json_text);
ScenarioParams load_scenario(const std::filesystem::path& path);

}  // namespace grandff
