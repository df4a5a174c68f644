#include "grandff/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace grandff {

namespace {

std::string to_string(const Configuration& k) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < k.size(); ++i) out << (i ? "," : "") << k[i];
  out << ')';
  return out.str();
}

int sum(const Configuration& k) { return std::accumulate(k.begin(), k.end(), 0); }

// Graded, then reverse-lexicographic: e_1, e_2, ..., e_I come first.
bool canonical_less(const Configuration& a, const Configuration& b) {
  const int sa = sum(a), sb = sum(b);
  if (sa != sb) return sa < sb;
  return b < a;
}

void check_dimensions(const std::vector<Configuration>& list, std::size_t types) {
  for (const auto& k : list) {
    if (k.size() != types) {
      throw ConfigurationError(ConfigurationError::Kind::DimensionMismatch,
                               "configuration " + to_string(k) + " has dimension " +
                                   std::to_string(k.size()) + ", expected " +
                                   std::to_string(types),
                               k);
    }
    for (int v : k) {
      if (v < 0) {
        throw ConfigurationError(ConfigurationError::Kind::DimensionMismatch,
                                 "negative count in configuration " + to_string(k), k);
      }
    }
  }
}

}  // namespace

std::vector<Configuration> ConfigurationSet::all() const {
  auto out = configs_;
  out.emplace_back(types_, 0);
  return out;
}

int ConfigurationSet::index_of(const Configuration& k) const {
  if (static_cast<int>(k.size()) != types_) return kNone;
  if (std::all_of(k.begin(), k.end(), [](int v) { return v == 0; })) return kZero;
  auto it = std::lower_bound(configs_.begin(), configs_.end(), k, canonical_less);
  if (it == configs_.end() || *it != k) return kNone;
  return static_cast<int>(it - configs_.begin());
}

std::vector<Configuration> close_monotone(const std::vector<Configuration>& generators) {
  if (generators.empty()) {
    throw ConfigurationError(ConfigurationError::Kind::Empty, "no configuration generators");
  }
  const std::size_t types = generators.front().size();
  if (types == 0) {
    throw ConfigurationError(ConfigurationError::Kind::DimensionMismatch,
                             "configurations must have at least one type");
  }
  check_dimensions(generators, types);

  std::set<Configuration> closed;
  for (const auto& g : generators) {
    // Enumerate the box [0, g] with an odometer.
    Configuration k(types, 0);
    while (true) {
      closed.insert(k);
      std::size_t d = 0;
      while (d < types && k[d] == g[d]) k[d++] = 0;
      if (d == types) break;
      ++k[d];
    }
  }
  std::vector<Configuration> out(closed.begin(), closed.end());
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

ConfigurationSet validate(const std::vector<Configuration>& candidates, int types) {
  if (types <= 0) {
    throw ConfigurationError(ConfigurationError::Kind::DimensionMismatch,
                             "number of types must be positive");
  }
  check_dimensions(candidates, static_cast<std::size_t>(types));

  std::set<Configuration> members(candidates.begin(), candidates.end());
  const Configuration zero(types, 0);
  members.insert(zero);

  for (int i = 0; i < types; ++i) {
    Configuration e(types, 0);
    e[i] = 1;
    if (!members.count(e)) {
      throw ConfigurationError(ConfigurationError::Kind::MissingUnitVector,
                               "unit vector e_" + std::to_string(i + 1) + " is missing", e);
    }
  }
  // Monotone iff every k - e_i (k_i > 0) is present; induction covers the rest.
  for (const auto& k : members) {
    for (int i = 0; i < types; ++i) {
      if (k[i] == 0) continue;
      Configuration below = k;
      --below[i];
      if (!members.count(below)) {
        throw ConfigurationError(ConfigurationError::Kind::NotMonotone,
                                 to_string(k) + " is present but " + to_string(below) +
                                     " is not",
                                 below);
      }
    }
  }

  ConfigurationSet set;
  set.types_ = types;
  for (const auto& k : members) {
    if (k != zero) set.configs_.push_back(k);
  }
  std::sort(set.configs_.begin(), set.configs_.end(), canonical_less);

  const int n = set.size();
  set.totals_.resize(n);
  set.up_.assign(static_cast<std::size_t>(n) * types, ConfigurationSet::kNone);
  set.down_.assign(static_cast<std::size_t>(n) * types, ConfigurationSet::kNone);
  set.unit_.resize(types);
  int max_total = 0;
  for (int c = 0; c < n; ++c) {
    const auto& k = set.configs_[c];
    set.totals_[c] = sum(k);
    max_total = std::max(max_total, set.totals_[c]);
    for (int i = 0; i < types; ++i) {
      Configuration above = k;
      ++above[i];
      set.up_[c * types + i] = set.index_of(above);
      if (set.up_[c * types + i] == ConfigurationSet::kZero) set.up_[c * types + i] = ConfigurationSet::kNone;
      if (k[i] > 0) {
        Configuration below = k;
        --below[i];
        set.down_[c * types + i] = set.index_of(below);
        set.edges_.push_back({c, i});
      }
    }
  }
  for (int i = 0; i < types; ++i) {
    Configuration e(types, 0);
    e[i] = 1;
    set.unit_[i] = set.index_of(e);
  }
  set.kappa_ = 1 + max_total;
  return set;
}

ConfigurationSet from_nonzero(const std::vector<Configuration>& nonzero, int types) {
  for (const auto& k : nonzero) {
    if (std::all_of(k.begin(), k.end(), [](int v) { return v == 0; })) {
      throw ConfigurationError(ConfigurationError::Kind::ZeroInNonzeroSet,
                               "zero configuration listed among nonzero configurations", k);
    }
  }
  return validate(nonzero, types);
}

ConfigurationSet generate(const std::vector<Configuration>& generators) {
  auto closed = close_monotone(generators);
  return validate(closed, static_cast<int>(generators.front().size()));
}

int kappa(const ConfigurationSet& configs) { return configs.kappa(); }

std::vector<double> Scenario::rho() const {
  std::vector<double> out;
  out.reserve(types.size());
  for (const auto& t : types) out.push_back(t.rho());
  return out;
}

double Scenario::min_mu() const {
  double m = types.front().mu;
  for (const auto& t : types) m = std::min(m, t.mu);
  return m;
}

Scenario Scenario::with_r(double new_r) const {
  Scenario s = *this;
  s.r = new_r;
  return s;
}

Scenario ScenarioParams::normalize() const {
  if (types.empty()) throw ValidationError("scenario has no customer types");
  for (const auto& t : types) {
    if (!(t.lambda > 0.0) || !(t.mu > 0.0) || !std::isfinite(t.lambda) || !std::isfinite(t.mu)) {
      throw ValidationError("customer type rates must be positive and finite");
    }
  }
  if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("scale parameter r must be positive");

  Scenario s;
  s.configs = generate(generators);
  if (s.configs.types() != static_cast<int>(types.size())) {
    throw ValidationError("configuration dimension " + std::to_string(s.configs.types()) +
                          " does not match " + std::to_string(types.size()) + " customer types");
  }
  double total = 0.0;
  for (const auto& t : types) total += t.rho();

  s.types = types;
  s.r = r;
  if (normalization == Normalization::Strict) {
    if (std::abs(total - 1.0) > 1e-12) {
      throw ValidationError("strict normalization requires sum of rho equal to 1, got " +
                            std::to_string(total));
    }
  } else {
    s.r = r * total;
    for (auto& t : s.types) t.lambda /= total;
  }
  return s;
}

ScenarioParams parse_scenario(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  ScenarioParams p;
  try {
    for (const auto& t : doc.at("types")) {
      p.types.push_back({t.at("lambda").get<double>(), t.at("mu").get<double>()});
    }
    for (const auto& g : doc.at("config_generators")) {
      p.generators.push_back(g.get<Configuration>());
    }
    p.r = doc.value("r", 1.0);
    const auto mode = doc.value("normalization", std::string("rescale"));
    if (mode == "rescale") {
      p.normalization = Normalization::Rescale;
    } else if (mode == "strict") {
      p.normalization = Normalization::Strict;
    } else {
      throw ValidationError("normalization must be \"strict\" or \"rescale\", got \"" + mode + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed scenario: ") + e.what());
  }
  return p;
}

ScenarioParams load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

}  // namespace grandff
