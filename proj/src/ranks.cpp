#include "grandff/ranks.hpp"

#include <algorithm>
#include <cmath>

namespace grandff {

std::string to_string(EmptyRule rule) {
  switch (rule) {
    case EmptyRule::FirstFit: return "ff";
    case EmptyRule::RandomHole: return "random-hole";
    case EmptyRule::FreshServer: return "fresh";
  }
  return "?";
}

EmptyRule parse_rule(const std::string& name) {
  if (name == "ff" || name == "first-fit") return EmptyRule::FirstFit;
  if (name == "random-hole") return EmptyRule::RandomHole;
  if (name == "fresh") return EmptyRule::FreshServer;
  throw ValidationError("unknown empty-server rule \"" + name + "\" (ff|random-hole|fresh)");
}

// --- RankIndex: Fenwick tree over ranks, grown by doubling ------------------

void RankIndex::grow(std::int64_t rank) {
  std::int64_t cap = std::max<std::int64_t>(capacity_, 64);
  while (cap < rank) cap *= 2;
  bits_.resize(cap + 1, 0);
  tree_.assign(cap + 1, 0);
  for (std::int64_t i = 1; i <= cap; ++i) {
    tree_[i] += bits_[i];
    const std::int64_t j = i + (i & -i);
    if (j <= cap) tree_[j] += tree_[i];
  }
  capacity_ = cap;
}

void RankIndex::add(std::int64_t rank, int delta) {
  if (rank > capacity_) grow(rank);
  bits_[rank] = static_cast<std::uint8_t>(bits_[rank] + delta);
  for (std::int64_t i = rank; i <= capacity_; i += i & -i) tree_[i] += delta;
}

std::int64_t RankIndex::prefix(std::int64_t rank) const {
  std::int64_t s = 0;
  for (std::int64_t i = std::min(rank, capacity_); i > 0; i -= i & -i) s += tree_[i];
  return s;
}

std::int64_t RankIndex::kth_occupied(std::int64_t k) const {
  std::int64_t pos = 0;
  for (std::int64_t step = capacity_; step > 0; step >>= 1) {
    if (pos + step <= capacity_ && tree_[pos + step] < k) {
      pos += step;
      k -= tree_[pos];
    }
  }
  return pos + 1;
}

std::int64_t RankIndex::kth_free(std::int64_t k) const {
  std::int64_t pos = 0;
  for (std::int64_t step = capacity_; step > 0; step >>= 1) {
    if (pos + step <= capacity_ && step - tree_[pos + step] < k) {
      pos += step;
      k -= step - tree_[pos];
    }
  }
  // Beyond the capacity every rank is free.
  return pos + k;
}

// --- RankedState --------------------------------------------------------------

RankedState::RankedState(const ConfigurationSet& configs)
    : configs_(std::make_shared<const ConfigurationSet>(configs)), by_config_(configs.size()), config_at_(1, -1) {}

int RankedState::config_at(std::int64_t rank) const {
  if (rank <= 0 || rank >= static_cast<std::int64_t>(config_at_.size())) return -1;
  return config_at_[rank];
}

std::vector<std::int64_t> RankedState::holes() const {
  std::vector<std::int64_t> out;
  for (std::int64_t r = 1; r < u_; ++r) {
    if (config_at_[r] < 0) out.push_back(r);
  }
  return out;
}

std::int64_t RankedState::take_empty(EmptyRule rule, double u) const {
  switch (rule) {
    case EmptyRule::FirstFit:
      return index_.kth_free(1);
    case EmptyRule::RandomHole: {
      const std::int64_t holes = hole_count();
      if (holes == 0) return u_ + 1;
      const auto j = std::min<std::int64_t>(holes - 1, static_cast<std::int64_t>(u * holes));
      return index_.kth_free(j + 1);
    }
    case EmptyRule::FreshServer:
      return watermark_ + 1;
  }
  return u_ + 1;
}

void RankedState::occupy(std::int64_t rank, int config) {
  if (rank <= 0) throw CountMismatch("ranks are positive");
  if (config_at(rank) >= 0) throw CountMismatch("rank " + std::to_string(rank) + " is already occupied");
  if (rank >= static_cast<std::int64_t>(config_at_.size())) {
    config_at_.resize(std::max<std::size_t>(rank + 1, config_at_.size() * 2), -1);
  }
  config_at_[rank] = config;
  auto& list = by_config_[config];
  list.insert(std::lower_bound(list.begin(), list.end(), rank), rank);
  index_.add(rank, +1);
  ++q_;
  u_ = std::max(u_, rank);
  watermark_ = std::max(watermark_, rank);
}

void RankedState::vacate(std::int64_t rank) {
  config_at_[rank] = -1;
  index_.add(rank, -1);
  --q_;
  if (rank == u_) u_ = q_ > 0 ? index_.kth_occupied(q_) : 0;
}

std::int64_t RankedState::select(int config, double u) const {
  const auto& list = by_config_[config];
  if (list.empty()) {
    throw CountMismatch("no server in configuration " + std::to_string(config) + " to select");
  }
  const auto n = static_cast<std::int64_t>(list.size());
  const auto idx = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u * n)), 0, n - 1);
  return list[idx];
}

RankChange RankedState::apply_event(const EventRecord& event, EmptyRule rule) {
  const auto& configs = *configs_;
  if (event.config < 0 || event.config >= configs.size() || event.type < 0 ||
      event.type >= configs.types()) {
    throw CountMismatch("event references an unknown configuration or type");
  }
  const int below = configs.down(event.config, event.type);
  if (below == ConfigurationSet::kNone) throw CountMismatch("event is not along an edge");

  auto relabel = [&](std::int64_t rank, int from, int to) {
    auto& src = by_config_[from];
    src.erase(std::lower_bound(src.begin(), src.end(), rank));
    auto& dst = by_config_[to];
    dst.insert(std::lower_bound(dst.begin(), dst.end(), rank), rank);
    config_at_[rank] = to;
  };

  RankChange change;
  if (event.kind == EventKind::Arrival) {
    if (below == ConfigurationSet::kZero) {
      change.rank = take_empty(rule, event.u);
      occupy(change.rank, event.config);
      change.occupied = true;
    } else {
      change.rank = select(below, event.u);
      relabel(change.rank, below, event.config);
    }
  } else {
    change.rank = select(event.config, event.u);
    if (below == ConfigurationSet::kZero) {
      auto& list = by_config_[event.config];
      list.erase(std::lower_bound(list.begin(), list.end(), change.rank));
      vacate(change.rank);
      change.emptied = true;
    } else {
      relabel(change.rank, event.config, below);
    }
  }
  return change;
}

std::int64_t RankedState::occupied_leq(std::int64_t n) const {
  if (n <= 0) return 0;
  if (n >= u_) return q_;
  return index_.prefix(n);
}

bool RankedState::matches(const OccupancyState& state) const {
  for (int c = 0; c < configs_->size(); ++c) {
    if (count(c) != state.count(c)) return false;
  }
  return q_ == state.Q();
}

bool RankedState::consistent() const {
  std::int64_t total = 0, max_rank = 0;
  for (int c = 0; c < configs_->size(); ++c) {
    const auto& list = by_config_[c];
    if (!std::is_sorted(list.begin(), list.end())) return false;
    for (auto r : list) {
      if (config_at(r) != c) return false;
      max_rank = std::max(max_rank, r);
    }
    total += static_cast<std::int64_t>(list.size());
  }
  std::int64_t marked = 0;
  for (std::size_t r = 1; r < config_at_.size(); ++r) marked += config_at_[r] >= 0;
  return total == q_ && marked == q_ && max_rank == u_ && index_.prefix(u_) == q_ &&
         watermark_ >= u_ && (u_ == 0) == (q_ == 0);
}

RankChange apply_event(RankedState& ranked, const EventRecord& event, EmptyRule rule) {
  return ranked.apply_event(event, rule);
}

std::int64_t take_empty(const RankedState& ranked, EmptyRule rule, double u) {
  return ranked.take_empty(rule, u);
}

std::int64_t occupied_leq(const RankedState& ranked, std::int64_t n) { return ranked.occupied_leq(n); }

// --- RankTracker ----------------------------------------------------------------

RankTracker::RankTracker(const ConfigurationSet& configs, EmptyRule rule, TrackerOptions options)
    : rule_(rule), options_(options), ranked_(configs) {
  if (options_.horizon > options_.warmup) {
    u_avg_ = TimeAverager(options_.warmup, options_.horizon, options_.batches);
    q_avg_ = TimeAverager(options_.warmup, options_.horizon, options_.batches);
    g_avg_ = TimeAverager(options_.warmup, options_.horizon, options_.batches);
  }
}

void RankTracker::on_start(const OccupancyState& initial) {
  if (initial.Q() != 0) throw ValidationError("rank tracking needs an empty initial state");
  last_t_ = initial.t;
}

void RankTracker::hold_until(double t) {
  const auto U = static_cast<double>(ranked_.U());
  const auto Q = static_cast<double>(ranked_.Q());
  const auto G = static_cast<double>(ranked_.occupied_leq(options_.g_target));
  if (options_.horizon > options_.warmup) {
    u_avg_.add(last_t_, t, U);
    q_avg_.add(last_t_, t, Q);
    g_avg_.add(last_t_, t, G);
  }
  if (options_.sample_dt > 0.0) {
    while (next_sample_ < t && next_sample_ <= options_.horizon) {
      samples_.push_back({next_sample_, ranked_.U(), ranked_.Q(),
                          ranked_.occupied_leq(options_.g_target)});
      next_sample_ += options_.sample_dt;
    }
  }
  last_t_ = t;
}

void RankTracker::observe(const EventRecord& event) {
  hold_until(event.t);
  const auto change = ranked_.apply_event(event, rule_);
  if (options_.track_busy) {
    if (change.occupied) {
      if (change.rank >= static_cast<std::int64_t>(started_.size())) {
        started_.resize(std::max<std::size_t>(change.rank + 1, started_.size() * 2), 0.0);
      }
      started_[change.rank] = event.t;
    } else if (change.emptied && started_[change.rank] >= options_.warmup) {
      busy_.push_back(event.t - started_[change.rank]);
    }
  }
  if (options_.record_q_path) q_path_.push_back(ranked_.Q());
}

void RankTracker::finish() {
  if (finished_) return;
  finished_ = true;
  hold_until(std::max(options_.horizon, last_t_));
  if (options_.sample_dt > 0.0 && next_sample_ <= options_.horizon) {
    samples_.push_back({next_sample_, ranked_.U(), ranked_.Q(), ranked_.occupied_leq(options_.g_target)});
  }
  if (options_.track_busy) {
    for (std::int64_t r = 1; r <= ranked_.U(); ++r) {
      if (ranked_.config_at(r) >= 0 && started_[r] >= options_.warmup) ++censored_;
    }
  }
}

std::vector<RankTracker> replay(const ConfigurationSet& configs, std::span<const EventRecord> events,
                                std::span<const EmptyRule> rules, const TrackerOptions& options) {
  std::vector<RankTracker> trackers;
  trackers.reserve(rules.size());
  for (auto rule : rules) trackers.emplace_back(configs, rule, options);
  for (const auto& ev : events) {
    for (auto& tr : trackers) tr.observe(ev);
  }
  for (auto& tr : trackers) tr.finish();
  return trackers;
}

BusyPeriodSummary busy_period_stats(const ConfigurationSet& configs,
                                    std::span<const EventRecord> events, double warmup,
                                    double horizon) {
  TrackerOptions opts;
  opts.warmup = warmup;
  opts.horizon = horizon;
  opts.track_busy = true;
  const EmptyRule rules[] = {EmptyRule::FirstFit};
  auto trackers = replay(configs, events, rules, opts);
  return summarize_busy_periods(trackers.front().busy_durations(), trackers.front().censored());
}

}  // namespace grandff
