#pragma once

#include "clocksync/error.hpp"
#include "clocksync/rng.hpp"
#include "clocksync/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace clocksync {

// c(t) = alpha * t + theta
struct ClockParams {
  double alpha = 1.0;
  double theta = 0.0;
  friend bool operator==(const ClockParams&, const ClockParams&) = default;
};

inline double local_reading(const ClockParams& c, double t) { return c.alpha * t + c.theta; }
inline double true_time(const ClockParams& c, double reading) { return (reading - c.theta) / c.alpha; }

struct ParameterRanges {
  double skew_min = 0.945;
  double skew_max = 1.055;
  double offset_min = -5.5;
  double offset_max = 5.5;
  double delay_min = 8.0;
  double delay_max = 12.0;
  double noise_variance = 0.05;
  // Permits skew ranges that reach zero or below. Only for reproducing the
  // range as printed ([-0.945, 1.055]); the beta parameterization is
  // undefined at alpha = 0.
  bool allow_nonpositive_skew = false;

  static ParameterRanges verbatim_skew_range() {
    ParameterRanges r;
    r.skew_min = -0.945;
    r.allow_nonpositive_skew = true;
    return r;
  }
};

struct ExchangeTiming {
  double round_period = 100.0;  // t1 of round n is n * round_period
  double response_min = 1.0;    // t3 - t2 ~ U[response_min, response_max]
  double response_max = 5.0;
  double noise_scale = 1.0;     // multiplies the random-delay standard deviation; 0 gives noiseless exchanges
};

struct TrueNetworkState {
  std::vector<ClockParams> clocks;
  std::vector<Edge> edges;          // sorted, same order as the topology's edges
  std::vector<double> fixed_delays;  // d_{i,j} = d_{j,i}, aligned with `edges`
  std::vector<double> noise_vars;    // per node

  double delay(const Edge& e) const {
    auto it = std::lower_bound(edges.begin(), edges.end(), e);
    if (it == edges.end() || *it != e) throw DomainError("edge is not part of the network");
    return fixed_delays[static_cast<std::size_t>(it - edges.begin())];
  }
};

inline void validate(const ParameterRanges& r) {
  if (!(r.skew_min <= r.skew_max)) throw ConfigError("skew range is empty");
  if (r.skew_min <= 0.0 && !r.allow_nonpositive_skew)
    throw ConfigError("skew range must be strictly positive (got lower bound " + format_real(r.skew_min) + ")");
  if (!(r.offset_min <= r.offset_max)) throw ConfigError("offset range is empty");
  if (!(r.delay_min <= r.delay_max) || r.delay_min < 0.0) throw ConfigError("fixed delay range must be nonnegative and nonempty");
  if (!(r.noise_variance > 0.0)) throw ConfigError("noise variance must be > 0");
}

// Node 1 (index 0) is pinned to alpha = 1, theta = 0. Its draws are still
// consumed so the remaining nodes see the same stream regardless.
inline TrueNetworkState sample_true_state(const Topology& t, const ParameterRanges& ranges, Rng& rng) {
  validate(ranges);
  TrueNetworkState s;
  s.clocks.resize(t.size());
  for (auto& c : s.clocks) {
    do {
      c.alpha = uniform(rng, ranges.skew_min, ranges.skew_max);
    } while (c.alpha == 0.0);
    c.theta = uniform(rng, ranges.offset_min, ranges.offset_max);
  }
  if (!s.clocks.empty()) s.clocks[kReferenceNode] = ClockParams{1.0, 0.0};
  s.edges = t.edges();
  s.fixed_delays.reserve(s.edges.size());
  for (std::size_t k = 0; k < s.edges.size(); ++k) s.fixed_delays.push_back(uniform(rng, ranges.delay_min, ranges.delay_max));
  s.noise_vars.assign(t.size(), ranges.noise_variance);
  return s;
}

struct RoundStamps {
  double c_i_t1 = 0.0;  // initiator sends
  double c_j_t2 = 0.0;  // responder receives
  double c_j_t3 = 0.0;  // responder replies
  double c_i_t4 = 0.0;  // initiator receives
};

// Readings of one N-round two-way exchange on edge {i, j}; i is the
// initiator (the lower index), j the responder.
struct TimestampSet {
  std::size_t initiator = 0;
  std::size_t responder = 0;
  std::vector<RoundStamps> rounds;
};

inline TimestampSet simulate_exchange(const Edge& edge, const TrueNetworkState& state, int num_rounds,
                                      const ExchangeTiming& timing, Rng& rng) {
  if (num_rounds < 2) throw ConfigError("at least 2 exchange rounds are required");
  if (!(timing.response_min <= timing.response_max) || timing.response_min < 0.0)
    throw ConfigError("response delay range must be nonnegative and nonempty");
  if (timing.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  const std::size_t i = edge.first;
  const std::size_t j = edge.second;
  const double d = state.delay(edge);
  const ClockParams& ci = state.clocks.at(i);
  const ClockParams& cj = state.clocks.at(j);
  const double sd_j = std::sqrt(state.noise_vars.at(j)) * timing.noise_scale;
  const double sd_i = std::sqrt(state.noise_vars.at(i)) * timing.noise_scale;
  std::normal_distribution<double> std_normal(0.0, 1.0);

  TimestampSet ts{i, j, {}};
  ts.rounds.reserve(static_cast<std::size_t>(num_rounds));
  for (int n = 1; n <= num_rounds; ++n) {
    const double t1 = n * timing.round_period;
    const double t2 = t1 + d + sd_j * std_normal(rng);
    const double t3 = t2 + uniform(rng, timing.response_min, timing.response_max);
    const double t4 = t3 + d + sd_i * std_normal(rng);
    ts.rounds.push_back({local_reading(ci, t1), local_reading(cj, t2), local_reading(cj, t3), local_reading(ci, t4)});
  }
  return ts;
}

inline std::vector<TimestampSet> simulate_all_exchanges(const Topology& t, const TrueNetworkState& state, int num_rounds,
                                                        const ExchangeTiming& timing, Rng& rng) {
  std::vector<TimestampSet> out;
  out.reserve(t.edges().size());
  for (const Edge& e : t.edges()) out.push_back(simulate_exchange(e, state, num_rounds, timing, rng));
  return out;
}

}  // namespace clocksync
