#pragma once

#include "clocksync/clock_sim.hpp"
#include "clocksync/observations.hpp"
#include "clocksync/rng.hpp"
#include "clocksync/scheduler.hpp"
#include "clocksync/topology.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace clocksync {

struct ScenarioConfig {
  ParameterRanges ranges;
  ExchangeTiming timing;
  int rounds = 20;
  // Variance the estimator assumes per node; defaults to ranges.noise_variance.
  std::optional<double> model_noise_variance;
};

// One synchronization problem instance: network, ground truth and the
// observations every node holds after the timestamp exchange.
struct Scenario {
  std::shared_ptr<const Topology> topology;
  TrueNetworkState truth;
  std::vector<TimestampSet> timestamps;
  std::vector<ObservationPair> observations;

  SimState sim_state() const { return SimState(topology, observations, default_priors(topology->size())); }
};

inline Scenario make_scenario(std::shared_ptr<const Topology> topology, const ScenarioConfig& cfg, Rng& rng) {
  Scenario s;
  s.topology = std::move(topology);
  s.truth = sample_true_state(*s.topology, cfg.ranges, rng);
  s.timestamps = simulate_all_exchanges(*s.topology, s.truth, cfg.rounds, cfg.timing, rng);
  std::vector<double> model_vars = s.truth.noise_vars;
  if (cfg.model_noise_variance) {
    if (!(*cfg.model_noise_variance > 0.0)) throw ConfigError("model noise variance must be > 0");
    model_vars.assign(model_vars.size(), *cfg.model_noise_variance);
  }
  s.observations = build_observations(s.timestamps, model_vars);
  return s;
}

}  // namespace clocksync
