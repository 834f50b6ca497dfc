// Synchronizes one random 25-node network over lossy links and prints each
// node's estimate against the truth and the centralized solution.

#include "clocksync/clocksync.hpp"

#include <cstdio>
#include <memory>

using namespace clocksync;

int main() {
  Rng rng = make_rng(2024);
  auto topo = std::make_shared<const Topology>(generate_connected_topology(25, {300, 300}, 90, rng));
  const Scenario scn = make_scenario(topo, ScenarioConfig{}, rng);

  SimState st = scn.sim_state();
  ScheduleConfig cfg;
  cfg.p_success = 0.5;
  cfg.max_ticks = 400;
  const RunResult res = run(st, cfg, 1e-9, rng);
  std::printf("%d ticks%s\n", res.ticks, res.stopped_early ? " (converged)" : "");

  const StackedEstimate wls = centralized_wls(scn.observations, topo->size(), BetaVector::reference());
  const auto hops = hop_distances(*topo);
  std::printf("node hops     alpha      alpha_hat       theta      theta_hat   |bp - wls|\n");
  for (std::size_t i = 1; i < topo->size(); ++i) {
    const Belief& b = st.belief(i, st.tick());
    const ClockParams& truth = scn.truth.clocks[i];
    if (!b.identifiable) {
      std::printf("%4zu %4d  not identifiable\n", i + 1, hops[i]);
      continue;
    }
    const ClockParams est = extract_clock_estimate(b);
    const double gap = (b.mu - wls.beta(i).value).cwiseAbs().maxCoeff();
    std::printf("%4zu %4d  %.6f  %.6f  %+9.5f  %+9.5f  %.2e\n", i + 1, hops[i], truth.alpha, est.alpha, truth.theta,
                est.theta, gap);
  }
}
