// Command line front end: topology generation, Monte Carlo runs, bounds and
// CSV aggregation.

#include "clocksync/clocksync.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace cs = clocksync;

namespace {

// Flags that override fields of every experiment in the config.
struct SimulateOverrides {
  std::optional<std::string> kind;
  std::optional<std::size_t> nodes;
  std::optional<double> range;
  std::optional<std::string> topology;
  std::optional<int> rounds;
  std::optional<int> ticks;
  std::optional<int> trials;
  std::optional<std::string> mode;
  std::optional<double> p_success;
  std::optional<double> noise_variance;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;

  void apply(cs::ExperimentConfig& c) const {
    if (kind) {
      if (*kind == "mse_vs_tick")
        c.kind = cs::ExperimentKind::mse_vs_tick;
      else if (*kind == "mse_vs_rounds")
        c.kind = cs::ExperimentKind::mse_vs_rounds;
      else
        throw cs::ParseError("--kind", "expected mse_vs_tick or mse_vs_rounds");
    }
    if (nodes) c.topology.num_nodes = *nodes;
    if (range) c.topology.radio_range = *range;
    if (topology) c.topology.file = *topology;
    if (rounds) c.rounds = *rounds;
    if (ticks) c.ticks = *ticks;
    if (trials) c.trials = *trials;
    if (mode) {
      if (*mode == "sync")
        c.schedule.mode = cs::ScheduleMode::synchronous;
      else if (*mode == "async")
        c.schedule.mode = cs::ScheduleMode::asynchronous;
      else
        throw cs::ParseError("--mode", "expected sync or async");
    }
    if (p_success) c.schedule.p_success = *p_success;
    if (noise_variance) c.ranges.noise_variance = *noise_variance;
    if (workers) c.workers = *workers;
    if (seed) c.seed = *seed;
    if (output) c.output = *output;
  }
};

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw cs::ConfigError("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed clock synchronization by Gaussian belief propagation"};
  app.require_subcommand(1);

  // gen-topology
  auto* gen = app.add_subcommand("gen-topology", "Draw a connected random geometric network");
  std::size_t gen_nodes = 25;
  double gen_range = 90.0;
  std::vector<double> gen_area{300.0, 300.0};
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--nodes", gen_nodes, "Number of nodes")->capture_default_str();
  gen->add_option("--range", gen_range, "Radio range")->capture_default_str();
  gen->add_option("--area", gen_area, "Area width and height")->expected(2)->capture_default_str();
  gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output file (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run Monte Carlo trials and write per-node CSV rows");
  std::string sim_config;
  SimulateOverrides ov;
  sim->add_option("-c,--config", sim_config, "JSON experiment config")->check(CLI::ExistingFile);
  sim->add_option("--kind", ov.kind, "mse_vs_tick or mse_vs_rounds");
  sim->add_option("--nodes", ov.nodes, "Number of nodes");
  sim->add_option("--range", ov.range, "Radio range");
  sim->add_option("--topology", ov.topology, "Fixed topology file")->check(CLI::ExistingFile);
  sim->add_option("--rounds", ov.rounds, "Timestamp exchange rounds per edge");
  sim->add_option("--ticks", ov.ticks, "Scheduler ticks");
  sim->add_option("--trials", ov.trials, "Monte Carlo trials");
  sim->add_option("--mode", ov.mode, "sync or async");
  sim->add_option("--p-success", ov.p_success, "Per-transmission success probability");
  sim->add_option("--noise-variance", ov.noise_variance, "Per-node random delay variance");
  sim->add_option("--workers", ov.workers, "Worker threads (0: all cores)");
  sim->add_option("--seed", ov.seed, "Master seed override");
  sim->add_option("-o,--output", ov.output, "Output CSV (default stdout)");

  // crb
  auto* crb = app.add_subcommand("crb", "Per-node bound for one drawn network instance");
  std::optional<std::string> crb_topology;
  std::size_t crb_nodes = 25;
  double crb_range = 90.0;
  int crb_rounds = 20;
  double crb_noise = 0.05;
  std::uint64_t crb_seed = 1;
  crb->add_option("--topology", crb_topology, "Topology file (default: generate)")->check(CLI::ExistingFile);
  crb->add_option("--nodes", crb_nodes, "Number of nodes when generating")->capture_default_str();
  crb->add_option("--range", crb_range, "Radio range when generating")->capture_default_str();
  crb->add_option("--rounds", crb_rounds, "Timestamp exchange rounds per edge")->capture_default_str();
  crb->add_option("--noise-variance", crb_noise, "Per-node random delay variance")->capture_default_str();
  crb->add_option("--seed", crb_seed, "Master seed")->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "Aggregate simulate output into per-curve means");
  std::string rep_input;
  std::string rep_output;
  std::optional<int> rep_node;
  rep->add_option("input", rep_input, "CSV written by simulate")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--output", rep_output, "Summary CSV (default stdout)");
  rep->add_option("--node", rep_node, "Restrict to one node id");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      cs::Rng rng = cs::make_rng(cs::derive_seed(gen_seed, {0}));
      const cs::Topology t =
          cs::generate_connected_topology(gen_nodes, {gen_area[0], gen_area[1]}, gen_range, rng);
      std::ofstream file;
      cs::write_topology(open_output(gen_out, file), t);
    } else if (*sim) {
      std::vector<cs::ExperimentConfig> configs =
          sim_config.empty() ? std::vector<cs::ExperimentConfig>{cs::ExperimentConfig{}}
                             : cs::load_experiment_configs(sim_config);
      for (auto& c : configs) ov.apply(c);
      // Every experiment appends to the first config's output.
      std::ofstream file;
      std::ostream& out = open_output(configs.front().output, file);
      out << cs::kResultHeader << '\n';
      for (const auto& c : configs) {
        const auto rows = cs::run_experiment(c);
        for (const auto& r : rows) cs::write_row(out, r);
        std::cerr << c.id << ": " << c.trials << " trials, " << rows.size() << " rows\n";
      }
    } else if (*crb) {
      cs::Rng rng = cs::make_rng(cs::derive_seed(crb_seed, {1, 0}));
      auto topo = crb_topology ? std::make_shared<const cs::Topology>(cs::load_topology(*crb_topology))
                               : std::make_shared<const cs::Topology>(cs::generate_connected_topology(
                                     crb_nodes, {300.0, 300.0}, crb_range, rng));
      if (!cs::is_strongly_connected(*topo)) throw cs::ConfigError("topology is not connected");
      cs::ScenarioConfig sc;
      sc.rounds = crb_rounds;
      sc.ranges.noise_variance = crb_noise;
      const cs::Scenario scn = cs::make_scenario(topo, sc, rng);
      const cs::CrbMatrix bound = cs::compute_crb(scn.timestamps, scn.truth);
      const auto hops = cs::hop_distances(*topo);
      std::cout << "node,hops,crb_alpha,crb_theta\n";
      for (std::size_t i = 1; i < topo->size(); ++i) {
        const auto b = cs::crb_per_node(bound, cs::NodeId::from_index(i));
        std::cout << i + 1 << ',' << hops[i] << ',' << cs::format_real(b.alpha) << ',' << cs::format_real(b.theta)
                  << '\n';
      }
    } else if (*rep) {
      std::ifstream in(rep_input);
      const auto rows = cs::read_results(in);
      std::optional<cs::NodeId> node;
      if (rep_node) node = cs::NodeId(*rep_node);
      std::ofstream file;
      cs::write_summary(open_output(rep_output, file), cs::summarize(rows, node));
    }
  } catch (const cs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
