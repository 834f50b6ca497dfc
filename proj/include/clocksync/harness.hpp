#pragma once

// Monte Carlo experiment runner: config parsing, parallel trials, CSV output
// and per-curve aggregation.

#include "clocksync/analysis.hpp"
#include "clocksync/bp.hpp"
#include "clocksync/error.hpp"
#include "clocksync/rng.hpp"
#include "clocksync/scenario.hpp"
#include "clocksync/scheduler.hpp"
#include "clocksync/topology.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace clocksync {

enum class ExperimentKind { mse_vs_tick, mse_vs_rounds };

inline constexpr int kConfigVersion = 1;

struct TopologySpec {
  std::size_t num_nodes = 25;
  Area area{300.0, 300.0};
  double radio_range = 90.0;
  std::optional<std::string> file;  // overrides the generator
  // Same network for every trial (noise and clocks redrawn). mse_vs_rounds
  // always draws fresh networks.
  bool fixed = true;
};

struct ExperimentConfig {
  std::string id = "experiment";
  ExperimentKind kind = ExperimentKind::mse_vs_tick;
  TopologySpec topology;
  ParameterRanges ranges;
  ExchangeTiming timing;
  int rounds = 20;
  std::vector<int> rounds_list{4, 8, 12, 16, 20, 24, 28, 32, 36, 40};  // mse_vs_rounds
  std::optional<double> model_noise_variance;
  ScheduleConfig schedule;
  bool silent_until_informed = true;
  int ticks = 30;
  int trials = 500;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0: hardware concurrency
  std::string output;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (ticks < 1) throw ConfigError("ticks must be >= 1");
    if (topology.num_nodes < 2 && !topology.file) throw ConfigError("num_nodes must be >= 2");
    if (!(topology.radio_range > 0.0)) throw ConfigError("radio_range must be > 0");
    if (kind == ExperimentKind::mse_vs_tick && rounds < 2) throw ConfigError("rounds must be >= 2");
    if (kind == ExperimentKind::mse_vs_rounds) {
      if (rounds_list.empty()) throw ConfigError("rounds_list must not be empty");
      for (int n : rounds_list)
        if (n < 2) throw ConfigError("every entry of rounds_list must be >= 2");
    }
    if (topology.file && !std::filesystem::exists(*topology.file))
      throw ConfigError("topology file does not exist: " + *topology.file);
    clocksync::validate(ranges);
  }
};

// ---------------------------------------------------------------------------
// Config file (JSON):
//
//   {
//     "version": 1,
//     "id": "...", "kind": "mse_vs_tick" | "mse_vs_rounds",
//     "topology": {"num_nodes", "area": [w, h], "radio_range", "file", "fixed"},
//     "clocks": {"skew": [lo, hi], "offset": [lo, hi], "delay": [lo, hi],
//                "noise_variance", "allow_nonpositive_skew"},
//     "timing": {"round_period", "response": [lo, hi], "noise_scale"},
//     "rounds", "rounds_list", "model_noise_variance",
//     "schedule": {"mode": "sync" | "async", "p_success", "edge_p_success",
//                  "retransmit": "fresh_on_active" | "retry_while_idle",
//                  "periods", "phases", "silent_until_informed"},
//     "ticks", "trials", "seed", "workers", "output",
//     "runs": [ {...}, ... ]
//   }
//
// Every entry of "runs" is merged over the top-level object (JSON merge
// patch) and yields one experiment. Without "runs" the top level is the only
// experiment. Unknown keys are rejected.
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
      throw ParseError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

template <class T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where.empty() ? key : where + "." + key, e.what());
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where = "") {
  if (obj.contains(key)) out = get_as<T>(obj, key, where);
}

inline void read_pair(const json& obj, const char* key, double& lo, double& hi, const std::string& where) {
  if (!obj.contains(key)) return;
  auto v = get_as<std::vector<double>>(obj, key, where);
  if (v.size() != 2) throw ParseError(where + "." + key, "expected [lo, hi]");
  lo = v[0];
  hi = v[1];
}

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("config", "expected an object");
  reject_unknown(j, "", {"version", "id", "kind", "topology", "clocks", "timing", "rounds", "rounds_list",
                         "model_noise_variance", "schedule", "ticks", "trials", "seed", "workers", "output", "runs"});
  ExperimentConfig c;
  read_opt(j, "id", c.id);
  if (j.contains("kind")) {
    const auto kind = get_as<std::string>(j, "kind", "");
    if (kind == "mse_vs_tick")
      c.kind = ExperimentKind::mse_vs_tick;
    else if (kind == "mse_vs_rounds")
      c.kind = ExperimentKind::mse_vs_rounds;
    else
      throw ParseError("kind", "expected mse_vs_tick or mse_vs_rounds, got '" + kind + "'");
  }
  if (j.contains("topology")) {
    const json& t = j.at("topology");
    reject_unknown(t, "topology", {"num_nodes", "area", "radio_range", "file", "fixed"});
    read_opt(t, "num_nodes", c.topology.num_nodes, "topology");
    read_pair(t, "area", c.topology.area.width, c.topology.area.height, "topology");
    read_opt(t, "radio_range", c.topology.radio_range, "topology");
    if (t.contains("file")) c.topology.file = get_as<std::string>(t, "file", "topology");
    read_opt(t, "fixed", c.topology.fixed, "topology");
  }
  if (j.contains("clocks")) {
    const json& k = j.at("clocks");
    reject_unknown(k, "clocks", {"skew", "offset", "delay", "noise_variance", "allow_nonpositive_skew"});
    read_pair(k, "skew", c.ranges.skew_min, c.ranges.skew_max, "clocks");
    read_pair(k, "offset", c.ranges.offset_min, c.ranges.offset_max, "clocks");
    read_pair(k, "delay", c.ranges.delay_min, c.ranges.delay_max, "clocks");
    read_opt(k, "noise_variance", c.ranges.noise_variance, "clocks");
    read_opt(k, "allow_nonpositive_skew", c.ranges.allow_nonpositive_skew, "clocks");
  }
  if (j.contains("timing")) {
    const json& t = j.at("timing");
    reject_unknown(t, "timing", {"round_period", "response", "noise_scale"});
    read_opt(t, "round_period", c.timing.round_period, "timing");
    read_pair(t, "response", c.timing.response_min, c.timing.response_max, "timing");
    read_opt(t, "noise_scale", c.timing.noise_scale, "timing");
  }
  read_opt(j, "rounds", c.rounds);
  read_opt(j, "rounds_list", c.rounds_list);
  if (j.contains("model_noise_variance") && !j.at("model_noise_variance").is_null())
    c.model_noise_variance = get_as<double>(j, "model_noise_variance", "");
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    reject_unknown(s, "schedule",
                   {"mode", "p_success", "edge_p_success", "retransmit", "periods", "phases", "silent_until_informed"});
    if (s.contains("mode")) {
      const auto mode = get_as<std::string>(s, "mode", "schedule");
      if (mode == "sync")
        c.schedule.mode = ScheduleMode::synchronous;
      else if (mode == "async")
        c.schedule.mode = ScheduleMode::asynchronous;
      else
        throw ParseError("schedule.mode", "expected sync or async, got '" + mode + "'");
    }
    read_opt(s, "p_success", c.schedule.p_success, "schedule");
    read_opt(s, "edge_p_success", c.schedule.edge_p_success, "schedule");
    if (s.contains("retransmit")) {
      const auto r = get_as<std::string>(s, "retransmit", "schedule");
      if (r == "fresh_on_active")
        c.schedule.retransmit = RetransmitPolicy::fresh_on_active;
      else if (r == "retry_while_idle")
        c.schedule.retransmit = RetransmitPolicy::retry_while_idle;
      else
        throw ParseError("schedule.retransmit", "unknown policy '" + r + "'");
    }
    if (s.contains("periods") || s.contains("phases")) {
      std::vector<int> periods, phases;
      read_opt(s, "periods", periods, "schedule");
      read_opt(s, "phases", phases, "schedule");
      if (phases.empty()) phases.assign(periods.size(), 0);
      c.schedule.activation = ActivationSchedule::periodic(periods, phases);
    }
    read_opt(s, "silent_until_informed", c.silent_until_informed, "schedule");
  }
  read_opt(j, "ticks", c.ticks);
  read_opt(j, "trials", c.trials);
  read_opt(j, "seed", c.seed);
  read_opt(j, "workers", c.workers);
  read_opt(j, "output", c.output);
  return c;
}

}  // namespace detail

inline std::vector<ExperimentConfig> parse_experiment_configs(const nlohmann::json& root) {
  if (!root.is_object()) throw ParseError("config", "expected a JSON object");
  if (!root.contains("version")) throw ParseError("version", "missing");
  const int version = detail::get_as<int>(root, "version", "");
  if (version != kConfigVersion) throw ParseError("version", "unsupported version " + std::to_string(version));

  std::vector<ExperimentConfig> out;
  nlohmann::json base = root;
  base.erase("runs");
  if (!root.contains("runs")) {
    out.push_back(detail::config_from_json(base));
  } else {
    const auto& runs = root.at("runs");
    if (!runs.is_array() || runs.empty()) throw ParseError("runs", "expected a nonempty array");
    for (std::size_t k = 0; k < runs.size(); ++k) {
      if (runs[k].contains("runs")) throw ParseError("runs[" + std::to_string(k) + "]", "runs cannot nest");
      nlohmann::json merged = base;
      merged.merge_patch(runs[k]);
      out.push_back(detail::config_from_json(merged));
    }
  }
  for (const auto& c : out) c.validate();
  return out;
}

inline std::vector<ExperimentConfig> load_experiment_configs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config", e.what());
  }
  return parse_experiment_configs(root);
}

// ---------------------------------------------------------------------------
// Result rows
// ---------------------------------------------------------------------------

inline constexpr std::string_view kResultHeader =
    "experiment,trial,seed,node,tick_or_n,se_alpha,se_theta,crb_alpha,crb_theta,identifiable";

struct ResultRow {
  std::string experiment;
  int trial = 0;
  std::uint64_t seed = 0;
  NodeId node{2};
  int tick_or_n = 0;
  std::optional<double> se_alpha;  // empty while the node is not identifiable
  std::optional<double> se_theta;
  double crb_alpha = 0.0;
  double crb_theta = 0.0;

  bool identifiable() const { return se_alpha.has_value(); }
  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline void write_row(std::ostream& out, const ResultRow& r) {
  out << r.experiment << ',' << r.trial << ',' << r.seed << ',' << r.node.value() << ',' << r.tick_or_n << ','
      << (r.se_alpha ? format_real(*r.se_alpha) : "") << ',' << (r.se_theta ? format_real(*r.se_theta) : "") << ','
      << format_real(r.crb_alpha) << ',' << format_real(r.crb_theta) << ',' << (r.identifiable() ? "true" : "false")
      << '\n';
}

inline void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const auto& r : rows) write_row(out, r);
}

inline std::vector<ResultRow> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultHeader) throw ParseError("header", "unexpected CSV header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != 10) throw ParseError(where, "expected 10 cells");
    ResultRow r;
    r.experiment = cells[0];
    r.trial = static_cast<int>(parse_integer(cells[1], where + " trial"));
    std::uint64_t seed = 0;
    auto res = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), seed);
    if (res.ec != std::errc() || res.ptr != cells[2].data() + cells[2].size()) throw ParseError(where + " seed", "not a seed");
    r.seed = seed;
    r.node = NodeId(static_cast<int>(parse_integer(cells[3], where + " node")));
    r.tick_or_n = static_cast<int>(parse_integer(cells[4], where + " tick_or_n"));
    const bool ident = cells[9] == "true";
    if (!ident && cells[9] != "false") throw ParseError(where + " identifiable", "expected true or false");
    if (ident) {
      r.se_alpha = parse_real(cells[5], where + " se_alpha");
      r.se_theta = parse_real(cells[6], where + " se_theta");
    } else if (!cells[5].empty() || !cells[6].empty()) {
      throw ParseError(where, "error cells must be empty for non-identifiable rows");
    }
    r.crb_alpha = parse_real(cells[7], where + " crb_alpha");
    r.crb_theta = parse_real(cells[8], where + " crb_theta");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

inline std::shared_ptr<const Topology> fixed_topology(const ExperimentConfig& cfg) {
  if (cfg.topology.file) {
    auto t = std::make_shared<const Topology>(load_topology(*cfg.topology.file));
    if (!is_strongly_connected(*t))
      throw ConfigError("topology file " + *cfg.topology.file + " is not connected; every node needs a path to node 1");
    return t;
  }
  Rng rng = make_rng(derive_seed(cfg.seed, {0}));
  return std::make_shared<const Topology>(
      generate_connected_topology(cfg.topology.num_nodes, cfg.topology.area, cfg.topology.radio_range, rng));
}

namespace detail {

inline void append_rows(std::vector<ResultRow>& rows, const ExperimentConfig& cfg, int trial, std::uint64_t seed,
                        int tick_or_n, const SimState& st, int l, const TrueNetworkState& truth, const CrbMatrix& crb) {
  for (std::size_t i = 1; i < st.num_nodes(); ++i) {
    const NodeId id = NodeId::from_index(i);
    const NodeCrb bound = crb_per_node(crb, id);
    ResultRow r{cfg.id, trial, seed, id, tick_or_n, std::nullopt, std::nullopt, bound.alpha, bound.theta};
    const Belief& b = st.belief(i, l);
    if (b.identifiable) {
      try {
        const ClockParams est = extract_clock_estimate(b);
        const ClockParams& tru = truth.clocks[i];
        r.se_alpha = (est.alpha - tru.alpha) * (est.alpha - tru.alpha);
        r.se_theta = (est.theta - tru.theta) * (est.theta - tru.theta);
      } catch (const DegenerateEstimateError&) {
      }
    }
    rows.push_back(std::move(r));
  }
}

inline SimState run_ticks(const Scenario& scn, const ExperimentConfig& cfg, Rng& rng) {
  SimState st = scn.sim_state();
  st.set_silent_until_informed(cfg.silent_until_informed);
  ScheduleConfig sched = cfg.schedule;
  sched.max_ticks = cfg.ticks;
  sched.validate(st.topology().edges().size());
  while (st.tick() < cfg.ticks) step(st, sched, rng);
  return st;
}

inline ScenarioConfig scenario_config(const ExperimentConfig& cfg, int rounds) {
  ScenarioConfig sc;
  sc.ranges = cfg.ranges;
  sc.timing = cfg.timing;
  sc.rounds = rounds;
  sc.model_noise_variance = cfg.model_noise_variance;
  return sc;
}

// Runs fn(trial) for every trial on a bounded pool; results come back in
// trial order regardless of scheduling.
template <class Fn>
std::vector<ResultRow> run_trials(const ExperimentConfig& cfg, Fn fn) {
  std::vector<std::vector<ResultRow>> per_trial(static_cast<std::size_t>(cfg.trials));
  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.trials));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int k = next++; k < cfg.trials; k = next++) {
      try {
        per_trial[static_cast<std::size_t>(k)] = fn(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.trials;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<ResultRow> rows;
  for (auto& v : per_trial) std::move(v.begin(), v.end(), std::back_inserter(rows));
  return rows;
}

}  // namespace detail

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  return derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(trial)});
}

// Rows for ticks 1..cfg.ticks, every non-reference node, every trial.
inline std::vector<ResultRow> run_mse_vs_tick(const ExperimentConfig& cfg) {
  cfg.validate();
  std::shared_ptr<const Topology> fixed;
  if (cfg.topology.fixed || cfg.topology.file) fixed = fixed_topology(cfg);
  return detail::run_trials(cfg, [&](int trial) {
    const std::uint64_t seed = trial_seed(cfg, trial);
    Rng rng = make_rng(seed);
    auto topo = fixed ? fixed
                      : std::make_shared<const Topology>(generate_connected_topology(
                            cfg.topology.num_nodes, cfg.topology.area, cfg.topology.radio_range, rng));
    const Scenario scn = make_scenario(topo, detail::scenario_config(cfg, cfg.rounds), rng);
    const CrbMatrix crb = compute_crb(scn.timestamps, scn.truth);
    const SimState st = detail::run_ticks(scn, cfg, rng);
    std::vector<ResultRow> rows;
    for (int l = 1; l <= cfg.ticks; ++l) detail::append_rows(rows, cfg, trial, seed, l, st, l, scn.truth, crb);
    return rows;
  });
}

// Rows at tick cfg.ticks for every N in cfg.rounds_list; a fresh network per
// (trial, N) unless a topology file is given.
inline std::vector<ResultRow> run_mse_vs_rounds(const ExperimentConfig& cfg) {
  cfg.validate();
  std::shared_ptr<const Topology> fixed;
  if (cfg.topology.file) fixed = fixed_topology(cfg);
  return detail::run_trials(cfg, [&](int trial) {
    const std::uint64_t seed = trial_seed(cfg, trial);
    std::vector<ResultRow> rows;
    for (int n : cfg.rounds_list) {
      Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(n)}));
      auto topo = fixed ? fixed
                        : std::make_shared<const Topology>(generate_connected_topology(
                              cfg.topology.num_nodes, cfg.topology.area, cfg.topology.radio_range, rng));
      const Scenario scn = make_scenario(topo, detail::scenario_config(cfg, n), rng);
      const CrbMatrix crb = compute_crb(scn.timestamps, scn.truth);
      const SimState st = detail::run_ticks(scn, cfg, rng);
      detail::append_rows(rows, cfg, trial, seed, n, st, cfg.ticks, scn.truth, crb);
    }
    return rows;
  });
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  return cfg.kind == ExperimentKind::mse_vs_tick ? run_mse_vs_tick(cfg) : run_mse_vs_rounds(cfg);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string experiment;
  int tick_or_n = 0;
  std::size_t rows = 0;
  std::size_t identifiable = 0;
  double mse_alpha = 0.0;  // over identifiable rows
  double mse_theta = 0.0;
  double crb_alpha = 0.0;  // over the same rows
  double crb_theta = 0.0;
};

inline constexpr std::string_view kSummaryHeader =
    "experiment,tick_or_n,rows,identifiable,mse_alpha,mse_theta,crb_alpha,crb_theta";

// Network- and trial-averaged MSE and CRB per (experiment, tick_or_n), in
// first-appearance order of experiments. `node` restricts to one node.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, std::optional<NodeId> node = {}) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, int>, SummaryRow> acc;
  for (const auto& r : rows) {
    if (node && r.node != *node) continue;
    if (std::find(order.begin(), order.end(), r.experiment) == order.end()) order.push_back(r.experiment);
    SummaryRow& s = acc[{r.experiment, r.tick_or_n}];
    s.experiment = r.experiment;
    s.tick_or_n = r.tick_or_n;
    ++s.rows;
    if (!r.identifiable()) continue;
    ++s.identifiable;
    s.mse_alpha += *r.se_alpha;
    s.mse_theta += *r.se_theta;
    s.crb_alpha += r.crb_alpha;
    s.crb_theta += r.crb_theta;
  }
  std::vector<SummaryRow> out;
  for (const auto& exp : order) {
    for (auto& [key, s] : acc) {
      if (key.first != exp) continue;
      if (s.identifiable > 0) {
        const double n = static_cast<double>(s.identifiable);
        s.mse_alpha /= n;
        s.mse_theta /= n;
        s.crb_alpha /= n;
        s.crb_theta /= n;
      }
      out.push_back(s);
    }
  }
  return out;
}

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& s : rows) {
    out << s.experiment << ',' << s.tick_or_n << ',' << s.rows << ',' << s.identifiable << ',';
    if (s.identifiable > 0)
      out << format_real(s.mse_alpha) << ',' << format_real(s.mse_theta) << ',' << format_real(s.crb_alpha) << ','
          << format_real(s.crb_theta);
    else
      out << ",,,";
    out << '\n';
  }
}

}  // namespace clocksync
