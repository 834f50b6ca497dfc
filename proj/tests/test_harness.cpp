#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace clocksync;
using nlohmann::json;

namespace {

ExperimentConfig small(int trials = 3) {
  ExperimentConfig c;
  c.id = "small";
  c.topology.num_nodes = 10;
  c.topology.radio_range = 130;
  c.rounds = 10;
  c.ticks = 8;
  c.trials = trials;
  c.seed = 42;
  c.workers = 1;
  c.schedule.p_success = 0.5;
  return c;
}

std::string csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_results(out, rows);
  return out.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Config, DefaultsAndRunsMerge) {
  const json j = json::parse(R"({
    "version": 1, "trials": 7, "schedule": {"mode": "async", "p_success": 0.2},
    "runs": [{"id": "a"}, {"id": "b", "schedule": {"mode": "sync"}, "topology": {"num_nodes": 12}}]
  })");
  const auto cfgs = parse_experiment_configs(j);
  ASSERT_EQ(cfgs.size(), 2u);
  EXPECT_EQ(cfgs[0].id, "a");
  EXPECT_EQ(cfgs[0].trials, 7);
  EXPECT_EQ(cfgs[0].schedule.mode, ScheduleMode::asynchronous);
  EXPECT_EQ(cfgs[1].schedule.mode, ScheduleMode::synchronous);
  EXPECT_DOUBLE_EQ(cfgs[1].schedule.p_success, 0.2);
  EXPECT_EQ(cfgs[1].topology.num_nodes, 12u);
  EXPECT_EQ(cfgs[0].topology.num_nodes, 25u);
  EXPECT_EQ(cfgs[0].rounds, 20);
  EXPECT_DOUBLE_EQ(cfgs[0].topology.radio_range, 90.0);
}

TEST(Config, ShippedDefaultsParse) {
  const auto cfgs = load_experiment_configs(CLOCKSYNC_SOURCE_DIR "/configs/paper_defaults.json");
  ASSERT_FALSE(cfgs.empty());
  for (const auto& c : cfgs) {
    EXPECT_EQ(c.topology.num_nodes, 25u);
    EXPECT_DOUBLE_EQ(c.topology.radio_range, 90.0);
    EXPECT_DOUBLE_EQ(c.ranges.noise_variance, 0.05);
  }
}

TEST(Config, Errors) {
  auto field_of = [](const std::string& text) {
    try {
      parse_experiment_configs(json::parse(text));
    } catch (const ParseError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(R"({"trials": 3})"), "version");
  EXPECT_EQ(field_of(R"({"version": 2})"), "version");
  EXPECT_EQ(field_of(R"({"version": 1, "tirals": 3})"), "tirals");
  EXPECT_EQ(field_of(R"({"version": 1, "schedule": {"mode": "lockstep"}})"), "schedule.mode");
  EXPECT_EQ(field_of(R"({"version": 1, "clocks": {"skew": [1]}})"), "clocks.skew");
  EXPECT_EQ(field_of(R"({"version": 1, "trials": "many"})"), "trials");
  EXPECT_THROW(parse_experiment_configs(json::parse(R"({"version": 1, "trials": 0})")), ConfigError);
  EXPECT_THROW(parse_experiment_configs(json::parse(R"({"version": 1, "clocks": {"skew": [-0.945, 1.055]}})")),
               ConfigError);
  EXPECT_THROW(parse_experiment_configs(json::parse(R"({"version": 1, "topology": {"file": "/no/such/file"}})")),
               ConfigError);
  EXPECT_THROW(load_experiment_configs("/no/such/config.json"), ConfigError);
}

TEST(Harness, RowsAreCompleteAndConsistent) {
  const ExperimentConfig c = small();
  const auto rows = run_mse_vs_tick(c);
  ASSERT_EQ(rows.size(), 3u * 9u * 8u);
  std::size_t k = 0;
  for (int trial = 0; trial < 3; ++trial)
    for (int tick = 1; tick <= 8; ++tick)
      for (int node = 2; node <= 10; ++node, ++k) {
        const ResultRow& r = rows[k];
        EXPECT_EQ(r.trial, trial);
        EXPECT_EQ(r.tick_or_n, tick);
        EXPECT_EQ(r.node, NodeId(node));
        EXPECT_EQ(r.seed, trial_seed(c, trial));
        if (r.identifiable()) {
          EXPECT_GE(*r.se_alpha, 0.0);
          EXPECT_GE(*r.se_theta, 0.0);
        }
        // bound constant across ticks of a trial
        const ResultRow& first = rows[k - static_cast<std::size_t>(tick - 1) * 9];
        EXPECT_EQ(r.crb_alpha, first.crb_alpha);
        EXPECT_EQ(r.crb_theta, first.crb_theta);
      }
}

TEST(Harness, CsvFormatAndRoundTrip) {
  const auto rows = run_mse_vs_tick(small(2));
  const std::string text = csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "experiment,trial,seed,node,tick_or_n,se_alpha,se_theta,crb_alpha,crb_theta,identifiable");
  bool saw_unidentified = false;
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line))
    if (line.size() >= 6 && line.substr(line.size() - 6) == ",false") {
      saw_unidentified = true;
      EXPECT_NE(line.find(",,,"), std::string::npos) << line;
    }
  EXPECT_TRUE(saw_unidentified);
  std::istringstream in(text);
  EXPECT_EQ(read_results(in), rows);
}

TEST(Harness, DeterministicAcrossRunsAndWorkers) {
  ExperimentConfig c = small(1);
  EXPECT_EQ(csv(run_mse_vs_tick(c)), csv(run_mse_vs_tick(c)));
  c = small(6);
  const std::string serial = csv(run_mse_vs_tick(c));
  c.workers = 4;
  EXPECT_EQ(csv(run_mse_vs_tick(c)), serial);
  c.topology.fixed = false;
  c.workers = 1;
  const std::string fresh = csv(run_mse_vs_tick(c));
  c.workers = 3;
  EXPECT_EQ(csv(run_mse_vs_tick(c)), fresh);
}

TEST(Harness, DisconnectedTopologyFileAborts) {
  const std::string p = temp_path("clocksync_disconnected.txt");
  save_topology(Topology({{0, 0}, {1, 0}, {50, 0}}, 2.0), p);
  ExperimentConfig c = small(1);
  c.topology.file = p;
  try {
    run_mse_vs_tick(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("not connected"), std::string::npos);
  }
  std::filesystem::remove(p);
}

TEST(Harness, NoiselessErrorsCollapse) {
  ExperimentConfig c = small(3);
  c.timing.noise_scale = 0.0;
  c.model_noise_variance = 1e-12;
  c.ticks = 3000;
  c.schedule.p_success = 1.0;
  const auto rows = run_mse_vs_tick(c);
  for (const auto& r : rows)
    if (r.tick_or_n == 3000) {
      ASSERT_TRUE(r.identifiable());
      EXPECT_LT(*r.se_alpha, 1e-16);
      EXPECT_LT(*r.se_theta, 1e-16);
    }
}

TEST(Harness, MseDecreasesWithRounds) {
  ExperimentConfig c = small(150);
  c.kind = ExperimentKind::mse_vs_rounds;
  c.rounds_list = {4, 12, 40};
  c.ticks = 60;
  c.schedule.p_success = 1.0;
  c.workers = 0;
  const auto summary = summarize(run_mse_vs_rounds(c));
  ASSERT_EQ(summary.size(), 3u);
  for (std::size_t k = 1; k < 3; ++k) {
    EXPECT_LT(summary[k].mse_alpha, summary[k - 1].mse_alpha);
    EXPECT_LT(summary[k].mse_theta, summary[k - 1].mse_theta);
  }
}

TEST(Harness, SingleEdgeMatchesPairwiseVariance) {
  // Two nodes: the estimate is pairwise least squares against the reference,
  // with covariance sigma2 (A^T A)^{-1} mapped through the (theta, alpha) Jacobian.
  const std::string p = temp_path("clocksync_pair.txt");
  save_topology(Topology({{0, 0}, {10, 0}}, 20.0), p);
  const int n = 40, trials = 3000;
  double se_a = 0, se_t = 0, var_a = 0, var_t = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(derive_seed(99, {static_cast<std::uint64_t>(trial)}));
    auto topo = std::make_shared<const Topology>(load_topology(p));
    ScenarioConfig sc;
    sc.rounds = n;
    const Scenario scn = make_scenario(topo, sc, rng);
    const ObservationPair& obs = scn.observations[0];
    const Mat2 cov = obs.sigma2 * (obs.a_ji.transpose() * obs.a_ji).inverse();
    const Mat2 j = zeta_jacobian_block(scn.truth.clocks[1]);
    const Mat2 zc = j * cov * j.transpose();
    var_t += zc(0, 0);
    var_a += zc(1, 1);
    SimState st = scn.sim_state();
    ScheduleConfig cfg;
    cfg.max_ticks = 2;
    run(st, cfg, 1e-12, rng);
    const ClockParams est = extract_clock_estimate(st.belief(1, st.tick()));
    se_a += (est.alpha - scn.truth.clocks[1].alpha) * (est.alpha - scn.truth.clocks[1].alpha);
    se_t += (est.theta - scn.truth.clocks[1].theta) * (est.theta - scn.truth.clocks[1].theta);
  }
  // relative standard error of a chi-square mean over 3000 draws is ~2.6%
  EXPECT_NEAR(se_a / var_a, 1.0, 0.1);
  EXPECT_NEAR(se_t / var_t, 1.0, 0.1);
  std::filesystem::remove(p);
}

TEST(Report, SummaryAveragesIdentifiableRows) {
  std::vector<ResultRow> rows{
      {"e", 0, 1, NodeId(2), 1, 4.0, 2.0, 1.0, 3.0},
      {"e", 0, 1, NodeId(3), 1, std::nullopt, std::nullopt, 5.0, 5.0},
      {"e", 1, 2, NodeId(2), 1, 2.0, 4.0, 3.0, 1.0},
      {"f", 0, 1, NodeId(2), 1, 1.0, 1.0, 1.0, 1.0},
  };
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].experiment, "e");
  EXPECT_EQ(s[0].rows, 3u);
  EXPECT_EQ(s[0].identifiable, 2u);
  EXPECT_DOUBLE_EQ(s[0].mse_alpha, 3.0);
  EXPECT_DOUBLE_EQ(s[0].mse_theta, 3.0);
  EXPECT_DOUBLE_EQ(s[0].crb_alpha, 2.0);
  EXPECT_DOUBLE_EQ(s[0].crb_theta, 2.0);
  const auto only3 = summarize(rows, NodeId(3));
  ASSERT_EQ(only3.size(), 1u);
  EXPECT_EQ(only3[0].identifiable, 0u);
  std::ostringstream out;
  write_summary(out, only3);
  EXPECT_EQ(out.str(), "experiment,tick_or_n,rows,identifiable,mse_alpha,mse_theta,crb_alpha,crb_theta\ne,1,1,0,,,,\n");
}

TEST(Report, RejectsMalformedCsv) {
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(read_results(bad_header), ParseError);
  std::istringstream bad_cell(std::string(kResultHeader) + "\ne,0,1,2,1,x,1,1,1,true\n");
  EXPECT_THROW(read_results(bad_cell), ParseError);
  std::istringstream short_row(std::string(kResultHeader) + "\ne,0,1,2\n");
  EXPECT_THROW(read_results(short_row), ParseError);
}
