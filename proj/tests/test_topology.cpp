#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace clocksync;

TEST(Topology, EdgesAreExactlyPairsWithinRange) {
  Rng rng = make_rng(11);
  const Topology t = generate_random_topology(25, {300, 300}, 90, rng);
  ASSERT_EQ(t.size(), 25u);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = i + 1; j < 25; ++j) {
      const auto& a = t.positions()[i];
      const auto& b = t.positions()[j];
      const bool close = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) <= 90.0 * 90.0;
      EXPECT_EQ(close, t.edge_index(i, j).has_value()) << i << "," << j;
      expected += close;
    }
  EXPECT_EQ(t.edges().size(), expected);
  for (const auto& p : t.positions()) {
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, 300.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LE(p.y, 300.0);
  }
}

TEST(Topology, SingleNodeIsConnected) {
  Rng rng = make_rng(1);
  const Topology t = generate_random_topology(1, {10, 10}, 3, rng);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.edges().empty());
  EXPECT_TRUE(is_strongly_connected(t));
}

TEST(Topology, ZeroRangeHasNoEdges) {
  Rng rng = make_rng(2);
  const Topology t = generate_random_topology(5, {300, 300}, 0, rng);
  EXPECT_TRUE(t.edges().empty());
  EXPECT_FALSE(is_strongly_connected(t));
}

TEST(Topology, PathIsConnectedDisjointPairsAreNot) {
  EXPECT_TRUE(is_strongly_connected(Topology({{0, 0}, {1, 0}, {2, 0}}, 1.0)));
  const Topology pairs({{0, 0}, {1, 0}, {10, 0}, {11, 0}}, 1.0);
  EXPECT_EQ(pairs.edges().size(), 2u);
  EXPECT_FALSE(is_strongly_connected(pairs));
}

TEST(Topology, HopDistancesMatchBfsOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(seed);
    const Topology t = generate_random_topology(25, {300, 300}, 90, rng);
    const auto expect = oracle::bfs_depth(t.size(), t.edges());
    EXPECT_EQ(hop_distances(t), expect);
    const bool all = std::none_of(expect.begin(), expect.end(), [](int d) { return d < 0; });
    EXPECT_EQ(is_strongly_connected(t), all);
  }
}

TEST(Topology, ConnectedAcceptanceRateMatchesBruteForce) {
  int accepted = 0;
  int oracle_accepted = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng = make_rng(derive_seed(77, {seed}));
    const Topology t = generate_random_topology(25, {300, 300}, 90, rng);
    accepted += is_strongly_connected(t);
    const auto d = oracle::bfs_depth(t.size(), t.edges());
    oracle_accepted += std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
  }
  EXPECT_EQ(accepted, oracle_accepted);
  EXPECT_GT(accepted, 0);
  EXPECT_LT(accepted, 1000);
}

TEST(Topology, GeneratorIsDeterministic) {
  Rng a = make_rng(5), b = make_rng(5);
  EXPECT_EQ(generate_connected_topology(25, {300, 300}, 90, a), generate_connected_topology(25, {300, 300}, 90, b));
}

TEST(Topology, NodeIdIsOneBased) {
  EXPECT_TRUE(NodeId(1).is_reference());
  EXPECT_EQ(NodeId::from_index(0), NodeId(1));
  EXPECT_EQ(NodeId(7).index(), 6u);
}

TEST(TopologyFile, RoundTripIsExact) {
  Rng rng = make_rng(9);
  const Topology t = generate_connected_topology(25, {300, 300}, 90, rng);
  const auto path = std::filesystem::temp_directory_path() / "clocksync_topology_roundtrip.txt";
  save_topology(t, path.string());
  EXPECT_EQ(load_topology(path.string()), t);
  std::filesystem::remove(path);
}

namespace {
Topology parse(const std::string& text) {
  std::istringstream in(text);
  return read_topology(in);
}
const std::string kHead = "clocksync-topology 1\nnum_nodes 3\nradio_range 1.5\nnode 1 0 0\nnode 2 1 0\nnode 3 2 0\n";
}  // namespace

TEST(TopologyFile, ParsesCommentsAndEdges) {
  const Topology t = parse("# comment\n" + kHead + "edge 1 2\nedge 3 2\n");
  EXPECT_EQ(t.edges().size(), 2u);
}

TEST(TopologyFile, DuplicateEdgeIsParseError) {
  try {
    parse(kHead + "edge 1 2\nedge 2 1\nedge 2 3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "edge 2-1");
  }
}

TEST(TopologyFile, EdgeBeyondRangeIsValidationError) {
  EXPECT_THROW(parse(kHead + "edge 1 2\nedge 2 3\nedge 1 3\n"), ValidationError);
}

TEST(TopologyFile, MissingEdgeIsValidationError) { EXPECT_THROW(parse(kHead + "edge 1 2\n"), ValidationError); }

TEST(TopologyFile, MalformedFieldsNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(""), "header");
  EXPECT_EQ(field_of("clocksync-topology 2\n"), "version");
  EXPECT_EQ(field_of("clocksync-topology 1\nnum_nodes x\n"), "num_nodes");
  EXPECT_EQ(field_of("clocksync-topology 1\nnum_nodes 1\nradio_range abc\n"), "radio_range");
  EXPECT_EQ(field_of("clocksync-topology 1\nnum_nodes 1\nradio_range 1\nnode 1 0 y\n"), "node 1 y");
  EXPECT_EQ(field_of("clocksync-topology 1\nnum_nodes 2\nradio_range 1\nnode 1 0 0\n"), "node 2");
  EXPECT_EQ(field_of("clocksync-topology 1\nnum_nodes 1\nradio_range 1\nnode 1 0 0\ncolour red\n"), "colour");
  EXPECT_EQ(field_of(kHead + "edge 1 4\n"), "edge 1-4");
}

TEST(TopologyFile, MissingFileIsConfigError) { EXPECT_THROW(load_topology("/nonexistent/topology.txt"), ConfigError); }
