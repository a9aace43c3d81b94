#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "losstomo/error.hpp"
#include "losstomo/tree.hpp"

using namespace losstomo;

namespace {

ErrorCode build_error(const TreeSpec& spec) {
  try {
    Tree::build(spec);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "build succeeded";
  return ErrorCode::Io;
}

Tree random_tree(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> size(3, 15);
  std::uniform_real_distribution<double> rate(0.5, 1.0);
  TreeSpec spec{{-1, 0}, {1.0, rate(rng)}};
  const std::size_t m = size(rng);
  for (std::size_t v = 2; v < m; ++v) {
    spec.parents.push_back(static_cast<std::int64_t>(std::uniform_int_distribution<std::size_t>(1, v - 1)(rng)));
    spec.alpha.push_back(rate(rng));
  }
  return Tree::build(spec);
}

}  // namespace

TEST(Tree, TwoLeafStar) {
  const Tree t = Tree::build({{-1, 0, 1, 1}, {1, 1, 1, 1}});
  EXPECT_EQ(t.size(), 4u);
  ASSERT_EQ(t.receivers().size(), 2u);
  EXPECT_EQ(t.receivers()[0], 2u);
  EXPECT_EQ(t.receivers()[1], 3u);
  EXPECT_EQ(t.children(1).size(), 2u);
  EXPECT_TRUE(t.is_leaf(2));
  EXPECT_TRUE(t.is_internal(1));
  EXPECT_EQ(t.receiver_index(3), 1u);
}

TEST(Tree, EightLeafStar) {
  const std::vector<double> leaves(8, 0.99);
  const Tree t = Tree::build(star_topology(0.99, leaves));
  EXPECT_EQ(t.receivers().size(), 8u);
  EXPECT_EQ(t.children(1).size(), 8u);
  EXPECT_EQ(t.receivers_of(1).size(), 8u);
}

TEST(Tree, RejectsBadSpecs) {
  EXPECT_EQ(build_error({{-1, 0, 2}, {1, 1, 1}}), ErrorCode::CycleDetected);
  EXPECT_EQ(build_error({{-1, 2, 1}, {1, 1, 1}}), ErrorCode::CycleDetected);
  EXPECT_EQ(build_error({{-1, -1, 0}, {1, 1, 1}}), ErrorCode::MultipleRoots);
  EXPECT_EQ(build_error({{-1, 0, 5}, {1, 1, 1}}), ErrorCode::InvalidTopology);
  EXPECT_EQ(build_error({{-1, 0}, {1, 1, 1}}), ErrorCode::InvalidTopology);
  EXPECT_EQ(build_error({{-1, 0}, {1, 1.2}}), ErrorCode::RateOutOfRange);
  EXPECT_EQ(build_error({{-1, 0}, {1, 0.0}}), ErrorCode::RateOutOfRange);
  EXPECT_EQ(build_error({{-1, 0}, {0.9, 1}}), ErrorCode::RateOutOfRange);
}

TEST(Tree, Ancestry) {
  const Tree t = Tree::build({{-1, 0, 1, 2, 2, 1}, {1, 0.9, 0.9, 0.9, 0.9, 0.9}});
  EXPECT_EQ(t.ancestors(3), (std::vector<NodeId>{2, 1, 0}));
  EXPECT_TRUE(t.ancestors(0).empty());
  EXPECT_TRUE(t.in_subtree(4, 2));
  EXPECT_FALSE(t.in_subtree(5, 2));
  EXPECT_EQ(t.internal_nodes(), (std::vector<NodeId>{0, 1, 2}));
  const auto order = t.preorder();
  std::vector<std::size_t> pos(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (NodeId k = 1; k < t.size(); ++k) EXPECT_LT(pos[t.parent(k)], pos[k]);
}

TEST(PathRates, Lossless) {
  const Tree t = Tree::build({{-1, 0, 1, 1}, {1, 1, 1, 1}});
  const PathRates p = path_rates(t);
  for (NodeId k = 0; k < t.size(); ++k) {
    EXPECT_EQ(p.A[k], 1.0);
    EXPECT_EQ(p.s[k], 0.0);
  }
}

TEST(PathRates, Chain) {
  const Tree t = Tree::build({{-1, 0, 1}, {1, 0.95, 0.99}});
  const PathRates p = path_rates(t);
  EXPECT_NEAR(p.A[2], 0.95 * 0.99, 1e-15);
  EXPECT_NEAR(p.s[2], 0.05, 1e-15);
  EXPECT_NEAR(p.s[1], 0.0, 1e-15);
}

TEST(PathRates, RootLinkFivePercent) {
  const std::vector<double> leaves{0.99, 0.95, 0.99};
  const Tree t = Tree::build(star_topology(0.95, leaves));
  const PathRates p = path_rates(t);
  EXPECT_DOUBLE_EQ(p.A[1], 0.95);
  for (std::size_t j = 0; j < leaves.size(); ++j) EXPECT_DOUBLE_EQ(p.A[2 + j], 0.95 * leaves[j]);
}

TEST(PathRates, SubtreePassRates) {
  const Tree t = Tree::build({{-1, 0, 1, 1}, {1, 0.9, 0.8, 0.7}});
  const auto beta = subtree_pass_rates(t);
  EXPECT_DOUBLE_EQ(beta[2], 0.8);
  EXPECT_NEAR(beta[1], 0.9 * (1 - 0.2 * 0.3), 1e-15);
}

TEST(LinkRates, ClampAndDivision) {
  const LinkRate r = link_rate_from_paths(0.97, 0.95);
  EXPECT_EQ(r.alpha, 1.0);
  EXPECT_TRUE(r.clamped);
  const LinkRate ok = link_rate_from_paths(0.9, 0.95);
  EXPECT_FALSE(ok.clamped);
  EXPECT_DOUBLE_EQ(ok.alpha, 0.9 / 0.95);
  try {
    link_rate_from_paths(0.5, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivisionByZeroPath);
  }
}

TEST(TreeProperty, RoundTripAndMonotone) {
  std::mt19937_64 rng(7);
  for (int c = 0; c < 200; ++c) {
    const Tree t = random_tree(rng);
    const PathRates p = path_rates(t);
    const LinkRates back = link_rates_from_paths(p.A, t);
    for (NodeId k = 1; k < t.size(); ++k) {
      EXPECT_NEAR(back.alpha[k], t.link_pass_rate(k), 1e-12);
      EXPECT_FALSE(back.clamped[k]);
      EXPECT_LE(p.A[k], p.A[t.parent(k)]);
    }
  }
}

TEST(TopologyJson, RoundTrip) {
  const Tree t = parse_topology(R"({"parents": [null, 0, 1, 1], "alpha": [1, 0.9, 0.8, 0.7]})");
  EXPECT_EQ(t.size(), 4u);
  const Tree again = parse_topology(topology_to_json(t));
  EXPECT_EQ(again.spec().parents, t.spec().parents);
  EXPECT_EQ(again.spec().alpha, t.spec().alpha);
}

TEST(TopologyJson, Malformed) {
  EXPECT_THROW(parse_topology("{"), Error);
  EXPECT_THROW(parse_topology(R"({"parents": [-1, 0]})"), Error);
  EXPECT_THROW(load_topology("/nonexistent/topology.json"), Error);
}
