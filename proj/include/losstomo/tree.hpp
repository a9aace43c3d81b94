#pragma once

// Multicast tree topology, ancestry queries, and conversions between path pass
// rates (root -> node) and link pass rates (parent -> node).
//
// Nodes are dense ids 0..m with node 0 the root. Node k != 0 owns the link e_k
// that joins parent(k) to k, so "link k" and "node k" are used interchangeably.
// Receivers are the leaves, ordered by id.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace losstomo {

using NodeId = std::size_t;
inline constexpr NodeId kNoParent = std::numeric_limits<NodeId>::max();

// Raw topology description as read from a file. parents[0] must be -1 and
// alpha[0] must be 1 (the root has no incoming link).
struct TreeSpec {
  std::vector<std::int64_t> parents;
  std::vector<double> alpha;
};

class Tree {
 public:
  // Validates the description. Throws Error with CycleDetected, MultipleRoots,
  // RateOutOfRange or InvalidTopology.
  static Tree build(const TreeSpec& spec);

  std::size_t size() const { return parent_.size(); }
  static constexpr NodeId root() { return 0; }

  NodeId parent(NodeId k) const { return parent_.at(k); }
  std::span<const NodeId> children(NodeId k) const { return children_.at(k); }
  bool is_leaf(NodeId k) const { return children_.at(k).empty(); }
  bool is_internal(NodeId k) const { return !is_leaf(k); }

  // Link pass rate alpha_k of e_k; 1 for the root.
  double link_pass_rate(NodeId k) const { return alpha_.at(k); }
  std::span<const double> link_pass_rates() const { return alpha_; }

  // All receivers R in id order, and R(k) for the subtree T(k).
  std::span<const NodeId> receivers() const { return receivers_; }
  std::span<const NodeId> receivers_of(NodeId k) const { return subtree_receivers_.at(k); }
  // Column of receiver r in an observation matrix; throws if r is not a leaf.
  std::size_t receiver_index(NodeId r) const;

  // a(k) = {f(k), f_2(k), ..., 0}, nearest first. Empty for the root.
  std::vector<NodeId> ancestors(NodeId k) const;
  bool in_subtree(NodeId node, NodeId k) const;

  // Parents always precede their children.
  std::span<const NodeId> preorder() const { return preorder_; }
  std::vector<NodeId> internal_nodes() const;

  TreeSpec spec() const;

 private:
  Tree() = default;

  std::vector<NodeId> parent_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<double> alpha_;
  std::vector<NodeId> receivers_;
  std::vector<std::vector<NodeId>> subtree_receivers_;
  std::vector<std::size_t> receiver_column_;
  std::vector<NodeId> preorder_;
};

struct PathRates {
  std::vector<double> A;  // pass rate of the path root -> k, A_0 = 1
  std::vector<double> s;  // sum of link loss rates over a(k), excluding e_k
};

PathRates path_rates(const Tree& t);

// beta_k: probability that at least one receiver of T(k) sees a probe given
// that it reached parent(k). Includes the loss on e_k.
std::vector<double> subtree_pass_rates(const Tree& t);

struct LinkRates {
  std::vector<double> alpha;
  std::vector<bool> clamped;
};

struct LinkRate {
  double alpha = 1.0;
  bool clamped = false;
};

// One link: path_rate / parent_path_rate, clamped to 1 with a flag.
// Throws DivisionByZeroPath when parent_path_rate is zero.
LinkRate link_rate_from_paths(double path_rate, double parent_path_rate);

// alpha_k = A_k / A_parent(k), clamped to 1 with a flag when A_k exceeds its
// parent's rate. Throws DivisionByZeroPath when a parent rate is zero.
LinkRates link_rates_from_paths(std::span<const double> A, const Tree& t);

// Topology files are JSON: {"parents": [-1, 0, 1, 1], "alpha": [1, 0.99, 0.99, 0.99]}
Tree parse_topology(const std::string& text);
Tree load_topology(const std::string& path);
std::string topology_to_json(const Tree& t);

// Root link into a single branching node whose children are leaves.
TreeSpec star_topology(double root_link_alpha, std::span<const double> leaf_alphas);

}  // namespace losstomo
