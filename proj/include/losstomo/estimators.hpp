#pragma once

// Path pass-rate estimators for an internal node k, built on NodeStats:
//
//   full       root of 1 - gamma_k/A = prod_j (1 - gamma_j/A)
//   composite  A_k(i) = (sum_{#x=i} prod_{j in x} gamma_j / sum_{#x=i} gamma_x)^(1/(i-1))
//   local      (prod_{j in x} gamma_j / gamma_x)^(1/(#x-1)) for a single subset x
//   grouped    two virtual descendants formed by OR-ing each group of children
//   weighted   composite with per-subset weights (missing-data aware)
//
// and tree-wide estimation with a pluggable selection policy.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "losstomo/obs_stats.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/tree.hpp"

namespace losstomo {

struct Estimate {
  double value = 0.0;  // reported estimate, clamped into (0, 1]
  double raw = 0.0;    // before clamping
  bool clamped = false;
  bool boundary = false;  // full-likelihood root sits at gamma_k
};

// Throws IncompleteStats, InvalidData (a zero co-observation) or NoRootInRange.
Estimate full_mle(const NodeStats& stats);
// h(A) = 1 - gamma_k/A - prod_j (1 - gamma_j/A).
double full_likelihood_residual(const NodeStats& stats, double A);
// sum_{i>=2} (-1)^i sum_{#x=i} (I_k(x)/n - prod_{j in x} gamma_j / A^(i-1)).
double correspondence_residual(const NodeStats& stats, double A);

// Throws OrderOutOfRange / IncompleteStats for orders not counted, InvalidData
// when every order-i co-observation is zero.
Estimate composite(const NodeStats& stats, std::size_t order);

// lm_k(x) = prod_{j in x} gamma_j / gamma_x, an estimate of A_k^(#x-1).
double local_raw(const NodeStats& stats, Subset x);
Estimate local(const NodeStats& stats, Subset x);

// g1 and g2 must partition the node's children. Needs complete, unmasked stats.
Estimate grouped(const NodeStats& stats, Subset g1, Subset g2);

using SubsetWeights = std::map<Subset, double, SubsetOrder>;

// w_x = n_x^eff / n for every order-i subset.
SubsetWeights default_weights(const NodeStats& stats, std::size_t order);
// Subsets absent from `weights` get weight 0. Throws AllWeightsZero.
Estimate weighted_composite(const NodeStats& stats, std::size_t order, const SubsetWeights& weights);
Estimate weighted_composite(const NodeStats& stats, std::size_t order);
// Composite with the zero co-observation subsets removed from both sums.
Estimate trimmed_composite(const NodeStats& stats, std::size_t order);

// Descendants named by node id; throws InvalidArgument for non-children.
Subset subset_of(const NodeStats& stats, const std::vector<NodeId>& nodes);

class EstimatorId {
 public:
  enum class Kind { Full, Composite, Local, Grouped, Weighted };

  static EstimatorId full() { return EstimatorId(Kind::Full); }
  static EstimatorId composite(std::size_t order);
  static EstimatorId weighted(std::size_t order);
  static EstimatorId local(std::vector<NodeId> members);
  static EstimatorId grouped(std::vector<NodeId> first, std::vector<NodeId> second);

  // "full", "pair", "triple", "composite:<i>", "weighted:<i>", "local:<a>+<b>[+...]",
  // "grouped:<a>+<b>/<c>+<d>".
  static EstimatorId parse(std::string_view text);

  Kind kind() const { return kind_; }
  std::size_t order() const { return order_; }
  const std::vector<NodeId>& members() const { return members_; }
  const std::vector<NodeId>& second_group() const { return second_; }

  std::string label() const;
  // Table heading: Full, Pair, Triple, SinglePair, SingleTriple, ...
  std::string column_name() const;

  auto operator<=>(const EstimatorId&) const = default;

 private:
  explicit EstimatorId(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::size_t order_ = 0;
  std::vector<NodeId> members_;
  std::vector<NodeId> second_;
};

// Dispatches on the id. Local and grouped members are matched against the
// stats' descendants by node id.
Estimate evaluate(const NodeStats& stats, const EstimatorId& id);

enum Flag : std::uint32_t {
  kClamped = 1u << 0,
  kBoundary = 1u << 1,
  kFallback = 1u << 2,
  kInvalid = 1u << 3,
  kDroppedSilent = 1u << 4,
  kLinkClamped = 1u << 5,
  kUnidentifiable = 1u << 6,
  kTrimmed = 1u << 7,
};

std::string flags_to_string(std::uint32_t flags);

struct SelectionPolicy {
  EstimatorId preferred = EstimatorId::full();
  // When the preferred estimator's data requirement fails, fall back to the
  // most robust valid composite (lowest valid order), then to a trimmed one.
  bool fallback = true;
};

struct NodeEstimate {
  NodeId node = 0;
  std::optional<EstimatorId> estimator;  // empty for the root and receivers
  std::optional<double> path_rate;       // A-hat_k, empty when invalid
  std::optional<double> link_pass_rate;  // alpha-hat_k
  std::optional<double> beta;            // 1 - prod_j (1 - gamma_j / A-hat_k)
  std::uint32_t flags = 0;
  std::vector<NodeId> dropped;
  std::string note;

  std::optional<double> link_loss() const {
    return link_pass_rate ? std::optional<double>(1.0 - *link_pass_rate) : std::nullopt;
  }
};

struct EstimateSet {
  std::vector<NodeEstimate> nodes;  // indexed by node id
};

// Estimates one internal node (not the root) under the policy; the link rate
// is left empty because it needs the parent's estimate.
NodeEstimate estimate_node(const ProbeTrace& tr, const Tree& t, NodeId k, const SelectionPolicy& policy = {});

// Picks an estimator per node by policy; data problems become flags on the
// node instead of aborting. Receivers use their observed pass fraction.
EstimateSet estimate_tree(const ProbeTrace& tr, const Tree& t, const SelectionPolicy& policy = {});

// Tab-separated: node, estimator, path_rate, link_loss, flags.
void write_estimate_set(std::ostream& out, const EstimateSet& set);

}  // namespace losstomo
