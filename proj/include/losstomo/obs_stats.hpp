#pragma once

// Per-node sufficient statistics: descendant observation indicators,
// single- and co-observation counts I_k(x) for subsets x of the node's
// descendants, confirmed arrivals n_k(1), and the data-validity report.
//
// A subset x of d_k is a bitmask over the node's ordered children list: bit c
// stands for the c-th child.

#include <bit>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "losstomo/probe_sim.hpp"
#include "losstomo/tree.hpp"

namespace losstomo {

using Subset = std::uint64_t;

inline int order_of(Subset x) { return std::popcount(x); }

// Increasing popcount, then increasing numeric value.
struct SubsetOrder {
  bool operator()(Subset a, Subset b) const {
    const int pa = std::popcount(a);
    const int pb = std::popcount(b);
    return pa != pb ? pa < pb : a < b;
  }
};

// All subsets of {0..width-1} with exactly `order` members, ascending.
std::vector<Subset> subsets_of_order(std::size_t width, std::size_t order);

// n x |d_k| matrix of gamma_j^i. An entry is kUnknown when every receiver of
// that descendant is masked for the probe.
struct IndicatorMatrix {
  static constexpr std::uint8_t kUnknown = 2;

  NodeId node = 0;
  std::vector<NodeId> descendants;
  std::size_t n = 0;
  std::vector<std::uint8_t> values;

  std::size_t width() const { return descendants.size(); }
  std::uint8_t at(std::size_t probe, std::size_t col) const { return values[probe * width() + col]; }
};

IndicatorMatrix descendant_indicators(const ProbeTrace& tr, const Tree& t, NodeId k);

// I_k(x) together with the number of probes on which x was fully known.
struct SubsetCount {
  std::uint64_t count = 0;
  std::uint64_t effective_n = 0;
};

struct NodeStats {
  NodeId node = 0;
  std::size_t n = 0;
  std::vector<NodeId> descendants;
  std::size_t max_order = 0;
  std::map<Subset, SubsetCount, SubsetOrder> I;
  // Probes seen by at least one descendant, counted directly from the rows.
  std::uint64_t n_k1 = 0;

  std::size_t width() const { return descendants.size(); }
  bool complete() const { return max_order == width(); }
  Subset full_set() const { return width() == 64 ? ~Subset{0} : (Subset{1} << width()) - 1; }

  // Throws IncompleteStats when x was not counted.
  const SubsetCount& at(Subset x) const;
  // gamma-hat_x = I_k(x) / n_x^eff; throws InvalidData if x was never fully observed.
  double gamma_x(Subset x) const;
  double gamma_hat(std::size_t child) const { return gamma_x(Subset{1} << child); }
  double gamma_k_hat() const { return static_cast<double>(n_k1) / static_cast<double>(n); }
  bool has_missing() const;
};

// Throws OrderOutOfRange unless 1 <= max_order <= |d_k|, and when a node with
// more than 20 descendants asks for orders above 3.
NodeStats co_observations(const IndicatorMatrix& ind, std::size_t max_order);

// descendant_indicators + co_observations; max_order 0 means |d_k|.
NodeStats node_stats(const ProbeTrace& tr, const Tree& t, NodeId k, std::size_t max_order = 0);

// Inclusion-exclusion over all counted subsets. Throws IncompleteStats when
// any subset of d_k is missing.
std::int64_t confirmed_arrivals(const NodeStats& stats);

struct ValidityReport {
  NodeId node = 0;
  // Subsets with at least two members and a zero co-observation count.
  std::vector<Subset> zero_sets;
  // Orders i >= 2 whose every subset has I_k(x) > 0, closed downward: once an
  // order fails, no higher order is listed.
  std::vector<std::size_t> valid_indices;
  // Orders outside valid_indices that still have some non-zero subsets; the
  // composite estimator can use them after trimming the zero subsets.
  std::vector<std::size_t> trimmable_indices;
  bool stats_complete = false;

  bool full_likelihood_valid() const { return stats_complete && zero_sets.empty(); }
  bool is_valid(std::size_t order) const;
};

ValidityReport classify_validity(const NodeStats& stats);

// Removes descendants whose single-observation count is zero. The result is
// re-indexed over the kept children; `dropped` receives the removed node ids.
NodeStats drop_silent_descendants(const NodeStats& stats, std::vector<NodeId>* dropped = nullptr);

// Subset bitmask -> count pairs, one per line, in enumeration order.
void write_node_stats(std::ostream& out, const NodeStats& stats);

}  // namespace losstomo
