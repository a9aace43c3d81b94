#include "losstomo/tree.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "losstomo/error.hpp"

namespace losstomo {

Tree Tree::build(const TreeSpec& spec) {
  const std::size_t count = spec.parents.size();
  if (count < 2) {
    throw Error(ErrorCode::InvalidTopology, "a tree needs a root and at least one receiver");
  }
  if (spec.alpha.size() != count) {
    throw Error(ErrorCode::InvalidTopology,
                fmt::format("{} parents but {} link rates", count, spec.alpha.size()));
  }

  Tree t;
  t.parent_.assign(count, kNoParent);
  std::size_t roots = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::int64_t p = spec.parents[k];
    if (p < 0) {
      ++roots;
      continue;
    }
    if (static_cast<std::size_t>(p) == k) {
      throw Error(ErrorCode::CycleDetected, fmt::format("node {} is its own parent", k));
    }
    if (static_cast<std::size_t>(p) >= count) {
      throw Error(ErrorCode::InvalidTopology,
                  fmt::format("node {} has parent {} outside 0..{}", k, p, count - 1));
    }
    t.parent_[k] = static_cast<NodeId>(p);
  }
  if (roots > 1) {
    throw Error(ErrorCode::MultipleRoots, fmt::format("{} nodes have no parent", roots));
  }
  if (roots == 0) {
    throw Error(ErrorCode::CycleDetected, "no node is parentless, so the parent map has a cycle");
  }
  if (t.parent_[0] != kNoParent) {
    throw Error(ErrorCode::InvalidTopology, "node 0 must be the root");
  }

  // A parent chain longer than the node count revisits a node.
  for (NodeId k = 1; k < count; ++k) {
    NodeId cur = k;
    std::size_t steps = 0;
    while (cur != 0) {
      cur = t.parent_[cur];
      if (cur == kNoParent || ++steps > count) {
        throw Error(ErrorCode::CycleDetected, fmt::format("node {} does not reach the root", k));
      }
    }
  }

  if (spec.alpha[0] != 1.0) {
    throw Error(ErrorCode::RateOutOfRange, "alpha[0] belongs to the root and must be 1");
  }
  for (std::size_t k = 1; k < count; ++k) {
    const double a = spec.alpha[k];
    if (!(a > 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::RateOutOfRange, fmt::format("alpha[{}] = {} is not in (0, 1]", k, a));
    }
  }
  t.alpha_ = spec.alpha;

  t.children_.assign(count, {});
  for (NodeId k = 1; k < count; ++k) t.children_[t.parent_[k]].push_back(k);

  // Ids ascend inside each children list, so this stack walk is deterministic.
  std::vector<NodeId> stack{0};
  while (!stack.empty()) {
    const NodeId k = stack.back();
    stack.pop_back();
    t.preorder_.push_back(k);
    const auto& ch = t.children_[k];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }

  t.receiver_column_.assign(count, kNoParent);
  for (NodeId k = 0; k < count; ++k) {
    if (t.children_[k].empty()) {
      t.receiver_column_[k] = t.receivers_.size();
      t.receivers_.push_back(k);
    }
  }

  t.subtree_receivers_.assign(count, {});
  for (NodeId r : t.receivers_) {
    for (NodeId cur = r; cur != kNoParent; cur = t.parent_[cur]) {
      t.subtree_receivers_[cur].push_back(r);
    }
  }
  return t;
}

std::size_t Tree::receiver_index(NodeId r) const {
  if (r >= size() || receiver_column_[r] == kNoParent) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("node {} is not a receiver", r));
  }
  return receiver_column_[r];
}

std::vector<NodeId> Tree::ancestors(NodeId k) const {
  std::vector<NodeId> out;
  for (NodeId cur = parent_.at(k); cur != kNoParent; cur = parent_[cur]) out.push_back(cur);
  return out;
}

bool Tree::in_subtree(NodeId node, NodeId k) const {
  for (NodeId cur = node; cur != kNoParent; cur = parent_.at(cur)) {
    if (cur == k) return true;
  }
  return false;
}

std::vector<NodeId> Tree::internal_nodes() const {
  std::vector<NodeId> out;
  for (NodeId k = 0; k < size(); ++k) {
    if (!children_[k].empty()) out.push_back(k);
  }
  return out;
}

TreeSpec Tree::spec() const {
  TreeSpec s;
  s.alpha = alpha_;
  s.parents.reserve(size());
  for (NodeId p : parent_) s.parents.push_back(p == kNoParent ? -1 : static_cast<std::int64_t>(p));
  return s;
}

PathRates path_rates(const Tree& t) {
  PathRates r;
  r.A.assign(t.size(), 1.0);
  r.s.assign(t.size(), 0.0);
  for (NodeId k : t.preorder()) {
    if (k == Tree::root()) continue;
    const NodeId p = t.parent(k);
    r.A[k] = r.A[p] * t.link_pass_rate(k);
    r.s[k] = r.s[p] + (1.0 - t.link_pass_rate(p));
  }
  return r;
}

std::vector<double> subtree_pass_rates(const Tree& t) {
  std::vector<double> beta(t.size(), 1.0);
  const auto order = t.preorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId k = *it;
    double all_lost = 1.0;
    if (t.is_leaf(k)) {
      all_lost = 0.0;
    } else {
      for (NodeId c : t.children(k)) all_lost *= 1.0 - beta[c];
    }
    beta[k] = t.link_pass_rate(k) * (1.0 - all_lost);
  }
  return beta;
}

LinkRate link_rate_from_paths(double path_rate, double parent_path_rate) {
  if (parent_path_rate == 0.0) throw Error(ErrorCode::DivisionByZeroPath, "parent path rate is zero");
  const double a = path_rate / parent_path_rate;
  return a > 1.0 ? LinkRate{1.0, true} : LinkRate{a, false};
}

LinkRates link_rates_from_paths(std::span<const double> A, const Tree& t) {
  if (A.size() != t.size()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} path rates for a tree of {} nodes", A.size(), t.size()));
  }
  LinkRates out;
  out.alpha.assign(t.size(), 1.0);
  out.clamped.assign(t.size(), false);
  for (NodeId k = 1; k < t.size(); ++k) {
    if (A[t.parent(k)] == 0.0) {
      throw Error(ErrorCode::DivisionByZeroPath,
                  fmt::format("path rate of node {} (parent of {}) is zero", t.parent(k), k));
    }
    const LinkRate r = link_rate_from_paths(A[k], A[t.parent(k)]);
    out.alpha[k] = r.alpha;
    out.clamped[k] = r.clamped;
  }
  return out;
}

Tree parse_topology(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, fmt::format("topology is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object() || !doc.contains("parents") || !doc.contains("alpha")) {
    throw Error(ErrorCode::InvalidTopology, "topology needs \"parents\" and \"alpha\" arrays");
  }
  TreeSpec spec;
  try {
    for (const auto& p : doc.at("parents")) {
      spec.parents.push_back(p.is_null() ? -1 : p.get<std::int64_t>());
    }
    spec.alpha = doc.at("alpha").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidTopology, fmt::format("malformed topology: {}", e.what()));
  }
  return Tree::build(spec);
}

Tree load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open topology file '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str());
}

std::string topology_to_json(const Tree& t) {
  const TreeSpec s = t.spec();
  nlohmann::json doc;
  doc["parents"] = s.parents;
  doc["alpha"] = s.alpha;
  return doc.dump();
}

TreeSpec star_topology(double root_link_alpha, std::span<const double> leaf_alphas) {
  TreeSpec s;
  s.parents = {-1, 0};
  s.alpha = {1.0, root_link_alpha};
  for (double a : leaf_alphas) {
    s.parents.push_back(1);
    s.alpha.push_back(a);
  }
  return s;
}

}  // namespace losstomo
