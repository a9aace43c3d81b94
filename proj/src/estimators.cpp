#include "losstomo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "losstomo/error.hpp"

namespace losstomo {

namespace {

Estimate finalize(double raw) {
  Estimate e;
  e.raw = raw;
  e.value = raw > 1.0 ? 1.0 : raw;
  e.clamped = raw > 1.0;
  return e;
}

double product_of_gammas(const NodeStats& stats, Subset x) {
  double p = 1.0;
  for (std::size_t j = 0; j < stats.width(); ++j) {
    if (x & (Subset{1} << j)) p *= stats.gamma_hat(j);
  }
  return p;
}

void check_order(const NodeStats& stats, std::size_t order) {
  if (order < 2 || order > stats.width()) {
    throw Error(ErrorCode::OrderOutOfRange,
                fmt::format("order {} is not in 2..{} for node {}", order, stats.width(), stats.node));
  }
  if (order > stats.max_order) {
    throw Error(ErrorCode::IncompleteStats,
                fmt::format("node {} counted co-observations only up to order {}", stats.node, stats.max_order));
  }
}

double root_of_ratio(double numerator, double denominator, std::size_t order) {
  return std::pow(numerator / denominator, 1.0 / static_cast<double>(order - 1));
}

// Derivative of h(A) = 1 - g_k/A - prod_j (1 - g_j/A).
double full_likelihood_slope(double gk, const std::vector<double>& g, double A) {
  double slope = gk / (A * A);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double others = 1.0;
    for (std::size_t q = 0; q < g.size(); ++q) {
      if (q != j) others *= 1.0 - g[q] / A;
    }
    slope -= g[j] / (A * A) * others;
  }
  return slope;
}

double full_likelihood_h(double gk, const std::vector<double>& g, double A) {
  double prod = 1.0;
  for (double gj : g) prod *= 1.0 - gj / A;
  return 1.0 - gk / A - prod;
}

}  // namespace

double full_likelihood_residual(const NodeStats& stats, double A) {
  std::vector<double> g(stats.width());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = stats.gamma_hat(j);
  return full_likelihood_h(stats.gamma_k_hat(), g, A);
}

Estimate full_mle(const NodeStats& stats) {
  if (!stats.complete()) {
    throw Error(ErrorCode::IncompleteStats,
                fmt::format("full likelihood at node {} needs every co-observation order", stats.node));
  }
  const ValidityReport validity = classify_validity(stats);
  if (!validity.zero_sets.empty()) {
    throw Error(ErrorCode::InvalidData,
                fmt::format("node {} has {} zero co-observation(s), first {:#x}", stats.node,
                            validity.zero_sets.size(), validity.zero_sets.front()));
  }
  if (stats.width() < 2) {
    throw Error(ErrorCode::InvalidData, fmt::format("node {} has a single descendant", stats.node));
  }

  const double gk = stats.gamma_k_hat();
  std::vector<double> g(stats.width());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = stats.gamma_hat(j);
  const double gmax = *std::max_element(g.begin(), g.end());
  if (gk < gmax) {
    throw Error(ErrorCode::NoRootInRange,
                fmt::format("gamma_k {} is below a descendant rate {} at node {}", gk, gmax, stats.node));
  }
  if (gk == gmax) {
    // One factor of the product vanishes at A = gamma_k, which is then the only root.
    Estimate e = finalize(gk);
    e.boundary = true;
    return e;
  }

  auto h = [&](double A) { return full_likelihood_h(gk, g, A); };
  double lo = gk;
  double hi = 1.0;
  double h_hi = h(hi);
  if (h_hi == 0.0) return finalize(1.0);
  for (int grow = 0; h_hi < 0.0; ++grow) {
    // The root lies above 1; it is located anyway so the clamp is reported honestly.
    if (grow > 64) {
      throw Error(ErrorCode::NoRootInRange, fmt::format("no sign change of h above gamma_k at node {}", stats.node));
    }
    lo = hi;
    hi *= 2.0;
    h_hi = h(hi);
  }

  double x = 0.5 * (lo + hi);
  if (validity.is_valid(stats.width())) {
    const Estimate start = composite(stats, stats.width());
    if (start.raw > lo && start.raw < hi) x = start.raw;
  } else if (gk * 1.0001 > lo && gk * 1.0001 < hi) {
    x = gk * 1.0001;
  }

  for (int iter = 0; iter < 200; ++iter) {
    const double hx = h(x);
    if (hx == 0.0) break;
    if (hx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (std::abs(hx) < 1e-15 || hi - lo < 1e-16 * hi) break;
    const double slope = full_likelihood_slope(gk, g, x);
    double next = slope != 0.0 ? x - hx / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return finalize(x);
}

double correspondence_residual(const NodeStats& stats, double A) {
  if (!stats.complete()) {
    throw Error(ErrorCode::IncompleteStats, "correspondence residual needs every co-observation order");
  }
  const double n = static_cast<double>(stats.n);
  double total = 0.0;
  for (std::size_t order = 2; order <= stats.width(); ++order) {
    const double sign = order % 2 == 0 ? 1.0 : -1.0;
    const double scale = std::pow(A, static_cast<double>(order - 1));
    for (Subset x : subsets_of_order(stats.width(), order)) {
      total += sign * (static_cast<double>(stats.at(x).count) / n - product_of_gammas(stats, x) / scale);
    }
  }
  return total;
}

Estimate composite(const NodeStats& stats, std::size_t order) {
  check_order(stats, order);
  double numerator = 0.0;
  double denominator = 0.0;
  for (Subset x : subsets_of_order(stats.width(), order)) {
    numerator += product_of_gammas(stats, x);
    denominator += stats.gamma_x(x);
  }
  if (denominator == 0.0) {
    throw Error(ErrorCode::InvalidData,
                fmt::format("every order-{} co-observation at node {} is zero", order, stats.node));
  }
  return finalize(root_of_ratio(numerator, denominator, order));
}

double local_raw(const NodeStats& stats, Subset x) {
  if (order_of(x) < 2 || (x & ~stats.full_set()) != 0) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("subset {:#x} is not a co-observation group of node {}", x, stats.node));
  }
  const double gx = stats.gamma_x(x);
  if (gx == 0.0) {
    throw Error(ErrorCode::InvalidData, fmt::format("co-observation {:#x} at node {} is zero", x, stats.node));
  }
  return product_of_gammas(stats, x) / gx;
}

Estimate local(const NodeStats& stats, Subset x) {
  const double lm = local_raw(stats, x);
  return finalize(std::pow(lm, 1.0 / static_cast<double>(order_of(x) - 1)));
}

Estimate grouped(const NodeStats& stats, Subset g1, Subset g2) {
  if (g1 == 0 || g2 == 0 || (g1 & g2) != 0 || (g1 | g2) != stats.full_set()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("groups {:#x} / {:#x} do not partition the descendants of node {}", g1, g2, stats.node));
  }
  if (!stats.complete() || stats.has_missing()) {
    throw Error(ErrorCode::IncompleteStats, "grouped estimator needs complete statistics without missing data");
  }
  // n_g(1) by inclusion-exclusion over the non-empty subsets of the group.
  auto group_arrivals = [&](Subset g) {
    std::int64_t total = 0;
    for (Subset y = g; y != 0; y = (y - 1) & g) {
      const std::int64_t c = static_cast<std::int64_t>(stats.at(y).count);
      total += order_of(y) % 2 == 1 ? c : -c;
    }
    return total;
  };
  const std::int64_t n1 = group_arrivals(g1);
  const std::int64_t n2 = group_arrivals(g2);
  const std::int64_t cross = n1 + n2 - static_cast<std::int64_t>(stats.n_k1);
  if (cross <= 0) {
    throw Error(ErrorCode::InvalidData, fmt::format("groups at node {} never co-observe a probe", stats.node));
  }
  const double n = static_cast<double>(stats.n);
  const double gamma1 = static_cast<double>(n1) / n;
  const double gamma2 = static_cast<double>(n2) / n;
  return finalize(gamma1 * gamma2 / (static_cast<double>(cross) / n));
}

SubsetWeights default_weights(const NodeStats& stats, std::size_t order) {
  check_order(stats, order);
  SubsetWeights w;
  for (Subset x : subsets_of_order(stats.width(), order)) {
    w[x] = static_cast<double>(stats.at(x).effective_n) / static_cast<double>(stats.n);
  }
  return w;
}

Estimate weighted_composite(const NodeStats& stats, std::size_t order, const SubsetWeights& weights) {
  check_order(stats, order);
  double numerator = 0.0;
  double denominator = 0.0;
  bool any = false;
  for (Subset x : subsets_of_order(stats.width(), order)) {
    const auto it = weights.find(x);
    const double w = it == weights.end() ? 0.0 : it->second;
    if (w < 0.0 || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("weight {} for subset {:#x} is not >= 0", w, x));
    }
    if (w == 0.0) continue;
    any = true;
    numerator += w * product_of_gammas(stats, x);
    denominator += w * stats.gamma_x(x);
  }
  if (!any) {
    throw Error(ErrorCode::AllWeightsZero, fmt::format("no order-{} subset of node {} has weight", order, stats.node));
  }
  if (denominator == 0.0) {
    throw Error(ErrorCode::InvalidData,
                fmt::format("weighted order-{} co-observations at node {} are all zero", order, stats.node));
  }
  return finalize(root_of_ratio(numerator, denominator, order));
}

Estimate weighted_composite(const NodeStats& stats, std::size_t order) {
  return weighted_composite(stats, order, default_weights(stats, order));
}

Estimate trimmed_composite(const NodeStats& stats, std::size_t order) {
  check_order(stats, order);
  SubsetWeights w;
  for (Subset x : subsets_of_order(stats.width(), order)) w[x] = stats.at(x).count > 0 ? 1.0 : 0.0;
  try {
    return weighted_composite(stats, order, w);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AllWeightsZero) throw;
    throw Error(ErrorCode::InvalidData,
                fmt::format("every order-{} co-observation at node {} is zero", order, stats.node));
  }
}

Subset subset_of(const NodeStats& stats, const std::vector<NodeId>& nodes) {
  Subset x = 0;
  for (NodeId v : nodes) {
    const auto it = std::find(stats.descendants.begin(), stats.descendants.end(), v);
    if (it == stats.descendants.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("node {} is not an active descendant of node {}", v, stats.node));
    }
    x |= Subset{1} << static_cast<std::size_t>(it - stats.descendants.begin());
  }
  return x;
}

// ---------------------------------------------------------------------------
// EstimatorId

EstimatorId EstimatorId::composite(std::size_t order) {
  EstimatorId id(Kind::Composite);
  id.order_ = order;
  return id;
}

EstimatorId EstimatorId::weighted(std::size_t order) {
  EstimatorId id(Kind::Weighted);
  id.order_ = order;
  return id;
}

EstimatorId EstimatorId::local(std::vector<NodeId> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.size() < 2) throw Error(ErrorCode::InvalidArgument, "a local estimator needs at least two members");
  EstimatorId id(Kind::Local);
  id.order_ = members.size();
  id.members_ = std::move(members);
  return id;
}

EstimatorId EstimatorId::grouped(std::vector<NodeId> first, std::vector<NodeId> second) {
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  if (first.empty() || second.empty()) throw Error(ErrorCode::InvalidArgument, "grouped estimator needs two groups");
  EstimatorId id(Kind::Grouped);
  id.members_ = std::move(first);
  id.second_ = std::move(second);
  return id;
}

namespace {

std::vector<NodeId> parse_members(std::string_view text) {
  std::vector<NodeId> out;
  std::stringstream ss{std::string(text)};
  for (std::string part; std::getline(ss, part, '+');) out.push_back(std::stoul(part));
  return out;
}

std::string join_members(const std::vector<NodeId>& m) {
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? "+" : "") + std::to_string(m[i]);
  return s;
}

}  // namespace

EstimatorId EstimatorId::parse(std::string_view text) {
  const auto bad = [&] {
    return Error(ErrorCode::InvalidArgument,
                 fmt::format("unknown estimator '{}' (expected full, pair, triple, composite:<i>, "
                             "weighted:<i>, local:<a>+<b>..., grouped:<a>+.../<b>+...)",
                             text));
  };
  if (text == "full") return full();
  if (text == "pair") return composite(2);
  if (text == "triple") return composite(3);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw bad();
  const std::string_view head = text.substr(0, colon);
  const std::string_view rest = text.substr(colon + 1);
  try {
    if (head == "composite") return composite(std::stoul(std::string(rest)));
    if (head == "weighted") return weighted(std::stoul(std::string(rest)));
    if (head == "local") return local(parse_members(rest));
    if (head == "grouped") {
      const auto slash = rest.find('/');
      if (slash == std::string_view::npos) throw bad();
      return grouped(parse_members(rest.substr(0, slash)), parse_members(rest.substr(slash + 1)));
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  throw bad();
}

std::string EstimatorId::label() const {
  switch (kind_) {
    case Kind::Full: return "full";
    case Kind::Composite: return fmt::format("composite:{}", order_);
    case Kind::Weighted: return fmt::format("weighted:{}", order_);
    case Kind::Local: return "local:" + join_members(members_);
    case Kind::Grouped: return "grouped:" + join_members(members_) + "/" + join_members(second_);
  }
  return "?";
}

std::string EstimatorId::column_name() const {
  switch (kind_) {
    case Kind::Full: return "Full";
    case Kind::Composite:
      if (order_ == 2) return "Pair";
      if (order_ == 3) return "Triple";
      return fmt::format("Composite{}", order_);
    case Kind::Weighted: return fmt::format("Weighted{}", order_);
    case Kind::Local:
      if (order_ == 2) return "SinglePair";
      if (order_ == 3) return "SingleTriple";
      return fmt::format("Single{}", order_);
    case Kind::Grouped: return "Grouped";
  }
  return "?";
}

Estimate evaluate(const NodeStats& stats, const EstimatorId& id) {
  switch (id.kind()) {
    case EstimatorId::Kind::Full: return full_mle(stats);
    case EstimatorId::Kind::Composite: return composite(stats, id.order());
    case EstimatorId::Kind::Weighted: return weighted_composite(stats, id.order());
    case EstimatorId::Kind::Local: return local(stats, subset_of(stats, id.members()));
    case EstimatorId::Kind::Grouped:
      return grouped(stats, subset_of(stats, id.members()), subset_of(stats, id.second_group()));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown estimator kind");
}

// ---------------------------------------------------------------------------
// Tree-wide estimation

std::string flags_to_string(std::uint32_t flags) {
  static constexpr std::pair<Flag, const char*> kNames[] = {
      {kClamped, "clamped"},         {kBoundary, "boundary"},          {kFallback, "fallback"},
      {kInvalid, "invalid"},         {kDroppedSilent, "dropped_silent"}, {kLinkClamped, "link_clamped"},
      {kUnidentifiable, "unidentifiable"}, {kTrimmed, "trimmed"},
  };
  std::string out;
  for (const auto& [bit, name] : kNames) {
    if (flags & bit) {
      if (!out.empty()) out += '|';
      out += name;
    }
  }
  return out.empty() ? "-" : out;
}

namespace {

// The preferred estimator's data requirement, as the robustness ranking sees it.
bool preferred_applicable(const EstimatorId& id, const ValidityReport& validity) {
  switch (id.kind()) {
    case EstimatorId::Kind::Full: return validity.full_likelihood_valid();
    case EstimatorId::Kind::Composite:
    case EstimatorId::Kind::Weighted: return validity.is_valid(id.order());
    default: return true;
  }
}

void estimate_internal(const ProbeTrace& tr, const Tree& t, NodeId k, const SelectionPolicy& policy,
                       NodeEstimate& out) {
  const std::size_t width = t.children(k).size();
  const NodeStats all = node_stats(tr, t, k, width <= 20 ? width : 3);
  const NodeStats stats = drop_silent_descendants(all, &out.dropped);
  if (!out.dropped.empty()) out.flags |= kDroppedSilent;
  if (stats.width() < 2) {
    out.flags |= kInvalid | kUnidentifiable;
    out.note = "fewer than two observing descendants";
    return;
  }

  const ValidityReport validity = classify_validity(stats);
  std::optional<Estimate> result;
  if (preferred_applicable(policy.preferred, validity)) {
    try {
      result = evaluate(stats, policy.preferred);
      out.estimator = policy.preferred;
    } catch (const Error& e) {
      out.note = e.what();
    }
  } else {
    out.note = fmt::format("{} not supported by the data", policy.preferred.label());
  }

  if (!result && policy.fallback) {
    if (!validity.valid_indices.empty()) {
      const std::size_t order = validity.valid_indices.front();
      result = composite(stats, order);
      out.estimator = EstimatorId::composite(order);
      out.flags |= kFallback;
    } else if (!validity.trimmable_indices.empty()) {
      const std::size_t order = validity.trimmable_indices.front();
      result = trimmed_composite(stats, order);
      out.estimator = EstimatorId::composite(order);
      out.flags |= kFallback | kTrimmed;
    }
  }
  if (!result) {
    out.flags |= kInvalid;
    out.estimator.reset();
    return;
  }
  if (result->clamped) out.flags |= kClamped;
  if (result->boundary) out.flags |= kBoundary;
  out.path_rate = result->value;

  double all_lost = 1.0;
  for (std::size_t j = 0; j < stats.width(); ++j) all_lost *= 1.0 - stats.gamma_hat(j) / result->value;
  out.beta = 1.0 - all_lost;
}

}  // namespace

NodeEstimate estimate_node(const ProbeTrace& tr, const Tree& t, NodeId k, const SelectionPolicy& policy) {
  if (k == Tree::root() || k >= t.size() || t.is_leaf(k)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("node {} is not a non-root internal node", k));
  }
  NodeEstimate out;
  out.node = k;
  estimate_internal(tr, t, k, policy, out);
  return out;
}

EstimateSet estimate_tree(const ProbeTrace& tr, const Tree& t, const SelectionPolicy& policy) {
  EstimateSet set;
  set.nodes.resize(t.size());
  for (NodeId k = 0; k < t.size(); ++k) set.nodes[k].node = k;
  set.nodes[0].path_rate = 1.0;
  set.nodes[0].link_pass_rate = 1.0;

  for (NodeId k : t.preorder()) {
    if (k == Tree::root()) continue;
    NodeEstimate& out = set.nodes[k];
    if (t.is_leaf(k)) {
      const std::size_t col = tr.column_of(k);
      std::size_t seen = 0;
      std::size_t known = 0;
      for (std::size_t i = 0; i < tr.n; ++i) {
        if (tr.masked(i, col)) continue;
        ++known;
        seen += tr.observed(i, col);
      }
      if (known == 0) {
        out.flags |= kInvalid;
        out.note = "every observation is missing";
      } else {
        out.path_rate = static_cast<double>(seen) / static_cast<double>(known);
      }
    } else {
      estimate_internal(tr, t, k, policy, out);
    }

    const auto& up = set.nodes[t.parent(k)].path_rate;
    if (out.path_rate && up) {
      try {
        const LinkRate r = link_rate_from_paths(*out.path_rate, *up);
        out.link_pass_rate = r.alpha;
        if (r.clamped) out.flags |= kLinkClamped;
      } catch (const Error& e) {
        out.note = e.what();
      }
    }
  }
  return set;
}

void write_estimate_set(std::ostream& out, const EstimateSet& set) {
  out << "node\testimator\tpath_rate\tlink_loss\tflags\n";
  for (const NodeEstimate& e : set.nodes) {
    std::string name = e.estimator ? e.estimator->label() : (e.node == 0 ? "root" : "observed");
    if (!e.path_rate && !e.estimator && e.node != 0) name = "none";
    const auto fmt_opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.10g}", *v) : "NA"; };
    out << fmt::format("{}\t{}\t{}\t{}\t{}\n", e.node, name, fmt_opt(e.path_rate), fmt_opt(e.link_loss()),
                       flags_to_string(e.flags));
  }
}

}  // namespace losstomo
