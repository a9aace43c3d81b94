#include "losstomo/obs_stats.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "losstomo/error.hpp"

namespace losstomo {

namespace {

constexpr std::size_t kDenseLimit = 20;
constexpr std::size_t kSparseMaxOrder = 3;

// f[m] <- sum of f over supersets of m.
void superset_sum(std::vector<std::uint64_t>& f, std::size_t width) {
  for (std::size_t b = 0; b < width; ++b) {
    const Subset bit = Subset{1} << b;
    for (Subset m = 0; m < f.size(); ++m) {
      if (!(m & bit)) f[m] += f[m | bit];
    }
  }
}

// f[m] <- sum of f over subsets of m.
void subset_sum(std::vector<std::uint64_t>& f, std::size_t width) {
  for (std::size_t b = 0; b < width; ++b) {
    const Subset bit = Subset{1} << b;
    for (Subset m = 0; m < f.size(); ++m) {
      if (m & bit) f[m] += f[m ^ bit];
    }
  }
}

}  // namespace

std::vector<Subset> subsets_of_order(std::size_t width, std::size_t order) {
  std::vector<Subset> out;
  if (order == 0 || order > width || width > 64) return out;
  const Subset limit_bit = width == 64 ? 0 : Subset{1} << width;
  Subset x = order == 64 ? ~Subset{0} : (Subset{1} << order) - 1;
  while (true) {
    out.push_back(x);
    // Gosper's hack: next larger integer with the same popcount.
    const Subset c = x & (~x + 1);
    const Subset r = x + c;
    if (r == 0) break;
    x = (((r ^ x) >> 2) / c) | r;
    if (limit_bit != 0 && x >= limit_bit) break;
    if (limit_bit == 0 && x < r) break;
  }
  return out;
}

IndicatorMatrix descendant_indicators(const ProbeTrace& tr, const Tree& t, NodeId k) {
  if (k >= t.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("node {} is not in the tree", k));
  if (t.is_leaf(k)) throw Error(ErrorCode::LeafNode, fmt::format("node {} has no descendants", k));

  IndicatorMatrix ind;
  ind.node = k;
  ind.descendants.assign(t.children(k).begin(), t.children(k).end());
  ind.n = tr.n;
  const std::size_t width = ind.width();
  ind.values.assign(tr.n * width, 0);

  std::vector<std::vector<std::size_t>> columns(width);
  for (std::size_t j = 0; j < width; ++j) {
    for (NodeId r : t.receivers_of(ind.descendants[j])) columns[j].push_back(tr.column_of(r));
  }
  for (std::size_t i = 0; i < tr.n; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      bool seen = false;
      bool any_known = false;
      for (std::size_t c : columns[j]) {
        if (tr.masked(i, c)) continue;
        any_known = true;
        if (tr.observed(i, c)) {
          seen = true;
          break;
        }
      }
      ind.values[i * width + j] = seen ? 1 : (any_known ? 0 : IndicatorMatrix::kUnknown);
    }
  }
  return ind;
}

const SubsetCount& NodeStats::at(Subset x) const {
  const auto it = I.find(x);
  if (it == I.end()) {
    throw Error(ErrorCode::IncompleteStats, fmt::format("subset {:#x} of node {} was not counted", x, node));
  }
  return it->second;
}

double NodeStats::gamma_x(Subset x) const {
  const SubsetCount& c = at(x);
  if (c.effective_n == 0) {
    throw Error(ErrorCode::InvalidData, fmt::format("subset {:#x} of node {} is never fully observed", x, node));
  }
  return static_cast<double>(c.count) / static_cast<double>(c.effective_n);
}

bool NodeStats::has_missing() const {
  return std::any_of(I.begin(), I.end(), [&](const auto& kv) { return kv.second.effective_n != n; });
}

NodeStats co_observations(const IndicatorMatrix& ind, std::size_t max_order) {
  const std::size_t width = ind.width();
  if (max_order < 1 || max_order > width) {
    throw Error(ErrorCode::OrderOutOfRange, fmt::format("max order {} is not in 1..{}", max_order, width));
  }
  if (width > 64 || (width > kDenseLimit && max_order > kSparseMaxOrder)) {
    throw Error(ErrorCode::OrderOutOfRange,
                fmt::format("node {} has {} descendants; only orders up to {} are enumerated", ind.node, width,
                            kSparseMaxOrder));
  }

  NodeStats s;
  s.node = ind.node;
  s.n = ind.n;
  s.descendants = ind.descendants;
  s.max_order = max_order;

  std::unordered_map<Subset, std::uint64_t> seen_hist;
  std::unordered_map<Subset, std::uint64_t> unknown_hist;
  for (std::size_t i = 0; i < ind.n; ++i) {
    Subset seen = 0;
    Subset unknown = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const std::uint8_t v = ind.at(i, j);
      if (v == 1) seen |= Subset{1} << j;
      if (v == IndicatorMatrix::kUnknown) unknown |= Subset{1} << j;
    }
    ++seen_hist[seen];
    ++unknown_hist[unknown];
    if (seen != 0) ++s.n_k1;
  }

  std::vector<Subset> wanted;
  for (std::size_t order = 1; order <= max_order; ++order) {
    const auto block = subsets_of_order(width, order);
    wanted.insert(wanted.end(), block.begin(), block.end());
  }

  if (width <= kDenseLimit) {
    const std::size_t size = std::size_t{1} << width;
    std::vector<std::uint64_t> count(size, 0);
    std::vector<std::uint64_t> known(size, 0);
    for (const auto& [p, c] : seen_hist) count[p] += c;
    for (const auto& [u, c] : unknown_hist) known[u] += c;
    superset_sum(count, width);
    subset_sum(known, width);
    const Subset full = s.full_set();
    for (Subset x : wanted) s.I[x] = SubsetCount{count[x], known[full & ~x]};
  } else {
    for (Subset x : wanted) {
      SubsetCount c;
      for (const auto& [p, k] : seen_hist) {
        if ((p & x) == x) c.count += k;
      }
      for (const auto& [u, k] : unknown_hist) {
        if ((u & x) == 0) c.effective_n += k;
      }
      s.I[x] = c;
    }
  }
  return s;
}

NodeStats node_stats(const ProbeTrace& tr, const Tree& t, NodeId k, std::size_t max_order) {
  const IndicatorMatrix ind = descendant_indicators(tr, t, k);
  return co_observations(ind, max_order == 0 ? ind.width() : max_order);
}

std::int64_t confirmed_arrivals(const NodeStats& stats) {
  if (!stats.complete()) {
    throw Error(ErrorCode::IncompleteStats,
                fmt::format("node {} counted orders up to {} of {}", stats.node, stats.max_order, stats.width()));
  }
  std::int64_t total = 0;
  for (std::size_t order = 1; order <= stats.width(); ++order) {
    const std::int64_t sign = order % 2 == 1 ? 1 : -1;
    for (Subset x : subsets_of_order(stats.width(), order)) {
      total += sign * static_cast<std::int64_t>(stats.at(x).count);
    }
  }
  return total;
}

bool ValidityReport::is_valid(std::size_t order) const {
  return std::find(valid_indices.begin(), valid_indices.end(), order) != valid_indices.end();
}

ValidityReport classify_validity(const NodeStats& stats) {
  ValidityReport rep;
  rep.node = stats.node;
  rep.stats_complete = stats.complete();

  bool closed = false;
  for (std::size_t order = 2; order <= stats.max_order; ++order) {
    std::size_t zeros = 0;
    std::size_t total = 0;
    for (Subset x : subsets_of_order(stats.width(), order)) {
      ++total;
      if (stats.at(x).count == 0) {
        ++zeros;
        rep.zero_sets.push_back(x);
      }
    }
    if (zeros == 0 && !closed) {
      rep.valid_indices.push_back(order);
      continue;
    }
    closed = true;
    if (zeros < total) rep.trimmable_indices.push_back(order);
  }
  return rep;
}

NodeStats drop_silent_descendants(const NodeStats& stats, std::vector<NodeId>* dropped) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < stats.width(); ++j) {
    if (stats.at(Subset{1} << j).count > 0) {
      keep.push_back(j);
    } else if (dropped) {
      dropped->push_back(stats.descendants[j]);
    }
  }
  if (keep.size() == stats.width()) return stats;

  NodeStats out;
  out.node = stats.node;
  out.n = stats.n;
  out.n_k1 = stats.n_k1;
  for (std::size_t j : keep) out.descendants.push_back(stats.descendants[j]);
  out.max_order = std::min(stats.max_order, keep.size());
  for (std::size_t order = 1; order <= out.max_order; ++order) {
    for (Subset y : subsets_of_order(keep.size(), order)) {
      Subset x = 0;
      for (std::size_t b = 0; b < keep.size(); ++b) {
        if (y & (Subset{1} << b)) x |= Subset{1} << keep[b];
      }
      out.I[y] = stats.at(x);
    }
  }
  return out;
}

void write_node_stats(std::ostream& out, const NodeStats& stats) {
  out << fmt::format("# node {} n {} n_k1 {} max_order {}\n", stats.node, stats.n, stats.n_k1, stats.max_order);
  out << "# descendants";
  for (NodeId d : stats.descendants) out << ' ' << d;
  out << "\n# subset count effective_n\n";
  for (const auto& [x, c] : stats.I) out << fmt::format("{:#x} {} {}\n", x, c.count, c.effective_n);
}

}  // namespace losstomo
