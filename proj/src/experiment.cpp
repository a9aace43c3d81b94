#include "losstomo/experiment.hpp"

#include <algorithm>
#include <optional>
#include <ostream>

#include <fmt/format.h>

#include "losstomo/error.hpp"
#include "losstomo/obs_stats.hpp"
#include "losstomo/parallel.hpp"
#include "losstomo/rng.hpp"

namespace losstomo {

std::vector<std::size_t> default_sizes() {
  std::vector<std::size_t> sizes;
  for (std::size_t n = 300; n <= 3000; n += 300) sizes.push_back(n);
  sizes.push_back(4800);
  sizes.push_back(9900);
  return sizes;
}

std::vector<EstimatorId> default_suite(const Tree& t, NodeId link) {
  std::vector<EstimatorId> suite{EstimatorId::full(), EstimatorId::composite(2)};
  const auto& kids = t.children(link);
  if (kids.size() >= 3) suite.push_back(EstimatorId::composite(3));
  if (kids.size() >= 2) suite.push_back(EstimatorId::local({kids[0], kids[1]}));
  if (kids.size() >= 3) suite.push_back(EstimatorId::local({kids[0], kids[1], kids[2]}));
  return suite;
}

namespace {

bool is_lossless(const Tree& t) {
  for (NodeId v = 1; v < t.size(); ++v) {
    if (t.link_pass_rate(v) < 1.0) return false;
  }
  return true;
}

bool mask_is_noop(const MissingModel& m) {
  if (const auto* mcar = std::get_if<Mcar>(&m)) return mcar->rate == 0.0;
  return std::get<MarRule>(m).probability == 0.0;
}

// Link loss estimates of one replication, one slot per estimator.
std::vector<std::optional<double>> one_replication(const Tree& t, const ExperimentConfig& cfg,
                                                   const std::vector<EstimatorId>& suite, std::size_t n,
                                                   std::uint64_t seed) {
  std::vector<std::optional<double>> out(suite.size());
  ProbeTrace tr = simulate(t, n, seed);
  if (!mask_is_noop(cfg.missing)) {
    tr = inject_missing(tr, cfg.missing, derive_seed(seed, static_cast<std::uint64_t>(StreamTag::Missing)));
  }

  double parent_rate = 1.0;
  const NodeId parent = t.parent(cfg.link);
  if (parent != Tree::root()) {
    const NodeEstimate pe = estimate_node(tr, t, parent);
    if (!pe.path_rate || *pe.path_rate <= 0.0) return out;
    parent_rate = *pe.path_rate;
  }

  const std::size_t width = t.children(cfg.link).size();
  NodeStats stats;
  try {
    stats = drop_silent_descendants(node_stats(tr, t, cfg.link, width <= 20 ? width : 3));
  } catch (const Error&) {
    return out;
  }
  for (std::size_t e = 0; e < suite.size(); ++e) {
    try {
      const Estimate est = evaluate(stats, suite[e]);
      out[e] = 1.0 - link_rate_from_paths(est.value, parent_rate).alpha;
    } catch (const Error&) {
      // Counted as invalid.
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const Tree& t, const ExperimentConfig& cfg) {
  if (cfg.link == Tree::root() || cfg.link >= t.size() || t.is_leaf(cfg.link)) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("reported link must end at a non-root internal node, got {}", cfg.link));
  }
  if (cfg.replications == 0) throw Error(ErrorCode::InvalidArgument, "replications must be positive");
  if (cfg.sizes.empty()) throw Error(ErrorCode::InvalidArgument, "no sample sizes given");
  for (std::size_t n : cfg.sizes) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample sizes must be positive");
  }

  ExperimentResult result;
  result.link = cfg.link;
  result.sizes = cfg.sizes;
  result.estimators = cfg.suite.empty() ? default_suite(t, cfg.link) : cfg.suite;
  const bool lossless = is_lossless(t);

  for (std::size_t n : cfg.sizes) {
    std::vector<std::vector<std::optional<double>>> slots(cfg.replications);
    parallel_for(
        cfg.replications,
        [&](std::size_t r) { slots[r] = one_replication(t, cfg, result.estimators, n, derive_seed(cfg.seed, n, r)); },
        cfg.workers);

    for (std::size_t e = 0; e < result.estimators.size(); ++e) {
      CellResult cell;
      cell.n = n;
      cell.estimator = result.estimators[e];
      double sum = 0.0;
      for (const auto& s : slots) {
        if (s[e]) {
          ++cell.valid;
          sum += *s[e];
        } else {
          ++cell.invalid;
        }
      }
      if (cell.valid > 0) {
        const double mean = sum / static_cast<double>(cell.valid);
        double ss = 0.0;
        for (const auto& s : slots) {
          if (s[e]) ss += (*s[e] - mean) * (*s[e] - mean);
        }
        cell.mean = mean;
        cell.variance = (cell.valid > 1 && !lossless) ? ss / static_cast<double>(cell.valid - 1) : 0.0;
      }
      result.cells.push_back(cell);
    }
  }
  return result;
}

TableFormat parse_table_format(const std::string& text) {
  if (text == "csv") return TableFormat::Csv;
  if (text == "markdown" || text == "md") return TableFormat::Markdown;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown table format '{}' (csv or markdown)", text));
}

void emit_table(std::ostream& out, const ExperimentResult& result, TableFormat format) {
  if (result.estimators.empty()) throw Error(ErrorCode::InvalidArgument, "estimator suite is empty");
  if (result.sizes.empty()) throw Error(ErrorCode::InvalidArgument, "no sample sizes in result");

  if (format == TableFormat::Csv) {
    out << "n,estimator,mean,var\n";
    for (std::size_t s = 0; s < result.sizes.size(); ++s) {
      for (std::size_t e = 0; e < result.estimators.size(); ++e) {
        const CellResult& c = result.cell(s, e);
        out << fmt::format("{},{},{},{}\n", c.n, c.estimator.label(),
                           c.mean ? fmt::format("{:.10g}", *c.mean) : "NA",
                           c.variance ? fmt::format("{:.10g}", *c.variance) : "NA");
      }
    }
    return;
  }

  out << "| samples |";
  for (const auto& id : result.estimators) out << ' ' << id.column_name() << " Mean | " << id.column_name() << " Var |";
  out << "\n|---:|";
  for (std::size_t e = 0; e < result.estimators.size(); ++e) out << "---:|---:|";
  out << '\n';
  for (std::size_t s = 0; s < result.sizes.size(); ++s) {
    out << "| " << result.sizes[s] << " |";
    for (std::size_t e = 0; e < result.estimators.size(); ++e) {
      const CellResult& c = result.cell(s, e);
      out << ' ' << (c.mean ? fmt::format("{:.4f}", *c.mean) : "NA") << " | "
          << (c.variance ? fmt::format("{:.2E}", *c.variance) : "NA") << " |";
    }
    out << '\n';
  }
}

}  // namespace losstomo
