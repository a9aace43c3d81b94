#pragma once

// Replicated simulation experiments: for every sample size, simulate a batch
// of traces, run an estimator suite on the node below the reported link, and
// summarise the estimated link loss by mean and variance across replications.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "losstomo/estimators.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/tree.hpp"

namespace losstomo {

// 300, 600, ..., 3000, 4800, 9900.
std::vector<std::size_t> default_sizes();

// Full, Pair, Triple, then local estimators on the first two and first three
// children of `link` (those that exist).
std::vector<EstimatorId> default_suite(const Tree& t, NodeId link);

struct ExperimentConfig {
  std::vector<std::size_t> sizes = default_sizes();
  std::size_t replications = 20;
  std::vector<EstimatorId> suite;  // empty means default_suite
  std::uint64_t seed = 1;
  MissingModel missing = Mcar{0.0};
  // Node whose incoming link loss is reported; it must be internal.
  NodeId link = 1;
  unsigned workers = 0;
};

struct CellResult {
  std::size_t n = 0;
  EstimatorId estimator = EstimatorId::full();
  // Sample mean and variance (denominator reps-1, 0 for a single value) over
  // the replications where the estimator was valid.
  std::optional<double> mean;
  std::optional<double> variance;
  std::size_t valid = 0;
  std::size_t invalid = 0;
};

struct ExperimentResult {
  NodeId link = 1;
  std::vector<std::size_t> sizes;
  std::vector<EstimatorId> estimators;  // column order
  std::vector<CellResult> cells;        // sizes x estimators, row-major

  const CellResult& cell(std::size_t size_index, std::size_t estimator_index) const {
    return cells[size_index * estimators.size() + estimator_index];
  }
};

// Deterministic for a given config: replication r at size n uses seed
// derive_seed(cfg.seed, n, r) whatever the worker count.
ExperimentResult run_experiment(const Tree& t, const ExperimentConfig& cfg);

enum class TableFormat { Csv, Markdown };

TableFormat parse_table_format(const std::string& text);

// Throws InvalidArgument for a result without estimators or sizes.
void emit_table(std::ostream& out, const ExperimentResult& result, TableFormat format);

}  // namespace losstomo
