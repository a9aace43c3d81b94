// losstomo: simulate probe traces, estimate link loss, run replicated
// experiments and tabulate delta-method variances.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "losstomo/error.hpp"
#include "losstomo/estimators.hpp"
#include "losstomo/experiment.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/tree.hpp"
#include "losstomo/variance.hpp"

using namespace losstomo;

namespace {

// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", path));
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void close() {
    if (file_) {
      file_->close();
      if (!*file_) throw Error(ErrorCode::Io, "write failed");
    }
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<EstimatorId> parse_suite(const std::string& text) {
  std::vector<EstimatorId> suite;
  for (const auto& item : split(text, ',')) suite.push_back(EstimatorId::parse(item));
  return suite;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  for (const auto& item : split(text, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad sample size '{}'", item));
    }
    sizes.push_back(static_cast<std::size_t>(v));
  }
  return sizes;
}

ProbeTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open trace '{}'", path));
  return read_trace(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multicast loss tomography: simulation, estimation and variance tables"};
  app.require_subcommand(1);

  std::string topology;
  std::string out_path;
  std::string missing = "none";
  std::uint64_t seed = 1;
  std::size_t n = 10000;
  unsigned workers = 0;

  auto* sim = app.add_subcommand("simulate", "Simulate a probe trace");
  sim->add_option("--topology", topology, "Topology JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--n", n, "Number of probes")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--missing", missing, "none | mcar:<p> | mar:<masked>:<cond>:<0|1>[:<p>]");
  sim->add_option("--out", out_path, "Trace file (default stdout)");

  std::string trace_path;
  std::string preferred = "full";
  bool no_fallback = false;
  auto* est = app.add_subcommand("estimate", "Estimate every link of a trace");
  est->add_option("--topology", topology, "Topology JSON")->required()->check(CLI::ExistingFile);
  est->add_option("--trace", trace_path, "Trace file; when absent a trace is simulated");
  est->add_option("--n", n, "Probes to simulate when no trace is given")->check(CLI::PositiveNumber);
  est->add_option("--seed", seed, "Seed for the simulated trace");
  est->add_option("--missing", missing, "Missing-data model applied to the simulated trace");
  est->add_option("--suite", preferred, "Preferred estimator (full, pair, triple, composite:<i>, weighted:<i>, ...)");
  est->add_flag("--no-fallback", no_fallback, "Mark nodes invalid instead of falling back");
  est->add_option("--out", out_path, "Output file (default stdout)");

  std::string suite_text;
  std::string sizes_text;
  std::size_t reps = 20;
  std::string format = "markdown";
  NodeId link = 1;
  auto* exp = app.add_subcommand("experiment", "Replicated experiment table of link-loss mean and variance");
  exp->add_option("--topology", topology, "Topology JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--sizes", sizes_text, "Comma-separated sample sizes (default 300..3000 step 300, 4800, 9900)");
  auto* exp_n = exp->add_option("--n", n, "Single sample size")->check(CLI::PositiveNumber);
  exp->add_option("--reps", reps, "Replications per size")->check(CLI::PositiveNumber);
  exp->add_option("--seed", seed, "Random seed");
  auto* exp_suite = exp->add_option("--suite", suite_text, "Comma-separated estimators (default full,pair,triple,local pair,local triple)");
  exp->add_option("--missing", missing, "Missing-data model");
  exp->add_option("--node", link, "Node whose incoming link is reported");
  exp->add_option("--format", format, "markdown | csv");
  exp->add_option("--workers", workers, "Worker threads (0 = hardware)");
  exp->add_option("--out", out_path, "Output file (default stdout)");

  std::string orders_text = "2,3";
  std::size_t var_reps = 0;
  auto* var = app.add_subcommand("variance", "Delta-method variances, optionally checked by simulation");
  var->add_option("--topology", topology, "Topology JSON")->required()->check(CLI::ExistingFile);
  var->add_option("--node", link, "Internal node");
  var->add_option("--order", orders_text, "Comma-separated composite orders");
  var->add_option("--n", n, "Probes per replication for the empirical check")->check(CLI::PositiveNumber);
  var->add_option("--reps", var_reps, "Replications for the empirical check (0 skips it, else at least 100)");
  var->add_option("--seed", seed, "Random seed");
  var->add_option("--workers", workers, "Worker threads (0 = hardware)");
  var->add_option("--out", out_path, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    const Tree tree = load_topology(topology);
    Output out(out_path);

    if (sim->parsed()) {
      ProbeTrace tr = simulate(tree, n, seed);
      tr = inject_missing(tr, parse_missing_model(missing), seed);
      write_trace(out.stream(), tr);
    } else if (est->parsed()) {
      ProbeTrace tr;
      if (!trace_path.empty()) {
        tr = load_trace(trace_path);
      } else {
        tr = inject_missing(simulate(tree, n, seed), parse_missing_model(missing), seed);
      }
      SelectionPolicy policy;
      policy.preferred = EstimatorId::parse(preferred);
      policy.fallback = !no_fallback;
      write_estimate_set(out.stream(), estimate_tree(tr, tree, policy));
    } else if (exp->parsed()) {
      ExperimentConfig cfg;
      if (!sizes_text.empty()) cfg.sizes = parse_sizes(sizes_text);
      if (exp_n->count() > 0) {
        if (!sizes_text.empty()) throw Error(ErrorCode::InvalidArgument, "give either --n or --sizes, not both");
        cfg.sizes = {n};
      }
      cfg.replications = reps;
      cfg.seed = seed;
      cfg.missing = parse_missing_model(missing);
      cfg.link = link;
      cfg.workers = workers;
      if (exp_suite->count() > 0) {
        cfg.suite = parse_suite(suite_text);
        if (cfg.suite.empty()) throw Error(ErrorCode::InvalidArgument, "estimator suite is empty");
      }
      const TableFormat table_format = parse_table_format(format);
      emit_table(out.stream(), run_experiment(tree, cfg), table_format);
    } else if (var->parsed()) {
      std::vector<VarianceReport> reports;
      std::vector<EmpiricalVarianceCheck> checks;
      for (std::size_t order : parse_sizes(orders_text)) {
        reports.push_back(asymptotic_variance(make_context(tree, link, order)));
        if (var_reps > 0) checks.push_back(empirical_variance_check(tree, link, order, n, var_reps, seed, workers));
      }
      write_variance_table(out.stream(), reports, checks);
    }
    out.close();
  } catch (const Error& e) {
    std::cerr << "losstomo: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "losstomo: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
