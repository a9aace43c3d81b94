// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <array>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "losstomo/error.hpp"
#include "losstomo/estimators.hpp"
#include "losstomo/experiment.hpp"
#include "losstomo/obs_stats.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/rng.hpp"
#include "losstomo/tree.hpp"
#include "losstomo/variance.hpp"

using namespace losstomo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Tree star(double root_alpha, std::vector<double> leaves) { return Tree::build(star_topology(root_alpha, leaves)); }

// Random tree: node 1 hangs off the root, later nodes attach to any earlier
// non-root node. Link rates uniform on [lo, 1).
Tree random_tree(std::mt19937_64& rng, std::size_t min_nodes, std::size_t max_nodes, double lo) {
  std::uniform_int_distribution<std::size_t> size_dist(min_nodes, max_nodes);
  std::uniform_real_distribution<double> rate(lo, 1.0);
  const std::size_t size = size_dist(rng);
  TreeSpec spec;
  spec.parents = {-1, 0};
  spec.alpha = {1.0, rate(rng)};
  for (std::size_t v = 2; v < size; ++v) {
    std::uniform_int_distribution<std::size_t> pick(1, v - 1);
    spec.parents.push_back(static_cast<std::int64_t>(pick(rng)));
    spec.alpha.push_back(rate(rng));
  }
  return Tree::build(spec);
}

// 1. Eight-leaf star, 1% loss everywhere.
Outcome criterion1() {
  const auto start = std::chrono::steady_clock::now();
  const Tree t = star(0.99, std::vector<double>(8, 0.99));
  ExperimentConfig cfg;
  cfg.sizes = {9900};
  cfg.replications = 20;
  cfg.seed = 2024;
  const ExperimentResult r = run_experiment(t, cfg);
  const double elapsed = seconds_since(start);
  bool ok = elapsed < 30.0 && r.estimators.size() == 5;
  std::string detail;
  for (std::size_t e = 0; e < r.estimators.size(); ++e) {
    const CellResult& c = r.cell(0, e);
    const bool cell_ok = c.mean && c.variance && c.invalid == 0 && *c.mean >= 0.0085 && *c.mean <= 0.0115 &&
                         *c.variance >= 2e-7 && *c.variance <= 3e-6;
    ok = ok && cell_ok;
    detail += fmt::format("{}={:.5f}/{:.2e} ", c.estimator.column_name(), c.mean.value_or(NAN), c.variance.value_or(NAN));
  }
  return {ok, detail + fmt::format("({:.1f}s)", elapsed)};
}

// Least-squares fit v(a) = c1 a + c2 a^2 + c3 a^3.
Eigen::Vector3d fit_expansion(const std::function<double(double)>& v) {
  std::vector<double> as;
  for (int s = 1; s <= 10; ++s) as.push_back(0.002 * s);
  Eigen::MatrixXd X(as.size(), 3);
  Eigen::VectorXd y(as.size());
  for (std::size_t r = 0; r < as.size(); ++r) {
    X(r, 0) = as[r];
    X(r, 1) = as[r] * as[r];
    X(r, 2) = as[r] * as[r] * as[r];
    y(r) = v(as[r]);
  }
  return X.colPivHouseholderQr().solve(y);
}

// 2. Series coefficients of the exact variance in the three-descendant setting.
Outcome criterion2() {
  const auto start = std::chrono::steady_clock::now();
  auto setting = [](double a) { return star(1.0 - a, {1.0 - a, 1.0 - a, 1.0 - a}); };
  struct Case {
    std::string name;
    std::function<double(double)> v;
    double c2;
  };
  const std::vector<Case> cases{
      {"A(2)", [&](double a) { return asymptotic_variance(make_context(setting(a), 1, 2)).v; }, -2.0 / 3.0},
      {"A(3)", [&](double a) { return asymptotic_variance(make_context(setting(a), 1, 3)).v; }, -1.0 / 4.0},
      {"full", [&](double a) { return full_likelihood_variance(make_context(setting(a), 1, 2)); }, -1.0},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const Eigen::Vector3d coef = fit_expansion(c.v);
    const bool case_ok = std::abs(coef(0) - 1.0) <= 0.05 && std::abs(coef(1) - c.c2) <= 0.05 * std::abs(c.c2);
    ok = ok && case_ok;
    detail += fmt::format("{}=({:.4f},{:.4f}) ", c.name, coef(0), coef(1));
  }
  const double elapsed = seconds_since(start);
  return {ok && elapsed < 5.0, detail + fmt::format("({:.2f}s)", elapsed)};
}

// 3. Two-descendant equivalence with a grid search of the likelihood equation.
Outcome criterion3() {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> rate(0.85, 1.0);
  double worst = 0.0;
  const int cases = 20;
  for (int c = 0; c < cases; ++c) {
    const Tree t = star(rate(rng), {rate(rng), rate(rng)});
    const ProbeTrace tr = simulate(t, 5000, 1000 + c);
    const NodeStats s = node_stats(tr, t, 1);

    // Likelihood equation from raw counts, independent of the library.
    const double n = static_cast<double>(s.n);
    const double g1 = static_cast<double>(s.at(0b01).count) / n;
    const double g2 = static_cast<double>(s.at(0b10).count) / n;
    const double gk = static_cast<double>(s.n_k1) / n;
    auto h = [&](double A) { return 1.0 - gk / A - (1.0 - g1 / A) * (1.0 - g2 / A); };
    double best = gk;
    double best_abs = std::numeric_limits<double>::infinity();
    for (double A = gk; A <= 1.5; A += 1e-6) {
      if (std::abs(h(A)) < best_abs) {
        best_abs = std::abs(h(A));
        best = A;
      }
    }

    const std::vector<double> values{full_mle(s).raw, composite(s, 2).raw, local(s, 0b11).raw,
                                     grouped(s, 0b01, 0b10).raw};
    for (double v : values) worst = std::max(worst, std::abs(v - best));
  }
  return {worst <= 1e-5, fmt::format("max deviation {:.2e} over {} trees", worst, cases)};
}

// 4. Inclusion-exclusion identity and correspondence residual.
Outcome criterion4() {
  std::mt19937_64 rng(44);
  std::size_t identity_checks = 0;
  std::size_t identity_failures = 0;
  double worst_residual = 0.0;
  std::size_t residual_checks = 0;
  for (int c = 0; c < 100; ++c) {
    const Tree t = random_tree(rng, 4, 12, 0.9);
    const ProbeTrace tr = simulate(t, 3000, 4000 + c);
    for (NodeId k : t.internal_nodes()) {
      if (k == Tree::root()) continue;
      const NodeStats s = node_stats(tr, t, k);
      ++identity_checks;
      if (confirmed_arrivals(s) != static_cast<std::int64_t>(s.n_k1)) ++identity_failures;
      if (s.width() < 2 || !classify_validity(s).full_likelihood_valid()) continue;
      const double A = full_mle(s).raw;
      worst_residual = std::max(worst_residual, std::abs(correspondence_residual(s, A)));
      ++residual_checks;
    }
  }
  return {identity_failures == 0 && residual_checks > 0 && worst_residual < 1e-10,
          fmt::format("{} identity checks, {} failures; max residual {:.2e} over {} roots", identity_checks,
                      identity_failures, worst_residual, residual_checks)};
}

// 5. Monte Carlo unbiasedness of A_k(i) on the eight-leaf star.
Outcome criterion5() {
  const Tree t = star(0.99, std::vector<double>(8, 0.99));
  const double A = path_rates(t).A[1];
  const std::vector<std::size_t> orders{2, 3, 8};
  const std::size_t reps = 1000;
  std::vector<std::vector<double>> est(orders.size(), std::vector<double>(reps));
  for (std::size_t r = 0; r < reps; ++r) {
    const NodeStats s = node_stats(simulate(t, 10000, derive_seed(55, r)), t, 1);
    for (std::size_t o = 0; o < orders.size(); ++o) est[o][r] = composite(s, orders[o]).raw;
  }
  bool ok = true;
  std::string detail;
  for (std::size_t o = 0; o < orders.size(); ++o) {
    double mean = 0.0;
    for (double v : est[o]) mean += v;
    mean /= static_cast<double>(reps);
    double ss = 0.0;
    for (double v : est[o]) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
    const double z = (mean - A) / se;
    ok = ok && std::abs(z) <= 3.0;
    detail += fmt::format("i={}: z={:+.2f} ", orders[o], z);
  }
  return {ok, detail};
}

// 6. Empirical against asymptotic variance.
Outcome criterion6() {
  const Tree t = star(0.99, {0.99, 0.99, 0.99});
  bool ok = true;
  std::string detail;
  for (std::size_t order : {2u, 3u}) {
    const EmpiricalVarianceCheck c = empirical_variance_check(t, 1, order, 100000, 500, 66);
    ok = ok && c.invalid == 0 && c.ratio >= 0.85 && c.ratio <= 1.15;
    detail += fmt::format("i={}: ratio={:.4f} ", order, c.ratio);
  }
  return {ok, detail};
}

// 7. Forced zero triple co-observation.
Outcome criterion7() {
  const Tree t = star(0.99, {0.99, 0.99, 0.99});
  ProbeTrace tr;
  tr.receivers.assign(t.receivers().begin(), t.receivers().end());
  const std::vector<std::array<std::uint8_t, 3>> rows{{1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 0, 0}, {0, 0, 0}};
  for (int rep = 0; rep < 40; ++rep) {
    for (const auto& row : rows) tr.y.insert(tr.y.end(), row.begin(), row.end());
  }
  tr.n = tr.y.size() / 3;
  const NodeStats s = node_stats(tr, t, 1);
  const ValidityReport v = classify_validity(s);
  const bool indices_ok = v.is_valid(2) && !v.is_valid(3) && !v.full_likelihood_valid();
  const NodeEstimate e = estimate_tree(tr, t).nodes[1];
  const bool fallback_ok = e.estimator && *e.estimator == EstimatorId::composite(2) && (e.flags & kFallback) != 0;
  return {indices_ok && fallback_ok,
          fmt::format("valid orders {}; chosen {} flags {}", fmt::join(v.valid_indices, ","),
                      e.estimator ? e.estimator->label() : "none", flags_to_string(e.flags))};
}

// A_k(i) as a function of (gamma_x : x in D, gamma_j), written out directly.
double composite_of_moments(const std::vector<Subset>& D, std::size_t width, std::size_t order,
                            const Eigen::VectorXd& z) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t q = 0; q < D.size(); ++q) {
    double p = 1.0;
    for (std::size_t j = 0; j < width; ++j) {
      if (D[q] & (Subset{1} << j)) p *= z(static_cast<Eigen::Index>(D.size() + j));
    }
    num += p;
    den += z(static_cast<Eigen::Index>(q));
  }
  return std::pow(num / den, 1.0 / static_cast<double>(order - 1));
}

// 8. Analytic gradient against central differences.
Outcome criterion8() {
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> rate(0.9, 1.0);
  std::uniform_int_distribution<std::size_t> width_dist(2, 6);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t w = width_dist(rng);
    std::vector<double> leaves(w);
    for (double& a : leaves) a = rate(rng);
    const Tree t = star(rate(rng), leaves);
    std::uniform_int_distribution<std::size_t> order_dist(2, w);
    const VarianceContext ctx = make_context(t, 1, order_dist(rng));
    const Eigen::VectorXd g = gradient(ctx);

    Eigen::VectorXd z(ctx.dimension());
    for (std::size_t q = 0; q < ctx.dimension(); ++q) z(static_cast<Eigen::Index>(q)) = ctx.gamma_x(ctx.variable(q));
    for (Eigen::Index q = 0; q < z.size(); ++q) {
      const double step = 1e-6 * z(q);
      Eigen::VectorXd up = z;
      Eigen::VectorXd down = z;
      up(q) += step;
      down(q) -= step;
      const double fd = (composite_of_moments(ctx.D, ctx.width(), ctx.order, up) -
                         composite_of_moments(ctx.D, ctx.width(), ctx.order, down)) /
                        (2.0 * step);
      worst = std::max(worst, std::abs(fd - g(q)) / std::abs(g(q)));
    }
  }
  return {worst <= 1e-5, fmt::format("max relative error {:.2e} over 50 rate vectors", worst)};
}

// 9. A_k(i) lies between the smallest and largest rooted local estimates.
Outcome criterion9() {
  std::mt19937_64 rng(99);
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::size_t traces = 0;
  while (traces < 1000) {
    const Tree t = random_tree(rng, 4, 10, 0.6);
    const ProbeTrace tr = simulate(t, 200, derive_seed(999, traces));
    ++traces;
    for (NodeId k : t.internal_nodes()) {
      if (k == Tree::root()) continue;
      const NodeStats s = node_stats(tr, t, k);
      if (s.width() < 2) continue;
      const ValidityReport v = classify_validity(s);
      for (std::size_t order : v.valid_indices) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Subset x : subsets_of_order(s.width(), order)) {
          const double r = local(s, x).raw;
          lo = std::min(lo, r);
          hi = std::max(hi, r);
        }
        const double a = composite(s, order).raw;
        const double slack = 1e-12 * hi;
        if (a < lo - slack || a > hi + slack) ++violations;
        ++checked;
      }
    }
  }
  return {violations == 0 && checked > 0,
          fmt::format("{} traces, {} order checks, {} violations", traces, checked, violations)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"eight-leaf 1% star at n=9900", criterion1},
      {"variance expansion coefficients", criterion2},
      {"two-descendant oracle equivalence", criterion3},
      {"inclusion-exclusion and correspondence residual", criterion4},
      {"unbiasedness of A_k(i)", criterion5},
      {"empirical vs asymptotic variance", criterion6},
      {"forced zero triple fallback", criterion7},
      {"gradient vs finite differences", criterion8},
      {"local-estimate bracketing", criterion9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %zu: %s -- %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
