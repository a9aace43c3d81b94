#include "losstomo/variance.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "losstomo/error.hpp"
#include "losstomo/estimators.hpp"
#include "losstomo/parallel.hpp"
#include "losstomo/probe_sim.hpp"
#include "losstomo/rng.hpp"

namespace losstomo {

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

bool is_subset(Subset small, Subset big) { return (small & ~big) == 0; }

void check_context_order(std::size_t order, std::size_t width, NodeId k) {
  if (order < 2 || order > width) {
    throw Error(ErrorCode::OrderOutOfRange, fmt::format("order {} is not in 2..{} at node {}", order, width, k));
  }
}

}  // namespace

Subset VarianceContext::variable(std::size_t index) const {
  return index < D.size() ? D[index] : Subset{1} << (index - D.size());
}

double VarianceContext::gamma_x(Subset x) const {
  double g = A;
  for (std::size_t j = 0; j < width(); ++j) {
    if (x & (Subset{1} << j)) g *= gamma[j] / A;
  }
  return g;
}

double VarianceContext::t_x(Subset x) const {
  double t = 0.0;
  for (std::size_t j = 0; j < width(); ++j) {
    if (x & (Subset{1} << j)) t += alpha_bar[j];
  }
  return t;
}

VarianceContext make_context(const Tree& t, NodeId k, std::size_t order) {
  if (k >= t.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("node {} is not in the tree", k));
  if (t.is_leaf(k)) throw Error(ErrorCode::LeafNode, fmt::format("node {} has no descendants", k));
  const auto children = t.children(k);
  check_context_order(order, children.size(), k);

  const PathRates pr = path_rates(t);
  const std::vector<double> beta = subtree_pass_rates(t);
  VarianceContext ctx;
  ctx.node = k;
  ctx.order = order;
  ctx.A = pr.A[k];
  ctx.s_k = pr.s[k] + (1.0 - t.link_pass_rate(k));
  for (NodeId c : children) {
    ctx.gamma.push_back(pr.A[k] * beta[c]);
    ctx.alpha_bar.push_back(1.0 - t.link_pass_rate(c));
  }
  ctx.D = subsets_of_order(children.size(), order);
  return ctx;
}

VarianceContext plug_in_context(const NodeStats& stats, double A_hat, std::size_t order) {
  check_context_order(order, stats.width(), stats.node);
  if (!(A_hat > 0.0 && A_hat <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("path rate estimate {} is not in (0, 1]", A_hat));
  }
  VarianceContext ctx;
  ctx.node = stats.node;
  ctx.order = order;
  ctx.A = A_hat;
  ctx.s_k = 1.0 - A_hat;
  for (std::size_t j = 0; j < stats.width(); ++j) {
    const double g = stats.gamma_hat(j);
    ctx.gamma.push_back(g);
    ctx.alpha_bar.push_back(1.0 - g / A_hat);
  }
  ctx.D = subsets_of_order(stats.width(), order);
  return ctx;
}

double exact_cov(Subset x, Subset y, const VarianceContext& ctx) {
  if (is_subset(y, x)) return ctx.gamma_x(x) * (1.0 - ctx.gamma_x(y));
  if (is_subset(x, y)) return ctx.gamma_x(y) * (1.0 - ctx.gamma_x(x));
  return ctx.gamma_x(x | y) - ctx.gamma_x(x) * ctx.gamma_x(y);
}

FirstOrderCov first_order_cov(Subset x, Subset y, const VarianceContext& ctx) {
  if (is_subset(y, x) || is_subset(x, y)) {
    const Subset smaller = is_subset(y, x) ? y : x;
    return {ctx.s_k + ctx.t_x(smaller), x != y && order_of(smaller) >= 2};
  }
  return {ctx.s_k + ctx.t_x(x & y), false};
}

Eigen::MatrixXd covariance_matrix(const VarianceContext& ctx, CovarianceMode mode) {
  const auto dim = static_cast<Eigen::Index>(ctx.dimension());
  Eigen::MatrixXd C(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    for (Eigen::Index b = 0; b < dim; ++b) {
      const Subset x = ctx.variable(static_cast<std::size_t>(a));
      const Subset y = ctx.variable(static_cast<std::size_t>(b));
      C(a, b) = mode == CovarianceMode::Exact ? exact_cov(x, y, ctx) : first_order_cov(x, y, ctx).value;
    }
  }
  return C;
}

Eigen::MatrixXd first_order_excess(const VarianceContext& ctx) {
  Eigen::MatrixXd M = covariance_matrix(ctx, CovarianceMode::FirstOrder);
  M.array() -= ctx.s_k;
  return M;
}

Eigen::VectorXd gradient(const VarianceContext& ctx) {
  const double scale = 1.0 / static_cast<double>(ctx.order - 1);
  double numerator = 0.0;
  double denominator = 0.0;
  std::vector<double> per_member(ctx.width(), 0.0);
  for (Subset x : ctx.D) {
    double prod = 1.0;
    for (std::size_t j = 0; j < ctx.width(); ++j) {
      if (x & (Subset{1} << j)) prod *= ctx.gamma[j];
    }
    numerator += prod;
    denominator += ctx.gamma_x(x);
    for (std::size_t j = 0; j < ctx.width(); ++j) {
      if (x & (Subset{1} << j)) per_member[j] += prod;
    }
  }
  const double estimate = std::pow(numerator / denominator, scale);

  Eigen::VectorXd g(static_cast<Eigen::Index>(ctx.dimension()));
  const auto nd = static_cast<Eigen::Index>(ctx.D.size());
  for (Eigen::Index a = 0; a < nd; ++a) g(a) = -estimate * scale / denominator;
  for (std::size_t j = 0; j < ctx.width(); ++j) {
    g(nd + static_cast<Eigen::Index>(j)) = estimate * scale * per_member[j] / (ctx.gamma[j] * numerator);
  }
  return g;
}

Eigen::VectorXd first_order_gradient(const VarianceContext& ctx) {
  const double scale = 1.0 / static_cast<double>(ctx.order - 1);
  const double count = static_cast<double>(ctx.D.size());
  const double per_member = binomial(ctx.width() - 1, ctx.order - 1);
  Eigen::VectorXd g(static_cast<Eigen::Index>(ctx.dimension()));
  const auto nd = static_cast<Eigen::Index>(ctx.D.size());
  for (Eigen::Index a = 0; a < g.size(); ++a) g(a) = a < nd ? -scale / count : scale * per_member / count;
  return g;
}

VarianceReport asymptotic_variance(const VarianceContext& ctx, CovarianceMode mode) {
  VarianceReport r;
  r.order = ctx.order;
  r.mode = mode;
  r.gradient = gradient(ctx);
  r.C = covariance_matrix(ctx, mode);
  r.v = r.gradient.dot(r.C * r.gradient);
  r.v_first_order = ctx.s_k;
  r.residual = r.v - ctx.s_k;
  if (mode == CovarianceMode::FirstOrder) {
    for (std::size_t a = 0; a < ctx.dimension() && !r.extrapolated; ++a) {
      for (std::size_t b = 0; b < ctx.dimension(); ++b) {
        if (first_order_cov(ctx.variable(a), ctx.variable(b), ctx).extrapolated) {
          r.extrapolated = true;
          break;
        }
      }
    }
  }
  return r;
}

double full_likelihood_variance(const VarianceContext& ctx) {
  const std::size_t w = ctx.width();
  const double A = ctx.A;
  double all_lost = 1.0;
  for (double g : ctx.gamma) all_lost *= 1.0 - g / A;
  const double gk = A * (1.0 - all_lost);

  // Variables: gamma_k, then gamma_1..gamma_w.
  const auto dim = static_cast<Eigen::Index>(w + 1);
  Eigen::MatrixXd C(dim, dim);
  C(0, 0) = gk * (1.0 - gk);
  for (std::size_t j = 0; j < w; ++j) {
    const auto a = static_cast<Eigen::Index>(j + 1);
    C(0, a) = C(a, 0) = ctx.gamma[j] * (1.0 - gk);
    for (std::size_t q = 0; q < w; ++q) {
      C(a, static_cast<Eigen::Index>(q + 1)) = exact_cov(Subset{1} << j, Subset{1} << q, ctx);
    }
  }

  // h(A; gamma) = 1 - gamma_k/A - prod_j (1 - gamma_j/A); dA/dtheta = -h_theta / h_A.
  auto others = [&](std::size_t skip) {
    double p = 1.0;
    for (std::size_t q = 0; q < w; ++q) {
      if (q != skip) p *= 1.0 - ctx.gamma[q] / A;
    }
    return p;
  };
  double h_A = gk / (A * A);
  for (std::size_t j = 0; j < w; ++j) h_A -= ctx.gamma[j] / (A * A) * others(j);
  Eigen::VectorXd g(dim);
  g(0) = (1.0 / A) / h_A;
  for (std::size_t j = 0; j < w; ++j) g(static_cast<Eigen::Index>(j + 1)) = -(others(j) / A) / h_A;
  return g.dot(C * g);
}

LocalVariance local_variance(const VarianceContext& ctx, Subset x) {
  const int m = order_of(x);
  if (m < 2 || (x >> ctx.width()) != 0) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("subset {:#x} is not a co-observation group", x));
  }
  std::vector<Subset> vars{x};
  double prod = 1.0;
  for (std::size_t j = 0; j < ctx.width(); ++j) {
    if (x & (Subset{1} << j)) {
      vars.push_back(Subset{1} << j);
      prod *= ctx.gamma[j];
    }
  }
  const double gx = ctx.gamma_x(x);
  const double lm = prod / gx;
  Eigen::VectorXd g(static_cast<Eigen::Index>(vars.size()));
  Eigen::MatrixXd C(g.size(), g.size());
  for (Eigen::Index a = 0; a < g.size(); ++a) {
    const Subset v = vars[static_cast<std::size_t>(a)];
    g(a) = a == 0 ? -lm / gx : lm / ctx.gamma_x(v);
    for (Eigen::Index b = 0; b < g.size(); ++b) C(a, b) = exact_cov(v, vars[static_cast<std::size_t>(b)], ctx);
  }
  LocalVariance out;
  out.raw = g.dot(C * g);
  const double rooted = std::pow(lm, 1.0 / (m - 1));
  const double chain = rooted / ((m - 1) * lm);
  out.rooted = out.raw * chain * chain;
  return out;
}

EmpiricalVarianceCheck empirical_variance_check(const Tree& t, NodeId k, std::size_t order, std::size_t n,
                                                std::size_t reps, std::uint64_t seed, unsigned workers) {
  if (reps < 100) throw Error(ErrorCode::InvalidArgument, fmt::format("{} replications; at least 100 needed", reps));
  const VarianceContext ctx = make_context(t, k, order);

  std::vector<double> estimates(reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(
      reps,
      [&](std::size_t r) {
        const ProbeTrace tr = simulate(t, n, derive_seed(seed, r));
        try {
          estimates[r] = composite(node_stats(tr, t, k, order), order).raw;
        } catch (const Error&) {
          // left as NaN and counted as invalid
        }
      },
      workers);

  EmpiricalVarianceCheck out;
  out.order = order;
  out.n = n;
  out.reps = reps;
  out.s_k = ctx.s_k;
  out.v_exact = asymptotic_variance(ctx).v;
  double sum = 0.0;
  std::size_t valid = 0;
  for (double e : estimates) {
    if (std::isnan(e)) continue;
    sum += e;
    ++valid;
  }
  out.invalid = reps - valid;
  if (valid < 2) {
    out.mean = valid ? sum : std::numeric_limits<double>::quiet_NaN();
    out.scaled_variance = std::numeric_limits<double>::quiet_NaN();
    out.ratio = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = sum / static_cast<double>(valid);
  double ss = 0.0;
  for (double e : estimates) {
    if (!std::isnan(e)) ss += (e - out.mean) * (e - out.mean);
  }
  out.scaled_variance = static_cast<double>(n) * ss / static_cast<double>(valid - 1);
  out.ratio = out.v_exact > 0.0 ? out.scaled_variance / out.v_exact : std::numeric_limits<double>::quiet_NaN();
  return out;
}

void write_variance_table(std::ostream& out, const std::vector<VarianceReport>& reports,
                          const std::vector<EmpiricalVarianceCheck>& checks) {
  out << "order\tv_exact\ts_k\tresidual\tempirical_ratio\n";
  for (const VarianceReport& r : reports) {
    std::string ratio = "NA";
    for (const auto& c : checks) {
      if (c.order == r.order && !std::isnan(c.ratio)) ratio = fmt::format("{:.6g}", c.ratio);
    }
    out << fmt::format("{}\t{:.10g}\t{:.10g}\t{:.10g}\t{}\n", r.order, r.v, r.v_first_order, r.residual, ratio);
  }
}

}  // namespace losstomo
