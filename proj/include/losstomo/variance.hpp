#pragma once

// Delta-method asymptotic variance of the explicit estimators A_k(i).
//
// The estimator is a smooth function of the sample moments gamma_x (x in D(i),
// the order-i subsets of d_k) and gamma_j (j in D(1)). With C the covariance of
// one probe's indicators and g the gradient at the true moments,
// sqrt(n) (A_k(i) - A_k) -> N(0, g^T C g).
//
// First-order quantities are expansions in the link loss rates: s_k is the
// path loss up to and including e_k, t_x the summed loss of the descendant
// links in x.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "losstomo/obs_stats.hpp"
#include "losstomo/tree.hpp"

namespace losstomo {

struct VarianceContext {
  NodeId node = 0;
  std::size_t order = 2;
  double A = 1.0;                  // A_k
  std::vector<double> gamma;       // gamma_j per descendant
  std::vector<double> alpha_bar;   // loss rate of each descendant link
  double s_k = 0.0;                // first-order loss of the path root -> k
  std::vector<Subset> D;           // D(i), ascending

  std::size_t width() const { return gamma.size(); }
  std::size_t dimension() const { return D.size() + width(); }
  // Variable index -> subset: D(i) first, then the singletons.
  Subset variable(std::size_t index) const;
  // gamma_x = A * prod_{j in x} (gamma_j / A)
  double gamma_x(Subset x) const;
  double t_x(Subset x) const;
};

// Exact rates of internal node k of t. Throws OrderOutOfRange / LeafNode.
VarianceContext make_context(const Tree& t, NodeId k, std::size_t order);
// Plug-in rates from data: gamma-hat_j, an estimate of A_k, and descendant
// losses 1 - gamma-hat_j / A-hat.
VarianceContext plug_in_context(const NodeStats& stats, double A_hat, std::size_t order);

// Covariance of the indicators behind gamma_x and gamma_y.
double exact_cov(Subset x, Subset y, const VarianceContext& ctx);

struct FirstOrderCov {
  double value = 0.0;
  // Strictly nested pair whose smaller set has two or more members; the
  // expansion s_k + t_y is used there.
  bool extrapolated = false;
};

FirstOrderCov first_order_cov(Subset x, Subset y, const VarianceContext& ctx);

enum class CovarianceMode { Exact, FirstOrder };

Eigen::MatrixXd covariance_matrix(const VarianceContext& ctx, CovarianceMode mode);
// First-order covariance with the constant s_k removed from every entry.
Eigen::MatrixXd first_order_excess(const VarianceContext& ctx);

// Gradient of A_k(i) with respect to (gamma_x : x in D(i), gamma_j : j in D(1)).
Eigen::VectorXd gradient(const VarianceContext& ctx);
// Its zeroth-order limit as all loss rates vanish.
Eigen::VectorXd first_order_gradient(const VarianceContext& ctx);

struct VarianceReport {
  std::size_t order = 0;
  CovarianceMode mode = CovarianceMode::Exact;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd C;
  double v = 0.0;              // gradient^T C gradient
  double v_first_order = 0.0;  // s_k
  double residual = 0.0;       // v - s_k
  bool extrapolated = false;
};

VarianceReport asymptotic_variance(const VarianceContext& ctx, CovarianceMode mode = CovarianceMode::Exact);

// Same machinery for the full-likelihood estimator, differentiating its
// estimating equation implicitly in (gamma_k, gamma_1..gamma_|d_k|).
double full_likelihood_variance(const VarianceContext& ctx);

// Local estimator lm_k(x) both as an estimate of A_k^(#x-1) and after taking
// the (#x-1)-th root.
struct LocalVariance {
  double raw = 0.0;
  double rooted = 0.0;
};

LocalVariance local_variance(const VarianceContext& ctx, Subset x);

struct EmpiricalVarianceCheck {
  std::size_t order = 0;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t invalid = 0;
  double mean = 0.0;
  double scaled_variance = 0.0;  // n * sample variance of A-hat_k(i)
  double v_exact = 0.0;
  double s_k = 0.0;
  double ratio = 0.0;            // scaled_variance / v_exact, NaN when v_exact is 0
};

// Throws InvalidArgument when reps < 100.
EmpiricalVarianceCheck empirical_variance_check(const Tree& t, NodeId k, std::size_t order, std::size_t n,
                                                std::size_t reps, std::uint64_t seed, unsigned workers = 0);

// Tab-separated: order, v_exact, s_k, residual, empirical_ratio.
void write_variance_table(std::ostream& out, const std::vector<VarianceReport>& reports,
                          const std::vector<EmpiricalVarianceCheck>& checks);

}  // namespace losstomo
