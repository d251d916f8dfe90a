#pragma once

#include <cmath>
#include <initializer_list>
#include <optional>
#include <utility>

#include "hdid/model.hpp"
#include "hdid/numerics.hpp"

namespace hdid {

/// Floor applied to every inverse-gamma rate so zero-residual toy data stays proper.
inline constexpr double kRateFloor = 1e-12;

struct NormalParams {
  double mean = 0.0;
  double variance = 0.0;

  double draw(RngStream& rng) const { return sample_normal(mean, variance, rng); }
};

/// Gamma(shape, rate). For variance parameters the same numbers are read as
/// IG(shape, rate): draw_inverse() returns 1 / Gamma(shape, rate).
struct GammaParams {
  double shape = 0.0;
  double rate = 0.0;

  double draw(RngStream& rng) const { return sample_gamma(shape, rate, rng); }
  double draw_inverse(RngStream& rng) const { return sample_inverse_gamma(shape, rate, rng); }
};

/// mu_j | rest. `prior_mean` is the baseline-model mean beta~0 + T_j Delta~ + X_j beta~.
/// Combines N(prior_mean, tau~^2) with the pre-period mean (variance sigma~^2/n0) and the
/// post-period mean shifted by mu_diff (variance sigma^2/n1).
inline NormalParams mu_conditional(const GroupSummary& g, double mu_diff, double sigma2_pre, double sigma2_post,
                                   double tau2_baseline, double prior_mean) {
  const double n0 = g.n_pre;
  const double n1 = g.n_post;
  const double numer = tau2_baseline * (sigma2_post * n0 * g.mean_pre + sigma2_pre * n1 * (g.mean_post - mu_diff)) +
                       sigma2_pre * sigma2_post * prior_mean;
  const double denom = tau2_baseline * (n0 * sigma2_post + n1 * sigma2_pre) + sigma2_pre * sigma2_post;
  return {numer / denom, sigma2_pre * sigma2_post * tau2_baseline / denom};
}

/// mu_diff_j | rest. `prior_mean` is beta0 + T_j Delta + X_j beta.
inline NormalParams mudiff_conditional(const GroupSummary& g, double mu, double sigma2_post, double tau2_change,
                                       double prior_mean) {
  const double n1 = g.n_post;
  const double denom = n1 * tau2_change + sigma2_post;
  return {(n1 * tau2_change * (g.mean_post - mu) + sigma2_post * prior_mean) / denom,
          sigma2_post * tau2_change / denom};
}

/// IG parameters for (sigma~_j^2, sigma_j^2); nullopt for a period with no observations
/// (the current value is kept). Residual sums use ss + n (ybar - mean)^2.
inline std::pair<std::optional<GammaParams>, std::optional<GammaParams>> sigma_conditionals(
    const GroupSummary& g, double mu, double mu_diff, const PriorConfig& priors) {
  std::optional<GammaParams> pre;
  std::optional<GammaParams> post;
  if (g.n_pre > 0) {
    const double d = g.mean_pre - mu;
    const double rss = g.ss_pre + g.n_pre * d * d;
    pre = GammaParams{priors.variance_shape + 0.5 * g.n_pre,
                      std::max(priors.variance_rate + 0.5 * rss, kRateFloor)};
  }
  if (g.n_post > 0) {
    const double d = g.mean_post - mu - mu_diff;
    const double rss = g.ss_post + g.n_post * d * d;
    post = GammaParams{priors.variance_shape + 0.5 * g.n_post,
                       std::max(priors.variance_rate + 0.5 * rss, kRateFloor)};
  }
  return {pre, post};
}

/// IG(J/2, ||residuals||^2 / 2) for a group-level variance (tau~^2 or tau^2).
inline GammaParams tau_conditional(const VectorXd& residuals, const PriorConfig& priors) {
  return {priors.variance_shape + 0.5 * static_cast<double>(residuals.size()),
          std::max(priors.variance_rate + 0.5 * residuals.squaredNorm(), kRateFloor)};
}

/// (tau~^2, tau^2) conditionals from mu - baseline mean and mu_diff - change mean.
inline std::pair<GammaParams, GammaParams> tau_conditionals(const VectorXd& mu, const VectorXd& baseline_mean,
                                                            const VectorXd& mu_diff, const VectorXd& change_mean,
                                                            const PriorConfig& priors) {
  return {tau_conditional(mu - baseline_mean, priors), tau_conditional(mu_diff - change_mean, priors)};
}

/// Posterior of the coefficient block for targets ~ N(design * b, resvar I), b_i ~ N(0, 1/prior_precision_i).
inline GaussianPosterior coefficient_block_posterior(const VectorXd& targets, const MatrixXd& design, double resvar,
                                                     const VectorXd& prior_precision) {
  if (design.rows() != targets.size() || design.cols() != prior_precision.size()) {
    throw InvalidParameter("coefficient_block: dimension mismatch");
  }
  const MatrixXd gram = design.transpose() * design;
  return regression_posterior(gram, design.transpose() * targets, resvar, prior_precision);
}

inline VectorXd coefficient_block_draw(const VectorXd& targets, const MatrixXd& design, double resvar,
                                       const VectorXd& prior_precision, RngStream& rng) {
  return coefficient_block_posterior(targets, design, resvar, prior_precision).draw(rng);
}

/// P(slab | coef) = 1 / (1 + BF (1-p)/p) with BF = N(coef|0,spike)/N(coef|0,slab), in log space.
inline double inclusion_prob(double coef, double spike_var, double slab_var, double p) {
  const double log_bf = log_normal_density(coef, 0.0, spike_var) - log_normal_density(coef, 0.0, slab_var);
  return 1.0 / (1.0 + clamped_exp(log_bf + std::log1p(-p) - std::log(p)));
}

/// Shared indicator for (beta~_k, beta_k): the bivariate BF with diagonal covariances is the
/// product of the univariate ratios.
inline double shared_inclusion_prob(double coef_baseline, double coef_change, double spike_var, double slab_var,
                                    double p) {
  const double log_bf = log_normal_density(coef_baseline, 0.0, spike_var) -
                        log_normal_density(coef_baseline, 0.0, slab_var) +
                        log_normal_density(coef_change, 0.0, spike_var) -
                        log_normal_density(coef_change, 0.0, slab_var);
  return 1.0 / (1.0 + clamped_exp(log_bf + std::log1p(-p) - std::log(p)));
}

/// Gamma conditional of the slab precision gamma_k:
///   Gamma(nu/2 + w * shape_increment, (nu/2) lambda^2 + w * sum(coef^2)/2).
/// shape_increment defaults to half the number of coefficients (conjugate).
inline GammaParams gamma_conditional(int indicator, std::initializer_list<double> coefs, double nu, double lambda,
                                     std::optional<double> shape_increment = std::nullopt) {
  if (!(nu > 0.0) || !(lambda > 0.0)) throw InvalidParameter("gamma_conditional: nu and lambda must be positive");
  double ss = 0.0;
  for (double c : coefs) ss += c * c;
  const double inc = shape_increment.value_or(0.5 * static_cast<double>(coefs.size()));
  const double w = indicator ? 1.0 : 0.0;
  return {0.5 * nu + w * inc, 0.5 * nu * lambda * lambda + w * 0.5 * ss};
}

inline int draw_bernoulli(double prob, RngStream& rng) { return rng.uniform() < prob ? 1 : 0; }

/// Exposure-model update (Sufficient method). Conditions only on (T, X):
/// sigma_alpha^2 ~ IG(J/2, RSS/2), then (alpha0, alpha) as a Gaussian block with an
/// N(0, exposure_intercept_var) intercept and spike/slab precisions, then w^e_k, then gamma^e_k.
///
/// `design` is [1, X] and `gram` its cross-product; pass them precomputed from a sampler,
/// or use the overload below.
inline void exposure_block_draw(const VectorXd& T, const MatrixXd& design, const MatrixXd& gram,
                                const PriorConfig& priors, ExposureState& ex, RngStream& rng) {
  const Index K = design.cols() - 1;
  VectorXd coef(K + 1);
  coef(0) = ex.intercept;
  coef.tail(K) = ex.coef;
  const VectorXd resid = T - design * coef;
  ex.variance = GammaParams{0.5 * static_cast<double>(T.size()), std::max(0.5 * resid.squaredNorm(), kRateFloor)}
                    .draw_inverse(rng);

  VectorXd prior_prec(K + 1);
  prior_prec(0) = 1.0 / priors.exposure_intercept_var;
  for (Index k = 0; k < K; ++k) {
    prior_prec(k + 1) = ex.include(k) ? ex.precision(k) : 1.0 / (priors.z_exposure(k) * priors.z_exposure(k));
  }
  const VectorXd draw = regression_posterior(gram, design.transpose() * T, ex.variance, prior_prec).draw(rng);
  ex.intercept = draw(0);
  ex.coef = draw.tail(K);

  for (Index k = 0; k < K; ++k) {
    const double spike = priors.z_exposure(k) * priors.z_exposure(k);
    ex.include(k) = draw_bernoulli(inclusion_prob(ex.coef(k), spike, 1.0 / ex.precision(k), priors.p_exposure), rng);
  }
  for (Index k = 0; k < K; ++k) {
    ex.precision(k) = gamma_conditional(ex.include(k), {ex.coef(k)}, priors.nu, priors.lambda_exposure(k)).draw(rng);
  }
}

inline void exposure_block_draw(const VectorXd& T, const MatrixXd& X, const PriorConfig& priors, ExposureState& ex,
                                RngStream& rng) {
  MatrixXd design(X.rows(), X.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(X.cols()) = X;
  exposure_block_draw(T, design, design.transpose() * design, priors, ex, rng);
}

}  // namespace hdid
