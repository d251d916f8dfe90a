#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hdid/errors.hpp"

namespace hdid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Group-indexed pre/post individual outcomes with group-level covariates X (J x K)
/// and treatment exposure T (J).
struct HdidDataset {
  std::vector<std::string> group_ids;
  std::vector<std::vector<double>> y_pre;
  std::vector<std::vector<double>> y_post;
  MatrixXd X;
  VectorXd T;
  std::vector<std::string> covariate_names;

  Index num_groups() const { return static_cast<Index>(y_pre.size()); }
  Index num_covariates() const { return X.cols(); }
};

/// Spike-and-slab and intercept hyperparameters.
///
/// Slab on coefficient k is t_nu(0, lambda_k), represented as N(0, 1/gamma_k) with
/// gamma_k ~ Gamma(nu/2, (nu/2) lambda_k^2). The spike is N(0, z_k^2).
struct PriorConfig {
  VectorXd z;        // spike sd per covariate
  double nu = 5.0;   // slab degrees of freedom
  VectorXd lambda;   // slab scale per covariate
  double p = 0.5;            // change-model inclusion
  double p_tilde = 0.5;      // baseline-model inclusion
  double p_exposure = 0.5;   // exposure-model inclusion
  double omega2 = 1e4;        // change intercept prior variance
  double omega2_tilde = 1e4;  // baseline intercept prior variance
  double delta2 = 1e4;        // prior variance of Delta and Delta-tilde
  VectorXd z_exposure;        // spike sd for exposure coefficients
  VectorXd lambda_exposure;   // slab scale for exposure coefficients
  double exposure_intercept_var = 1e4;
  // Optional IG(shape, rate) prior on sigma~_j^2, sigma_j^2, tau~^2, tau^2.
  // 0/0 is the improper 1/x prior implied by the IG(n/2, SS/2) conditionals.
  double variance_shape = 0.0;
  double variance_rate = 0.0;

  /// Simulation-study defaults: z = 0.01, nu = 5, lambda = 5, p = 1/2, omega^2 = 1e4.
  static PriorConfig simulation_defaults(Index K, double spike_sd = 0.01) {
    PriorConfig pc;
    pc.z = VectorXd::Constant(K, spike_sd);
    pc.lambda = VectorXd::Constant(K, 5.0);
    pc.z_exposure = pc.z;
    pc.lambda_exposure = pc.lambda;
    return pc;
  }

  /// Defaults for fitting observed data: spike sd 0.025.
  static PriorConfig analysis_defaults(Index K) { return simulation_defaults(K, 0.025); }
};

enum class Method { Full, Null, FixedSet, Separate, Shared, Sufficient, Efficient };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Full: return "Full";
    case Method::Null: return "Null";
    case Method::FixedSet: return "FixedSet";
    case Method::Separate: return "Separate";
    case Method::Shared: return "Shared";
    case Method::Sufficient: return "Sufficient";
    case Method::Efficient: return "Efficient";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Method m : {Method::Full, Method::Null, Method::FixedSet, Method::Separate, Method::Shared,
                   Method::Sufficient, Method::Efficient}) {
    std::string cand = to_string(m);
    std::transform(cand.begin(), cand.end(), cand.begin(), [](unsigned char c) { return std::tolower(c); });
    if (cand == lower) return m;
  }
  return std::nullopt;
}

inline bool is_selection_method(Method m) {
  return m == Method::Separate || m == Method::Shared || m == Method::Sufficient || m == Method::Efficient;
}

struct ModelSpec {
  Method method = Method::Separate;
  bool adjust_baseline_for_T = true;
  bool include_treatment = true;  // Delta in the change model
  VectorXi baseline_mask;         // FixedSet only
  VectorXi change_mask;           // FixedSet only
  int iterations = 2000;
  int burn_in = 1000;
  int thin = 1;
  // Shared method: gamma shape increment w_k (conjugate) instead of 0.5 w_k.
  bool shared_gamma_conjugate = false;
  // Sample in coordinates centred at the pooled pre-period median.
  bool center_outcomes = true;
  // Keep per-group latents (mu, mu_diff, sigma^2) in retained snapshots.
  bool retain_group_latents = true;

  static ModelSpec make(Method m, int iterations = 2000, int burn_in = 1000, int thin = 1) {
    ModelSpec s;
    s.method = m;
    s.iterations = iterations;
    s.burn_in = burn_in;
    s.thin = thin;
    return s;
  }

  /// Fixed-set model for choice 1..8: bit 0 of (c-1) adjusts mu for X, bit 1 adjusts
  /// mu_diff for X, choices 5-8 also adjust mu for T. Masks apply to all K covariates.
  static ModelSpec choice(int c, Index K) {
    if (c < 1 || c > 8) throw ConfigError("model choice must be in 1..8");
    ModelSpec s;
    s.method = Method::FixedSet;
    const int bits = c - 1;
    s.baseline_mask = VectorXi::Constant(K, (bits & 1) ? 1 : 0);
    s.change_mask = VectorXi::Constant(K, (bits & 2) ? 1 : 0);
    s.adjust_baseline_for_T = c >= 5;
    return s;
  }

  int retained_draws() const { return (iterations - burn_in) / thin; }

  VectorXi effective_baseline_mask(Index K) const {
    switch (method) {
      case Method::Null: return VectorXi::Zero(K);
      case Method::FixedSet: return baseline_mask;
      default: return VectorXi::Ones(K);
    }
  }
  VectorXi effective_change_mask(Index K) const {
    switch (method) {
      case Method::Null: return VectorXi::Zero(K);
      case Method::FixedSet: return change_mask;
      default: return VectorXi::Ones(K);
    }
  }
};

/// One regression (baseline mu or change mu_diff): always-present intercept and
/// treatment coefficient plus K spike-and-slab coefficients.
struct RegressionState {
  double intercept = 0.0;
  double treatment = 0.0;  // Delta-tilde or Delta
  VectorXd coef;           // beta-tilde or beta
  VectorXi include;        // w-tilde or w
  VectorXd precision;      // gamma-tilde or gamma (slab precision)
};

/// Exposure model T = alpha0 + X alpha + eps, eps ~ N(0, variance).
struct ExposureState {
  double intercept = 0.0;
  VectorXd coef;
  double variance = 1.0;
  VectorXi include;
  VectorXd precision;
};

struct ChainState {
  VectorXd mu;
  VectorXd mu_diff;
  VectorXd sigma2_pre;   // sigma-tilde_j^2
  VectorXd sigma2_post;  // sigma_j^2
  double tau2_baseline = 1.0;  // tau-tilde^2
  double tau2_change = 1.0;    // tau^2
  RegressionState baseline;
  RegressionState change;
  ExposureState exposure;  // Sufficient only
};

/// Per-group sufficient statistics. `ss_*` is the sum of squares about the group mean.
struct GroupSummary {
  int n_pre = 0;
  int n_post = 0;
  double mean_pre = 0.0;
  double mean_post = 0.0;
  double ss_pre = 0.0;
  double ss_post = 0.0;
};

namespace detail {
inline void moments(const std::vector<double>& y, double offset, int& n, double& mean, double& ss) {
  n = static_cast<int>(y.size());
  mean = 0.0;
  ss = 0.0;
  if (n == 0) return;
  for (double v : y) mean += v - offset;
  mean /= n;
  for (double v : y) {
    const double d = (v - offset) - mean;
    ss += d * d;
  }
}
}  // namespace detail

/// Group statistics of outcomes shifted by -offset.
inline std::vector<GroupSummary> summarize_groups(const HdidDataset& data, double offset = 0.0) {
  std::vector<GroupSummary> out(static_cast<std::size_t>(data.num_groups()));
  for (std::size_t j = 0; j < out.size(); ++j) {
    detail::moments(data.y_pre[j], offset, out[j].n_pre, out[j].mean_pre, out[j].ss_pre);
    detail::moments(data.y_post[j], offset, out[j].n_post, out[j].mean_post, out[j].ss_post);
  }
  return out;
}

/// Mean of all pre-period observations (0 when there are none).
inline double pooled_pre_mean(const HdidDataset& data) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : data.y_pre) {
    for (double v : g) sum += v;
    n += g.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Lower median of all pre-period observations (0 when there are none). It is an
/// observed value, so an exactly representable shift of every outcome moves it by
/// exactly that amount and the centred data stay bit-identical.
inline double pooled_pre_median(const HdidDataset& data) {
  std::vector<double> all;
  for (const auto& g : data.y_pre) all.insert(all.end(), g.begin(), g.end());
  if (all.empty()) return 0.0;
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>((all.size() - 1) / 2);
  std::nth_element(all.begin(), mid, all.end());
  return *mid;
}

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const { return violations.empty(); }
};

inline double sample_variance(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline ValidationReport validate(const HdidDataset& data, const ModelSpec& spec, const PriorConfig& priors) {
  ValidationReport r;
  auto violation = [&](const std::string& s) { r.violations.push_back(s); };
  const Index J = data.num_groups();
  const Index K = data.num_covariates();

  if (J == 0) violation("dataset has no groups");
  if (static_cast<Index>(data.y_post.size()) != J) violation("y_pre and y_post group counts differ");
  if (data.X.rows() != J) violation("X has " + std::to_string(data.X.rows()) + " rows, expected " + std::to_string(J));
  if (data.T.size() != J) violation("T has " + std::to_string(data.T.size()) + " entries, expected " + std::to_string(J));
  if (!data.group_ids.empty() && static_cast<Index>(data.group_ids.size()) != J) violation("group id count differs from J");
  if (!data.covariate_names.empty() && static_cast<Index>(data.covariate_names.size()) != K) {
    violation("covariate name count differs from K");
  }
  if (!r.ok()) return r;

  bool any_pre = false;
  bool any_post = false;
  auto group_label = [&](Index j) {
    return data.group_ids.empty() ? std::to_string(j) : data.group_ids[static_cast<std::size_t>(j)];
  };
  for (Index j = 0; j < J; ++j) {
    const auto n0 = data.y_pre[static_cast<std::size_t>(j)].size();
    const auto n1 = data.y_post[static_cast<std::size_t>(j)].size();
    any_pre = any_pre || n0 >= 1;
    any_post = any_post || n1 >= 1;
    for (double v : data.y_pre[static_cast<std::size_t>(j)]) {
      if (!std::isfinite(v)) violation("group " + group_label(j) + ": non-finite pre-period outcome");
    }
    for (double v : data.y_post[static_cast<std::size_t>(j)]) {
      if (!std::isfinite(v)) violation("group " + group_label(j) + ": non-finite post-period outcome");
    }
    if (n0 == 1) r.warnings.push_back("group " + group_label(j) + " pre-period: single observation, σ_j² weakly identified");
    if (n1 == 1) r.warnings.push_back("group " + group_label(j) + " post-period: single observation, σ_j² weakly identified");
    if (n0 == 0) r.warnings.push_back("group " + group_label(j) + " pre-period: no observations");
    if (n1 == 0) r.warnings.push_back("group " + group_label(j) + " post-period: no observations");
  }
  if (!any_pre) violation("no group has a pre-period observation");
  if (!any_post) violation("no group has a post-period observation");
  for (Index j = 0; j < J; ++j) {
    for (Index k = 0; k < K; ++k) {
      if (!std::isfinite(data.X(j, k))) {
        violation("X[" + std::to_string(j) + "," + std::to_string(k) + "] is not finite");
      }
    }
    if (!std::isfinite(data.T(j))) violation("T[" + std::to_string(j) + "] is not finite");
  }
  const bool uses_T = spec.include_treatment || spec.adjust_baseline_for_T;
  if (uses_T && J >= 1 && data.T.allFinite() && sample_variance(data.T) <= 0.0) {
    violation("treatment has zero variance");
  }

  // priors
  auto check_vec = [&](const VectorXd& v, const char* name) {
    if (v.size() != K) {
      violation(std::string("prior ") + name + " has length " + std::to_string(v.size()) + ", expected " + std::to_string(K));
    } else if (K > 0 && !(v.minCoeff() > 0.0)) {
      violation(std::string("prior ") + name + " must be positive");
    }
  };
  check_vec(priors.z, "z");
  check_vec(priors.lambda, "lambda");
  if (spec.method == Method::Sufficient) {
    check_vec(priors.z_exposure, "z_exposure");
    check_vec(priors.lambda_exposure, "lambda_exposure");
    if (J < 2) r.warnings.push_back("exposure variance σ²_α weakly identified with J < 2");
  }
  if (!(priors.nu > 0.0)) violation("prior nu must be positive");
  for (auto [val, name] : {std::pair{priors.p, "p"}, {priors.p_tilde, "p_tilde"}, {priors.p_exposure, "p_exposure"}}) {
    if (!(val > 0.0 && val < 1.0)) violation(std::string("prior ") + name + " must lie in (0,1)");
  }
  for (auto [val, name] : {std::pair{priors.omega2, "omega2"}, {priors.omega2_tilde, "omega2_tilde"},
                           {priors.delta2, "delta2"}, {priors.exposure_intercept_var, "exposure_intercept_var"}}) {
    if (!(val > 0.0)) violation(std::string("prior ") + name + " must be positive");
  }
  if (priors.variance_shape < 0.0 || priors.variance_rate < 0.0) violation("variance prior parameters must be >= 0");

  // model spec
  if (spec.iterations < 1) violation("iterations must be positive");
  if (spec.thin < 1) violation("thinning must be positive");
  if (spec.burn_in < 0 || spec.burn_in >= spec.iterations) violation("burn-in must satisfy 0 <= burn-in < iterations");
  if (spec.method == Method::FixedSet) {
    if (spec.baseline_mask.size() != K || spec.change_mask.size() != K) {
      violation("fixed inclusion masks must have length K");
    } else if (K > 0 && (spec.baseline_mask.minCoeff() < 0 || spec.baseline_mask.maxCoeff() > 1 ||
                         spec.change_mask.minCoeff() < 0 || spec.change_mask.maxCoeff() > 1)) {
      violation("fixed inclusion masks must be 0/1");
    }
  }
  return r;
}

/// Deterministic starting point: group sample moments for the latents, unit
/// tau's, zero coefficients, slab precisions at their prior mean 1/lambda^2.
inline ChainState initial_state(const HdidDataset& data, const ModelSpec& spec, const PriorConfig& priors) {
  const Index J = data.num_groups();
  const Index K = data.num_covariates();
  ChainState s;
  s.mu = VectorXd::Zero(J);
  s.mu_diff = VectorXd::Zero(J);
  s.sigma2_pre = VectorXd::Ones(J);
  s.sigma2_post = VectorXd::Ones(J);
  const auto stats = summarize_groups(data);
  for (Index j = 0; j < J; ++j) {
    const auto& g = stats[static_cast<std::size_t>(j)];
    if (g.n_pre > 0) s.mu(j) = g.mean_pre;
    if (g.n_pre > 0 && g.n_post > 0) s.mu_diff(j) = g.mean_post - g.mean_pre;
    // Groups without observations in a period keep 1; their variance never enters a conditional.
    if (g.n_pre > 0) s.sigma2_pre(j) = std::max(g.n_pre > 1 ? g.ss_pre / (g.n_pre - 1) : 0.0, 1e-6);
    if (g.n_post > 0) s.sigma2_post(j) = std::max(g.n_post > 1 ? g.ss_post / (g.n_post - 1) : 0.0, 1e-6);
  }
  s.tau2_baseline = 1.0;
  s.tau2_change = 1.0;

  auto prior_precision = [](const VectorXd& lambda) { return lambda.array().square().inverse().matrix().eval(); };
  s.baseline.coef = VectorXd::Zero(K);
  s.baseline.include = spec.effective_baseline_mask(K);
  s.baseline.precision = prior_precision(priors.lambda);
  s.change.coef = VectorXd::Zero(K);
  s.change.include = spec.effective_change_mask(K);
  s.change.precision = prior_precision(priors.lambda);

  s.exposure.coef = VectorXd::Zero(K);
  s.exposure.variance = 1.0;
  s.exposure.include = VectorXi::Ones(K);
  s.exposure.precision =
      priors.lambda_exposure.size() == K ? prior_precision(priors.lambda_exposure) : prior_precision(priors.lambda);
  return s;
}

}  // namespace hdid
