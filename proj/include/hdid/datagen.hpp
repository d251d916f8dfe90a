#pragma once

#include <array>
#include <string>

#include "hdid/model.hpp"
#include "hdid/numerics.hpp"

namespace hdid {

/// Which of T, mu, mu_diff a single covariate drives.
struct CovariateRole {
  bool affects_T = false;
  bool affects_mu = false;
  bool affects_mudiff = false;

  friend bool operator==(const CovariateRole&, const CovariateRole&) = default;
};

/// The eight roles X1..X8: (T, mu, mu_diff) = 111, 110, 101, 100, 011, 010, 001, 000.
inline std::array<CovariateRole, 8> table1_roles() {
  std::array<CovariateRole, 8> roles{};
  for (int i = 0; i < 8; ++i) {
    roles[static_cast<std::size_t>(i)] = {(i & 4) == 0, (i & 2) == 0, (i & 1) == 0};
  }
  return roles;
}

struct GenerativeConfig {
  Index J = 50;
  Index n = 10;  // per group and period
  VectorXd alpha;
  VectorXd beta_baseline;  // beta~
  VectorXd beta_change;    // beta
  double delta_baseline = 0.0;  // Delta~
  double delta_change = 1.0;    // Delta
  // Structural variances; all 1 in the standard design.
  double exposure_var = 1.0;
  double tau2_baseline = 1.0;
  double tau2_change = 1.0;
  double sigma2_pre = 1.0;
  double sigma2_post = 1.0;

  Index K() const { return alpha.size(); }

  /// Eight-covariate design with one covariate per role.
  static GenerativeConfig study(Index J = 50, Index n = 10) {
    GenerativeConfig c;
    c.J = J;
    c.n = n;
    c.alpha.resize(8);
    c.beta_baseline.resize(8);
    c.beta_change.resize(8);
    const auto roles = table1_roles();
    for (Index k = 0; k < 8; ++k) {
      const auto& r = roles[static_cast<std::size_t>(k)];
      c.alpha(k) = r.affects_T ? 1.0 : 0.0;
      c.beta_baseline(k) = r.affects_mu ? 1.0 : 0.0;
      c.beta_change(k) = r.affects_mudiff ? 1.0 : 0.0;
    }
    return c;
  }

  void check() const {
    if (J < 1) throw ConfigError("generative config: J must be >= 1");
    if (n < 0) throw ConfigError("generative config: n must be >= 0");
    if (beta_baseline.size() != K() || beta_change.size() != K()) {
      throw ConfigError("generative config: alpha, beta_baseline and beta_change must have equal length");
    }
    for (double v : {exposure_var, tau2_baseline, tau2_change, sigma2_pre, sigma2_post}) {
      if (!(v >= 0.0)) throw ConfigError("generative config: variances must be >= 0");
    }
  }
};

/// K = 1 design where the only covariate plays `role`: J = 50, n = 10, Delta~ = 0, Delta = 1.
inline GenerativeConfig single_covariate_config(const CovariateRole& role) {
  GenerativeConfig c;
  c.J = 50;
  c.n = 10;
  c.alpha = VectorXd::Constant(1, role.affects_T ? 1.0 : 0.0);
  c.beta_baseline = VectorXd::Constant(1, role.affects_mu ? 1.0 : 0.0);
  c.beta_change = VectorXd::Constant(1, role.affects_mudiff ? 1.0 : 0.0);
  return c;
}

struct LatentTruth {
  VectorXd mu;
  VectorXd mu_diff;
};

struct GeneratedData {
  HdidDataset dataset;
  LatentTruth truth;
};

/// Four-step generator: X columns iid N(0, I_J); T ~ N(X alpha, I); mu ~ N(T Delta~ + X beta~, I);
/// mu_diff ~ N(T Delta + X beta, I); Y0_ji ~ N(mu_j, 1), Y1_ji ~ N(mu_j + mu_diff_j, 1).
inline GeneratedData generate(const GenerativeConfig& cfg, RngStream& rng) {
  cfg.check();
  const Index J = cfg.J;
  const Index K = cfg.K();
  GeneratedData out;
  HdidDataset& d = out.dataset;
  d.X.resize(J, K);
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < J; ++j) d.X(j, k) = rng.normal();
  }
  d.T.resize(J);
  const VectorXd t_mean = d.X * cfg.alpha;
  for (Index j = 0; j < J; ++j) d.T(j) = sample_normal(t_mean(j), cfg.exposure_var, rng);

  out.truth.mu.resize(J);
  out.truth.mu_diff.resize(J);
  const VectorXd mu_mean = d.T * cfg.delta_baseline + d.X * cfg.beta_baseline;
  const VectorXd diff_mean = d.T * cfg.delta_change + d.X * cfg.beta_change;
  for (Index j = 0; j < J; ++j) out.truth.mu(j) = sample_normal(mu_mean(j), cfg.tau2_baseline, rng);
  for (Index j = 0; j < J; ++j) out.truth.mu_diff(j) = sample_normal(diff_mean(j), cfg.tau2_change, rng);

  d.y_pre.assign(static_cast<std::size_t>(J), {});
  d.y_post.assign(static_cast<std::size_t>(J), {});
  d.group_ids.resize(static_cast<std::size_t>(J));
  for (Index j = 0; j < J; ++j) {
    const auto js = static_cast<std::size_t>(j);
    d.group_ids[js] = "g" + std::to_string(j + 1);
    d.y_pre[js].resize(static_cast<std::size_t>(cfg.n));
    d.y_post[js].resize(static_cast<std::size_t>(cfg.n));
    for (auto& y : d.y_pre[js]) y = sample_normal(out.truth.mu(j), cfg.sigma2_pre, rng);
    for (auto& y : d.y_post[js]) y = sample_normal(out.truth.mu(j) + out.truth.mu_diff(j), cfg.sigma2_post, rng);
  }
  d.covariate_names.resize(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) d.covariate_names[static_cast<std::size_t>(k)] = "X" + std::to_string(k + 1);
  return out;
}

}  // namespace hdid
