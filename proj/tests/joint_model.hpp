#pragma once

// Prior/likelihood simulators for the joint-distribution (Geweke) test, shared by the
// unit tests and the acceptance suite.

#include <utility>
#include <vector>

#include "hdid/sampler.hpp"
#include "test_util.hpp"

namespace testutil {

using namespace hdid;

// Mean and batch-means standard error of an autocorrelated series.
inline std::pair<double, double> batch_mean_se(const std::vector<double>& x, int batches = 50) {
  const std::size_t len = x.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < len; ++i) s += x[b * len + i];
    means.push_back(s / static_cast<double>(len));
  }
  const auto m = testutil::moments(means);
  return {m.mean, m.se_mean};
}

// Prior and likelihood simulators for the Separate model, used by the joint
// distribution test. X and T are held fixed.
struct JointModel {
  HdidDataset data;
  PriorConfig priors;
  ModelSpec spec;
  int n = 2;

  ChainState draw_prior(RngStream& rng) const {
    const Index J = data.num_groups(), K = data.num_covariates();
    const PriorConfig& pc = priors;
    ChainState s;
    auto ig = [&] { return sample_inverse_gamma(pc.variance_shape, pc.variance_rate, rng); };
    s.tau2_baseline = ig();
    s.tau2_change = ig();
    auto regression = [&](RegressionState& r, double intercept_var, double p) {
      r.intercept = sample_normal(0, intercept_var, rng);
      r.treatment = sample_normal(0, pc.delta2, rng);
      r.coef.resize(K);
      r.include.resize(K);
      r.precision.resize(K);
      for (Index k = 0; k < K; ++k) {
        r.include(k) = rng.uniform() < p;
        r.precision(k) = sample_gamma(0.5 * pc.nu, 0.5 * pc.nu * pc.lambda(k) * pc.lambda(k), rng);
        r.coef(k) = sample_normal(0, r.include(k) ? 1.0 / r.precision(k) : pc.z(k) * pc.z(k), rng);
      }
    };
    regression(s.baseline, pc.omega2_tilde, pc.p_tilde);
    regression(s.change, pc.omega2, pc.p);
    const VectorXd bm = s.baseline.intercept + (data.T * s.baseline.treatment + data.X * s.baseline.coef).array();
    const VectorXd cm = s.change.intercept + (data.T * s.change.treatment + data.X * s.change.coef).array();
    s.mu.resize(J);
    s.mu_diff.resize(J);
    s.sigma2_pre.resize(J);
    s.sigma2_post.resize(J);
    for (Index j = 0; j < J; ++j) {
      s.mu(j) = sample_normal(bm(j), s.tau2_baseline, rng);
      s.mu_diff(j) = sample_normal(cm(j), s.tau2_change, rng);
      s.sigma2_pre(j) = ig();
      s.sigma2_post(j) = ig();
    }
    s.exposure.coef = VectorXd::Zero(K);
    s.exposure.include = VectorXi::Ones(K);
    s.exposure.precision = VectorXd::Ones(K);
    return s;
  }

  void draw_data(HdidDataset& d, const ChainState& s, RngStream& rng) const {
    for (Index j = 0; j < d.num_groups(); ++j) {
      const auto js = static_cast<std::size_t>(j);
      d.y_pre[js].resize(static_cast<std::size_t>(n));
      d.y_post[js].resize(static_cast<std::size_t>(n));
      for (auto& y : d.y_pre[js]) y = sample_normal(s.mu(j), s.sigma2_pre(j), rng);
      for (auto& y : d.y_post[js]) y = sample_normal(s.mu(j) + s.mu_diff(j), s.sigma2_post(j), rng);
    }
  }
};

inline JointModel tiny_joint_model() {
  JointModel m;
  const int J = 3, K = 2;
  m.data.X.resize(J, K);
  m.data.X << 0.5, -1.0, -0.8, 0.3, 1.1, 0.9;
  m.data.T.resize(J);
  m.data.T << 1.0, -0.5, 0.2;
  m.data.y_pre.assign(J, {});
  m.data.y_post.assign(J, {});
  m.priors = PriorConfig::simulation_defaults(K, 0.5);
  m.priors.lambda.setConstant(1.0);
  m.priors.omega2 = m.priors.omega2_tilde = m.priors.delta2 = 1.0;
  m.priors.variance_shape = 3.0;
  m.priors.variance_rate = 2.0;
  m.spec = ModelSpec::make(Method::Separate, 2, 1);
  m.spec.center_outcomes = false;
  return m;
}

}  // namespace testutil
