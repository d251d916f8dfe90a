#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "hdid/conditionals.hpp"
#include "hdid/model.hpp"
#include "hdid/numerics.hpp"

namespace hdid {

struct SamplerOutput {
  std::vector<ChainState> draws;  // post burn-in, thinned
  int draw_count = 0;
  double seconds = 0.0;
};

/// Gibbs sampler for the HDiD model under one of the fixed-set or
/// spike-and-slab selection methods.
///
/// Update cycle per iteration:
///   for each group: mu_j, mu_diff_j, sigma~_j^2, sigma_j^2
///   tau~^2, tau^2 (against the previous coefficient blocks)
///   baseline block (beta~0, Delta~, beta~), change block (beta0, Delta, beta)
///   method-specific indicators, then slab precisions.
/// Sufficient draws its exposure block (which never sees outcome quantities) before
/// the outcome indicators, and cuts feedback by drawing w^e, then w given w^e, then
/// w~ given w. Efficient draws w, then w~ given w.
class GibbsSampler {
 public:
  GibbsSampler(const HdidDataset& data, const ModelSpec& spec, const PriorConfig& priors)
      : data_(data), spec_(spec), priors_(priors) {
    const auto report = validate(data, spec, priors);
    if (!report.ok()) throw InvalidParameter("invalid sampler input: " + report.violations.front());
    offset_ = spec.center_outcomes ? pooled_pre_median(data) : 0.0;
    stats_ = summarize_groups(data, offset_);
    const Index K = data.num_covariates();
    baseline_ = make_block(spec.effective_baseline_mask(K), spec.adjust_baseline_for_T);
    change_ = make_block(spec.effective_change_mask(K), spec.include_treatment);
    if (spec.method == Method::Sufficient) {
      exposure_design_.resize(data.num_groups(), K + 1);
      exposure_design_.col(0).setOnes();
      exposure_design_.rightCols(K) = data.X;
      exposure_gram_ = exposure_design_.transpose() * exposure_design_;
    }
  }

  const ModelSpec& spec() const { return spec_; }
  double offset() const { return offset_; }

  /// hdid::initial_state with the baseline intercept moved to the centring offset, so
  /// the chain starts at zero in sampling coordinates.
  ChainState initial_state() const {
    ChainState s = hdid::initial_state(data_, spec_, priors_);
    s.baseline.intercept = offset_;
    return s;
  }

  /// One full Gibbs cycle on a state expressed in data units.
  void step(ChainState& state, RngStream& rng, int iteration = 0) const {
    shift(state, -offset_);
    guarded_step(state, rng, iteration);
    shift(state, offset_);
  }

  SamplerOutput run(RngStream& rng) const { return run(initial_state(), rng); }

  SamplerOutput run(ChainState state, RngStream& rng) const {
    const auto start = std::chrono::steady_clock::now();
    SamplerOutput out;
    out.draws.reserve(static_cast<std::size_t>(std::max(spec_.retained_draws(), 0)));
    shift(state, -offset_);
    for (int t = 1; t <= spec_.iterations; ++t) {
      guarded_step(state, rng, t);
      if (t > spec_.burn_in && (t - spec_.burn_in) % spec_.thin == 0) {
        ChainState snap = state;
        shift(snap, offset_);
        if (!spec_.retain_group_latents) {
          snap.mu.resize(0);
          snap.mu_diff.resize(0);
          snap.sigma2_pre.resize(0);
          snap.sigma2_post.resize(0);
        }
        out.draws.push_back(std::move(snap));
      }
    }
    out.draw_count = static_cast<int>(out.draws.size());
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

 private:
  // Design of one regression: intercept, optional treatment column, then the
  // covariates listed in `columns` (indices into X).
  struct Block {
    bool has_treatment = false;
    std::vector<Index> columns;
    MatrixXd design;
    MatrixXd gram;
  };

  Block make_block(const VectorXi& mask, bool with_treatment) const {
    Block b;
    b.has_treatment = with_treatment;
    const Index K = data_.num_covariates();
    for (Index k = 0; k < K; ++k) {
      if (mask(k)) b.columns.push_back(k);
    }
    const Index J = data_.num_groups();
    const Index d = 1 + (with_treatment ? 1 : 0) + static_cast<Index>(b.columns.size());
    b.design.resize(J, d);
    b.design.col(0).setOnes();
    Index c = 1;
    if (with_treatment) b.design.col(c++) = data_.T;
    for (Index k : b.columns) b.design.col(c++) = data_.X.col(k);
    b.gram = b.design.transpose() * b.design;
    return b;
  }

  static VectorXd pack(const Block& b, const RegressionState& r) {
    VectorXd coef(b.design.cols());
    coef(0) = r.intercept;
    Index c = 1;
    if (b.has_treatment) coef(c++) = r.treatment;
    for (Index k : b.columns) coef(c++) = r.coef(k);
    return coef;
  }

  static void unpack(const Block& b, const VectorXd& coef, RegressionState& r) {
    r.intercept = coef(0);
    Index c = 1;
    if (b.has_treatment) r.treatment = coef(c++);
    for (Index k : b.columns) r.coef(k) = coef(c++);
  }

  VectorXd prior_precision(const Block& b, const RegressionState& r, double intercept_var) const {
    VectorXd prec(b.design.cols());
    prec(0) = 1.0 / intercept_var;
    Index c = 1;
    if (b.has_treatment) prec(c++) = 1.0 / priors_.delta2;
    for (Index k : b.columns) {
      prec(c++) = r.include(k) ? r.precision(k) : 1.0 / (priors_.z(k) * priors_.z(k));
    }
    return prec;
  }

  static void shift(ChainState& s, double by) {
    if (by == 0.0) return;
    s.mu.array() += by;
    s.baseline.intercept += by;
  }

  // A non-finite state reaches the variate samplers as an invalid parameter; report it
  // as a chain failure stamped with the iteration.
  void guarded_step(ChainState& s, RngStream& rng, int iteration) const {
    try {
      step_centered(s, rng, iteration);
    } catch (const InvalidParameter& e) {
      throw NumericalError("iteration " + std::to_string(iteration) + ": " + e.what());
    }
  }

  void step_centered(ChainState& s, RngStream& rng, int iteration) const {
    const Index J = data_.num_groups();
    const Index K = data_.num_covariates();
    const Method method = spec_.method;

    // Group-level means under the previous coefficient draws.
    const VectorXd baseline_mean = baseline_.design * pack(baseline_, s.baseline);
    const VectorXd change_mean = change_.design * pack(change_, s.change);

    for (Index j = 0; j < J; ++j) {
      const auto& g = stats_[static_cast<std::size_t>(j)];
      s.mu(j) = mu_conditional(g, s.mu_diff(j), s.sigma2_pre(j), s.sigma2_post(j), s.tau2_baseline, baseline_mean(j))
                    .draw(rng);
      s.mu_diff(j) = mudiff_conditional(g, s.mu(j), s.sigma2_post(j), s.tau2_change, change_mean(j)).draw(rng);
      const auto [pre, post] = sigma_conditionals(g, s.mu(j), s.mu_diff(j), priors_);
      if (pre) s.sigma2_pre(j) = pre->draw_inverse(rng);
      if (post) s.sigma2_post(j) = post->draw_inverse(rng);
    }

    const auto [tau_base, tau_change] = tau_conditionals(s.mu, baseline_mean, s.mu_diff, change_mean, priors_);
    s.tau2_baseline = tau_base.draw_inverse(rng);
    s.tau2_change = tau_change.draw_inverse(rng);

    {
      const auto post = regression_posterior(baseline_.gram, baseline_.design.transpose() * s.mu, s.tau2_baseline,
                                             prior_precision(baseline_, s.baseline, priors_.omega2_tilde));
      unpack(baseline_, post.draw(rng), s.baseline);
    }
    {
      const auto post = regression_posterior(change_.gram, change_.design.transpose() * s.mu_diff, s.tau2_change,
                                             prior_precision(change_, s.change, priors_.omega2));
      unpack(change_, post.draw(rng), s.change);
    }

    if (method == Method::Sufficient) {
      exposure_block_draw(data_.T, exposure_design_, exposure_gram_, priors_, s.exposure, rng);
    }

    auto spike = [&](Index k) { return priors_.z(k) * priors_.z(k); };
    auto change_prob = [&](Index k) {
      return inclusion_prob(s.change.coef(k), spike(k), 1.0 / s.change.precision(k), priors_.p);
    };
    auto baseline_prob = [&](Index k) {
      return inclusion_prob(s.baseline.coef(k), spike(k), 1.0 / s.baseline.precision(k), priors_.p_tilde);
    };

    switch (method) {
      case Method::Separate:
        for (Index k = 0; k < K; ++k) {
          s.baseline.include(k) = draw_bernoulli(baseline_prob(k), rng);
          s.change.include(k) = draw_bernoulli(change_prob(k), rng);
        }
        break;
      case Method::Shared:
        for (Index k = 0; k < K; ++k) {
          const double prob = shared_inclusion_prob(s.baseline.coef(k), s.change.coef(k), spike(k),
                                                    1.0 / s.change.precision(k), priors_.p);
          s.change.include(k) = draw_bernoulli(prob, rng);
          s.baseline.include(k) = s.change.include(k);
        }
        break;
      case Method::Sufficient:
        for (Index k = 0; k < K; ++k) {
          s.change.include(k) = s.exposure.include(k) ? draw_bernoulli(change_prob(k), rng) : 0;
          s.baseline.include(k) = s.change.include(k) ? draw_bernoulli(baseline_prob(k), rng) : 0;
        }
        break;
      case Method::Efficient:
        for (Index k = 0; k < K; ++k) {
          s.change.include(k) = draw_bernoulli(change_prob(k), rng);
          s.baseline.include(k) = s.change.include(k) ? draw_bernoulli(baseline_prob(k), rng) : 0;
        }
        break;
      case Method::Full:
      case Method::Null:
      case Method::FixedSet:
        break;
    }

    if (method == Method::Shared) {
      const double inc = spec_.shared_gamma_conjugate ? 1.0 : 0.5;
      for (Index k = 0; k < K; ++k) {
        s.change.precision(k) = gamma_conditional(s.change.include(k), {s.baseline.coef(k), s.change.coef(k)},
                                                  priors_.nu, priors_.lambda(k), inc)
                                    .draw(rng);
        s.baseline.precision(k) = s.change.precision(k);
      }
    } else {
      for (Index k : baseline_.columns) {
        s.baseline.precision(k) =
            gamma_conditional(s.baseline.include(k), {s.baseline.coef(k)}, priors_.nu, priors_.lambda(k)).draw(rng);
      }
      for (Index k : change_.columns) {
        s.change.precision(k) =
            gamma_conditional(s.change.include(k), {s.change.coef(k)}, priors_.nu, priors_.lambda(k)).draw(rng);
      }
    }

    check_finite(s, iteration);
  }

  static void check_finite(const ChainState& s, int iteration) {
    auto fail = [&](const char* what) {
      throw NumericalError("non-finite " + std::string(what) + " at iteration " + std::to_string(iteration));
    };
    if (!s.mu.allFinite()) fail("mu");
    if (!s.mu_diff.allFinite()) fail("mu_diff");
    if (!s.sigma2_pre.allFinite() || !s.sigma2_post.allFinite()) fail("group variance");
    if (!std::isfinite(s.tau2_baseline) || !std::isfinite(s.tau2_change)) fail("tau^2");
    if (!std::isfinite(s.baseline.intercept) || !std::isfinite(s.baseline.treatment) || !s.baseline.coef.allFinite()) {
      fail("baseline coefficients");
    }
    if (!std::isfinite(s.change.intercept) || !std::isfinite(s.change.treatment) || !s.change.coef.allFinite()) {
      fail("change coefficients");
    }
    if (!s.baseline.precision.allFinite() || !s.change.precision.allFinite()) fail("slab precision");
  }

  HdidDataset data_;
  ModelSpec spec_;
  PriorConfig priors_;
  double offset_ = 0.0;
  std::vector<GroupSummary> stats_;
  Block baseline_;
  Block change_;
  MatrixXd exposure_design_;
  MatrixXd exposure_gram_;
};

/// Validates, initialises and runs one chain.
inline SamplerOutput run_sampler(const HdidDataset& data, const ModelSpec& spec, const PriorConfig& priors,
                                 RngStream& rng) {
  return GibbsSampler(data, spec, priors).run(rng);
}

}  // namespace hdid
