#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "hdid/datagen.hpp"
#include "hdid/sampler.hpp"
#include "hdid/study.hpp"
#include "joint_model.hpp"
#include "test_util.hpp"

using namespace hdid;

namespace {

HdidDataset study_data(Index J, std::uint64_t seed, std::uint64_t stream = 0) {
  RngStream rng(seed, stream);
  return generate(GenerativeConfig::study(J, 10), rng).dataset;
}

}  // namespace

TEST(Geweke, MarginalAndSuccessiveConditionalSimulatorsAgree) {
  const auto model = testutil::tiny_joint_model();
  const int samples = 10000, thin = 10;
  using Stat = std::function<double(const ChainState&)>;
  const std::vector<std::pair<std::string, Stat>> stats = {
      {"tau2_change", [](const ChainState& s) { return s.tau2_change; }},
      {"Delta", [](const ChainState& s) { return s.change.treatment; }},
      {"w1", [](const ChainState& s) { return double(s.change.include(0)); }},
      {"tau2_baseline", [](const ChainState& s) { return s.tau2_baseline; }},
      {"beta_tilde1", [](const ChainState& s) { return s.baseline.coef(0); }},
      {"w_tilde2", [](const ChainState& s) { return double(s.baseline.include(1)); }},
      {"sigma2_post1", [](const ChainState& s) { return s.sigma2_post(0); }},
      {"mu_diff1", [](const ChainState& s) { return s.mu_diff(0); }},
  };

  std::vector<std::vector<double>> marginal(stats.size()), successive(stats.size());
  RngStream mrng(31, 1);
  for (int i = 0; i < samples; ++i) {
    const auto s = model.draw_prior(mrng);
    for (std::size_t k = 0; k < stats.size(); ++k) marginal[k].push_back(stats[k].second(s));
  }

  RngStream srng(31, 2);
  HdidDataset data = model.data;
  ChainState state = model.draw_prior(srng);
  model.draw_data(data, state, srng);
  for (int i = 0; i < samples * thin; ++i) {
    GibbsSampler(data, model.spec, model.priors).step(state, srng, i + 1);
    model.draw_data(data, state, srng);
    if ((i + 1) % thin == 0) {
      for (std::size_t k = 0; k < stats.size(); ++k) successive[k].push_back(stats[k].second(state));
    }
  }

  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto mm = testutil::moments(marginal[k]);
    const auto [sm, sse] = testutil::batch_mean_se(successive[k]);
    const double z = (mm.mean - sm) / std::sqrt(mm.se_mean * mm.se_mean + sse * sse);
    EXPECT_LT(std::abs(z), 4.0) << stats[k].first << " marginal " << mm.mean << " successive " << sm;
  }
}

TEST(Sampler, InterceptOnlyModelMatchesGaussianOracle) {
  // K = 0, no treatment terms, variances pinned near 1 by a tight IG prior: the joint
  // posterior of (baseline intercept, change intercept, mu, mu_diff) is Gaussian.
  HdidDataset d;
  d.y_pre = {{1.0, 2.0, 0.5}, {3.0, 2.5}, {-1.0, 0.0, 0.5, 1.0}};
  d.y_post = {{2.0, 3.0}, {4.0, 5.5, 4.5}, {0.0, 1.5}};
  d.X = MatrixXd::Zero(3, 0);
  d.T = VectorXd::Zero(3);
  auto pc = PriorConfig::simulation_defaults(0);
  pc.variance_shape = 1e6;
  pc.variance_rate = 1e6 - 1.0;
  pc.omega2 = pc.omega2_tilde = 4.0;
  auto spec = ModelSpec::make(Method::Full, 60000, 2000);
  spec.include_treatment = false;
  spec.adjust_baseline_for_T = false;
  spec.center_outcomes = false;

  // theta = (b~0, b0, mu_1..3, mu_diff_1..3); accumulate (c'theta - r)^2 / v terms.
  const int P = 8;
  MatrixXd Q = MatrixXd::Zero(P, P);
  VectorXd h = VectorXd::Zero(P);
  auto term = [&](VectorXd c, double r, double v) {
    Q += c * c.transpose() / v;
    h += c * r / v;
  };
  auto unit = [&](std::initializer_list<std::pair<int, double>> e) {
    VectorXd c = VectorXd::Zero(P);
    for (auto [i, v] : e) c(i) = v;
    return c;
  };
  term(unit({{0, 1}}), 0, pc.omega2_tilde);
  term(unit({{1, 1}}), 0, pc.omega2);
  for (int j = 0; j < 3; ++j) {
    term(unit({{2 + j, 1}, {0, -1}}), 0, 1);
    term(unit({{5 + j, 1}, {1, -1}}), 0, 1);
    for (double y : d.y_pre[j]) term(unit({{2 + j, 1}}), y, 1);
    for (double y : d.y_post[j]) term(unit({{2 + j, 1}, {5 + j, 1}}), y, 1);
  }
  const MatrixXd cov = Q.inverse();
  const VectorXd mean = cov * h;

  RngStream rng(41, 0);
  const auto out = run_sampler(d, spec, pc, rng);
  auto check = [&](int idx, std::function<double(const ChainState&)> f, const char* name) {
    std::vector<double> x;
    for (const auto& s : out.draws) x.push_back(f(s));
    const auto [m, se] = testutil::batch_mean_se(x);
    EXPECT_NEAR(m, mean(idx), 4 * se + 1e-3) << name;
    const auto mm = testutil::moments(x);
    EXPECT_NEAR(mm.var / cov(idx, idx), 1.0, 0.08) << name;
  };
  check(0, [](const ChainState& s) { return s.baseline.intercept; }, "baseline intercept");
  check(1, [](const ChainState& s) { return s.change.intercept; }, "change intercept");
  for (int j = 0; j < 3; ++j) {
    check(2 + j, [j](const ChainState& s) { return s.mu(j); }, "mu");
    check(5 + j, [j](const ChainState& s) { return s.mu_diff(j); }, "mu_diff");
  }
}

TEST(Sampler, DrawCountAndDeterminism) {
  const auto d = study_data(20, 5);
  const auto pc = PriorConfig::simulation_defaults(8);
  const auto spec = ModelSpec::make(Method::Separate, 250, 50, 3);
  RngStream a(7, 1), b(7, 1);
  const auto oa = run_sampler(d, spec, pc, a);
  const auto ob = run_sampler(d, spec, pc, b);
  EXPECT_EQ(oa.draw_count, 66);
  EXPECT_EQ(static_cast<int>(oa.draws.size()), 66);
  for (int i = 0; i < oa.draw_count; ++i) {
    ASSERT_EQ(oa.draws[i].change.treatment, ob.draws[i].change.treatment);
    ASSERT_EQ(oa.draws[i].mu, ob.draws[i].mu);
  }
  EXPECT_GE(oa.seconds, 0.0);
}

TEST(Sampler, IndicatorHierarchyHoldsInEveryDraw) {
  const auto d = study_data(50, 6);
  const auto pc = PriorConfig::simulation_defaults(8);
  for (Method m : {Method::Sufficient, Method::Efficient, Method::Shared}) {
    RngStream rng(8, static_cast<std::uint64_t>(m));
    const auto out = run_sampler(d, ModelSpec::make(m, 1500, 500), pc, rng);
    int checked = 0;
    bool saw_gap = false;
    for (const auto& s : out.draws) {
      for (Index k = 0; k < 8; ++k) {
        if (m == Method::Shared) {
          ASSERT_EQ(s.baseline.include(k), s.change.include(k));
          ASSERT_EQ(s.baseline.precision(k), s.change.precision(k));
        } else {
          ASSERT_LE(s.baseline.include(k), s.change.include(k)) << to_string(m);
          saw_gap = saw_gap || s.baseline.include(k) < s.change.include(k);
        }
        if (m == Method::Sufficient) {
          ASSERT_LE(s.change.include(k), s.exposure.include(k));
        }
        ++checked;
      }
    }
    EXPECT_EQ(checked, 8 * 1000);
    if (m != Method::Shared) {
      EXPECT_TRUE(saw_gap) << to_string(m);
    }
  }
}

TEST(Sampler, FixedSetExcludedCoefficientsStayAtZero) {
  const auto d = study_data(30, 7);
  const auto pc = PriorConfig::simulation_defaults(8);
  auto spec = ModelSpec::choice(3, 8);
  spec.iterations = 300;
  spec.burn_in = 100;
  RngStream rng(9, 0);
  const auto out = run_sampler(d, spec, pc, rng);
  for (const auto& s : out.draws) {
    ASSERT_EQ(s.baseline.coef, VectorXd::Zero(8));
    ASSERT_EQ(s.baseline.include, VectorXi::Zero(8));
    ASSERT_EQ(s.change.include, VectorXi::Ones(8));
    ASSERT_EQ(s.baseline.treatment, 0.0);
  }
}

TEST(Sampler, PriorReversionWhenSpikeEqualsSlab) {
  const auto d = study_data(30, 10);
  auto pc = PriorConfig::simulation_defaults(8, 0.05);
  pc.nu = 1e10;
  pc.lambda = pc.z;  // slab precision pinned at 1/z^2
  pc.p = 0.3;
  pc.p_tilde = 0.7;
  RngStream rng(11, 0);
  const auto out = run_sampler(d, ModelSpec::make(Method::Separate, 3000, 500), pc, rng);
  double change = 0, baseline = 0;
  for (const auto& s : out.draws) {
    change += s.change.include.sum();
    baseline += s.baseline.include.sum();
  }
  const double n = 8.0 * out.draw_count;
  EXPECT_NEAR(change / n, 0.3, 3 * std::sqrt(0.3 * 0.7 / n));
  EXPECT_NEAR(baseline / n, 0.7, 3 * std::sqrt(0.3 * 0.7 / n));
}

TEST(Sampler, ShiftByConstantLeavesDeltaDrawsBitIdentical) {
  // Dyadic data so shifting and centring are exact in floating point.
  RngStream gen(12, 0);
  const int J = 8, n = 4, K = 2;
  auto dyadic = [&](double scale) { return std::round(scale * gen.normal() * 16.0) / 16.0; };
  HdidDataset d;
  d.X.resize(J, K);
  d.T.resize(J);
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < K; ++k) d.X(j, k) = dyadic(1.0);
    d.T(j) = dyadic(1.0);
    d.y_pre.emplace_back();
    d.y_post.emplace_back();
    for (int i = 0; i < n; ++i) {
      d.y_pre.back().push_back(dyadic(1.5));
      d.y_post.back().push_back(1.0 + dyadic(1.5));
    }
  }
  const double c = 8.0;
  HdidDataset shifted = d;
  for (auto& g : shifted.y_pre) {
    for (auto& y : g) y += c;
  }
  for (auto& g : shifted.y_post) {
    for (auto& y : g) y += c;
  }
  const auto pc = PriorConfig::simulation_defaults(K);
  for (Method m : {Method::Separate, Method::Sufficient, Method::Full}) {
    const auto spec = ModelSpec::make(m, 600, 100);
    RngStream a(13, 0), b(13, 0);
    const auto oa = run_sampler(d, spec, pc, a);
    const auto ob = run_sampler(shifted, spec, pc, b);
    ASSERT_EQ(oa.draw_count, ob.draw_count);
    for (int i = 0; i < oa.draw_count; ++i) {
      ASSERT_EQ(oa.draws[i].change.treatment, ob.draws[i].change.treatment) << to_string(m) << " draw " << i;
      ASSERT_NEAR(ob.draws[i].baseline.intercept - oa.draws[i].baseline.intercept, c, 1e-9);
      ASSERT_NEAR(ob.draws[i].mu(0) - oa.draws[i].mu(0), c, 1e-9);
    }
  }
}

TEST(Sampler, NonFiniteStateAbortsWithIteration) {
  const auto d = study_data(10, 14);
  const auto pc = PriorConfig::simulation_defaults(8);
  GibbsSampler sampler(d, ModelSpec::make(Method::Separate, 10, 5), pc);
  auto s = sampler.initial_state();
  s.mu_diff(0) = std::numeric_limits<double>::quiet_NaN();
  RngStream rng(15, 0);
  try {
    sampler.step(s, rng, 17);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 17"), std::string::npos) << e.what();
  }
}

TEST(Sampler, InvalidInputRejected) {
  auto d = study_data(10, 16);
  d.T.setConstant(1.0);
  EXPECT_THROW(GibbsSampler(d, ModelSpec{}, PriorConfig::simulation_defaults(8)), InvalidParameter);
}

TEST(Sampler, NullModelIsBiasedFullModelIsNot) {
  StudySettings st;
  st.replications = 40;
  st.seed = 99;
  const auto res = run_method_study(100, st, {Method::Full, Method::Null});
  EXPECT_NEAR(res.reports[0].bias, 0.0, 0.05);
  EXPECT_NEAR(res.reports[1].bias, 0.41, 0.05);
}
