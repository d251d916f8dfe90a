#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hdid/model.hpp"
#include "hdid/sampler.hpp"

namespace hdid {

/// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw InvalidParameter("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidParameter("quantile probability must lie in [0,1]");
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // 2.5%
  double median = 0.0;
  double upper = 0.0;  // 97.5%
};

inline ParameterSummary summarize_draws(std::string name, std::vector<double> draws) {
  ParameterSummary s;
  s.name = std::move(name);
  if (draws.empty()) throw InvalidParameter("no draws to summarize for " + s.name);
  double sum = 0.0;
  for (double d : draws) sum += d;
  s.mean = sum / static_cast<double>(draws.size());
  double ss = 0.0;
  for (double d : draws) ss += (d - s.mean) * (d - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  std::sort(draws.begin(), draws.end());
  s.lower = sorted_quantile(draws, 0.025);
  s.median = sorted_quantile(draws, 0.5);
  s.upper = sorted_quantile(draws, 0.975);
  return s;
}

struct PosteriorSummary {
  int draws = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<std::string> covariate_names;
  VectorXd change_inclusion;
  VectorXd baseline_inclusion;
  VectorXd exposure_inclusion;  // empty unless the exposure model was sampled

  const ParameterSummary* find(const std::string& name) const {
    for (const auto& p : parameters) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

/// Names: Delta, Delta_baseline, change_intercept, baseline_intercept, change:<cov>,
/// baseline:<cov>, tau2_change, tau2_baseline. Treatment rows are omitted when the
/// corresponding coefficient is not in the model.
inline PosteriorSummary summarize_posterior(const SamplerOutput& out, const HdidDataset& data, const ModelSpec& spec) {
  if (out.draws.empty()) throw InvalidParameter("summarize_posterior: no retained draws");
  const Index K = data.num_covariates();
  PosteriorSummary s;
  s.draws = static_cast<int>(out.draws.size());
  s.covariate_names = data.covariate_names;
  if (static_cast<Index>(s.covariate_names.size()) != K) {
    s.covariate_names.clear();
    for (Index k = 0; k < K; ++k) s.covariate_names.push_back("X" + std::to_string(k + 1));
  }

  auto collect = [&](auto&& get) {
    std::vector<double> v;
    v.reserve(out.draws.size());
    for (const auto& d : out.draws) v.push_back(get(d));
    return v;
  };
  if (spec.include_treatment) {
    s.parameters.push_back(summarize_draws("Delta", collect([](const ChainState& d) { return d.change.treatment; })));
  }
  if (spec.adjust_baseline_for_T) {
    s.parameters.push_back(
        summarize_draws("Delta_baseline", collect([](const ChainState& d) { return d.baseline.treatment; })));
  }
  s.parameters.push_back(
      summarize_draws("change_intercept", collect([](const ChainState& d) { return d.change.intercept; })));
  s.parameters.push_back(
      summarize_draws("baseline_intercept", collect([](const ChainState& d) { return d.baseline.intercept; })));
  for (Index k = 0; k < K; ++k) {
    const auto& name = s.covariate_names[static_cast<std::size_t>(k)];
    s.parameters.push_back(summarize_draws("change:" + name, collect([k](const ChainState& d) { return d.change.coef(k); })));
  }
  for (Index k = 0; k < K; ++k) {
    const auto& name = s.covariate_names[static_cast<std::size_t>(k)];
    s.parameters.push_back(
        summarize_draws("baseline:" + name, collect([k](const ChainState& d) { return d.baseline.coef(k); })));
  }
  s.parameters.push_back(summarize_draws("tau2_change", collect([](const ChainState& d) { return d.tau2_change; })));
  s.parameters.push_back(summarize_draws("tau2_baseline", collect([](const ChainState& d) { return d.tau2_baseline; })));

  s.change_inclusion = VectorXd::Zero(K);
  s.baseline_inclusion = VectorXd::Zero(K);
  const bool exposure = spec.method == Method::Sufficient;
  if (exposure) s.exposure_inclusion = VectorXd::Zero(K);
  for (const auto& d : out.draws) {
    s.change_inclusion += d.change.include.cast<double>();
    s.baseline_inclusion += d.baseline.include.cast<double>();
    if (exposure) s.exposure_inclusion += d.exposure.include.cast<double>();
  }
  s.change_inclusion /= s.draws;
  s.baseline_inclusion /= s.draws;
  if (exposure) s.exposure_inclusion /= s.draws;
  return s;
}

}  // namespace hdid
