#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hdid/datagen.hpp"
#include "hdid/model.hpp"
#include "hdid/sampler.hpp"
#include "hdid/summary.hpp"

namespace hdid {

/// What one fitted replication contributes to a report.
struct ReplicationResult {
  bool failed = false;
  double estimate = 0.0;  // posterior mean of Delta
  double lower = 0.0;
  double upper = 0.0;
  double change_predictors = 0.0;  // posterior mean of sum_k w_k
  double baseline_predictors = 0.0;
  VectorXd change_inclusion;
  VectorXd baseline_inclusion;
};

struct StudyReport {
  int replications = 0;  // successful ones
  int failed = 0;
  double bias = 0.0;
  double bias_moe = 0.0;
  double mse = 0.0;
  double mse_moe = 0.0;
  double coverage = 0.0;
  double change_predictors = 0.0;
  double baseline_predictors = 0.0;
  VectorXd change_inclusion;
  VectorXd baseline_inclusion;
  std::string warning;
};

inline ReplicationResult replication_from_draws(std::vector<double> delta_draws) {
  if (delta_draws.empty()) throw InvalidParameter("replication has no draws");
  ReplicationResult r;
  double sum = 0.0;
  for (double d : delta_draws) sum += d;
  r.estimate = sum / static_cast<double>(delta_draws.size());
  std::sort(delta_draws.begin(), delta_draws.end());
  r.lower = sorted_quantile(delta_draws, 0.025);
  r.upper = sorted_quantile(delta_draws, 0.975);
  return r;
}

inline ReplicationResult replication_from_output(const SamplerOutput& out) {
  std::vector<double> delta;
  delta.reserve(out.draws.size());
  for (const auto& d : out.draws) delta.push_back(d.change.treatment);
  ReplicationResult r = replication_from_draws(std::move(delta));
  const Index K = out.draws.front().change.include.size();
  r.change_inclusion = VectorXd::Zero(K);
  r.baseline_inclusion = VectorXd::Zero(K);
  for (const auto& d : out.draws) {
    r.change_inclusion += d.change.include.cast<double>();
    r.baseline_inclusion += d.baseline.include.cast<double>();
  }
  r.change_inclusion /= static_cast<double>(out.draws.size());
  r.baseline_inclusion /= static_cast<double>(out.draws.size());
  r.change_predictors = r.change_inclusion.sum();
  r.baseline_predictors = r.baseline_inclusion.sum();
  return r;
}

/// Metrics over successful replications, accumulated in index order.
inline StudyReport aggregate(const std::vector<ReplicationResult>& reps, double truth) {
  StudyReport s;
  std::vector<double> err, sq;
  Index K = -1;
  for (const auto& r : reps) {
    if (r.failed) {
      ++s.failed;
      continue;
    }
    if (K < 0) {
      K = r.change_inclusion.size();
      s.change_inclusion = VectorXd::Zero(K);
      s.baseline_inclusion = VectorXd::Zero(K);
    }
    const double e = r.estimate - truth;
    err.push_back(e);
    sq.push_back(e * e);
    if (r.lower <= truth && truth <= r.upper) s.coverage += 1.0;
    s.change_predictors += r.change_predictors;
    s.baseline_predictors += r.baseline_predictors;
    if (r.change_inclusion.size() == K) {
      s.change_inclusion += r.change_inclusion;
      s.baseline_inclusion += r.baseline_inclusion;
    }
  }
  s.replications = static_cast<int>(err.size());
  const int total = s.replications + s.failed;
  if (s.failed > 0 && 100 * s.failed > total) {
    s.warning = std::to_string(s.failed) + " of " + std::to_string(total) + " replications failed and were excluded";
  }
  if (s.replications == 0) {
    s.warning = "all " + std::to_string(total) + " replications failed";
    return s;
  }
  const double R = s.replications;
  auto mean_sd = [R](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= R;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / (R - 1.0)) : 0.0;
  };
  double sd = 0.0;
  mean_sd(err, s.bias, sd);
  s.bias_moe = 1.96 * sd / std::sqrt(R);
  mean_sd(sq, s.mse, sd);
  s.mse_moe = 1.96 * sd / std::sqrt(R);
  s.coverage /= R;
  s.change_predictors /= R;
  s.baseline_predictors /= R;
  s.change_inclusion /= R;
  s.baseline_inclusion /= R;
  return s;
}

/// Report from per-replication Delta draws (no inclusion information).
inline StudyReport summarize(const std::vector<std::vector<double>>& delta_draws, double truth) {
  if (delta_draws.empty()) throw InvalidParameter("summarize: need at least one replication");
  std::vector<ReplicationResult> reps;
  reps.reserve(delta_draws.size());
  for (const auto& d : delta_draws) reps.push_back(replication_from_draws(d));
  return aggregate(reps, truth);
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first exception is rethrown.
template <class Fn>
void parallel_for(int count, unsigned workers, Fn&& fn) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  const unsigned n = std::max(1u, std::min(workers, static_cast<unsigned>(std::max(count, 1))));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct StudySettings {
  int replications = 500;
  int iterations = 2000;
  int burn_in = 1000;
  unsigned workers = 1;
  std::uint64_t seed = 20240101;
  double spike_sd = 0.01;
  bool shared_gamma_conjugate = false;
};

/// Fits one chain; a numerical failure yields a failed replication instead of an exception.
inline ReplicationResult fit_replication(const HdidDataset& data, const ModelSpec& spec, const PriorConfig& priors,
                                         RngStream& rng) {
  try {
    return replication_from_output(run_sampler(data, spec, priors, rng));
  } catch (const NumericalError&) {
    ReplicationResult r;
    r.failed = true;
    return r;
  }
}

namespace detail {
enum StreamTag : std::uint64_t { kGridData = 0x6D01, kGridChain = 0x6D02, kMethodData = 0x6D03, kMethodChain = 0x6D04 };
}  // namespace detail

struct ChoiceCell {
  int role = 1;    // 1..8 (X1..X8)
  int choice = 1;  // 1..8
  StudyReport report;
};

/// Single-covariate scenarios fitted with the fixed-set models of choices 1-8. All choices
/// for a (role, replication) pair share one dataset.
inline std::vector<ChoiceCell> run_choice_grid(const StudySettings& st, std::vector<int> roles = {1, 2, 3, 4, 5, 6, 7, 8},
                                               std::vector<int> choices = {1, 2, 3, 4, 5, 6, 7, 8}) {
  if (st.replications < 1) throw ConfigError("replications must be >= 1");
  for (int r : roles) {
    if (r < 1 || r > 8) throw ConfigError("covariate role must be in 1..8");
  }
  for (int c : choices) {
    if (c < 1 || c > 8) throw ConfigError("model choice must be in 1..8");
  }
  const auto table = table1_roles();
  const PriorConfig priors = PriorConfig::simulation_defaults(1, st.spike_sd);
  const int R = st.replications;
  const std::size_t nc = choices.size();
  std::vector<ReplicationResult> results(roles.size() * static_cast<std::size_t>(R) * nc);

  parallel_for(static_cast<int>(roles.size()) * R, st.workers, [&](int item) {
    const auto ri = static_cast<std::size_t>(item / R);
    const int rep = item % R;
    const int role = roles[ri];
    const auto cfg = single_covariate_config(table[static_cast<std::size_t>(role - 1)]);
    RngStream data_rng(st.seed, stream_id({detail::kGridData, static_cast<std::uint64_t>(role),
                                           static_cast<std::uint64_t>(rep)}));
    const auto gen = generate(cfg, data_rng);
    for (std::size_t ci = 0; ci < nc; ++ci) {
      ModelSpec spec = ModelSpec::choice(choices[ci], 1);
      spec.iterations = st.iterations;
      spec.burn_in = st.burn_in;
      spec.retain_group_latents = false;
      RngStream rng(st.seed, stream_id({detail::kGridChain, static_cast<std::uint64_t>(role),
                                        static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(choices[ci])}));
      results[(ri * static_cast<std::size_t>(R) + static_cast<std::size_t>(rep)) * nc + ci] =
          fit_replication(gen.dataset, spec, priors, rng);
    }
  });

  std::vector<ChoiceCell> cells;
  for (std::size_t ri = 0; ri < roles.size(); ++ri) {
    const double truth = single_covariate_config(table[static_cast<std::size_t>(roles[ri] - 1)]).delta_change;
    for (std::size_t ci = 0; ci < nc; ++ci) {
      std::vector<ReplicationResult> reps;
      reps.reserve(static_cast<std::size_t>(R));
      for (int rep = 0; rep < R; ++rep) {
        reps.push_back(results[(ri * static_cast<std::size_t>(R) + static_cast<std::size_t>(rep)) * nc + ci]);
      }
      cells.push_back({roles[ri], choices[ci], aggregate(reps, truth)});
    }
  }
  return cells;
}

inline std::vector<Method> default_study_methods() {
  return {Method::Full, Method::Separate, Method::Shared, Method::Sufficient, Method::Efficient, Method::Null};
}

struct MethodStudy {
  Index J = 0;
  std::vector<Method> methods;
  std::vector<StudyReport> reports;  // parallel to methods
  std::vector<std::string> covariate_names;
};

/// Eight-covariate design at J groups; every method sees the same dataset in a replication.
/// Chain streams depend on the method itself, not its position in `methods`.
inline MethodStudy run_method_study(Index J, const StudySettings& st,
                                    std::vector<Method> methods = default_study_methods()) {
  if (st.replications < 1) throw ConfigError("replications must be >= 1");
  for (Method m : methods) {
    if (m == Method::FixedSet) throw ConfigError("method study does not take FixedSet; use the choice grid");
  }
  const auto cfg = GenerativeConfig::study(J, 10);
  cfg.check();
  const PriorConfig priors = PriorConfig::simulation_defaults(cfg.K(), st.spike_sd);
  const int R = st.replications;
  const std::size_t nm = methods.size();
  std::vector<ReplicationResult> results(static_cast<std::size_t>(R) * nm);

  parallel_for(R, st.workers, [&](int rep) {
    RngStream data_rng(st.seed, stream_id({detail::kMethodData, static_cast<std::uint64_t>(J),
                                           static_cast<std::uint64_t>(rep)}));
    const auto gen = generate(cfg, data_rng);
    for (std::size_t mi = 0; mi < nm; ++mi) {
      ModelSpec spec = ModelSpec::make(methods[mi], st.iterations, st.burn_in);
      spec.retain_group_latents = false;
      spec.shared_gamma_conjugate = st.shared_gamma_conjugate;
      RngStream rng(st.seed, stream_id({detail::kMethodChain, static_cast<std::uint64_t>(J),
                                        static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(methods[mi])}));
      results[static_cast<std::size_t>(rep) * nm + mi] = fit_replication(gen.dataset, spec, priors, rng);
    }
  });

  MethodStudy out;
  out.J = J;
  out.methods = methods;
  for (Index k = 0; k < cfg.K(); ++k) out.covariate_names.push_back("X" + std::to_string(k + 1));
  for (std::size_t mi = 0; mi < nm; ++mi) {
    std::vector<ReplicationResult> reps;
    reps.reserve(static_cast<std::size_t>(R));
    for (int rep = 0; rep < R; ++rep) reps.push_back(results[static_cast<std::size_t>(rep) * nm + mi]);
    out.reports.push_back(aggregate(reps, cfg.delta_change));
  }
  return out;
}

}  // namespace hdid
