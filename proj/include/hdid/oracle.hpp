#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>

#include "hdid/datagen.hpp"
#include "hdid/model.hpp"
#include "hdid/numerics.hpp"

namespace hdid {

/// Which columns the (misspecified) estimation model contains.
struct BiasModel {
  VectorXi baseline_mask;  // w~
  VectorXi change_mask;    // w
  bool adjust_T = true;    // T in the baseline model
  bool include_intercepts = true;
};

struct TrueCoefficients {
  VectorXd beta_baseline;
  VectorXd beta_change;
  double delta_baseline = 0.0;
  double delta_change = 1.0;
};

struct VarianceComponents {
  VectorXd sigma2_pre;   // per group
  VectorXd sigma2_post;  // per group
  double tau2_baseline = 1.0;
  double tau2_change = 1.0;
};

/// Marginal model Y ~ N(A B Theta, Sigma) split into included (B1, Theta1) and omitted
/// (B0, Theta0) parts. B is stored at group level as a pre-period half (J rows) and a
/// post-period half (J rows); A repeats group row j for each of group j's individuals.
///
/// Theta1 = [beta~0, beta~_{w~=1}, Delta~ (if adjusted), beta0, beta_{w=1}, Delta];
/// Theta0 = [beta~_{w~=0}, Delta~ (if not adjusted), beta_{w=0}].
struct BiasProblem {
  std::vector<int> n_pre;
  std::vector<int> n_post;
  VectorXd sigma2_pre;
  VectorXd sigma2_post;
  double tau2_baseline = 1.0;
  double tau2_change = 1.0;
  MatrixXd b1_pre, b1_post;
  MatrixXd b0_pre, b0_post;
  VectorXd theta0;
  Index delta_index = 0;
  std::vector<std::string> included_labels;
  std::vector<std::string> excluded_labels;

  Index num_groups() const { return static_cast<Index>(n_pre.size()); }

  MatrixXd B1() const {
    MatrixXd b(2 * b1_pre.rows(), b1_pre.cols());
    b << b1_pre, b1_post;
    return b;
  }
  MatrixXd B0() const {
    MatrixXd b(2 * b0_pre.rows(), b0_pre.cols());
    b << b0_pre, b0_post;
    return b;
  }

  /// Dense A: rows are all pre-period individuals (group by group) then all post-period.
  MatrixXd assignment() const {
    const Index J = num_groups();
    Index n0 = 0, n1 = 0;
    for (Index j = 0; j < J; ++j) {
      n0 += n_pre[static_cast<std::size_t>(j)];
      n1 += n_post[static_cast<std::size_t>(j)];
    }
    MatrixXd a = MatrixXd::Zero(n0 + n1, 2 * J);
    Index row = 0;
    for (Index j = 0; j < J; ++j) {
      for (int i = 0; i < n_pre[static_cast<std::size_t>(j)]; ++i) a(row++, j) = 1.0;
    }
    for (Index j = 0; j < J; ++j) {
      for (int i = 0; i < n_post[static_cast<std::size_t>(j)]; ++i) a(row++, J + j) = 1.0;
    }
    return a;
  }

  /// Dense Sigma in the same row order as assignment().
  MatrixXd covariance() const {
    const Index J = num_groups();
    std::vector<Index> start_pre(static_cast<std::size_t>(J)), start_post(static_cast<std::size_t>(J));
    Index n0 = 0;
    for (Index j = 0; j < J; ++j) {
      start_pre[static_cast<std::size_t>(j)] = n0;
      n0 += n_pre[static_cast<std::size_t>(j)];
    }
    Index n1 = n0;
    for (Index j = 0; j < J; ++j) {
      start_post[static_cast<std::size_t>(j)] = n1;
      n1 += n_post[static_cast<std::size_t>(j)];
    }
    MatrixXd s = MatrixXd::Zero(n1, n1);
    for (Index j = 0; j < J; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const Index p0 = start_pre[js], p1 = start_post[js];
      const Index m0 = n_pre[js], m1 = n_post[js];
      s.block(p0, p0, m0, m0).setConstant(tau2_baseline);
      s.block(p0, p0, m0, m0).diagonal().array() += sigma2_pre(j);
      s.block(p0, p1, m0, m1).setConstant(tau2_baseline);
      s.block(p1, p0, m1, m0).setConstant(tau2_baseline);
      s.block(p1, p1, m1, m1).setConstant(tau2_baseline + tau2_change);
      s.block(p1, p1, m1, m1).diagonal().array() += sigma2_post(j);
    }
    return s;
  }
};

inline BiasProblem build_problem(const MatrixXd& X, const VectorXd& T, const BiasModel& model,
                                 const TrueCoefficients& truth, const VarianceComponents& var,
                                 const std::vector<int>& n_pre, const std::vector<int>& n_post) {
  const Index J = X.rows();
  const Index K = X.cols();
  if (T.size() != J || model.baseline_mask.size() != K || model.change_mask.size() != K ||
      truth.beta_baseline.size() != K || truth.beta_change.size() != K || var.sigma2_pre.size() != J ||
      var.sigma2_post.size() != J || static_cast<Index>(n_pre.size()) != J ||
      static_cast<Index>(n_post.size()) != J) {
    throw InvalidParameter("build_problem: dimension mismatch");
  }
  if (!(var.tau2_baseline > 0.0) || !(var.tau2_change > 0.0) || !(var.sigma2_pre.array() > 0.0).all() ||
      !(var.sigma2_post.array() > 0.0).all()) {
    throw InvalidParameter("build_problem: variances must be positive");
  }

  BiasProblem p;
  p.n_pre = n_pre;
  p.n_post = n_post;
  p.sigma2_pre = var.sigma2_pre;
  p.sigma2_post = var.sigma2_post;
  p.tau2_baseline = var.tau2_baseline;
  p.tau2_change = var.tau2_change;

  std::vector<VectorXd> in_pre, in_post, out_pre, out_post;
  std::vector<double> out_coef;
  const VectorXd zeros = VectorXd::Zero(J);
  const VectorXd ones = VectorXd::Ones(J);
  auto label = [](const char* prefix, Index k) { return std::string(prefix) + "X" + std::to_string(k + 1); };
  auto include = [&](const VectorXd& pre, const VectorXd& post, std::string name) {
    in_pre.push_back(pre);
    in_post.push_back(post);
    p.included_labels.push_back(std::move(name));
  };
  auto exclude = [&](const VectorXd& pre, const VectorXd& post, double coef, std::string name) {
    out_pre.push_back(pre);
    out_post.push_back(post);
    out_coef.push_back(coef);
    p.excluded_labels.push_back(std::move(name));
  };

  // Baseline model: columns enter both periods.
  if (model.include_intercepts) include(ones, ones, "baseline:intercept");
  for (Index k = 0; k < K; ++k) {
    if (model.baseline_mask(k)) {
      include(X.col(k), X.col(k), label("baseline:", k));
    } else {
      exclude(X.col(k), X.col(k), truth.beta_baseline(k), label("baseline:", k));
    }
  }
  if (model.adjust_T) {
    include(T, T, "baseline:T");
  } else {
    exclude(T, T, truth.delta_baseline, "baseline:T");
  }
  // Change model: post period only.
  if (model.include_intercepts) include(zeros, ones, "change:intercept");
  for (Index k = 0; k < K; ++k) {
    if (model.change_mask(k)) {
      include(zeros, X.col(k), label("change:", k));
    } else {
      exclude(zeros, X.col(k), truth.beta_change(k), label("change:", k));
    }
  }
  include(zeros, T, "change:T");
  p.delta_index = static_cast<Index>(in_pre.size()) - 1;

  auto stack = [J](const std::vector<VectorXd>& cols) {
    MatrixXd m(J, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Index>(c)) = cols[c];
    return m;
  };
  p.b1_pre = stack(in_pre);
  p.b1_post = stack(in_post);
  p.b0_pre = stack(out_pre);
  p.b0_post = stack(out_post);
  p.theta0 = Eigen::Map<const VectorXd>(out_coef.data(), static_cast<Index>(out_coef.size()));
  return p;
}

struct BiasResult {
  VectorXd bias;  // for Theta1
  double delta_bias = 0.0;
};

namespace detail {

/// A_j^T Sigma_j^{-1} A_j for one group, via a Cholesky solve of the group's
/// (n0 + n1)-square covariance block.
inline Eigen::Matrix2d group_weight(int n0, int n1, double s2_pre, double s2_post, double tau2_base,
                                    double tau2_change) {
  const Index m = n0 + n1;
  MatrixXd block(m, m);
  block.topLeftCorner(n0, n0).setConstant(tau2_base);
  block.topLeftCorner(n0, n0).diagonal().array() += s2_pre;
  block.topRightCorner(n0, n1).setConstant(tau2_base);
  block.bottomLeftCorner(n1, n0).setConstant(tau2_base);
  block.bottomRightCorner(n1, n1).setConstant(tau2_base + tau2_change);
  block.bottomRightCorner(n1, n1).diagonal().array() += s2_post;
  MatrixXd a = MatrixXd::Zero(m, 2);
  a.topRows(n0).col(0).setOnes();
  a.bottomRows(n1).col(1).setOnes();
  Eigen::LLT<MatrixXd> llt(block);
  if (llt.info() != Eigen::Success) throw NumericalError("bias oracle: covariance block is not positive definite");
  return (a.transpose() * llt.solve(a)).eval();
}

}  // namespace detail

/// (B1' A' Sigma^-1 A B1)^{-1} B1' A' Sigma^-1 A B0 Theta0, accumulated group by group.
inline BiasResult theorem1_bias(const BiasProblem& p) {
  const Index J = p.num_groups();
  const Index d = p.b1_pre.cols();
  BiasResult out;
  out.bias = VectorXd::Zero(d);
  MatrixXd normal = MatrixXd::Zero(d, d);
  VectorXd rhs = VectorXd::Zero(d);
  const bool has_omitted = p.theta0.size() > 0;
  const VectorXd omit_pre = has_omitted ? VectorXd(p.b0_pre * p.theta0) : VectorXd::Zero(J);
  const VectorXd omit_post = has_omitted ? VectorXd(p.b0_post * p.theta0) : VectorXd::Zero(J);

  std::map<std::tuple<int, int, double, double>, Eigen::Matrix2d> cache;
  MatrixXd rows(2, d);
  for (Index j = 0; j < J; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const int n0 = p.n_pre[js], n1 = p.n_post[js];
    if (n0 + n1 == 0) continue;
    const auto key = std::make_tuple(n0, n1, p.sigma2_pre(j), p.sigma2_post(j));
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, detail::group_weight(n0, n1, p.sigma2_pre(j), p.sigma2_post(j), p.tau2_baseline,
                                                   p.tau2_change))
               .first;
    }
    const Eigen::Matrix2d& w = it->second;
    rows.row(0) = p.b1_pre.row(j);
    rows.row(1) = p.b1_post.row(j);
    normal.noalias() += rows.transpose() * w * rows;
    rhs.noalias() += rows.transpose() * (w * Eigen::Vector2d(omit_pre(j), omit_post(j)));
  }

  Eigen::FullPivLU<MatrixXd> lu(normal);
  lu.setThreshold(1e-10);
  if (lu.rank() < d) {
    const MatrixXd kernel = lu.kernel();
    std::string names;
    for (Index c = 0; c < d; ++c) {
      if (kernel.row(c).cwiseAbs().maxCoeff() > 1e-8) {
        if (!names.empty()) names += ", ";
        names += p.included_labels[static_cast<std::size_t>(c)];
      }
    }
    throw NumericalError("bias oracle: singular normal matrix; collinear columns: " + names);
  }
  if (has_omitted) out.bias = lu.solve(rhs);
  out.delta_bias = out.bias(p.delta_index);
  return out;
}

/// Monte-Carlo mean Delta-bias over generated (X, T) for nested inclusion sets.
struct SweepResult {
  std::vector<std::string> labels;
  std::vector<double> no_adjust;  // baseline not adjusted for T
  std::vector<double> adjust;     // baseline adjusted for T
};

/// Default nesting for the 8-covariate design: X1, X3, X2, X5, X7, X6, X4, then all.
inline std::vector<Index> default_sweep_order() { return {0, 2, 1, 4, 6, 5, 3}; }

struct SweepOptions {
  std::vector<Index> order = default_sweep_order();
  bool include_intercepts = true;
  unsigned workers = 1;
};

/// Rows: Null, +X_{order[0]}, ..., Full. Both T-adjustment columns are evaluated on the
/// same generated (X, T); replication r uses stream stream_id({seed tag, r}).
inline SweepResult bias_sweep(const GenerativeConfig& cfg, int replications, std::uint64_t seed,
                              const SweepOptions& opt = {}) {
  if (replications < 1) throw ConfigError("bias sweep: replications must be >= 1");
  cfg.check();
  const Index K = cfg.K();
  for (Index k : opt.order) {
    if (k < 0 || k >= K) throw ConfigError("bias sweep: inclusion order index out of range");
  }

  std::vector<VectorXi> masks;
  SweepResult res;
  masks.push_back(VectorXi::Zero(K));
  res.labels.push_back("Null");
  for (Index k : opt.order) {
    VectorXi m = masks.back();
    m(k) = 1;
    masks.push_back(m);
    res.labels.push_back("+X" + std::to_string(k + 1));
  }
  masks.push_back(VectorXi::Ones(K));
  res.labels.push_back("Full");
  const std::size_t rows = masks.size();

  const TrueCoefficients truth{cfg.beta_baseline, cfg.beta_change, cfg.delta_baseline, cfg.delta_change};
  const VarianceComponents var{VectorXd::Constant(cfg.J, cfg.sigma2_pre), VectorXd::Constant(cfg.J, cfg.sigma2_post),
                               cfg.tau2_baseline, cfg.tau2_change};
  const std::vector<int> n(static_cast<std::size_t>(cfg.J), static_cast<int>(cfg.n));

  // per-replication results, aggregated in index order for determinism
  std::vector<std::vector<double>> per_rep(static_cast<std::size_t>(replications), std::vector<double>(2 * rows));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < replications; r = next++) {
      RngStream rng(seed, stream_id({0xB1A5, static_cast<std::uint64_t>(r)}));
      const auto gen = generate(cfg, rng);
      auto& out = per_rep[static_cast<std::size_t>(r)];
      for (std::size_t s = 0; s < rows; ++s) {
        for (int adj = 0; adj < 2; ++adj) {
          const BiasModel model{masks[s], masks[s], adj == 1, opt.include_intercepts};
          const auto prob = build_problem(gen.dataset.X, gen.dataset.T, model, truth, var, n, n);
          out[2 * s + static_cast<std::size_t>(adj)] = theorem1_bias(prob).delta_bias;
        }
      }
    }
  };
  const unsigned nthreads = std::max(1u, std::min(opt.workers, static_cast<unsigned>(replications)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  res.no_adjust.assign(rows, 0.0);
  res.adjust.assign(rows, 0.0);
  for (const auto& rep : per_rep) {
    for (std::size_t s = 0; s < rows; ++s) {
      res.no_adjust[s] += rep[2 * s];
      res.adjust[s] += rep[2 * s + 1];
    }
  }
  for (std::size_t s = 0; s < rows; ++s) {
    res.no_adjust[s] /= replications;
    res.adjust[s] /= replications;
  }
  return res;
}

/// One column of the sweep.
inline std::vector<double> table_a1_sweep(const GenerativeConfig& cfg, bool adjust_T, int replications,
                                          std::uint64_t seed, const SweepOptions& opt = {}) {
  auto res = bias_sweep(cfg, replications, seed, opt);
  return adjust_T ? res.adjust : res.no_adjust;
}

}  // namespace hdid
