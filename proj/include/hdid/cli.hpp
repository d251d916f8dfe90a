#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdid/datagen.hpp"
#include "hdid/io.hpp"
#include "hdid/oracle.hpp"
#include "hdid/study.hpp"
#include "hdid/summary.hpp"

namespace hdid::cli {

using json = nlohmann::json;

enum class Command : unsigned { Simulate = 1, Fit = 2, Study = 4, Bias = 8 };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Fit: return "fit";
    case Command::Study: return "study";
    case Command::Bias: return "bias";
  }
  return "?";
}

enum class Kind { Int, UInt64, Real, Bool, String, RealList, IntList, StringList };

struct KeySpec {
  const char* key;
  Kind kind;
  unsigned used_by;  // bitmask of Command values; keys outside it are accepted but not echoed
};

constexpr unsigned kSim = 1, kFit = 2, kStudy = 4, kBias = 8, kAll = 15;

/// Every key a config file may set. Unknown keys are rejected.
inline const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> keys = {
      {"seed", Kind::UInt64, kAll},
      {"workers", Kind::Int, kAll},
      {"out", Kind::String, kAll},
      {"model.methods", Kind::StringList, kFit | kStudy},
      {"model.iterations", Kind::Int, kFit | kStudy},
      {"model.burn_in", Kind::Int, kFit | kStudy},
      {"model.thin", Kind::Int, kFit},
      {"model.adjust_baseline_for_T", Kind::Bool, kFit},
      {"model.include_treatment", Kind::Bool, kFit},
      {"model.shared_gamma_conjugate", Kind::Bool, kFit | kStudy},
      {"model.center_outcomes", Kind::Bool, kFit},
      {"prior.spike_sd", Kind::Real, kFit | kStudy},
      {"prior.nu", Kind::Real, kFit},
      {"prior.slab_scale", Kind::Real, kFit},
      {"prior.p", Kind::Real, kFit},
      {"prior.p_tilde", Kind::Real, kFit},
      {"prior.p_exposure", Kind::Real, kFit},
      {"prior.omega2", Kind::Real, kFit},
      {"prior.omega2_tilde", Kind::Real, kFit},
      {"prior.delta2", Kind::Real, kFit},
      {"prior.exposure_intercept_var", Kind::Real, kFit},
      {"prior.variance_shape", Kind::Real, kFit},
      {"prior.variance_rate", Kind::Real, kFit},
      {"data.J", Kind::Int, kSim | kStudy | kBias},
      {"data.n", Kind::Int, kSim | kBias},
      {"data.alpha", Kind::RealList, kSim | kBias},
      {"data.beta_baseline", Kind::RealList, kSim | kBias},
      {"data.beta_change", Kind::RealList, kSim | kBias},
      {"data.delta_baseline", Kind::Real, kSim | kBias},
      {"data.delta_change", Kind::Real, kSim | kBias},
      {"data.exposure_var", Kind::Real, kSim | kBias},
      {"data.tau2_baseline", Kind::Real, kSim | kBias},
      {"data.tau2_change", Kind::Real, kSim | kBias},
      {"data.sigma2_pre", Kind::Real, kSim | kBias},
      {"data.sigma2_post", Kind::Real, kSim | kBias},
      {"data.individuals", Kind::String, kFit},
      {"data.groups", Kind::String, kFit},
      {"study.kind", Kind::String, kStudy},
      {"study.replications", Kind::Int, kStudy},
      {"study.roles", Kind::IntList, kStudy},
      {"study.choices", Kind::IntList, kStudy},
      {"bias.replications", Kind::Int, kBias},
      {"bias.include_intercepts", Kind::Bool, kBias},
      {"bias.order", Kind::IntList, kBias},
  };
  return keys;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& k : key_table()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

constexpr std::uint64_t kDefaultSeed = 20240101;

/// Defaults for one command. Fitting observed data uses longer chains and a wider spike.
inline json default_config(Command cmd) {
  const auto study = GenerativeConfig::study();
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const bool fit = cmd == Command::Fit;
  json c = {
      {"seed", kDefaultSeed},
      {"workers", 1},
      {"out", "."},
      {"model.methods", fit ? std::vector<std::string>{"Separate", "Shared", "Sufficient", "Efficient"}
                            : std::vector<std::string>{"Full", "Separate", "Shared", "Sufficient", "Efficient", "Null"}},
      {"model.iterations", fit ? 10000 : 2000},
      {"model.burn_in", fit ? 5000 : 1000},
      {"model.thin", 1},
      {"model.adjust_baseline_for_T", true},
      {"model.include_treatment", true},
      {"model.shared_gamma_conjugate", false},
      {"model.center_outcomes", true},
      {"prior.spike_sd", fit ? 0.025 : 0.01},
      {"prior.nu", 5.0},
      {"prior.slab_scale", 5.0},
      {"prior.p", 0.5},
      {"prior.p_tilde", 0.5},
      {"prior.p_exposure", 0.5},
      {"prior.omega2", 1e4},
      {"prior.omega2_tilde", 1e4},
      {"prior.delta2", 1e4},
      {"prior.exposure_intercept_var", 1e4},
      {"prior.variance_shape", 0.0},
      {"prior.variance_rate", 0.0},
      {"data.J", study.J},
      {"data.n", study.n},
      {"data.alpha", vec(study.alpha)},
      {"data.beta_baseline", vec(study.beta_baseline)},
      {"data.beta_change", vec(study.beta_change)},
      {"data.delta_baseline", study.delta_baseline},
      {"data.delta_change", study.delta_change},
      {"data.exposure_var", study.exposure_var},
      {"data.tau2_baseline", study.tau2_baseline},
      {"data.tau2_change", study.tau2_change},
      {"data.sigma2_pre", study.sigma2_pre},
      {"data.sigma2_post", study.sigma2_post},
      {"data.individuals", ""},
      {"data.groups", ""},
      {"study.kind", "methods"},
      {"study.replications", 500},
      {"study.roles", {1, 2, 3, 4, 5, 6, 7, 8}},
      {"study.choices", {1, 2, 3, 4, 5, 6, 7, 8}},
      {"bias.replications", 10000},
      {"bias.include_intercepts", true},
      {"bias.order", {1, 3, 2, 5, 7, 6, 4}},
  };
  return c;
}

inline bool kind_matches(Kind kind, const json& v) {
  auto all = [&v](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!pred(e)) return false;
    }
    return true;
  };
  switch (kind) {
    case Kind::Int: return v.is_number_integer();
    case Kind::UInt64: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::Real: return v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::String: return v.is_string();
    case Kind::RealList: return all([](const json& e) { return e.is_number(); });
    case Kind::IntList: return all([](const json& e) { return e.is_number_integer(); });
    case Kind::StringList: return all([](const json& e) { return e.is_string(); });
  }
  return false;
}

/// Sets one dotted key after checking it is known and of the right type.
inline void set_key(json& config, const std::string& key, const json& value, const std::string& origin) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError(origin + ": unknown key '" + key + "'");
  if (!kind_matches(spec->kind, value)) throw ConfigError(origin + ": wrong type for key '" + key + "'");
  config[key] = value;
}

/// Flat JSON object with dotted keys.
inline json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
  return j;
}

inline std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(origin + ": seed must be an unsigned integer, got '" + text + "'");
  }
  try {
    return std::stoull(text);
  } catch (const std::out_of_range&) {
    throw ConfigError(origin + ": seed out of range");
  }
}

/// Command-line overrides; unset fields leave the config value alone.
struct FlagValues {
  std::string config_path;
  std::optional<std::string> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::vector<std::string> methods;
  std::optional<int> J;
  std::optional<int> replications;
  std::optional<int> iterations;
  std::optional<int> burn_in;
  std::optional<std::string> individuals;
  std::optional<std::string> groups;
  std::optional<std::string> kind;
};

/// Resolved settings of one run. Seed precedence: flag, config file, HDID_SEED, default.
struct RunConfig {
  Command command = Command::Study;
  json values;

  template <class T>
  T get(const std::string& key) const {
    return values.at(key).get<T>();
  }
  std::uint64_t seed() const { return get<std::uint64_t>("seed"); }
  unsigned workers() const { return static_cast<unsigned>(get<int>("workers")); }
  std::filesystem::path out_dir() const { return get<std::string>("out"); }

  /// Keys this command uses (workers and the output directory excluded, so outputs do
  /// not depend on them).
  json echo() const {
    json e = json::object();
    e["command"] = command_name(command);
    for (const auto& k : key_table()) {
      const std::string key = k.key;
      if (key == "workers" || key == "out") continue;
      if (k.used_by & static_cast<unsigned>(command)) e[key] = values.at(key);
    }
    return e;
  }

  std::vector<std::string> comment_lines() const {
    return {"hdid " + std::string(command_name(command)), "seed: " + std::to_string(seed()),
            "config: " + echo().dump()};
  }
};

inline RunConfig resolve_config(Command cmd, const FlagValues& flags, const char* env_seed) {
  RunConfig rc;
  rc.command = cmd;
  rc.values = default_config(cmd);
  bool seed_from_config = false;
  if (!flags.config_path.empty()) {
    const json file = read_config_file(flags.config_path);
    for (const auto& [key, value] : file.items()) set_key(rc.values, key, value, flags.config_path);
    seed_from_config = file.contains("seed");
  }
  if (flags.seed) {
    rc.values["seed"] = parse_seed(*flags.seed, "--seed");
  } else if (!seed_from_config && env_seed && *env_seed) {
    rc.values["seed"] = parse_seed(env_seed, "HDID_SEED");
  }
  // an integer-typed seed read from JSON is normalised to unsigned
  rc.values["seed"] = rc.values["seed"].get<std::uint64_t>();
  if (flags.workers) rc.values["workers"] = *flags.workers;
  if (flags.out) rc.values["out"] = *flags.out;
  if (!flags.methods.empty()) rc.values["model.methods"] = flags.methods;
  if (flags.J) rc.values["data.J"] = *flags.J;
  if (flags.replications) {
    rc.values[cmd == Command::Bias ? "bias.replications" : "study.replications"] = *flags.replications;
  }
  if (flags.iterations) rc.values["model.iterations"] = *flags.iterations;
  if (flags.burn_in) rc.values["model.burn_in"] = *flags.burn_in;
  if (flags.individuals) rc.values["data.individuals"] = *flags.individuals;
  if (flags.groups) rc.values["data.groups"] = *flags.groups;
  if (flags.kind) rc.values["study.kind"] = *flags.kind;

  if (rc.get<int>("workers") < 1) throw ConfigError("workers must be >= 1");
  return rc;
}

// ---- typed views of the config

inline VectorXd to_vector(const json& v) {
  const auto d = v.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(d.data(), static_cast<Index>(d.size()));
}

inline GenerativeConfig generative_config(const RunConfig& rc) {
  GenerativeConfig g;
  g.J = rc.get<int>("data.J");
  g.n = rc.get<int>("data.n");
  g.alpha = to_vector(rc.values.at("data.alpha"));
  g.beta_baseline = to_vector(rc.values.at("data.beta_baseline"));
  g.beta_change = to_vector(rc.values.at("data.beta_change"));
  g.delta_baseline = rc.get<double>("data.delta_baseline");
  g.delta_change = rc.get<double>("data.delta_change");
  g.exposure_var = rc.get<double>("data.exposure_var");
  g.tau2_baseline = rc.get<double>("data.tau2_baseline");
  g.tau2_change = rc.get<double>("data.tau2_change");
  g.sigma2_pre = rc.get<double>("data.sigma2_pre");
  g.sigma2_post = rc.get<double>("data.sigma2_post");
  g.check();
  return g;
}

inline std::vector<Method> methods(const RunConfig& rc) {
  std::vector<Method> out;
  for (const auto& name : rc.get<std::vector<std::string>>("model.methods")) {
    const auto m = parse_method(name);
    if (!m) throw ConfigError("unknown method '" + name + "'");
    if (*m == Method::FixedSet) throw ConfigError("method FixedSet is only available through the choice grid");
    out.push_back(*m);
  }
  if (out.empty()) throw ConfigError("no methods requested");
  return out;
}

inline void check_chain_settings(int iterations, int burn_in) {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn-in must satisfy 0 <= burn-in < iterations");
}

/// Prior for K covariates; scalar spike and slab scales are broadcast.
inline PriorConfig prior_config(const RunConfig& rc, Index K) {
  PriorConfig p = PriorConfig::simulation_defaults(K, rc.get<double>("prior.spike_sd"));
  p.nu = rc.get<double>("prior.nu");
  p.lambda = VectorXd::Constant(K, rc.get<double>("prior.slab_scale"));
  p.lambda_exposure = p.lambda;
  p.p = rc.get<double>("prior.p");
  p.p_tilde = rc.get<double>("prior.p_tilde");
  p.p_exposure = rc.get<double>("prior.p_exposure");
  p.omega2 = rc.get<double>("prior.omega2");
  p.omega2_tilde = rc.get<double>("prior.omega2_tilde");
  p.delta2 = rc.get<double>("prior.delta2");
  p.exposure_intercept_var = rc.get<double>("prior.exposure_intercept_var");
  p.variance_shape = rc.get<double>("prior.variance_shape");
  p.variance_rate = rc.get<double>("prior.variance_rate");

  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("prior.") + name + " must be positive");
  };
  positive(rc.get<double>("prior.spike_sd"), "spike_sd");
  positive(rc.get<double>("prior.slab_scale"), "slab_scale");
  positive(p.nu, "nu");
  positive(p.omega2, "omega2");
  positive(p.omega2_tilde, "omega2_tilde");
  positive(p.delta2, "delta2");
  positive(p.exposure_intercept_var, "exposure_intercept_var");
  for (auto [v, name] : {std::pair{p.p, "p"}, {p.p_tilde, "p_tilde"}, {p.p_exposure, "p_exposure"}}) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string("prior.") + name + " must lie in (0,1)");
  }
  if (p.variance_shape < 0.0 || p.variance_rate < 0.0) throw ConfigError("prior variance shape and rate must be >= 0");
  return p;
}

inline ModelSpec model_spec(const RunConfig& rc, Method m) {
  ModelSpec s = ModelSpec::make(m, rc.get<int>("model.iterations"), rc.get<int>("model.burn_in"),
                                rc.get<int>("model.thin"));
  check_chain_settings(s.iterations, s.burn_in);
  if (s.thin < 1) throw ConfigError("model.thin must be >= 1");
  if (s.retained_draws() < 1) throw ConfigError("no draws retained after burn-in and thinning");
  s.adjust_baseline_for_T = rc.get<bool>("model.adjust_baseline_for_T");
  s.include_treatment = rc.get<bool>("model.include_treatment");
  s.shared_gamma_conjugate = rc.get<bool>("model.shared_gamma_conjugate");
  s.center_outcomes = rc.get<bool>("model.center_outcomes");
  s.retain_group_latents = false;
  return s;
}

inline StudySettings study_settings(const RunConfig& rc) {
  StudySettings st;
  st.replications = rc.get<int>("study.replications");
  st.iterations = rc.get<int>("model.iterations");
  st.burn_in = rc.get<int>("model.burn_in");
  st.workers = rc.workers();
  st.seed = rc.seed();
  st.spike_sd = rc.get<double>("prior.spike_sd");
  st.shared_gamma_conjugate = rc.get<bool>("model.shared_gamma_conjugate");
  if (st.replications < 1) throw ConfigError("study.replications must be >= 1");
  check_chain_settings(st.iterations, st.burn_in);
  if (!(st.spike_sd > 0.0)) throw ConfigError("prior.spike_sd must be positive");
  return st;
}

// ---- output helpers

inline std::filesystem::path prepare_out_dir(const RunConfig& rc) {
  const auto dir = rc.out_dir();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

inline json provenance(const RunConfig& rc) { return {{"seed", rc.seed()}, {"config", rc.echo()}}; }

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json inclusion_json(const std::vector<std::string>& names, const VectorXd& v) {
  json o = json::object();
  for (Index k = 0; k < v.size(); ++k) o[names[static_cast<std::size_t>(k)]] = v(k);
  return o;
}

inline std::string fmt(double v) { return format_number(v); }

// ---- commands

inline int cmd_simulate(const RunConfig& rc, std::ostream& log) {
  const auto cfg = generative_config(rc);
  RngStream rng(rc.seed(), stream_id({0x5133}));
  const auto gen = generate(cfg, rng);
  const auto dir = prepare_out_dir(rc);
  const auto comments = rc.comment_lines();
  write_text(dir / "individuals.csv", individuals_csv(gen.dataset, comments));
  write_text(dir / "groups.csv", groups_csv(gen.dataset, comments));

  json truth = provenance(rc);
  json groups = json::array();
  for (Index j = 0; j < cfg.J; ++j) {
    groups.push_back({{"group_id", gen.dataset.group_ids[static_cast<std::size_t>(j)]},
                      {"mu", gen.truth.mu(j)},
                      {"mu_diff", gen.truth.mu_diff(j)}});
  }
  truth["groups"] = groups;
  write_json(dir / "truth.json", truth);
  log << "simulate: " << cfg.J << " groups, " << cfg.K() << " covariates written to " << dir.string() << "\n";
  return 0;
}

inline HdidDataset load_dataset(const RunConfig& rc) {
  const auto ind = rc.get<std::string>("data.individuals");
  const auto grp = rc.get<std::string>("data.groups");
  if (ind.empty() || grp.empty()) throw ConfigError("fit needs --individuals and --groups");
  return assemble_dataset(read_individuals_csv(ind), read_groups_csv(grp));
}

/// Flags a group-level variance whose posterior sits at a tiny fraction of the spread of
/// the group means it governs. Under the default 1/x variance prior the chain can be
/// absorbed near zero; a proper prior (prior.variance_shape/rate) avoids that.
inline std::vector<std::string> collapse_warnings(const PosteriorSummary& s, const HdidDataset& data, Method m) {
  std::vector<double> pre, diff;
  for (const auto& g : summarize_groups(data)) {
    if (g.n_pre > 0) pre.push_back(g.mean_pre);
    if (g.n_pre > 0 && g.n_post > 0) diff.push_back(g.mean_post - g.mean_pre);
  }
  auto spread = [](const std::vector<double>& v) {
    return v.size() < 2 ? 0.0 : sample_variance(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
  };
  std::vector<std::string> out;
  for (auto [name, ref] : {std::pair{"tau2_change", spread(diff)}, {"tau2_baseline", spread(pre)}}) {
    const auto* p = s.find(name);
    if (p && ref > 0.0 && p->upper < 1e-2 * ref) {
      out.push_back(to_string(m) + ": " + name + " posterior collapsed toward 0 (97.5% quantile " +
                    format_number(p->upper) + "); consider prior.variance_shape/variance_rate");
    }
  }
  return out;
}

inline int cmd_fit(const RunConfig& rc, std::ostream& log) {
  const HdidDataset data = load_dataset(rc);
  const Index K = data.num_covariates();
  const PriorConfig priors = prior_config(rc, K);
  const auto ms = methods(rc);

  json out = provenance(rc);
  out["groups"] = data.num_groups();
  out["covariates"] = data.covariate_names;
  std::vector<std::string> warnings;     // from input validation
  std::vector<std::string> diagnostics;  // from the fitted chains
  std::vector<PosteriorSummary> summaries;
  for (Method m : ms) {
    const ModelSpec spec = model_spec(rc, m);
    const auto report = validate(data, spec, priors);
    if (!report.ok()) throw DataError(report.violations.front());
    if (warnings.empty()) warnings = report.warnings;
    RngStream rng(rc.seed(), stream_id({0xF17, static_cast<std::uint64_t>(m)}));
    const auto result = run_sampler(data, spec, priors, rng);
    summaries.push_back(summarize_posterior(result, data, spec));
    for (auto& w : collapse_warnings(summaries.back(), data, m)) diagnostics.push_back(std::move(w));
    log << "fit: " << to_string(m) << " done (" << result.draw_count << " draws)\n";
  }
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  for (const auto& w : diagnostics) log << "warning: " << w << "\n";
  out["warnings"] = warnings;
  out["diagnostics"] = diagnostics;

  json fits = json::object();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto& s = summaries[i];
    json params = json::array();
    for (const auto& p : s.parameters) {
      params.push_back({{"name", p.name},
                        {"mean", p.mean},
                        {"sd", p.sd},
                        {"lower", p.lower},
                        {"median", p.median},
                        {"upper", p.upper}});
    }
    json inc = {{"change", inclusion_json(s.covariate_names, s.change_inclusion)},
                {"baseline", inclusion_json(s.covariate_names, s.baseline_inclusion)}};
    if (s.exposure_inclusion.size() > 0) inc["exposure"] = inclusion_json(s.covariate_names, s.exposure_inclusion);
    fits[to_string(ms[i])] = {{"draws", s.draws}, {"parameters", params}, {"inclusion", inc}};
  }
  out["methods"] = fits;

  // interval table: one row per parameter, three columns per method
  std::vector<std::string> rows;
  for (const auto& s : summaries) {
    for (const auto& p : s.parameters) {
      if (std::find(rows.begin(), rows.end(), p.name) == rows.end()) rows.push_back(p.name);
    }
  }
  std::string table = csv::comment_block(rc.comment_lines()) + "parameter";
  for (Method m : ms) {
    const auto n = to_string(m);
    table += "," + n + "_mean," + n + "_lower," + n + "_upper";
  }
  table += "\n";
  for (const auto& r : rows) {
    table += csv::quote(r);
    for (const auto& s : summaries) {
      const auto* p = s.find(r);
      table += p ? "," + fmt(p->mean) + "," + fmt(p->lower) + "," + fmt(p->upper) : ",,,";
    }
    table += "\n";
  }

  const auto dir = prepare_out_dir(rc);
  write_json(dir / "posterior.json", out);
  write_text(dir / "intervals.csv", table);
  return 0;
}

inline json report_json(const StudyReport& r, const std::vector<std::string>& names) {
  json j = {{"replications", r.replications}, {"failed", r.failed},       {"bias", r.bias},
            {"bias_moe", r.bias_moe},         {"mse", r.mse},             {"mse_moe", r.mse_moe},
            {"coverage", r.coverage},         {"change_predictors", r.change_predictors},
            {"baseline_predictors", r.baseline_predictors}};
  if (r.change_inclusion.size() > 0) {
    j["change_inclusion"] = inclusion_json(names, r.change_inclusion);
    j["baseline_inclusion"] = inclusion_json(names, r.baseline_inclusion);
  }
  if (!r.warning.empty()) j["warning"] = r.warning;
  return j;
}

inline std::string report_csv_fields(const StudyReport& r) {
  return std::to_string(r.replications) + "," + std::to_string(r.failed) + "," + fmt(r.bias) + "," + fmt(r.bias_moe) +
         "," + fmt(r.mse) + "," + fmt(r.mse_moe) + "," + fmt(r.coverage) + "," + fmt(r.change_predictors) + "," +
         fmt(r.baseline_predictors);
}

constexpr const char* kReportHeader =
    "replications,failed,bias,bias_moe,mse,mse_moe,coverage,change_predictors,baseline_predictors";

inline std::string method_study_csv(const MethodStudy& ms, const std::vector<std::string>& comments) {
  std::string out = csv::comment_block(comments) + "J,method," + kReportHeader;
  for (const auto& n : ms.covariate_names) out += ",change_incl_" + n;
  for (const auto& n : ms.covariate_names) out += ",baseline_incl_" + n;
  out += "\n";
  for (std::size_t i = 0; i < ms.methods.size(); ++i) {
    const auto& r = ms.reports[i];
    out += std::to_string(ms.J) + "," + to_string(ms.methods[i]) + "," + report_csv_fields(r);
    const auto K = static_cast<Index>(ms.covariate_names.size());
    for (const VectorXd* v : {&r.change_inclusion, &r.baseline_inclusion}) {
      for (Index k = 0; k < K; ++k) out += "," + (v->size() == K ? fmt((*v)(k)) : std::string());
    }
    out += "\n";
  }
  return out;
}

inline std::string choice_grid_csv(const std::vector<ChoiceCell>& cells, const std::vector<std::string>& comments) {
  std::string out = csv::comment_block(comments) + "covariate,choice," + kReportHeader + "\n";
  for (const auto& c : cells) {
    out += "X" + std::to_string(c.role) + "," + std::to_string(c.choice) + "," + report_csv_fields(c.report) + "\n";
  }
  return out;
}

inline int cmd_study(const RunConfig& rc, std::ostream& log) {
  const auto st = study_settings(rc);
  const auto kind = rc.get<std::string>("study.kind");
  if (kind != "methods" && kind != "grid" && kind != "both") {
    throw ConfigError("study.kind must be methods, grid or both");
  }
  const auto comments = rc.comment_lines();
  const auto dir = prepare_out_dir(rc);
  auto warn = [&log](const std::string& where, const StudyReport& r) {
    if (!r.warning.empty()) log << "warning: " << where << ": " << r.warning << "\n";
  };

  if (kind == "methods" || kind == "both") {
    const int J = rc.get<int>("data.J");
    if (J < 2) throw ConfigError("data.J must be >= 2 for the method study");
    const auto ms = methods(rc);
    log << "study: " << ms.size() << " methods x " << st.replications << " replications at J=" << J << "\n";
    const auto res = run_method_study(J, st, ms);
    json j = provenance(rc);
    j["J"] = J;
    json rows = json::array();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      warn(to_string(ms[i]), res.reports[i]);
      json r = report_json(res.reports[i], res.covariate_names);
      r["method"] = to_string(ms[i]);
      rows.push_back(r);
    }
    j["methods"] = rows;
    write_text(dir / "method_study.csv", method_study_csv(res, comments));
    write_json(dir / "method_study.json", j);
  }
  if (kind == "grid" || kind == "both") {
    const auto roles = rc.get<std::vector<int>>("study.roles");
    const auto choices = rc.get<std::vector<int>>("study.choices");
    log << "study: choice grid " << roles.size() << " x " << choices.size() << " cells x " << st.replications
        << " replications\n";
    const auto cells = run_choice_grid(st, roles, choices);
    json j = provenance(rc);
    json rows = json::array();
    for (const auto& c : cells) {
      warn("X" + std::to_string(c.role) + " choice " + std::to_string(c.choice), c.report);
      json r = report_json(c.report, {"X" + std::to_string(c.role)});
      r["covariate"] = "X" + std::to_string(c.role);
      r["choice"] = c.choice;
      rows.push_back(r);
    }
    j["cells"] = rows;
    write_text(dir / "choice_grid.csv", choice_grid_csv(cells, comments));
    write_json(dir / "choice_grid.json", j);
  }
  return 0;
}

inline std::string bias_csv(const SweepResult& r, const std::vector<std::string>& comments) {
  std::string out = csv::comment_block(comments) + "inclusion,no_adjust,adjust\n";
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    out += r.labels[i] + "," + fmt(r.no_adjust[i]) + "," + fmt(r.adjust[i]) + "\n";
  }
  return out;
}

inline int cmd_bias(const RunConfig& rc, std::ostream& log) {
  const auto cfg = generative_config(rc);
  SweepOptions opt;
  opt.include_intercepts = rc.get<bool>("bias.include_intercepts");
  opt.workers = rc.workers();
  opt.order.clear();
  for (int k : rc.get<std::vector<int>>("bias.order")) opt.order.push_back(k - 1);
  const int reps = rc.get<int>("bias.replications");
  log << "bias: " << reps << " generated designs at J=" << cfg.J << "\n";
  const auto res = bias_sweep(cfg, reps, rc.seed(), opt);
  const auto dir = prepare_out_dir(rc);
  write_text(dir / "bias.csv", bias_csv(res, rc.comment_lines()));
  return 0;
}

// ---- entry point

/// Runs the command line. Exit codes: 0 success, 2 configuration error, 3 data or file
/// error, 4 numerical failure, 1 anything else.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical difference-in-differences with spike-and-slab selection", "hdid"};
  app.require_subcommand(1);
  FlagValues f;
  std::optional<Command> chosen;

  auto add_common = [&](CLI::App* sub, Command cmd) {
    sub->add_option("--config", f.config_path, "flat JSON config with dotted keys");
    sub->add_option("--seed", f.seed, "base seed (unsigned 64-bit)");
    sub->add_option("--workers", f.workers, "worker threads");
    sub->add_option("--out", f.out, "output directory");
    sub->callback([&chosen, cmd] { chosen = cmd; });
  };
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(sim, Command::Simulate);
  sim->add_option("--j", f.J, "number of groups");

  auto* fit = app.add_subcommand("fit", "fit observed data with one or more selection methods");
  add_common(fit, Command::Fit);
  fit->add_option("--individuals", f.individuals, "individuals CSV (group_id,period,y)");
  fit->add_option("--groups", f.groups, "groups CSV (group_id,T,covariates...)");
  fit->add_option("--method", f.methods, "method name (repeatable)");
  fit->add_option("--iterations", f.iterations, "chain length");
  fit->add_option("--burnin", f.burn_in, "burn-in iterations");

  auto* study = app.add_subcommand("study", "simulation study: method comparison and/or choice grid");
  add_common(study, Command::Study);
  study->add_option("--kind", f.kind, "methods, grid or both");
  study->add_option("--method", f.methods, "method name (repeatable)");
  study->add_option("--j", f.J, "number of groups for the method study");
  study->add_option("--replications", f.replications, "replications per cell");
  study->add_option("--iterations", f.iterations, "chain length");
  study->add_option("--burnin", f.burn_in, "burn-in iterations");

  auto* bias = app.add_subcommand("bias", "omitted-variable bias sweep over nested inclusion sets");
  add_common(bias, Command::Bias);
  bias->add_option("--j", f.J, "number of groups");
  bias->add_option("--replications", f.replications, "generated designs to average over");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig rc = resolve_config(*chosen, f, std::getenv("HDID_SEED"));
    switch (*chosen) {
      case Command::Simulate: return cmd_simulate(rc, err);
      case Command::Fit: return cmd_fit(rc, err);
      case Command::Study: return cmd_study(rc, err);
      case Command::Bias: return cmd_bias(rc, err);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameter& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace hdid::cli
