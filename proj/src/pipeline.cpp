#include "voi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "voi/common.hpp"
#include "voi/table.hpp"

namespace voi {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::string RunConfig::display_label() const {
  if (!label.empty()) return label;
  if (model == "normal-toy") return model;
  return model + "-ex" + std::to_string(exercise);
}

RunConfig parse_run_config(const std::vector<std::pair<std::string, std::string>>& entries) {
  RunConfig cfg;
  for (const auto& [key, value] : entries) {
    try {
      if (key == "model") cfg.model = value;
      else if (key == "exercise") cfg.exercise = static_cast<int>(parse_int(value));
      else if (key == "s") cfg.s = parse_int(value);
      else if (key == "q") cfg.q = static_cast<int>(parse_int(value));
      else if (key == "n_min") cfg.n_min = parse_int(value);
      else if (key == "n_max") cfg.n_max = parse_int(value);
      else if (key == "m") cfg.m = parse_int(value);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "quantiles") {
        cfg.quantiles.clear();
        for (const auto& item : split_list(value)) cfg.quantiles.push_back(parse_double(item));
      } else if (key == "mcmc_chains") cfg.mcmc.chains = static_cast<int>(parse_int(value));
      else if (key == "mcmc_burnin") cfg.mcmc.burn_in = static_cast<int>(parse_int(value));
      else if (key == "mcmc_keep") cfg.mcmc.keep = static_cast<int>(parse_int(value));
      else if (key == "h_var_factor") cfg.h_var_factor = parse_double(value);
      else if (key == "sigma_df") cfg.sigma_df = parse_double(value);
      else if (key == "toy_mu0") cfg.toy.mu0 = parse_double(value);
      else if (key == "toy_sigma0") cfg.toy.sigma0 = parse_double(value);
      else if (key == "toy_data_sd") cfg.toy.data_sd = parse_double(value);
      else if (key == "smoother_basis") cfg.smoother.basis_per_dim = static_cast<int>(parse_int(value));
      else if (key == "smoother_max_draws") cfg.smoother.max_fit_draws = parse_int(value);
      else if (key == "grid_size") cfg.grid_size = static_cast<int>(parse_int(value));
      else if (key == "cost_fixed") cfg.cost_fixed = parse_double(value);
      else if (key == "cost_per_participant") cfg.cost_per_participant = parse_double(value);
      else if (key == "population_multiplier") cfg.population_multiplier = parse_double(value);
      else if (key == "label") cfg.label = value;
      else if (key == "variance_points_in") cfg.variance_points_in = value;
      else if (key == "fitted_values_in") cfg.fitted_values_in = value;
      else if (key == "oracle_s_out") cfg.oracle_s_out = parse_int(value);
      else if (key == "oracle_m_in") cfg.oracle_m_in = parse_int(value);
      else if (key == "oracle_n") {
        cfg.oracle_n.clear();
        for (const auto& item : split_list(value)) cfg.oracle_n.push_back(parse_int(item));
      } else if (key == "out") cfg.out_dir = value;
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_key_values(path));
}

void validate(const RunConfig& cfg) {
  if (cfg.model != "bk" && cfg.model != "bk3" && cfg.model != "normal-toy") {
    throw ConfigError("unknown model '" + cfg.model + "'");
  }
  if (cfg.s < 2) throw ConfigError("s must be at least 2");
  if (cfg.q < 2) throw ConfigError("q must be at least 2");
  if (cfg.m < 2) throw ConfigError("m must be at least 2");
  if (cfg.n_min < 1 || cfg.n_min >= cfg.n_max) throw ConfigError("need 1 <= n_min < n_max");
  if (cfg.quantiles.empty()) throw ConfigError("quantiles must not be empty");
  for (std::size_t i = 0; i < cfg.quantiles.size(); ++i) {
    if (!(cfg.quantiles[i] > 0.0 && cfg.quantiles[i] < 1.0)) {
      throw ConfigError("quantiles must lie strictly inside (0, 1)");
    }
    if (i > 0 && !(cfg.quantiles[i] > cfg.quantiles[i - 1])) {
      throw ConfigError("quantiles must be strictly increasing");
    }
  }
  if (cfg.mcmc.chains < 1 || cfg.mcmc.burn_in < 0 || cfg.mcmc.keep < 4) {
    throw ConfigError("invalid MCMC settings");
  }
  if (cfg.h_var_factor <= 0.0) throw ConfigError("h_var_factor must be positive");
  if (cfg.sigma_df <= 0.0) throw ConfigError("sigma_df must be positive");
  if (cfg.grid_size < 0) throw ConfigError("grid_size must be nonnegative");
  if (cfg.population_multiplier < 0.0) throw ConfigError("population_multiplier must be nonnegative");
  if (cfg.oracle_s_out < 2 || cfg.oracle_m_in < 2) throw ConfigError("oracle budgets must be at least 2");
  if (cfg.smoother.basis_per_dim < 4) throw ConfigError("smoother_basis must be at least 4");
}

namespace {

std::vector<long long> evaluation_grid(const RunConfig& cfg) {
  const int size = cfg.grid_size > 0 ? cfg.grid_size : cfg.q;
  std::vector<long long> grid;
  for (int i = 0; i < size; ++i) {
    const double t = size == 1 ? double(cfg.n_min)
                               : double(cfg.n_min) + (double(cfg.n_max) - double(cfg.n_min)) *
                                                         double(i) / double(size - 1);
    grid.push_back(static_cast<long long>(std::llround(t)));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::string join_warnings(const std::vector<std::string>& warnings) {
  if (warnings.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < warnings.size(); ++i) {
    if (i) out += " | ";
    out += warnings[i];
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  write_text_file(path, os.str());
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg) {
  validate(cfg);
  const Model model = make_model(cfg.model, cfg.toy);
  if (model.spec().arm_count != 2) {
    throw std::invalid_argument(
        "run_pipeline: the curve file format is dual-decision; use the oracle subcommand "
        "for multi-arm models");
  }
  const StudyDesign study = make_study(model, cfg.exercise, 0);
  fs::create_directories(cfg.out_dir);

  PipelineResult result;
  result.config = cfg;

  // PSA stage.
  const ParameterDraws draws = sample_prior(model, cfg.s, substream(cfg.seed, Stream::kPsa));
  const Eigen::MatrixXd nb = net_benefit(draws, model);
  const InbDraws inb = compute_inb(nb, model.spec().reference_arm);
  const InbMoments moments = inb_moments(inb);
  result.sigma2 = moments.cov(0, 0);
  result.psa_evaluations = cfg.s;

  // Conditional INB (EVPPI screening stage).
  Eigen::MatrixXd phi(cfg.s, study.data_dimension());
  for (int k = 0; k < study.data_dimension(); ++k) phi.col(k) = draws.values.col(study.focal_parameters[k]);
  ConditionalInb cond;
  if (!cfg.fitted_values_in.empty()) {
    cond = read_fitted_values(cfg.fitted_values_in);
    if (cond.fitted.cols() != 1) {
      throw std::runtime_error("fitted-values file must have exactly one non-reference arm column");
    }
  } else {
    cond = fit_conditional_inb(inb, phi, cfg.smoother);
  }
  result.mu = cond.mean(0);
  result.sigma2_phi = cond.cov(0, 0);
  result.evppi = evppi(cond);
  result.conditional = cond;

  // Quantile design and posterior variances.
  const QuantileDesign design = build_quantile_design(phi, cfg.q, cfg.n_min, cfg.n_max, cfg.seed);
  bool resumed = false;
  if (!cfg.variance_points_in.empty()) {
    result.points = read_variance_points(cfg.variance_points_in);
    resumed = true;
  } else {
    result.points = estimate_posterior_variances(design, model, study, cfg.m, cfg.seed, &result.budget);
  }
  // The regression sees the exported representation, so resumed runs
  // reproduce the original bit for bit.
  for (auto& p : result.points) {
    p.sigma = p.sigma.unaryExpr([](double x) { return round_to_file_precision(x); });
  }

  // Non-linear regression and the EVSI curve.
  result.observations = make_variance_observations(moments, result.points, result.sigma2_phi);
  const NlregPriorConfig priors = default_nlreg_priors(result.observations, cfg.h_var_factor, cfg.sigma_df);
  result.posterior = fit_variance_curve(result.observations, priors, cfg.mcmc, cfg.seed);
  result.curve = evsi_curve(result.posterior, cond, result.mu, evaluation_grid(cfg), cfg.quantiles);
  const auto residuals = residual_diagnostics(result.posterior, result.observations);

  // Output files.
  const fs::path dir(cfg.out_dir);
  const std::string psa_path = (dir / "psa_summary.csv").string();
  write_table(psa_path, {"s", "mu", "sigma2", "sigma2_phi", "evppi"},
              {{std::to_string(cfg.s), fmt_g12(result.mu), fmt_g12(result.sigma2),
                fmt_g12(result.sigma2_phi), fmt_g12(result.evppi)}});
  const std::string points_path = (dir / "variance_points.csv").string();
  write_variance_points(points_path, result.points);
  const std::string draws_path = (dir / "posterior_draws.csv").string();
  write_posterior_draws(draws_path, result.posterior);
  const std::string curve_path = (dir / "evsi_curve.csv").string();
  write_evsi_curve(curve_path, result.curve);
  const std::string residual_path = (dir / "residuals.csv").string();
  write_residuals(residual_path, residuals);

  const long long total_evals = result.psa_evaluations + result.budget.model_evaluations;
  std::vector<std::pair<std::string, std::string>> manifest{
      {"tool_version", kToolVersion},
      {"label", cfg.display_label()},
      {"model", cfg.model},
      {"exercise", std::to_string(cfg.exercise)},
      {"seed", std::to_string(cfg.seed)},
      {"s", std::to_string(cfg.s)},
      {"q", std::to_string(cfg.q)},
      {"m", std::to_string(cfg.m)},
      {"n_min", std::to_string(cfg.n_min)},
      {"n_max", std::to_string(cfg.n_max)},
      {"mu", fmt_g12(result.mu)},
      {"sigma2", fmt_g12(result.sigma2)},
      {"sigma2_phi", fmt_g12(result.sigma2_phi)},
      {"evppi", fmt_g12(result.evppi)},
      {"psa_evaluations", std::to_string(result.psa_evaluations)},
      {"posterior_updates", std::to_string(result.budget.posterior_updates)},
      {"posterior_draws", std::to_string(result.budget.posterior_draws)},
      {"moment_match_evaluations", std::to_string(result.budget.model_evaluations)},
      {"model_evaluations", std::to_string(total_evals)},
      {"h_prior_mean", fmt_g12(result.posterior.priors.h_mean)},
      {"h_prior_var", fmt_g12(result.posterior.priors.h_var)},
      {"sigma_prior_loc", fmt_g12(result.posterior.priors.sigma_loc)},
      {"sigma_prior_scale", fmt_g12(result.posterior.priors.sigma_scale)},
      {"sigma_prior_df", fmt_g12(result.posterior.priors.sigma_df)},
      {"rhat_h", fmt_g12(result.posterior.rhat_h)},
      {"rhat_sigma_eps", fmt_g12(result.posterior.rhat_sigma_eps)},
      {"accept_rate_mean",
       fmt_g12(std::accumulate(result.posterior.accept_rate.begin(),
                               result.posterior.accept_rate.end(), 0.0) /
               double(result.posterior.accept_rate.size()))},
      {"band_note", result.curve.band_note},
      {"warnings", join_warnings(result.posterior.warnings)},
  };
  if (resumed) manifest.emplace_back("resumed_variance_points", cfg.variance_points_in);
  if (!cfg.fitted_values_in.empty()) manifest.emplace_back("fitted_values_in", cfg.fitted_values_in);
  const std::string manifest_path = (dir / "manifest.txt").string();
  write_manifest(manifest_path, manifest);

  result.files = {psa_path, points_path, draws_path, curve_path, residual_path, manifest_path};
  return result;
}

OracleRunResult run_oracle(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.oracle_n.empty()) throw ConfigError("oracle requires a nonempty oracle_n list");
  const Model model = make_model(cfg.model, cfg.toy);
  const StudyDesign study = make_study(model, cfg.exercise, 0);
  fs::create_directories(cfg.out_dir);

  OracleRunResult result;
  result.n_values = cfg.oracle_n;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < cfg.oracle_n.size(); ++i) {
    const long long n = cfg.oracle_n[i];
    if (n < 0) throw ConfigError("oracle_n values must be nonnegative");
    const OracleEstimate est = nested_mc_evsi(model, study.with_sample_size(n), cfg.oracle_s_out,
                                              cfg.oracle_m_in, substream(cfg.seed, Stream::kOracleOuter,
                                                                         1000000 + i));
    result.estimates.push_back(est);
    result.total_evaluations += est.total_evaluations;
    rows.push_back({std::to_string(n), fmt_g12(est.evsi), fmt_g12(est.se),
                    std::to_string(est.s_out), std::to_string(est.m_in),
                    std::to_string(est.total_evaluations)});
  }
  const fs::path dir(cfg.out_dir);
  const std::string oracle_path = (dir / "oracle.csv").string();
  write_table(oracle_path, {"n", "evsi", "se", "s_out", "m_in", "evaluations"}, rows);
  const std::string manifest_path = (dir / "oracle_manifest.txt").string();
  write_manifest(manifest_path, {
                                    {"tool_version", kToolVersion},
                                    {"model", cfg.model},
                                    {"exercise", std::to_string(cfg.exercise)},
                                    {"seed", std::to_string(cfg.seed)},
                                    {"s_out", std::to_string(cfg.oracle_s_out)},
                                    {"m_in", std::to_string(cfg.oracle_m_in)},
                                    {"points", std::to_string(cfg.oracle_n.size())},
                                    {"total_evaluations", std::to_string(result.total_evaluations)},
                                });
  result.files = {oracle_path, manifest_path};
  return result;
}

NetValueOptimum net_value_optimum(const std::vector<long long>& grid, const std::vector<double>& evsi,
                                  double multiplier, double cost_fixed, double cost_per_participant) {
  if (grid.empty() || grid.size() != evsi.size()) {
    throw std::invalid_argument("net_value_optimum: grid/evsi size mismatch");
  }
  NetValueOptimum best;
  bool first = true;
  bool any_positive = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double net = multiplier * evsi[i] - (cost_fixed + cost_per_participant * double(grid[i]));
    if (net >= 0.0) any_positive = true;
    if (first || net > best.net_value || (net == best.net_value && grid[i] < best.n)) {
      best.n = grid[i];
      best.net_value = net;
      first = false;
    }
  }
  best.worthwhile = any_positive;
  return best;
}

DesignComparison compare_designs(const std::vector<RunConfig>& configs) {
  if (configs.empty()) throw ConfigError("compare requires at least one design");
  std::set<std::string> labels;
  for (const auto& cfg : configs) {
    if (!labels.insert(cfg.display_label()).second) {
      throw ConfigError("duplicate design label '" + cfg.display_label() + "'");
    }
    if (cfg.n_min != configs.front().n_min || cfg.n_max != configs.front().n_max ||
        cfg.grid_size != configs.front().grid_size || cfg.q != configs.front().q) {
      throw ConfigError("compare requires a shared sample-size grid across designs");
    }
  }

  DesignComparison comparison;
  const fs::path dir(configs.front().out_dir);
  fs::create_directories(dir);
  for (const auto& cfg : configs) {
    RunConfig sub = cfg;
    sub.out_dir = (dir / cfg.display_label()).string();
    const PipelineResult run = run_pipeline(sub);

    DesignComparison::Entry entry;
    entry.label = cfg.display_label();
    entry.curve = run.curve;
    entry.n_grid = run.curve.n_grid;
    const auto median_col = static_cast<Eigen::Index>(
        std::find(run.curve.levels.begin(), run.curve.levels.end(), 0.5) - run.curve.levels.begin());
    if (median_col >= static_cast<Eigen::Index>(run.curve.levels.size())) {
      throw ConfigError("compare requires the 0.5 quantile level in the curve");
    }
    for (std::size_t i = 0; i < entry.n_grid.size(); ++i) {
      entry.evsi_median.push_back(run.curve.evsi(static_cast<Eigen::Index>(i), median_col));
      entry.cost.push_back(cfg.cost_fixed + cfg.cost_per_participant * double(entry.n_grid[i]));
      entry.net_value.push_back(cfg.population_multiplier * entry.evsi_median.back() - entry.cost.back());
    }
    const NetValueOptimum best = net_value_optimum(entry.n_grid, entry.evsi_median,
                                                   cfg.population_multiplier, cfg.cost_fixed,
                                                   cfg.cost_per_participant);
    entry.optimal_n = best.n;
    entry.optimal_net_value = best.net_value;
    entry.worthwhile = best.worthwhile;
    comparison.entries.push_back(std::move(entry));
  }
  std::sort(comparison.entries.begin(), comparison.entries.end(),
            [](const auto& a, const auto& b) { return a.label < b.label; });

  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<std::string>> summary;
  for (const auto& e : comparison.entries) {
    for (std::size_t i = 0; i < e.n_grid.size(); ++i) {
      rows.push_back({e.label, std::to_string(e.n_grid[i]), fmt_g12(e.evsi_median[i]),
                      fmt_g12(e.cost[i]), fmt_g12(e.net_value[i])});
    }
    summary.push_back({e.label, std::to_string(e.optimal_n), fmt_g12(e.optimal_net_value),
                       e.worthwhile ? "yes" : "no"});
  }
  const std::string curves_path = (dir / "comparison.csv").string();
  write_table(curves_path, {"design", "n", "evsi", "cost", "net_value"}, rows);
  const std::string summary_path = (dir / "comparison_summary.csv").string();
  write_table(summary_path, {"design", "optimal_n", "optimal_net_value", "worthwhile"}, summary);
  comparison.files = {curves_path, summary_path};
  return comparison;
}

}  // namespace voi
