// Command-line front end: estimates the expected value of sample information
// across candidate trial sample sizes with the moment-matching method plus
// Bayesian non-linear regression, validated against a nested Monte Carlo
// reference estimator.
//
// Subcommands: psa, evppi, evsi-curve, oracle, compare.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>

#include "voi/common.hpp"
#include "voi/pipeline.hpp"
#include "voi/table.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string model;
  std::string oracle_n;
  std::string seed;
  int exercise = 0;
  int q = 0;
  long long n_min = 0;
  long long n_max = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat key = value config file");
    app->add_option("--seed", seed, "master seed (u64)");
    app->add_option("--out", out_dir, "output directory");
    app->add_option("--model", model, "bk, bk3 or normal-toy");
    app->add_option("--exercise", exercise, "data collection exercise (1-5)");
    app->add_option("--q", q, "quantile design size");
    app->add_option("--n-min", n_min, "smallest candidate sample size");
    app->add_option("--n-max", n_max, "largest candidate sample size");
  }

  voi::RunConfig resolve() const {
    voi::RunConfig cfg;
    if (!config_path.empty()) cfg = voi::load_run_config(config_path);
    if (!seed.empty()) {
      try {
        cfg.seed = std::stoull(seed);
      } catch (const std::exception&) {
        throw voi::ConfigError("--seed expects an unsigned integer, got '" + seed + "'");
      }
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!model.empty()) cfg.model = model;
    if (exercise > 0) cfg.exercise = exercise;
    if (q > 0) cfg.q = q;
    if (n_min > 0) cfg.n_min = n_min;
    if (n_max > 0) cfg.n_max = n_max;
    if (!oracle_n.empty()) {
      cfg.oracle_n.clear();
      std::string cur;
      for (char c : oracle_n + ",") {
        if (c == ',') {
          if (!cur.empty()) cfg.oracle_n.push_back(voi::parse_int(cur));
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
    }
    return cfg;
  }
};

void run_psa_summary(const voi::RunConfig& cfg, bool with_evppi) {
  voi::validate(cfg);
  const voi::Model model = voi::make_model(cfg.model, cfg.toy);
  const voi::StudyDesign study = voi::make_study(model, cfg.exercise, 0);
  const voi::ParameterDraws draws = voi::sample_prior(model, cfg.s, voi::substream(cfg.seed, voi::Stream::kPsa));
  const voi::InbDraws inb = voi::compute_inb(voi::net_benefit(draws, model), model.spec().reference_arm);
  const voi::InbMoments moments = voi::inb_moments(inb);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = (std::filesystem::path(cfg.out_dir) / "psa_summary.csv").string();
  if (!with_evppi) {
    voi::write_table(path, {"s", "mu", "sigma2"},
                     {{std::to_string(cfg.s), voi::fmt_g12(moments.mean(0)), voi::fmt_g12(moments.cov(0, 0))}});
  } else {
    Eigen::MatrixXd phi(cfg.s, study.data_dimension());
    for (int k = 0; k < study.data_dimension(); ++k) {
      phi.col(k) = draws.values.col(study.focal_parameters[k]);
    }
    const voi::ConditionalInb cond = cfg.fitted_values_in.empty()
                                         ? voi::fit_conditional_inb(inb, phi, cfg.smoother)
                                         : voi::read_fitted_values(cfg.fitted_values_in);
    voi::write_table(path, {"s", "mu", "sigma2", "sigma2_phi", "evppi"},
                     {{std::to_string(cfg.s), voi::fmt_g12(cond.mean(0)), voi::fmt_g12(moments.cov(0, 0)),
                       voi::fmt_g12(cond.cov(0, 0)), voi::fmt_g12(voi::evppi(cond))}});
  }
  std::printf("wrote %s\n", path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EVSI across sample sizes via moment matching and non-linear regression"};
  app.require_subcommand(1);

  CommonFlags psa_flags, evppi_flags, curve_flags, oracle_flags;
  std::vector<std::string> compare_configs;
  std::string compare_out;

  CLI::App* psa = app.add_subcommand("psa", "PSA moments of the incremental net benefit");
  psa_flags.attach(psa);
  CLI::App* evppi_cmd = app.add_subcommand("evppi", "conditional INB fit and the EVPPI ceiling");
  evppi_flags.attach(evppi_cmd);
  CLI::App* curve = app.add_subcommand("evsi-curve", "full pipeline: EVSI curve with credible-level bands");
  curve_flags.attach(curve);
  CLI::App* oracle = app.add_subcommand("oracle", "nested Monte Carlo reference estimates");
  oracle_flags.attach(oracle);
  oracle->add_option("--n", oracle_flags.oracle_n, "comma-separated sample sizes");
  CLI::App* compare = app.add_subcommand("compare", "net economic value of competing designs");
  compare->add_option("--config", compare_configs, "one config file per design (repeatable)")->required();
  compare->add_option("--out", compare_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (psa->parsed()) {
      run_psa_summary(psa_flags.resolve(), false);
    } else if (evppi_cmd->parsed()) {
      run_psa_summary(evppi_flags.resolve(), true);
    } else if (curve->parsed()) {
      const voi::PipelineResult result = voi::run_pipeline(curve_flags.resolve());
      for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
    } else if (oracle->parsed()) {
      const voi::OracleRunResult result = voi::run_oracle(oracle_flags.resolve());
      for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
    } else if (compare->parsed()) {
      std::vector<voi::RunConfig> configs;
      for (const auto& path : compare_configs) configs.push_back(voi::load_run_config(path));
      if (!compare_out.empty()) {
        for (auto& cfg : configs) cfg.out_dir = compare_out;
      }
      const voi::DesignComparison result = voi::compare_designs(configs);
      for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
      for (const auto& e : result.entries) {
        std::printf("%s: optimal n = %lld, net value = %s%s\n", e.label.c_str(), e.optimal_n,
                    voi::fmt_g12(e.optimal_net_value).c_str(),
                    e.worthwhile ? "" : " (never worthwhile)");
      }
    }
  } catch (const voi::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
