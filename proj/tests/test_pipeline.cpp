#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "voi/common.hpp"
#include "voi/pipeline.hpp"
#include "voi/table.hpp"

using namespace voi;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "voi_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_toy_config(const std::string& out) {
  RunConfig cfg;
  cfg.model = "normal-toy";
  cfg.s = 20000;
  cfg.q = 20;
  cfg.m = 2000;
  cfg.n_min = 1;
  cfg.n_max = 100;
  cfg.seed = 31;
  cfg.out_dir = out;
  return cfg;
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : read_key_values(path)) kv[k] = v;
  return kv;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, errors") {
  const auto entries = parse_key_values(
      "# example\n"
      "model = normal-toy\n"
      "s = 5000\n"
      "q = 25\n"
      "toy_mu0 = -0.5\n"
      "quantiles = 0.1, 0.5, 0.9\n");
  const RunConfig cfg = parse_run_config(entries);
  CHECK(cfg.model == "normal-toy");
  CHECK(cfg.s == 5000);
  CHECK(cfg.q == 25);
  CHECK(cfg.toy.mu0 == -0.5);
  CHECK(cfg.quantiles == std::vector<double>{0.1, 0.5, 0.9});
  CHECK(cfg.m == 10000);  // untouched default

  CHECK_THROWS_AS(parse_run_config({{"mystery_key", "1"}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"s", "not_a_number"}}), ConfigError);
  CHECK_THROWS_AS(parse_key_values("just some text\n"), ConfigError);

  RunConfig bad = cfg;
  bad.quantiles = {0.9, 0.1};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad.quantiles = {0.0, 0.5};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.n_min = 50;
  bad.n_max = 50;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.exercise = 9;
  CHECK_THROWS_WITH_AS(run_pipeline(bad), doctest::Contains("unknown exercise"), ConfigError);
}

TEST_CASE("pipeline writes six reproducible files") {
  const fs::path dir_a = fresh_dir("run_a");
  const fs::path dir_b = fresh_dir("run_b");
  RunConfig cfg = small_toy_config(dir_a.string());
  const PipelineResult a = run_pipeline(cfg);
  REQUIRE(a.files.size() == 6);
  for (const auto& f : a.files) {
    CAPTURE(f);
    CHECK(fs::exists(f));
    CHECK(fs::file_size(f) > 0);
  }

  cfg.out_dir = dir_b.string();
  run_pipeline(cfg);
  for (const char* name : {"psa_summary.csv", "variance_points.csv", "posterior_draws.csv",
                           "evsi_curve.csv", "residuals.csv", "manifest.txt"}) {
    CHECK(slurp((dir_a / name).string()) == slurp((dir_b / name).string()));
  }

  // a different seed changes the curve
  cfg.seed += 1;
  cfg.out_dir = fresh_dir("run_c").string();
  run_pipeline(cfg);
  CHECK(slurp((dir_a / "evsi_curve.csv").string()) !=
        slurp((fs::path(cfg.out_dir) / "evsi_curve.csv").string()));
}

TEST_CASE("manifest budget equals the sum of module budgets") {
  const fs::path dir = fresh_dir("budget");
  const RunConfig cfg = small_toy_config(dir.string());
  const PipelineResult run = run_pipeline(cfg);
  const auto manifest = read_manifest((dir / "manifest.txt").string());
  CHECK(parse_int(manifest.at("psa_evaluations")) == cfg.s);
  CHECK(parse_int(manifest.at("posterior_updates")) == cfg.q);
  CHECK(parse_int(manifest.at("posterior_draws")) == cfg.q * cfg.m);
  CHECK(parse_int(manifest.at("model_evaluations")) ==
        parse_int(manifest.at("psa_evaluations")) + parse_int(manifest.at("moment_match_evaluations")));
  CHECK(run.budget.posterior_draws == cfg.q * cfg.m);
  CHECK(run.budget.model_evaluations <= cfg.q * cfg.m);
}

TEST_CASE("re-ingesting variance points reproduces the curve byte for byte") {
  const fs::path dir = fresh_dir("resume_src");
  RunConfig cfg = small_toy_config(dir.string());
  run_pipeline(cfg);

  RunConfig resumed = cfg;
  resumed.variance_points_in = (dir / "variance_points.csv").string();
  resumed.out_dir = fresh_dir("resume_dst").string();
  run_pipeline(resumed);
  CHECK(slurp((dir / "evsi_curve.csv").string()) ==
        slurp((fs::path(resumed.out_dir) / "evsi_curve.csv").string()));
  CHECK(slurp((dir / "posterior_draws.csv").string()) ==
        slurp((fs::path(resumed.out_dir) / "posterior_draws.csv").string()));
}

TEST_CASE("fitted-values ingestion feeds the pipeline") {
  const fs::path dir = fresh_dir("fitted_in");
  RunConfig cfg = small_toy_config((dir / "base").string());
  const PipelineResult base = run_pipeline(cfg);

  // Export fitted values equal to the focal draws themselves (the exact
  // conditional mean for the toy model) and rerun through the file path.
  const ParameterDraws draws =
      sample_prior(make_toy_model(cfg.toy), cfg.s, substream(cfg.seed, Stream::kPsa));
  std::vector<std::vector<std::string>> rows;
  for (long long i = 0; i < cfg.s; ++i) rows.push_back({fmt_g12(draws.values(i, 0))});
  const std::string fitted_path = (dir / "fitted.csv").string();
  write_table(fitted_path, {"inb_arm1"}, rows);

  RunConfig with_file = cfg;
  with_file.fitted_values_in = fitted_path;
  with_file.out_dir = (dir / "ingested").string();
  const PipelineResult run = run_pipeline(with_file);
  CHECK(run.evppi == doctest::Approx(base.evppi).epsilon(0.02));
}

TEST_CASE("run_oracle writes estimates and an exact budget") {
  const fs::path dir = fresh_dir("oracle");
  RunConfig cfg = small_toy_config(dir.string());
  cfg.toy.mu0 = 0.5;  // away from the max(0,.) kink, where finite-M_in bias peaks
  cfg.oracle_s_out = 400;
  cfg.oracle_m_in = 100;
  cfg.oracle_n = {0, 4};
  const OracleRunResult run = run_oracle(cfg);
  CHECK(run.total_evaluations == 2 * 400 * 101);
  const Table t = read_table((dir / "oracle.csv").string());
  REQUIRE(t.rows.size() == 2);
  CHECK(parse_int(t.rows[0][t.column("evaluations")]) == 400 * 101);

  // rows agree with the closed form within 3 SEs
  for (std::size_t i = 0; i < run.estimates.size(); ++i) {
    const double truth = closed_form_toy_evsi(cfg.toy.mu0, cfg.toy.sigma0, cfg.toy.data_sd,
                                              double(run.n_values[i]));
    CHECK(std::abs(run.estimates[i].evsi - truth) < 3.0 * run.estimates[i].se + 1e-12);
  }

  cfg.oracle_n = {};
  CHECK_THROWS_AS(run_oracle(cfg), ConfigError);
}

TEST_CASE("net value optimum by brute force over the grid") {
  // synthetic curve EVSI(n) = n / (n + 10) against cost 0.02 n
  std::vector<long long> grid;
  std::vector<double> evsi;
  for (long long n = 1; n <= 100; ++n) {
    grid.push_back(n);
    evsi.push_back(double(n) / double(n + 10));
  }
  NetValueOptimum best_brute;
  best_brute.net_value = -1e300;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double net = evsi[i] - 0.02 * double(grid[i]);
    if (net > best_brute.net_value) {
      best_brute.net_value = net;
      best_brute.n = grid[i];
    }
  }
  const NetValueOptimum best = net_value_optimum(grid, evsi, 1.0, 0.0, 0.02);
  CHECK(best.n == best_brute.n);
  CHECK(best.n == 12);
  CHECK(best.net_value == doctest::Approx(best_brute.net_value).epsilon(1e-12));
  CHECK(best.worthwhile);

  // ties break toward the smaller study
  const NetValueOptimum tie = net_value_optimum({5, 7}, {1.0, 1.0}, 1.0, 0.0, 0.0);
  CHECK(tie.n == 5);

  // negative everywhere
  const NetValueOptimum never = net_value_optimum({5, 7}, {1.0, 1.0}, 1.0, 10.0, 0.0);
  CHECK(!never.worthwhile);
}

TEST_CASE("compare_designs ranks designs and is order invariant") {
  const fs::path dir_ab = fresh_dir("compare_ab");
  const fs::path dir_ba = fresh_dir("compare_ba");

  RunConfig free_study = small_toy_config(dir_ab.string());
  free_study.label = "free";
  RunConfig pricey = free_study;
  pricey.label = "pricey";
  pricey.cost_fixed = 100.0;  // far above the EVPPI ceiling of the toy model

  const DesignComparison ab = compare_designs({free_study, pricey});
  REQUIRE(ab.entries.size() == 2);
  CHECK(ab.entries[0].label == "free");
  // zero cost: EVSI is nondecreasing, so the largest n wins
  CHECK(ab.entries[0].optimal_n == free_study.n_max);
  CHECK(ab.entries[0].worthwhile);
  CHECK(!ab.entries[1].worthwhile);
  // net value = multiplier * EVSI - cost pointwise
  for (const auto& entry : ab.entries) {
    REQUIRE(entry.curve.n_grid == entry.n_grid);
    for (std::size_t i = 0; i < entry.n_grid.size(); ++i) {
      CHECK(entry.net_value[i] == doctest::Approx(entry.evsi_median[i] - entry.cost[i]).epsilon(1e-12));
    }
  }

  RunConfig free2 = free_study, pricey2 = pricey;
  free2.out_dir = pricey2.out_dir = dir_ba.string();
  compare_designs({pricey2, free2});
  CHECK(slurp((dir_ab / "comparison.csv").string()) == slurp((dir_ba / "comparison.csv").string()));
  CHECK(slurp((dir_ab / "comparison_summary.csv").string()) ==
        slurp((dir_ba / "comparison_summary.csv").string()));

  CHECK_THROWS_AS(compare_designs({}), ConfigError);
  RunConfig mismatched = pricey;
  mismatched.n_max = free_study.n_max + 50;
  CHECK_THROWS_AS(compare_designs({free_study, mismatched}), ConfigError);
  CHECK_THROWS_AS(compare_designs({free_study, free_study}), ConfigError);
}

TEST_CASE("bk pipelines run for the combined exercises") {
  for (int exercise : {4, 5}) {
    RunConfig cfg;
    cfg.model = "bk";
    cfg.exercise = exercise;
    cfg.s = 30000;
    cfg.q = 10;
    cfg.m = 200;
    cfg.n_min = 10;
    cfg.n_max = 200;
    cfg.seed = 5 + exercise;
    cfg.out_dir = fresh_dir("bk_ex" + std::to_string(exercise)).string();
    const PipelineResult run = run_pipeline(cfg);
    CHECK(run.evppi > 0.0);
    if (exercise == 5) {
      CHECK(run.conditional.fitted.rows() == 20000);  // capped fit for d = 6
    }
    for (Eigen::Index r = 0; r < run.curve.evsi.rows(); ++r) {
      for (Eigen::Index c = 0; c < run.curve.evsi.cols(); ++c) {
        CHECK(run.curve.evsi(r, c) >= 0.0);
        CHECK(run.curve.evsi(r, c) <= run.curve.evppi_ceiling + 1e-9);
      }
    }
  }
}

TEST_CASE("multi-arm models are routed to the oracle") {
  RunConfig cfg = small_toy_config(fresh_dir("bk3").string());
  cfg.model = "bk3";
  CHECK_THROWS_AS(run_pipeline(cfg), std::invalid_argument);
}
