#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voi/conditional_inb.hpp"
#include "voi/model.hpp"
#include "voi/moment_match.hpp"
#include "voi/nlreg.hpp"
#include "voi/oracle.hpp"

namespace voi {

// Everything a run needs, loadable from a flat "key = value" config file
// ('#' comments). CLI flags override file values.
struct RunConfig {
  std::string model = "bk";
  int exercise = 1;
  long long s = 100000;        // PSA draws
  int q = 50;                  // design size
  long long n_min = 10;
  long long n_max = 200;
  long long m = 10000;         // posterior draws per design row
  std::uint64_t seed = 1;
  std::vector<double> quantiles = {0.025, 0.25, 0.5, 0.75, 0.975};
  McmcConfig mcmc;
  double h_var_factor = 200.0;  // 2000 matches the alternative precision parameterization
  double sigma_df = 1.0;
  ToyParams toy;
  SmootherConfig smoother;
  int grid_size = 0;            // 0: use q points
  double cost_fixed = 0.0;
  double cost_per_participant = 0.0;
  double population_multiplier = 1.0;
  std::string label;            // defaults to "<model>-ex<exercise>"
  std::string variance_points_in;  // resume from an exported variance table
  std::string fitted_values_in;    // externally computed conditional INB
  long long oracle_s_out = 2000;
  long long oracle_m_in = 2000;
  std::vector<long long> oracle_n;
  std::string out_dir = ".";

  std::string display_label() const;
};

RunConfig parse_run_config(const std::vector<std::pair<std::string, std::string>>& entries);
RunConfig load_run_config(const std::string& path);
void validate(const RunConfig& cfg);

struct PipelineResult {
  RunConfig config;
  double mu = 0.0;          // mean INB of the conditional fit sample
  double sigma2 = 0.0;      // PSA variance of INB
  double sigma2_phi = 0.0;
  double evppi = 0.0;
  ConditionalInb conditional;
  std::vector<PosteriorVariancePoint> points;
  VarianceObservations observations;
  NlregPosterior posterior;
  EvsiCurve curve;
  SimulationBudget budget;
  long long psa_evaluations = 0;
  std::vector<std::string> files;  // paths written, manifest last
};

// PSA -> conditional INB -> quantile design -> posterior variances ->
// non-linear regression -> EVSI curve, writing the six plot-ready files
// (psa_summary, variance_points, posterior_draws, evsi_curve, residuals,
// manifest). Re-running with an identical config reproduces the files byte
// for byte; the regression consumes variance points at file precision so a
// resumed run is identical to the original.
PipelineResult run_pipeline(const RunConfig& cfg);

struct OracleRunResult {
  std::vector<OracleEstimate> estimates;  // one per requested n
  std::vector<long long> n_values;
  long long total_evaluations = 0;
  std::vector<std::string> files;
};

OracleRunResult run_oracle(const RunConfig& cfg);

struct DesignComparison {
  struct Entry {
    std::string label;
    EvsiCurve curve;
    std::vector<long long> n_grid;
    std::vector<double> evsi_median;
    std::vector<double> cost;
    std::vector<double> net_value;
    long long optimal_n = 0;
    double optimal_net_value = 0.0;
    bool worthwhile = false;  // false when net value is negative everywhere
  };
  std::vector<Entry> entries;  // sorted by label
  std::vector<std::string> files;
};

// Net economic value (population multiplier * EVSI - cost) per design over a
// shared sample-size grid; optimal N is the grid argmax of the median-level
// net value, ties broken toward the smaller study.
DesignComparison compare_designs(const std::vector<RunConfig>& configs);

struct NetValueOptimum {
  long long n = 0;
  double net_value = 0.0;
  bool worthwhile = false;
};

NetValueOptimum net_value_optimum(const std::vector<long long>& grid, const std::vector<double>& evsi,
                                  double multiplier, double cost_fixed, double cost_per_participant);

}  // namespace voi
