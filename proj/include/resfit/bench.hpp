#pragma once

// Monte Carlo benchmarks: coupling-ratio error curves, span studies for the
// linear and homophasal grids, the grid error-ratio map, the noise/N scaling
// collapse and entropy against span.
//
// Every (cell, trial) pair is an independent work unit whose noise seed is
// derived from the master seed, the cell's non-grid coordinates and the trial
// index. Results land in preallocated slots, so output does not depend on the
// number of workers or on scheduling.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "resfit/fit.hpp"
#include "resfit/model.hpp"
#include "resfit/synth.hpp"

namespace resfit {

enum class BenchKind { coupling, span, ratio_map, collapse, entropy };

const char* to_string(BenchKind kind);

struct BenchConfig {
  std::string name = "bench";
  BenchKind kind = BenchKind::coupling;
  std::vector<double> q_i;  // true internal Q axis
  double q_c_mag = 1e4;
  double phi = 0.0;
  double f_r = 5e9;  // Hz
  Background background;
  std::vector<double> sigma_n;
  std::vector<double> sigma_fr;  // Hz
  FrSpectrum fr_spectrum = FrSpectrum::white;
  std::vector<long> n_points;
  std::vector<double> span_linewidths;  // span / true linewidth
  std::vector<GridKind> grids;
  int trials_per_cell = 50;
  std::uint64_t master_seed = 1;
  int bootstrap_resamples = 1000;
  double regression_min_span = 2.0;  // entropy: lower span bound of the regression
  bool svg = true;
  FitOptions fit;

  // Cells in the cross product of all axes.
  std::size_t cell_count() const;
  std::size_t trial_count() const { return cell_count() * static_cast<std::size_t>(trials_per_cell); }
};

// Throws InvalidParameter on an empty axis or nonpositive physical value.
void validate(const BenchConfig& cfg);

// Strict JSON schema; see the bundled configs for the key set. Numeric axes
// accept an array or {"min", "max", "count", "scale": "log"|"linear"}.
BenchConfig bench_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchConfig& cfg);

struct CellKey {
  double q_i = 0.0;
  double sigma_n = 0.0;
  double sigma_fr = 0.0;
  long n_points = 0;
  double span_linewidths = 0.0;
  GridKind grid = GridKind::spd;
};

struct TrialRecord {
  std::uint64_t seed = 0;
  double q_i = 0.0;
  double sigma_q_i = 0.0;
  double chi2 = 0.0;
  bool converged = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BenchRecord {
  CellKey cell;
  std::vector<TrialRecord> trials;
  double median_true_error = 0.0;  // |Q_i - true| / true
  Interval true_error_ci;
  double median_sigma_rel = 0.0;  // sigma_Qi / Q_i from the fit covariance
  Interval sigma_rel_ci;
  double mean_q_i = 0.0;
  double sem_q_i = 0.0;  // standard error of mean_q_i
  double coverage_2sigma = 0.0;  // fraction with |Q_i - true| <= 2 sigma_Qi
  long n_converged = 0;
  long n_failed = 0;
  double h_density = 0.0;  // noiseless entropy per point on the cell's grid
};

// Median of the values and a percentile bootstrap interval. Deterministic
// for a given seed.
double median(std::vector<double> values);
Interval bootstrap_median_ci(const std::vector<double>& values, int resamples,
                             std::uint64_t seed, double level = 0.95);

// Ordinary least squares y = a + b x; returns b and its standard error.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_stderr = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Runs every cell of the cross product of the config axes.
std::vector<BenchRecord> run_cells(const BenchConfig& cfg, unsigned threads);

// Linear grid only; records sorted by Q_i / |Q_c|.
std::vector<BenchRecord> sweep_coupling(const BenchConfig& cfg, unsigned threads);

// Both grids with paired seeds.
std::vector<BenchRecord> sweep_span(const BenchConfig& cfg, unsigned threads);

struct RatioCell {
  double span_linewidths = 0.0;
  double sigma_fr = 0.0;
  double ratio = 0.0;  // median sigma_Qi (linear) / median sigma_Qi (homophasal)
  Interval ci;         // paired bootstrap
  double true_error_ratio = 0.0;
  long n_pairs = 0;
  bool flagged = false;  // homophasal failures; ratio omitted
};

struct RatioMap {
  std::vector<BenchRecord> records;
  std::vector<RatioCell> cells;
};

RatioMap error_ratio_map(const BenchConfig& cfg, unsigned threads);

struct CollapseCurve {
  double sigma_n = 0.0;
  long n_points = 0;
  std::vector<double> coupling_ratio;  // true Q_i / |Q_c|
  std::vector<double> normalized;      // (sigma_Qi / Q_i) sqrt(N) / sigma_n
};

struct CollapseReport {
  std::vector<BenchRecord> records;
  std::vector<CollapseCurve> curves;
  // max over coupling ratios of (largest / smallest normalized value - 1)
  double max_deviation = 0.0;
};

CollapseReport scaling_collapse(const BenchConfig& cfg, unsigned threads);

// Max pointwise spread of curves sharing an abscissa; 0 for one curve.
double collapse_deviation(const std::vector<CollapseCurve>& curves);

struct EntropyRow {
  double span_linewidths = 0.0;
  double h_density_spd = 0.0;
  double h_density_hpd = 0.0;
  double sigma_rel_spd = 0.0;
  double sigma_rel_hpd = 0.0;
};

struct EntropyTable {
  std::vector<BenchRecord> records;
  std::vector<EntropyRow> rows;
  double peak_span = 0.0;  // span of the largest linear-grid H_set/N
  // log(sigma_Qi/Q_i) against log(H_set/N) over linear-grid rows with
  // span >= regression_min_span.
  LineFit entropy_error_fit;
};

EntropyTable entropy_vs_span(const BenchConfig& cfg, unsigned threads);

struct BenchSummary {
  std::size_t cells = 0;
  long trials = 0;
  long failures = 0;
  double converged_fraction = 1.0;
  double seconds = 0.0;
};

// Runs the operation selected by cfg.kind and writes `<name>.csv`,
// `<name>_trials.csv`, `<name>_manifest.json` and optional SVG plots into
// out_dir.
BenchSummary run_bench(const BenchConfig& cfg, unsigned threads,
                       const std::filesystem::path& out_dir);

// Worker count: hardware concurrency, capped by RESFIT_THREADS when set.
unsigned default_threads();

}  // namespace resfit
