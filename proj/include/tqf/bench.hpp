#pragma once

#include "tqf/io.hpp"
#include "tqf/tqf_model.hpp"

namespace tqf::bench {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n - 1)
  std::size_t n = 0;
};

MeanSd mean_sd(std::span<const double> v);

// ---------------------------------------------------------------------------
// Two moons: QMEM on exact slices of a 5,000-point sample.

struct MoonsRun {
  double ed = 0.0;
  std::size_t size = 0;
  QmemReport report;
  double seconds = 0.0;
};

MoonsRun two_moons_run(std::uint64_t seed, int K, int M, const QmemConfig& qmem);

// ---------------------------------------------------------------------------
// Rotor benchmarks: train once per seed, query at x = (x, ..., x).

struct RotorSettings {
  std::string dataset = "rect_rotor";
  long n = 20000;
  TqfConfig tqf;
  QmemConfig qmem;
  int truth_count = 2000;
};

/// Table 3 / Table 4 configuration for the given (G, G_tilde); min_samples_leaf = 20 G.
RotorSettings rect_rotor_settings(int G = 15, int G_tilde = 10);
RotorSettings seven_rotor_settings();

struct RotorRun {
  std::vector<double> a_levels;
  std::vector<double> tqf_ed;
  std::vector<std::size_t> sizes;
  double fit_seconds = 0.0;
};

RotorRun rotor_run(std::uint64_t seed, const RotorSettings& s, const std::vector<double>& a_levels);

/// Product of the ground-truth marginals (independently permuted columns of a
/// truth draw) scored against a fresh truth draw.
double naive_marginal_ed(const std::string& dataset, double a, int count, std::uint64_t seed);
/// Two independent truth draws.
double oracle_ed(const std::string& dataset, double a, int count, std::uint64_t seed);
/// Single Gaussian fitted to a truth draw, sampled and scored against another.
double single_gaussian_ed(const std::string& dataset, double a, int count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// QRF vs QRF++ on the four one-dimensional generators.

struct QrfppRun {
  std::string dataset;
  std::vector<double> levels;
  double qrf_error = 0.0;    // mean |predicted - true| quantile over the x grid and levels
  double qrfpp_error = 0.0;
  std::vector<double> importance;  // QRF++ target importance (y, cos, sin, ...)
};

std::vector<double> qrfpp_plot_levels(const std::string& dataset);
QrfppRun qrfpp_run(const std::string& dataset, std::uint64_t seed, int n_trees = 100, int min_samples_leaf = 30);

// ---------------------------------------------------------------------------
// Sliding disk: 30 training points, one random test input per run.

struct DiskSettings {
  TqfConfig tqf;
  QmemConfig qmem;
  int truth_count = 5000;  // ED reference draw
  int nll_count = 2000;
  int es_points = 1000;
};

DiskSettings sliding_disk_settings();

struct DiskRun {
  double x_test = 0.0;
  double ed = 0.0;
  double es = 0.0;
  double nll = 0.0;
  std::size_t size = 0;
};

DiskRun sliding_disk_run(std::uint64_t seed, const DiskSettings& s);

// ---------------------------------------------------------------------------
// Housing-style CSV: k-fold CV of TQF and a KNN baseline, R^2 and ES.

struct HousingSettings {
  std::vector<std::string> features = {"MedInc",   "HouseAge",  "AveRooms", "AveBedrms",
                                       "Population", "AveOccup", "MedHouseVal"};
  std::vector<std::string> targets = {"Latitude", "Longitude"};
  int folds = 10;
  TqfConfig tqf;
  QmemConfig qmem;
  int knn_k = 100;
  int max_test_per_fold = 0;  // 0: every held-out row
};

HousingSettings housing_settings();

struct FoldScores {
  double tqf_r2 = 0.0;
  double tqf_es = 0.0;
  double knn_r2 = 0.0;
  double knn_es = 0.0;
};

std::vector<FoldScores> housing_cv(const Dataset& data, const HousingSettings& s, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Report assembly for the CLI.

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Report {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<Verdict> verdicts;
  io::Json data = io::Json::object();

  std::string text() const;
  bool all_pass() const;
};

struct Options {
  int seeds = 0;               // 0: the experiment's default
  std::uint64_t base_seed = 1;
  bool quick = false;          // smaller models and fewer repetitions, for smoke runs
  std::string resume_dir;      // per-seed results cached here when non-empty
  std::string csv_path;        // housing input
};

const std::vector<std::string>& benchmark_names();
Report run_benchmark(const std::string& name, const Options& opt);

}  // namespace tqf::bench
