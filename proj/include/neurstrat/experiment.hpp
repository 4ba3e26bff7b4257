#pragma once

// Config-driven experiment pipeline: train NeurAM, build strata, repeat
// estimators with derived seeds, and write reports.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurstrat/estimators.hpp"
#include "neurstrat/io.hpp"

namespace neurstrat {

struct EstimatorSpec {
  std::string kind;  // mc, lhs-mc, smc, as-smc, mfmc, smfmc
  AllocationKind allocation = AllocationKind::Optimal;

  bool stratified() const { return kind == "smc" || kind == "as-smc" || kind == "smfmc"; }
  bool multifidelity() const { return kind == "mfmc" || kind == "smfmc"; }
  std::string label() const;
};

EstimatorSpec parse_estimator(const io::json& j);

struct ExperimentConfig {
  std::string name = "experiment";
  std::string model;
  std::size_t dim = 0;
  std::optional<std::string> lf_model;
  double cost_ratio = kLowFidelityCostRatio;
  bool reparameterize = true;

  std::size_t M = 100;
  std::size_t epochs = 10000;
  double learning_rate = 1e-3;
  std::vector<std::size_t> hidden{8, 8};
  std::size_t K = 100000;
  std::optional<std::string> bundle;
  std::optional<std::string> lf_bundle;

  std::size_t S = 16;
  std::string stratification = "uniform";  // uniform | heuristic | file
  std::optional<std::string> stratification_file;
  SplitRule split_rule = SplitRule::Midpoint;
  AllocationKind heuristic_allocation = AllocationKind::Optimal;
  std::size_t n_cheap = 100000;

  std::size_t N = 1024;
  std::size_t repetitions = 1000;
  std::vector<EstimatorSpec> estimators;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency

  std::size_t as_samples = 10000;
  double fd_step = 1e-4;

  std::string sweep_parameter;  // empty, "N" or "S"
  std::vector<std::size_t> sweep_values;
};

// Unknown keys and malformed values raise Config errors.
ExperimentConfig parse_config(const io::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RepeatSummary {
  std::string label;
  std::vector<EstimateResult> results;  // sorted by repetition index
  double mean = 0.0;
  std::optional<double> variance;  // population (1/R) variance; absent for R = 1
  std::optional<double> mse;       // mean squared error against the exact value
  std::optional<double> bias;
  double mean_hf_evals = 0.0;
  double mean_lf_evals = 0.0;
  double mean_cost = 0.0;
  double wall_seconds = 0.0;
};

using EstimatorClosure = std::function<EstimateResult(Rng& rng, std::size_t repetition)>;

// Repetition r runs with Rng(derive_seed(master_seed, label, r)).
RepeatSummary repeat_harness(const EstimatorClosure& estimator, std::size_t repetitions, std::uint64_t master_seed,
                             std::string_view label, std::optional<double> exact = std::nullopt,
                             std::size_t threads = 1);

struct ReportRow {
  std::string label;
  std::string estimator;
  std::string allocation;
  std::size_t N = 0;
  std::size_t S = 0;
  std::size_t repetitions = 0;
  double mean = 0.0;
  std::optional<double> variance;
  std::optional<double> mse;
  std::optional<double> ratio_to_mc;
  double mean_hf_evals = 0.0;
  double mean_lf_evals = 0.0;
  double mean_cost = 0.0;
  double wall_seconds = 0.0;
};

// Fills ratio_to_mc from the first MC row with the same N. MSE ratios
// when available, variance ratios otherwise.
void assign_mc_ratios(std::vector<ReportRow>& rows);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string timing_csv(const std::vector<ReportRow>& rows);

struct TrainingSummary {
  std::size_t hf_training_evals = 0;
  std::size_t lf_training_evals = 0;
  std::optional<double> hf_final_loss;
  std::optional<double> lf_final_loss;
};

struct ExperimentOutput {
  std::vector<ReportRow> rows;
  std::vector<RepeatSummary> summaries;
  TrainingSummary training;
  std::optional<Stratification> strat;
};

// Writes report.csv, timing.csv, estimates.json and run.json into out_dir
// when it is non-empty.
ExperimentOutput run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir = {});

// Runs each config and merges the rows; ratios against the MC row.
std::vector<ReportRow> compare_experiments(const std::vector<ExperimentConfig>& configs,
                                           const std::filesystem::path& out_dir = {});

// Trains once and runs every estimator for each sweep value.
std::vector<ReportRow> sweep_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir = {});

// Trains the NeurAM models of a config and writes bundle and dataset files.
void train_command(const ExperimentConfig& config, const std::filesystem::path& out_dir);
// Builds the stratification of a config and writes stratification.json.
Stratification stratify_command(const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace neurstrat
