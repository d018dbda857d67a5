#pragma once

// Predictive summaries, accuracy metrics and the scenario ablation runner.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsf/flows.hpp"
#include "mfsf/training.hpp"

namespace mfsf {

struct PredictiveSummary {
  Vector mean;
  Vector std;    // sample standard deviation (n - 1 denominator)
  Vector ci_lo;  // empirical alpha/2 quantile
  Vector ci_hi;  // empirical 1 - alpha/2 quantile
  Index n_samples = 0;
  double alpha = 0.05;
  std::optional<Matrix> samples;  // n_samples x W, data units

  Index length() const { return mean.size(); }
};

inline constexpr Index kDefaultPredictSamples = 2000;

// Empirical quantile with linear interpolation between order statistics.
// `sorted` must be ascending and non-empty.
double empirical_quantile(std::span<const double> sorted, double p);

// Summary of draws already in data units (rows are samples).
PredictiveSummary summarize_draws(const Matrix& draws, double alpha, bool keep_samples = false);

// `theta` is in physical units; draws are inverse-standardized. alpha is the
// miscoverage level (0.05 -> 95% interval).
PredictiveSummary predict(const FlowModel& model, const Standardizer& standardizer,
                          const Vector& theta, Index n_samples, double alpha, Rng& rng,
                          bool keep_samples = false);

double relative_l2(const Vector& pred, const Vector& truth);
double r_squared(const Vector& pred, const Vector& truth);
double coverage_rate(const std::vector<PredictiveSummary>& summaries,
                     const std::vector<Vector>& truths);

double median(std::vector<double> values);
double mean(const std::vector<double>& values);

// Scenario labels: "LF-only", "HF-only-<N>", "MF-<N>".
struct Scenario {
  enum class Kind { LFOnly, HFOnly, MF };
  Kind kind = Kind::MF;
  Index n_hf = 0;

  std::string label() const;
  static Scenario parse(const std::string& label);
};

struct RecordScore {
  Index record_id = 0;
  double rel_l2 = 0.0;
  double r2 = 0.0;
};

struct AblationResult {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<RecordScore> records;
  double median_rel_l2 = 0.0;
  double mean_rel_l2 = 0.0;
  double coverage = 0.0;
  double best_val_nll = 0.0;
  TrainReport report;
  std::vector<PredictiveSummary> summaries;  // one per test record

  void recompute_aggregates();
};

struct ModelSpec {
  Index latent_dim = 8;
  DefaultModelOptions options;
};

// Everything a scenario run needs. The HF pool is ordered: scenario N uses
// its first N records, so smaller scenarios are nested in larger ones.
struct AblationSetup {
  Dataset lf_train;
  Dataset lf_val;
  Dataset hf_pool;
  Dataset hf_test;
  ModelSpec model;
  TrainConfig lf_train_config;
  TrainConfig hf_train_config;
  double hf_val_fraction = 0.1;
  Index hf_val_min = 2;
  Index n_samples = kDefaultPredictSamples;
  double alpha = 0.05;
};

// Split of the first n pool records into (train, val) index lists.
std::pair<std::vector<Index>, std::vector<Index>> hf_split(Index n, double val_fraction,
                                                           Index val_min);

struct LfStage {
  FlowModel model;
  Standardizer standardizer;
  TrainResult result;
};

// Fits the standardizer on the LF train split and pretrains the default model.
LfStage run_lf_stage(const AblationSetup& setup, std::uint64_t seed);

// Scenario seed for the i-th entry of the scenario list.
std::uint64_t scenario_seed(std::uint64_t master_seed, const std::string& label, std::size_t index);

// Trains (or reuses the LF stage for LF-only) and scores one scenario on the
// shared test split.
AblationResult run_scenario(const AblationSetup& setup, const LfStage& lf,
                            const Scenario& scenario, std::uint64_t seed);

// One shared LF pretraining from derive_seed(master, "lf"), then each
// scenario with its own derived seed.
std::vector<AblationResult> run_ablation(const AblationSetup& setup,
                                         const std::vector<std::string>& scenarios,
                                         std::uint64_t master_seed);

// scenario,record_id,rel_l2,r2
void write_records_csv(const std::filesystem::path& path,
                       const std::vector<AblationResult>& results);
nlohmann::json ablation_summary_json(const std::vector<AblationResult>& results);
// time,truth,mean,ci_lo,ci_hi (truth column omitted when `truth` is empty).
void write_plot_csv(const std::filesystem::path& path, const PredictiveSummary& summary,
                    const Vector& truth, double sample_dt);

}  // namespace mfsf
