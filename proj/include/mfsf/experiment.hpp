#pragma once

// Declarative experiment configuration and the command implementations
// behind the CLI: generate, train, predict, ablate, evaluate.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsf/dynamics.hpp"
#include "mfsf/evaluation.hpp"
#include "mfsf/training.hpp"

namespace mfsf {

// Built-in presets: "case1", "case2" (18-DOF, W = 200, 1000/200 records)
// and "desk_small" (9-DOF, W = 64, 1000/60 records).
nlohmann::json preset_json(const std::string& name);
std::vector<std::string> preset_names();

struct ExperimentConfig {
  std::string preset = "desk_small";
  int case_id = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  int threads = 1;

  GenerationSpec generation;  // seed and threads mirror the fields above
  Index lf_val = 20;          // last lf_val LF records
  Index hf_test = 20;         // last hf_test HF records
  ModelSpec model;
  TrainConfig train_lf;
  TrainConfig train_hf;
  double hf_val_fraction = 0.1;
  Index hf_val_min = 2;
  std::vector<std::string> scenarios;
  Index n_samples = kDefaultPredictSamples;
  double alpha = 0.05;

  // The preset named by `doc["preset"]` (default desk_small) merge-patched
  // with `doc`. Unknown keys are configuration errors naming the field.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  void set_seed(std::uint64_t s);
  void set_threads(int n);
};

// File layout under out_dir.
struct ExperimentPaths {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path lf_csv() const { return data_dir() / "lf.csv"; }
  std::filesystem::path lf_manifest() const { return data_dir() / "lf.manifest.json"; }
  std::filesystem::path hf_csv() const { return data_dir() / "hf.csv"; }
  std::filesystem::path hf_manifest() const { return data_dir() / "hf.manifest.json"; }
  std::filesystem::path checkpoint_dir(const std::string& stage) const {
    return root / "checkpoints" / stage;
  }
  std::filesystem::path ablation_dir() const { return root / "ablation"; }
  std::filesystem::path evaluation_dir(const std::string& stage) const {
    return root / "evaluation" / stage;
  }
};

// Dataset splits shared by every command.
struct ExperimentData {
  Dataset lf;
  Dataset hf;
  Dataset lf_train;
  Dataset lf_val;
  Dataset hf_pool;
  Dataset hf_test;
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);
AblationSetup make_ablation_setup(const ExperimentConfig& cfg, const ExperimentData& data);

enum class Stage { LF, MF, HFOnly };
Stage stage_from_string(const std::string& s);
const char* to_string(Stage s);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  double best_val_nll = 0.0;
  int best_epoch = -1;
  std::size_t epochs_run = 0;
};

void cmd_generate(const ExperimentConfig& cfg);
TrainOutcome cmd_train(const ExperimentConfig& cfg, Stage stage);

struct PredictRequest {
  std::filesystem::path checkpoint;
  Matrix theta;  // one query per row, physical units
  Index n_samples = kDefaultPredictSamples;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double sample_dt = 0.05;
  std::filesystem::path out_dir;
};

// plot_<i>.csv (time,mean,ci_lo,ci_hi) per query and summary.json.
std::vector<PredictiveSummary> cmd_predict(const PredictRequest& req);

// records.csv, summary.json and plots/<scenario>/record_<k>.csv.
std::vector<AblationResult> cmd_ablate(const ExperimentConfig& cfg);

// Scores a stage checkpoint on the HF test split.
AblationResult cmd_evaluate(const ExperimentConfig& cfg, Stage stage);

// Theta rows from "a,b,c" or from a CSV file (optional header line).
Matrix parse_theta_inline(const std::string& text);
Matrix read_theta_file(const std::filesystem::path& path);

}  // namespace mfsf
