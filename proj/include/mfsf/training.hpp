#pragma once

// Maximum-likelihood training: standardization, the shared mini-batch Adam
// loop, the LF-pretrain / HF-fine-tune stages and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsf/dynamics.hpp"
#include "mfsf/flows.hpp"

namespace mfsf {

// Per-time-step z-scoring of y and affine mapping of theta from its prior
// box onto [-1, 1].
struct Standardizer {
  Vector y_mean;
  Vector y_std;
  Vector theta_lo;
  Vector theta_hi;

  static constexpr double kStdFloor = 1e-8;

  Matrix transform_y(const Matrix& y) const;
  Matrix inverse_y(const Matrix& z) const;
  Matrix transform_theta(const Matrix& theta) const;
  Matrix inverse_theta(const Matrix& t) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

// Statistics over every record of `data` (pass the LF training split).
Standardizer fit_standardizer(const Dataset& data);

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::optional<double> grad_clip;
  std::optional<int> early_stop_patience;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct TrainReport {
  std::vector<double> train_nll;  // mean per-sample NLL over each epoch
  std::vector<double> val_nll;
  std::vector<double> seconds;
  int best_epoch = -1;  // -1: the initial parameters were kept

  std::size_t epochs_run() const { return train_nll.size(); }
  // CSV columns: epoch,train_nll,val_nll,seconds
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  ParamStore params;
  TrainReport report;
  double best_val_nll = 0.0;
};

// Standardized training matrices.
struct TrainingData {
  Matrix y;
  Matrix theta;

  Index size() const { return y.rows(); }
  static TrainingData from(const Dataset& d, const Standardizer& s);
};

// Mean per-sample negative log-likelihood (no gradient).
double mean_nll(const FlowModel& model, const TrainingData& data);

// Shuffled mini-batch Adam on mean NLL. The returned snapshot is the one
// with the lowest validation NLL (the last epoch when `val` is empty); the
// model is left holding that snapshot.
TrainResult train_flow(FlowModel& model, const TrainingData& train, const TrainingData& val,
                       const TrainConfig& cfg);

TrainResult pretrain_lf(FlowModel& model, const Dataset& lf_train, const Dataset& lf_val,
                        const Standardizer& standardizer, const TrainConfig& cfg);

// Warm start from `init` (which must match the model's layout), then the same
// loop on HF data with the LF standardizer.
TrainResult finetune_hf(FlowModel& model, const ParamStore& init, const Dataset& hf_train,
                        const Dataset& hf_val, const Standardizer& standardizer,
                        const TrainConfig& cfg);

// Same loop from the model's own (random) initialization on HF data only.
TrainResult train_hf_only(FlowModel& model, const Dataset& hf_train, const Dataset& hf_val,
                          const Standardizer& standardizer, const TrainConfig& cfg);

struct Checkpoint {
  FlowModel model;
  Standardizer standardizer;
  nlohmann::json sidecar;
};

std::string config_hash(const nlohmann::json& config);

// Directory with model.params, model.arch.json, standardizer.json and
// checkpoint.json (config hash, epoch, validation NLL, ...).
void save_checkpoint(const std::filesystem::path& dir, const FlowModel& model,
                     const Standardizer& standardizer, const nlohmann::json& sidecar);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mfsf
