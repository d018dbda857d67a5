#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mfsf/training.hpp"

namespace mfsf {

namespace {

constexpr Index kEvalChunk = 256;

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::Config, "train.epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::Config, "train.batch_size must be >= 1");
  require(lr > 0.0, ErrorKind::Config, "train.lr must be positive");
  if (grad_clip) require(*grad_clip > 0.0, ErrorKind::Config, "train.grad_clip must be positive");
  if (early_stop_patience)
    require(*early_stop_patience >= 1, ErrorKind::Config, "train.early_stop_patience must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr},
                   {"seed", seed},     {"shuffle", shuffle}};
  j["grad_clip"] = grad_clip ? nlohmann::json(*grad_clip) : nlohmann::json();
  j["early_stop_patience"] =
      early_stop_patience ? nlohmann::json(*early_stop_patience) : nlohmann::json();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  require(j.is_object(), ErrorKind::Config, "train config must be a JSON object");
  const nlohmann::json known = TrainConfig{}.to_json();
  for (const auto& [key, value] : j.items())
    require(known.contains(key), ErrorKind::Config, "train config: unknown key '" + key + "'");
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shuffle")) c.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("grad_clip"))
      c.grad_clip = j.at("grad_clip").is_null() ? std::nullopt
                                                : std::optional<double>(j.at("grad_clip").get<double>());
    if (j.contains("early_stop_patience"))
      c.early_stop_patience = j.at("early_stop_patience").is_null()
                                  ? std::nullopt
                                  : std::optional<int>(j.at("early_stop_patience").get<int>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_nll,val_nll,seconds\n";
  char buf[128];
  for (std::size_t e = 0; e < train_nll.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f\n", e, train_nll[e], val_nll[e], seconds[e]);
    out << buf;
  }
}

TrainingData TrainingData::from(const Dataset& d, const Standardizer& s) {
  return {s.transform_y(d.y), s.transform_theta(d.theta)};
}

double mean_nll(const FlowModel& model, const TrainingData& data) {
  require(data.size() > 0, ErrorKind::InvalidArgument, "mean_nll: empty data");
  double total = 0.0;
  for (Index start = 0; start < data.size(); start += kEvalChunk) {
    const Index n = std::min(kEvalChunk, data.size() - start);
    total -= model.log_likelihood(Matrix(data.y.middleRows(start, n)),
                                  Matrix(data.theta.middleRows(start, n)))
                 .sum();
  }
  return total / static_cast<double>(data.size());
}

TrainResult train_flow(FlowModel& model, const TrainingData& train, const TrainingData& val,
                       const TrainConfig& cfg) {
  cfg.validate();
  require(train.size() > 0, ErrorKind::InvalidArgument, "train_flow: empty training set");
  require(train.y.cols() == model.data_dim && train.theta.cols() == model.cond_dim,
          ErrorKind::DimensionMismatch, "train_flow: data does not match model dimensions");

  TrainResult result;
  result.params = model.params;
  result.best_val_nll = val.size() > 0 ? mean_nll(model, val) : std::numeric_limits<double>::infinity();
  if (cfg.epochs == 0) return result;

  AdamState adam = AdamState::for_params(model.params, cfg.lr);
  Rng rng(derive_seed(cfg.seed, "train/shuffle"));
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const bool have_val = val.size() > 0;
  double best = have_val ? result.best_val_nll : std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle)
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(i))]);

    double epoch_nll = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Index> rows(order.data() + start, end - start);
      const Index b = static_cast<Index>(rows.size());

      Tape tape;
      Var ll;
      try {
        ll = model.log_likelihood(tape, ops::constant(tape, gather_rows(train.y, rows)),
                                  ops::constant(tape, gather_rows(train.theta, rows)));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        fail(ErrorKind::NonFinite, "epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(batch_index) + ": " + e.what());
      }
      const double batch_ll = tape.value(ll).sum();
      require(std::isfinite(batch_ll), ErrorKind::NonFinite,
              "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                  ": non-finite negative log-likelihood");
      epoch_nll -= batch_ll;

      model.params.zero_grad();
      backward(tape, ll, Matrix::Constant(b, 1, -1.0 / static_cast<double>(b)), model.params);
      if (cfg.grad_clip) clip_grad_norm(model.params, *cfg.grad_clip);
      adam_step(adam, model.params);
    }
    epoch_nll /= static_cast<double>(train.size());

    const double v = have_val ? mean_nll(model, val) : epoch_nll;
    result.report.train_nll.push_back(epoch_nll);
    result.report.val_nll.push_back(have_val ? v : std::numeric_limits<double>::quiet_NaN());
    result.report.seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    if (!have_val || v < best) {
      best = v;
      result.params = model.params;
      result.report.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop_patience && ++since_best >= *cfg.early_stop_patience) {
      break;
    }
  }
  result.best_val_nll = best;
  model.params.assign_values(result.params);
  model.params.zero_grad();
  return result;
}

TrainResult pretrain_lf(FlowModel& model, const Dataset& lf_train, const Dataset& lf_val,
                        const Standardizer& standardizer, const TrainConfig& cfg) {
  return train_flow(model, TrainingData::from(lf_train, standardizer),
                    lf_val.size() > 0 ? TrainingData::from(lf_val, standardizer) : TrainingData{},
                    cfg);
}

TrainResult finetune_hf(FlowModel& model, const ParamStore& init, const Dataset& hf_train,
                        const Dataset& hf_val, const Standardizer& standardizer,
                        const TrainConfig& cfg) {
  require(init.same_layout(model.params), ErrorKind::DimensionMismatch,
          "finetune_hf: initial parameters (" + std::to_string(init.size()) +
              " values) are not shape-compatible with the model (" +
              std::to_string(model.params.size()) + " values)");
  model.params.assign_values(init);
  return train_flow(model, TrainingData::from(hf_train, standardizer),
                    hf_val.size() > 0 ? TrainingData::from(hf_val, standardizer) : TrainingData{},
                    cfg);
}

TrainResult train_hf_only(FlowModel& model, const Dataset& hf_train, const Dataset& hf_val,
                          const Standardizer& standardizer, const TrainConfig& cfg) {
  return train_flow(model, TrainingData::from(hf_train, standardizer),
                    hf_val.size() > 0 ? TrainingData::from(hf_val, standardizer) : TrainingData{},
                    cfg);
}

}  // namespace mfsf
