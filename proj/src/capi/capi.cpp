#include <cmath>
#include <cstring>
#include <exception>
#include <string>

#include "mfsf.h"
#include "mfsf/error.hpp"
#include "mfsf/experiment.hpp"

struct mfsf_experiment {
  mfsf::ExperimentConfig config;
};

struct mfsf_model {
  mfsf::Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

mfsf_status status_of(mfsf::ErrorKind kind) {
  using mfsf::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return MFSF_ERR_INVALID_ARGUMENT;
    case ErrorKind::DimensionMismatch:
      return MFSF_ERR_DIMENSION;
    case ErrorKind::NonFinite:
      return MFSF_ERR_NON_FINITE;
    case ErrorKind::Config:
      return MFSF_ERR_CONFIG;
    case ErrorKind::MissingArtifact:
      return MFSF_ERR_MISSING_ARTIFACT;
    case ErrorKind::Io:
      return MFSF_ERR_IO;
    case ErrorKind::Runtime:
      return MFSF_ERR_RUNTIME;
  }
  return MFSF_ERR_RUNTIME;
}

template <typename F>
mfsf_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MFSF_OK;
  } catch (const mfsf::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MFSF_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MFSF_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return MFSF_ERR_RUNTIME;
  }
}

void need(const void* p, const char* name) {
  mfsf::require(p != nullptr, mfsf::ErrorKind::InvalidArgument, std::string(name) + " is NULL");
}

mfsf::Vector vec(const double* p, size_t n) {
  return Eigen::Map<const mfsf::Vector>(p, static_cast<mfsf::Index>(n));
}

}  // namespace

extern "C" {

const char* mfsf_version(void) { return "0.1.0"; }

const char* mfsf_last_error(void) { return g_last_error.c_str(); }

const char* mfsf_status_name(mfsf_status status) {
  switch (status) {
    case MFSF_OK:
      return "ok";
    case MFSF_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case MFSF_ERR_DIMENSION:
      return "dimension mismatch";
    case MFSF_ERR_NON_FINITE:
      return "non-finite value";
    case MFSF_ERR_CONFIG:
      return "configuration error";
    case MFSF_ERR_MISSING_ARTIFACT:
      return "missing artifact";
    case MFSF_ERR_IO:
      return "i/o error";
    case MFSF_ERR_RUNTIME:
      return "runtime error";
  }
  return "unknown status";
}

int mfsf_exit_code(mfsf_status status) {
  switch (status) {
    case MFSF_OK:
      return 0;
    case MFSF_ERR_INVALID_ARGUMENT:
    case MFSF_ERR_DIMENSION:
    case MFSF_ERR_CONFIG:
    case MFSF_ERR_MISSING_ARTIFACT:
      return 2;
    default:
      return 1;
  }
}

mfsf_status mfsf_experiment_load(const char* config_path, mfsf_experiment** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "out");
    *out = new mfsf_experiment{mfsf::ExperimentConfig::load(config_path)};
  });
}

mfsf_status mfsf_experiment_from_json(const char* json_text, mfsf_experiment** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      mfsf::fail(mfsf::ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    *out = new mfsf_experiment{mfsf::ExperimentConfig::from_json(doc)};
  });
}

mfsf_status mfsf_experiment_from_preset(const char* preset, mfsf_experiment** out) {
  return guarded([&] {
    need(preset, "preset");
    need(out, "out");
    *out = new mfsf_experiment{mfsf::ExperimentConfig::from_json({{"preset", preset}})};
  });
}

void mfsf_experiment_free(mfsf_experiment* exp) { delete exp; }

mfsf_status mfsf_experiment_set_seed(mfsf_experiment* exp, uint64_t seed) {
  return guarded([&] {
    need(exp, "experiment");
    exp->config.set_seed(seed);
  });
}

mfsf_status mfsf_experiment_set_out_dir(mfsf_experiment* exp, const char* dir) {
  return guarded([&] {
    need(exp, "experiment");
    need(dir, "dir");
    mfsf::require(dir[0] != '\0', mfsf::ErrorKind::Config, "out_dir must not be empty");
    exp->config.out_dir = dir;
  });
}

mfsf_status mfsf_experiment_set_threads(mfsf_experiment* exp, int threads) {
  return guarded([&] {
    need(exp, "experiment");
    exp->config.set_threads(threads);
  });
}

mfsf_status mfsf_experiment_config_json(const mfsf_experiment* exp, char* buf, size_t cap,
                                        size_t* needed) {
  return guarded([&] {
    need(exp, "experiment");
    const std::string text = exp->config.to_json().dump(2);
    if (needed) *needed = text.size() + 1;
    if (buf == nullptr && cap == 0) return;
    need(buf, "buf");
    mfsf::require(cap >= text.size() + 1, mfsf::ErrorKind::InvalidArgument,
                  "buffer too small for the configuration JSON");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

mfsf_status mfsf_experiment_generate(mfsf_experiment* exp) {
  return guarded([&] {
    need(exp, "experiment");
    mfsf::cmd_generate(exp->config);
  });
}

mfsf_status mfsf_experiment_train(mfsf_experiment* exp, const char* stage, double* best_val_nll,
                                  size_t* epochs_run) {
  return guarded([&] {
    need(exp, "experiment");
    need(stage, "stage");
    const auto outcome = mfsf::cmd_train(exp->config, mfsf::stage_from_string(stage));
    if (best_val_nll) *best_val_nll = outcome.best_val_nll;
    if (epochs_run) *epochs_run = outcome.epochs_run;
  });
}

mfsf_status mfsf_experiment_ablate(mfsf_experiment* exp, double* medians, size_t cap,
                                   size_t* n_scenarios) {
  return guarded([&] {
    need(exp, "experiment");
    const auto results = mfsf::cmd_ablate(exp->config);
    if (n_scenarios) *n_scenarios = results.size();
    if (medians) {
      for (size_t i = 0; i < results.size() && i < cap; ++i) medians[i] = results[i].median_rel_l2;
    }
  });
}

mfsf_status mfsf_experiment_evaluate(mfsf_experiment* exp, const char* stage,
                                     double* median_rel_l2, double* coverage) {
  return guarded([&] {
    need(exp, "experiment");
    need(stage, "stage");
    const auto res = mfsf::cmd_evaluate(exp->config, mfsf::stage_from_string(stage));
    if (median_rel_l2) *median_rel_l2 = res.median_rel_l2;
    if (coverage) *coverage = res.coverage;
  });
}

mfsf_status mfsf_predict_files(const char* checkpoint_dir, const double* theta, size_t n_queries,
                               size_t m, size_t n_samples, double alpha, uint64_t seed,
                               const char* out_dir) {
  return guarded([&] {
    need(checkpoint_dir, "checkpoint_dir");
    need(theta, "theta");
    need(out_dir, "out_dir");
    mfsf::require(n_queries >= 1 && m >= 1, mfsf::ErrorKind::InvalidArgument,
                  "theta must have at least one row and column");
    mfsf::PredictRequest req;
    req.checkpoint = checkpoint_dir;
    req.theta = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(
        theta, static_cast<mfsf::Index>(n_queries), static_cast<mfsf::Index>(m));
    req.n_samples = static_cast<mfsf::Index>(n_samples);
    req.alpha = alpha;
    req.seed = seed;
    req.out_dir = out_dir;
    mfsf::cmd_predict(req);
  });
}

mfsf_status mfsf_model_load(const char* checkpoint_dir, mfsf_model** out) {
  return guarded([&] {
    need(checkpoint_dir, "checkpoint_dir");
    need(out, "out");
    *out = new mfsf_model{mfsf::load_checkpoint(checkpoint_dir)};
  });
}

void mfsf_model_free(mfsf_model* model) { delete model; }

mfsf_status mfsf_model_dims(const mfsf_model* model, size_t* series_length, size_t* cond_dim,
                            size_t* base_dim) {
  return guarded([&] {
    need(model, "model");
    const auto& m = model->checkpoint.model;
    if (series_length) *series_length = static_cast<size_t>(m.data_dim);
    if (cond_dim) *cond_dim = static_cast<size_t>(m.cond_dim);
    if (base_dim) *base_dim = static_cast<size_t>(m.base_dim);
  });
}

mfsf_status mfsf_model_log_likelihood(const mfsf_model* model, const double* y,
                                      const double* theta, size_t n_rows, double* out) {
  return guarded([&] {
    need(model, "model");
    need(y, "y");
    need(theta, "theta");
    need(out, "out");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto& ck = model->checkpoint;
    const auto n = static_cast<mfsf::Index>(n_rows);
    const mfsf::Matrix ym = Eigen::Map<const RowMat>(y, n, ck.model.data_dim);
    const mfsf::Matrix tm = Eigen::Map<const RowMat>(theta, n, ck.model.cond_dim);
    const mfsf::Vector ll = ck.model.log_likelihood(ck.standardizer.transform_y(ym),
                                                    ck.standardizer.transform_theta(tm));
    // Change of variables from the standardized space back to data units.
    const double log_jac =
        ck.standardizer.y_std.array().max(mfsf::Standardizer::kStdFloor).log().sum();
    for (mfsf::Index i = 0; i < n; ++i) out[i] = ll(i) - log_jac;
  });
}

mfsf_status mfsf_model_sample(const mfsf_model* model, const double* theta, size_t n,
                              uint64_t seed, double* out) {
  return guarded([&] {
    need(model, "model");
    need(theta, "theta");
    need(out, "out");
    const auto& ck = model->checkpoint;
    mfsf::Rng rng(seed);
    const mfsf::Vector t =
        ck.standardizer.transform_theta(vec(theta, ck.model.cond_dim).transpose()).row(0).transpose();
    const mfsf::Matrix draws =
        ck.standardizer.inverse_y(ck.model.sample(t, static_cast<mfsf::Index>(n), rng));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out, draws.rows(), draws.cols()) = draws;
  });
}

mfsf_status mfsf_model_predict(const mfsf_model* model, const double* theta, size_t n_samples,
                               double alpha, uint64_t seed, double* mean, double* std,
                               double* ci_lo, double* ci_hi) {
  return guarded([&] {
    need(model, "model");
    need(theta, "theta");
    const auto& ck = model->checkpoint;
    mfsf::Rng rng(seed);
    const auto s = mfsf::predict(ck.model, ck.standardizer, vec(theta, ck.model.cond_dim),
                                 static_cast<mfsf::Index>(n_samples), alpha, rng);
    const auto copy = [](const mfsf::Vector& v, double* dst) {
      if (dst) std::memcpy(dst, v.data(), sizeof(double) * static_cast<size_t>(v.size()));
    };
    copy(s.mean, mean);
    copy(s.std, std);
    copy(s.ci_lo, ci_lo);
    copy(s.ci_hi, ci_hi);
  });
}

mfsf_status mfsf_relative_l2(const double* pred, const double* truth, size_t n, double* out) {
  return guarded([&] {
    need(pred, "pred");
    need(truth, "truth");
    need(out, "out");
    *out = mfsf::relative_l2(vec(pred, n), vec(truth, n));
  });
}

mfsf_status mfsf_r_squared(const double* pred, const double* truth, size_t n, double* out) {
  return guarded([&] {
    need(pred, "pred");
    need(truth, "truth");
    need(out, "out");
    *out = mfsf::r_squared(vec(pred, n), vec(truth, n));
  });
}

}  // extern "C"
