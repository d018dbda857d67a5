#include <cstdio>
#include <fstream>
#include <sstream>

#include "mfsf/error.hpp"
#include "mfsf/experiment.hpp"

namespace mfsf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<Index> row_range(Index begin, Index end) {
  std::vector<Index> rows;
  for (Index i = begin; i < end; ++i) rows.push_back(i);
  return rows;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

json checkpoint_sidecar(const ExperimentConfig& cfg, Stage stage, const TrainResult& r,
                        const TrainConfig& tc) {
  return {{"stage", to_string(stage)},
          {"config_hash", config_hash(cfg.to_json())},
          {"train_config", tc.to_json()},
          {"epochs_run", r.report.epochs_run()},
          {"best_epoch", r.report.best_epoch},
          {"best_val_nll", r.best_val_nll},
          {"sample_dt", cfg.generation.grid.sample_dt}};
}

void write_summary_plots(const fs::path& dir, const AblationResult& res, const Dataset& test,
                         double sample_dt) {
  ensure_dir(dir);
  for (std::size_t k = 0; k < res.summaries.size(); ++k) {
    write_plot_csv(dir / ("record_" + std::to_string(k) + ".csv"), res.summaries[k],
                   test.y.row(static_cast<Index>(k)).transpose(), sample_dt);
  }
}

}  // namespace

Stage stage_from_string(const std::string& s) {
  if (s == "lf") return Stage::LF;
  if (s == "mf") return Stage::MF;
  if (s == "hf-only" || s == "hf_only") return Stage::HFOnly;
  fail(ErrorKind::Config, "unknown stage '" + s + "' (expected lf, mf or hf-only)");
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::LF:
      return "lf";
    case Stage::MF:
      return "mf";
    case Stage::HFOnly:
      return "hf-only";
  }
  return "?";
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  const ExperimentPaths paths{cfg.out_dir};
  for (const auto& p : {paths.lf_csv(), paths.lf_manifest(), paths.hf_csv(), paths.hf_manifest()})
    require(fs::exists(p), ErrorKind::MissingArtifact,
            "missing dataset file " + p.string() + " (run generate first)");
  ExperimentData d;
  d.lf = read_dataset(paths.lf_csv(), paths.lf_manifest());
  d.hf = read_dataset(paths.hf_csv(), paths.hf_manifest());
  const Index w = cfg.generation.grid.n_points;
  require(d.lf.series_length() == w && d.hf.series_length() == w, ErrorKind::Config,
          "dataset series length differs from grid.n_points = " + std::to_string(w));
  require(d.lf.cond_dim() == cfg.generation.structure.n_groups() &&
              d.hf.cond_dim() == cfg.generation.structure.n_groups(),
          ErrorKind::Config, "dataset theta width differs from structure.n_groups");
  require(cfg.lf_val < d.lf.size() && cfg.hf_test < d.hf.size(), ErrorKind::Config,
          "split sizes exceed the stored datasets");
  const Index n_lf_train = d.lf.size() - cfg.lf_val;
  const Index n_pool = d.hf.size() - cfg.hf_test;
  d.lf_train = d.lf.subset(row_range(0, n_lf_train));
  d.lf_val = d.lf.subset(row_range(n_lf_train, d.lf.size()));
  d.hf_pool = d.hf.subset(row_range(0, n_pool));
  d.hf_test = d.hf.subset(row_range(n_pool, d.hf.size()));
  return d;
}

AblationSetup make_ablation_setup(const ExperimentConfig& cfg, const ExperimentData& data) {
  AblationSetup s;
  s.lf_train = data.lf_train;
  s.lf_val = data.lf_val;
  s.hf_pool = data.hf_pool;
  s.hf_test = data.hf_test;
  s.model = cfg.model;
  s.lf_train_config = cfg.train_lf;
  s.hf_train_config = cfg.train_hf;
  s.hf_val_fraction = cfg.hf_val_fraction;
  s.hf_val_min = cfg.hf_val_min;
  s.n_samples = cfg.n_samples;
  s.alpha = cfg.alpha;
  return s;
}

void cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentPaths paths{cfg.out_dir};
  ensure_dir(paths.data_dir());
  const auto [lf, hf] = generate_pairs(cfg.generation);
  write_dataset(lf, paths.lf_csv(), paths.lf_manifest());
  write_dataset(hf, paths.hf_csv(), paths.hf_manifest());
  write_json(cfg.out_dir / "config.resolved.json", cfg.to_json());
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  const ExperimentPaths paths{cfg.out_dir};
  const fs::path lf_dir = paths.checkpoint_dir("lf");
  if (stage == Stage::MF) {
    require(fs::exists(lf_dir / "checkpoint.json"), ErrorKind::MissingArtifact,
            "stage mf needs an LF checkpoint at " + lf_dir.string() + " (run train --stage lf)");
  }
  const ExperimentData data = load_experiment_data(cfg);
  const AblationSetup setup = make_ablation_setup(cfg, data);

  FlowModel model;
  Standardizer standardizer;
  TrainResult result;
  TrainConfig tc;
  if (stage == Stage::LF) {
    LfStage lf = run_lf_stage(setup, derive_seed(cfg.seed, "lf"));
    model = std::move(lf.model);
    standardizer = std::move(lf.standardizer);
    result = std::move(lf.result);
    tc = cfg.train_lf;
  } else {
    const auto [train_rows, val_rows] =
        hf_split(data.hf_pool.size(), cfg.hf_val_fraction, cfg.hf_val_min);
    const Dataset train = data.hf_pool.subset(train_rows);
    const Dataset val = data.hf_pool.subset(val_rows);
    const std::uint64_t stage_seed = derive_seed(cfg.seed, std::string("stage/") + to_string(stage));
    tc = cfg.train_hf;
    tc.seed = derive_seed(stage_seed, "train");
    if (stage == Stage::MF) {
      Checkpoint lf = load_checkpoint(lf_dir);
      model = std::move(lf.model);
      standardizer = std::move(lf.standardizer);
      require(model.data_dim == data.hf.series_length() && model.cond_dim == data.hf.cond_dim(),
              ErrorKind::Config, "LF checkpoint dimensions do not match the HF dataset");
      const ParamStore init = model.params;
      result = finetune_hf(model, init, train, val, standardizer, tc);
    } else {
      standardizer = fit_standardizer(data.lf_train);
      model = build_default_model(data.hf.series_length(), cfg.model.latent_dim,
                                  data.hf.cond_dim(), derive_seed(stage_seed, "model"),
                                  cfg.model.options);
      result = train_hf_only(model, train, val, standardizer, tc);
    }
  }

  const fs::path dir = paths.checkpoint_dir(to_string(stage));
  ensure_dir(dir);
  save_checkpoint(dir, model, standardizer, checkpoint_sidecar(cfg, stage, result, tc));
  result.report.write_csv(dir / "report.csv");
  return {dir, result.best_val_nll, result.report.best_epoch, result.report.epochs_run()};
}

std::vector<PredictiveSummary> cmd_predict(const PredictRequest& req) {
  require(fs::exists(req.checkpoint / "checkpoint.json"), ErrorKind::MissingArtifact,
          "no checkpoint at " + req.checkpoint.string());
  require(req.theta.rows() >= 1, ErrorKind::InvalidArgument, "no theta queries");
  const Checkpoint ck = load_checkpoint(req.checkpoint);
  require(req.theta.cols() == ck.model.cond_dim, ErrorKind::DimensionMismatch,
          "theta has " + std::to_string(req.theta.cols()) + " entries, expected m = " +
              std::to_string(ck.model.cond_dim));
  double sample_dt = req.sample_dt;
  if (ck.sidecar.contains("sample_dt")) sample_dt = ck.sidecar.at("sample_dt").get<double>();

  ensure_dir(req.out_dir);
  Rng rng(derive_seed(req.seed, "predict"));
  std::vector<PredictiveSummary> out;
  json queries = json::array();
  for (Index i = 0; i < req.theta.rows(); ++i) {
    const Vector theta = req.theta.row(i).transpose();
    PredictiveSummary s = predict(ck.model, ck.standardizer, theta, req.n_samples, req.alpha, rng);
    const std::string name = "plot_" + std::to_string(i) + ".csv";
    write_plot_csv(req.out_dir / name, s, Vector(), sample_dt);
    queries.push_back({{"theta", std::vector<double>(theta.data(), theta.data() + theta.size())},
                       {"plot_file", name},
                       {"mean_abs_max", s.mean.cwiseAbs().maxCoeff()},
                       {"mean_std", s.std.mean()},
                       {"mean_ci_width", (s.ci_hi - s.ci_lo).mean()}});
    out.push_back(std::move(s));
  }
  write_json(req.out_dir / "summary.json", {{"checkpoint", req.checkpoint.string()},
                                            {"n_samples", req.n_samples},
                                            {"alpha", req.alpha},
                                            {"seed", req.seed},
                                            {"queries", queries}});
  return out;
}

std::vector<AblationResult> cmd_ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentData data = load_experiment_data(cfg);
  const AblationSetup setup = make_ablation_setup(cfg, data);
  std::vector<AblationResult> results = run_ablation(setup, cfg.scenarios, cfg.seed);

  const fs::path dir = ExperimentPaths{cfg.out_dir}.ablation_dir();
  ensure_dir(dir);
  write_records_csv(dir / "records.csv", results);
  json summary = ablation_summary_json(results);
  summary["config_hash"] = config_hash(cfg.to_json());
  summary["master_seed"] = cfg.seed;
  write_json(dir / "summary.json", summary);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const fs::path sub = dir / "plots" / (std::to_string(i) + "_" + results[i].label);
    write_summary_plots(sub, results[i], data.hf_test, cfg.generation.grid.sample_dt);
    results[i].report.write_csv(sub / "report.csv");
  }
  return results;
}

AblationResult cmd_evaluate(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  const ExperimentPaths paths{cfg.out_dir};
  const fs::path ck_dir = paths.checkpoint_dir(to_string(stage));
  require(fs::exists(ck_dir / "checkpoint.json"), ErrorKind::MissingArtifact,
          "no " + std::string(to_string(stage)) + " checkpoint at " + ck_dir.string());
  const ExperimentData data = load_experiment_data(cfg);
  const Checkpoint ck = load_checkpoint(ck_dir);
  require(ck.model.data_dim == data.hf_test.series_length(), ErrorKind::Config,
          "checkpoint series length differs from the dataset");

  AblationResult res;
  res.label = to_string(stage);
  res.seed = derive_seed(cfg.seed, std::string("evaluate/") + to_string(stage));
  Rng rng(res.seed);
  std::vector<Vector> truths;
  for (Index i = 0; i < data.hf_test.size(); ++i) {
    const Vector truth = data.hf_test.y.row(i).transpose();
    PredictiveSummary s = predict(ck.model, ck.standardizer, data.hf_test.theta.row(i).transpose(),
                                  cfg.n_samples, cfg.alpha, rng);
    res.records.push_back({i, relative_l2(s.mean, truth), r_squared(s.mean, truth)});
    res.summaries.push_back(std::move(s));
    truths.push_back(truth);
  }
  res.coverage = coverage_rate(res.summaries, truths);
  res.recompute_aggregates();

  const fs::path dir = paths.evaluation_dir(to_string(stage));
  ensure_dir(dir);
  write_records_csv(dir / "records.csv", {res});
  json summary = ablation_summary_json({res});
  summary["checkpoint"] = ck_dir.string();
  write_json(dir / "summary.json", summary);
  write_summary_plots(dir / "plots", res, data.hf_test, cfg.generation.grid.sample_dt);
  return res;
}

Matrix parse_theta_inline(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      require(item.find_first_not_of(" \t", used) == std::string::npos, ErrorKind::InvalidArgument,
              "bad theta entry '" + item + "'");
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidArgument, "bad theta entry '" + item + "'");
    }
  }
  require(!values.empty(), ErrorKind::InvalidArgument, "empty theta");
  Matrix m(1, static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Index>(i)) = values[i];
  return m;
}

Matrix read_theta_file(const fs::path& path) {
  require(fs::exists(path), ErrorKind::MissingArtifact, "theta file not found: " + path.string());
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open theta file " + path.string());
  std::vector<Matrix> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const bool header = first && line.find_first_of("abcdefghijklmnopqrstuvwxyz_") != std::string::npos;
    first = false;
    if (header) continue;
    rows.push_back(parse_theta_inline(line));
    require(rows.back().cols() == rows.front().cols(), ErrorKind::DimensionMismatch,
            "theta file rows differ in width");
  }
  require(!rows.empty(), ErrorKind::InvalidArgument, "theta file has no rows");
  Matrix out(static_cast<Index>(rows.size()), rows.front().cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = rows[i];
  return out;
}

}  // namespace mfsf
