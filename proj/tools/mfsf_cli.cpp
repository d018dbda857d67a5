// Command-line front end. Talks to the library only through mfsf.h.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfsf.h"

namespace {

struct ExperimentHandle {
  mfsf_experiment* ptr = nullptr;
  ~ExperimentHandle() { mfsf_experiment_free(ptr); }
};

struct ModelHandle {
  mfsf_model* ptr = nullptr;
  ~ModelHandle() { mfsf_model_free(ptr); }
};

struct CommonOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int report(mfsf_status st) {
  if (st != MFSF_OK) std::fprintf(stderr, "error: %s: %s\n", mfsf_status_name(st), mfsf_last_error());
  return mfsf_exit_code(st);
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--preset", o.preset, "Built-in preset when no config file is given");
  cmd->add_option("--out", o.out, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", o.seed, "Master seed (overrides seed)");
  cmd->add_option("--threads", o.threads, "Worker threads for data generation");
}

mfsf_status open_experiment(const CommonOptions& o, ExperimentHandle& h) {
  mfsf_status st;
  if (!o.config.empty()) {
    st = mfsf_experiment_load(o.config.c_str(), &h.ptr);
  } else if (!o.preset.empty()) {
    st = mfsf_experiment_from_preset(o.preset.c_str(), &h.ptr);
  } else {
    std::fprintf(stderr, "error: pass --config <path> or --preset <name>\n");
    return MFSF_ERR_CONFIG;
  }
  if (st != MFSF_OK) return st;
  if (!o.out.empty() && (st = mfsf_experiment_set_out_dir(h.ptr, o.out.c_str())) != MFSF_OK) return st;
  if (o.seed && (st = mfsf_experiment_set_seed(h.ptr, *o.seed)) != MFSF_OK) return st;
  if (o.threads && (st = mfsf_experiment_set_threads(h.ptr, *o.threads)) != MFSF_OK) return st;
  return MFSF_OK;
}

bool parse_row(const std::string& line, std::vector<double>& row) {
  row.clear();
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      row.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t\r", used) != std::string::npos) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return !row.empty();
}

// Rows of theta from "a,b,c" or a CSV file whose first line may be a header.
bool load_theta(const std::string& inline_theta, const std::string& file,
                std::vector<double>& flat, std::size_t& rows, std::size_t& cols) {
  std::vector<double> row;
  flat.clear();
  rows = cols = 0;
  if (!inline_theta.empty()) {
    if (!parse_row(inline_theta, row)) return false;
    flat = row;
    rows = 1;
    cols = row.size();
    return true;
  }
  std::ifstream in(file);
  if (!in) return false;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (!parse_row(line, row)) {
      if (first) {
        first = false;
        continue;
      }
      return false;
    }
    first = false;
    if (cols == 0) cols = row.size();
    if (row.size() != cols) return false;
    flat.insert(flat.end(), row.begin(), row.end());
    ++rows;
  }
  return rows > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity surjective-flow surrogate"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, ablate_opts, eval_opts, cfg_opts;

  auto* gen = app.add_subcommand("generate", "Simulate the paired LF/HF datasets");
  add_common(gen, gen_opts);

  std::string stage;
  auto* train = app.add_subcommand("train", "Train one stage and write its checkpoint");
  add_common(train, train_opts);
  train->add_option("--stage", stage, "lf | mf | hf-only")->required();

  std::string checkpoint, theta_inline, theta_file, predict_out;
  std::size_t n_samples = 2000;
  double alpha = 0.05;
  std::uint64_t predict_seed = 0;
  auto* pred = app.add_subcommand("predict", "Predictive summary at new parameter vectors");
  pred->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  auto* t_in = pred->add_option("--theta", theta_inline, "Comma-separated parameter vector");
  auto* t_file = pred->add_option("--theta-file", theta_file, "CSV with one parameter vector per row");
  t_in->excludes(t_file);
  pred->add_option("--samples", n_samples, "Monte Carlo draws per query");
  pred->add_option("--alpha", alpha, "Miscoverage level of the interval (0.05 -> 95%)");
  pred->add_option("--seed", predict_seed, "Sampling seed");
  pred->add_option("--out", predict_out, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the scenario grid on the shared test split");
  add_common(ablate, ablate_opts);

  std::string eval_stage = "mf";
  auto* eval = app.add_subcommand("evaluate", "Score a stage checkpoint on the HF test split");
  add_common(eval, eval_opts);
  eval->add_option("--stage", eval_stage, "lf | mf | hf-only");

  auto* cfg = app.add_subcommand("config", "Print the resolved configuration");
  add_common(cfg, cfg_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*gen) {
    ExperimentHandle h;
    mfsf_status st = open_experiment(gen_opts, h);
    if (st == MFSF_OK) st = mfsf_experiment_generate(h.ptr);
    if (st == MFSF_OK) std::printf("datasets written\n");
    return report(st);
  }
  if (*train) {
    ExperimentHandle h;
    mfsf_status st = open_experiment(train_opts, h);
    double nll = 0.0;
    std::size_t epochs = 0;
    if (st == MFSF_OK) st = mfsf_experiment_train(h.ptr, stage.c_str(), &nll, &epochs);
    if (st == MFSF_OK)
      std::printf("stage %s: %zu epochs, validation NLL %.6f\n", stage.c_str(), epochs, nll);
    return report(st);
  }
  if (*pred) {
    std::vector<double> theta;
    std::size_t rows = 0, cols = 0;
    if (theta_inline.empty() && theta_file.empty()) {
      std::fprintf(stderr, "error: pass --theta or --theta-file\n");
      return 2;
    }
    if (!load_theta(theta_inline, theta_file, theta, rows, cols)) {
      std::fprintf(stderr, "error: cannot read theta\n");
      return 2;
    }
    if (n_samples < 100)
      std::fprintf(stderr, "warning: %zu samples give unreliable interval estimates\n", n_samples);
    const mfsf_status st = mfsf_predict_files(checkpoint.c_str(), theta.data(), rows, cols, n_samples,
                                              alpha, predict_seed, predict_out.c_str());
    if (st == MFSF_OK) std::printf("%zu predictions written to %s\n", rows, predict_out.c_str());
    return report(st);
  }
  if (*ablate) {
    ExperimentHandle h;
    mfsf_status st = open_experiment(ablate_opts, h);
    std::size_t n = 0;
    std::vector<double> medians(64);
    if (st == MFSF_OK) st = mfsf_experiment_ablate(h.ptr, medians.data(), medians.size(), &n);
    if (st == MFSF_OK) std::printf("%zu scenarios evaluated\n", n);
    return report(st);
  }
  if (*eval) {
    ExperimentHandle h;
    mfsf_status st = open_experiment(eval_opts, h);
    double med = 0.0, cov = 0.0;
    if (st == MFSF_OK) st = mfsf_experiment_evaluate(h.ptr, eval_stage.c_str(), &med, &cov);
    if (st == MFSF_OK)
      std::printf("stage %s: median relative L2 %.6f, coverage %.4f\n", eval_stage.c_str(), med, cov);
    return report(st);
  }
  if (*cfg) {
    ExperimentHandle h;
    mfsf_status st = open_experiment(cfg_opts, h);
    std::size_t need = 0;
    if (st == MFSF_OK) st = mfsf_experiment_config_json(h.ptr, nullptr, 0, &need);
    if (st == MFSF_OK) {
      std::string buf(need, '\0');
      st = mfsf_experiment_config_json(h.ptr, buf.data(), buf.size(), &need);
      if (st == MFSF_OK) std::printf("%s\n", buf.c_str());
    }
    return report(st);
  }
  return 2;
}
