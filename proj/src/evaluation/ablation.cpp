#include <cmath>
#include <cstdio>
#include <fstream>

#include "mfsf/error.hpp"
#include "mfsf/evaluation.hpp"

namespace mfsf {

namespace {

std::vector<Index> iota_rows(Index begin, Index end) {
  std::vector<Index> rows;
  for (Index i = begin; i < end; ++i) rows.push_back(i);
  return rows;
}

Index parse_count(const std::string& label, const std::string& digits) {
  require(!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos,
          ErrorKind::Config, "scenario '" + label + "': expected a record count");
  const Index n = std::stol(digits);
  require(n > 0, ErrorKind::Config, "scenario '" + label + "': count must be positive");
  return n;
}

}  // namespace

std::string Scenario::label() const {
  switch (kind) {
    case Kind::LFOnly:
      return "LF-only";
    case Kind::HFOnly:
      return "HF-only-" + std::to_string(n_hf);
    case Kind::MF:
      return "MF-" + std::to_string(n_hf);
  }
  return "?";
}

Scenario Scenario::parse(const std::string& label) {
  Scenario s;
  if (label == "LF-only") {
    s.kind = Kind::LFOnly;
  } else if (label.rfind("HF-only-", 0) == 0) {
    s.kind = Kind::HFOnly;
    s.n_hf = parse_count(label, label.substr(8));
  } else if (label.rfind("MF-", 0) == 0) {
    s.kind = Kind::MF;
    s.n_hf = parse_count(label, label.substr(3));
  } else {
    fail(ErrorKind::Config,
         "unknown scenario '" + label + "' (expected LF-only, HF-only-<N> or MF-<N>)");
  }
  return s;
}

void AblationResult::recompute_aggregates() {
  std::vector<double> rel;
  for (const auto& r : records) rel.push_back(r.rel_l2);
  median_rel_l2 = median(rel);
  mean_rel_l2 = mean(rel);
}

std::pair<std::vector<Index>, std::vector<Index>> hf_split(Index n, double val_fraction,
                                                           Index val_min) {
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorKind::Config,
          "hf_val_fraction must lie in [0, 1)");
  Index n_val = static_cast<Index>(std::llround(val_fraction * static_cast<double>(n)));
  if (val_fraction > 0.0) n_val = std::max(n_val, val_min);
  require(n - n_val >= 1, ErrorKind::Config,
          "HF scenario with " + std::to_string(n) + " records leaves no training data");
  return {iota_rows(0, n - n_val), iota_rows(n - n_val, n)};
}

LfStage run_lf_stage(const AblationSetup& setup, std::uint64_t seed) {
  Standardizer standardizer = fit_standardizer(setup.lf_train);
  FlowModel model = build_default_model(setup.lf_train.series_length(), setup.model.latent_dim,
                                        setup.lf_train.cond_dim(), seed, setup.model.options);
  TrainConfig cfg = setup.lf_train_config;
  cfg.seed = derive_seed(seed, "train");
  TrainResult result = pretrain_lf(model, setup.lf_train, setup.lf_val, standardizer, cfg);
  return {std::move(model), std::move(standardizer), std::move(result)};
}

std::uint64_t scenario_seed(std::uint64_t master_seed, const std::string& label,
                            std::size_t index) {
  return derive_seed(master_seed, "scenario/" + label + "#" + std::to_string(index));
}

AblationResult run_scenario(const AblationSetup& setup, const LfStage& lf,
                            const Scenario& scenario, std::uint64_t seed) {
  require(setup.hf_test.size() > 0, ErrorKind::Config, "empty HF test split");
  AblationResult out;
  out.label = scenario.label();
  out.seed = seed;

  FlowModel model = lf.model;
  if (scenario.kind == Scenario::Kind::LFOnly) {
    out.best_val_nll = lf.result.best_val_nll;
    out.report = lf.result.report;
  } else {
    require(scenario.n_hf <= setup.hf_pool.size(), ErrorKind::Config,
            out.label + ": needs " + std::to_string(scenario.n_hf) + " HF records, pool has " +
                std::to_string(setup.hf_pool.size()));
    const auto [train_rows, val_rows] =
        hf_split(scenario.n_hf, setup.hf_val_fraction, setup.hf_val_min);
    const Dataset train = setup.hf_pool.subset(train_rows);
    const Dataset val = setup.hf_pool.subset(val_rows);
    TrainConfig cfg = setup.hf_train_config;
    cfg.seed = derive_seed(seed, "train");
    TrainResult result;
    if (scenario.kind == Scenario::Kind::MF) {
      result = finetune_hf(model, lf.model.params, train, val, lf.standardizer, cfg);
    } else {
      model = build_default_model(setup.hf_pool.series_length(), setup.model.latent_dim,
                                  setup.hf_pool.cond_dim(), derive_seed(seed, "model"),
                                  setup.model.options);
      result = train_hf_only(model, train, val, lf.standardizer, cfg);
    }
    out.best_val_nll = result.best_val_nll;
    out.report = std::move(result.report);
  }

  Rng rng(derive_seed(seed, "predict"));
  std::vector<Vector> truths;
  for (Index i = 0; i < setup.hf_test.size(); ++i) {
    const Vector theta = setup.hf_test.theta.row(i).transpose();
    const Vector truth = setup.hf_test.y.row(i).transpose();
    PredictiveSummary s = predict(model, lf.standardizer, theta, setup.n_samples, setup.alpha, rng);
    out.records.push_back({i, relative_l2(s.mean, truth), r_squared(s.mean, truth)});
    out.summaries.push_back(std::move(s));
    truths.push_back(truth);
  }
  out.coverage = coverage_rate(out.summaries, truths);
  out.recompute_aggregates();
  return out;
}

std::vector<AblationResult> run_ablation(const AblationSetup& setup,
                                         const std::vector<std::string>& scenarios,
                                         std::uint64_t master_seed) {
  require(!scenarios.empty(), ErrorKind::Config, "scenario list is empty");
  std::vector<Scenario> parsed;
  for (const auto& label : scenarios) parsed.push_back(Scenario::parse(label));
  const LfStage lf = run_lf_stage(setup, derive_seed(master_seed, "lf"));
  std::vector<AblationResult> results;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const std::string label = parsed[i].label();
    try {
      results.push_back(run_scenario(setup, lf, parsed[i], scenario_seed(master_seed, label, i)));
    } catch (const Error& e) {
      throw Error(e.kind(), "scenario " + label + ": " + e.what());
    }
  }
  return results;
}

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<AblationResult>& results) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "scenario,record_id,rel_l2,r2\n";
  char buf[96];
  for (const auto& res : results) {
    for (const auto& r : res.records) {
      std::snprintf(buf, sizeof buf, ",%ld,%.17g,%.17g\n", static_cast<long>(r.record_id),
                    r.rel_l2, r.r2);
      out << res.label << buf;
    }
  }
}

nlohmann::json ablation_summary_json(const std::vector<AblationResult>& results) {
  nlohmann::json scenarios = nlohmann::json::array();
  for (const auto& r : results) {
    scenarios.push_back({{"scenario", r.label},
                         {"seed", r.seed},
                         {"n_records", r.records.size()},
                         {"median_rel_l2", r.median_rel_l2},
                         {"mean_rel_l2", r.mean_rel_l2},
                         {"coverage", r.coverage},
                         {"best_val_nll", r.best_val_nll},
                         {"best_epoch", r.report.best_epoch}});
  }
  return {{"scenarios", scenarios}};
}

void write_plot_csv(const std::filesystem::path& path, const PredictiveSummary& summary,
                    const Vector& truth, double sample_dt) {
  const bool with_truth = truth.size() > 0;
  require(!with_truth || truth.size() == summary.length(), ErrorKind::DimensionMismatch,
          "plot data: truth length differs from the summary");
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << (with_truth ? "time,truth,mean,ci_lo,ci_hi\n" : "time,mean,ci_lo,ci_hi\n");
  char buf[160];
  for (Index t = 0; t < summary.length(); ++t) {
    const double time = sample_dt * static_cast<double>(t + 1);
    if (with_truth) {
      std::snprintf(buf, sizeof buf, "%.10g,%.17g,%.17g,%.17g,%.17g\n", time, truth(t),
                    summary.mean(t), summary.ci_lo(t), summary.ci_hi(t));
    } else {
      std::snprintf(buf, sizeof buf, "%.10g,%.17g,%.17g,%.17g\n", time, summary.mean(t),
                    summary.ci_lo(t), summary.ci_hi(t));
    }
    out << buf;
  }
}

}  // namespace mfsf
