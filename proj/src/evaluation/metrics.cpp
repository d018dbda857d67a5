#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfsf/error.hpp"
#include "mfsf/evaluation.hpp"

namespace mfsf {

double empirical_quantile(std::span<const double> sorted, double p) {
  require(!sorted.empty(), ErrorKind::InvalidArgument, "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "quantile level outside [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PredictiveSummary summarize_draws(const Matrix& draws, double alpha, bool keep_samples) {
  require(draws.rows() >= 1, ErrorKind::InvalidArgument, "summary needs at least one draw");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  const Index n = draws.rows();
  const Index w = draws.cols();
  PredictiveSummary s;
  s.n_samples = n;
  s.alpha = alpha;
  s.mean = draws.colwise().mean().transpose();
  s.std = Vector::Zero(w);
  s.ci_lo.resize(w);
  s.ci_hi.resize(w);
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Index t = 0; t < w; ++t) {
    for (Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = draws(i, t);
    if (n > 1) {
      double ss = 0.0;
      for (double v : column) ss += (v - s.mean(t)) * (v - s.mean(t));
      s.std(t) = std::sqrt(ss / static_cast<double>(n - 1));
    }
    std::sort(column.begin(), column.end());
    s.ci_lo(t) = empirical_quantile(column, alpha / 2.0);
    s.ci_hi(t) = empirical_quantile(column, 1.0 - alpha / 2.0);
  }
  if (keep_samples) s.samples = draws;
  return s;
}

PredictiveSummary predict(const FlowModel& model, const Standardizer& standardizer,
                          const Vector& theta, Index n_samples, double alpha, Rng& rng,
                          bool keep_samples) {
  require(theta.size() == model.cond_dim, ErrorKind::DimensionMismatch,
          "theta has " + std::to_string(theta.size()) + " entries, expected m = " +
              std::to_string(model.cond_dim));
  require(n_samples >= 1, ErrorKind::InvalidArgument, "n_samples must be positive");
  const Vector t = standardizer.transform_theta(theta.transpose()).row(0).transpose();
  const Matrix draws = standardizer.inverse_y(model.sample(t, n_samples, rng));
  return summarize_draws(draws, alpha, keep_samples);
}

double relative_l2(const Vector& pred, const Vector& truth) {
  require(pred.size() == truth.size(), ErrorKind::DimensionMismatch,
          "relative_l2: length mismatch");
  const double denom = truth.norm();
  require(denom > 0.0, ErrorKind::InvalidArgument, "relative_l2: truth has zero norm");
  return (pred - truth).norm() / denom;
}

double r_squared(const Vector& pred, const Vector& truth) {
  require(pred.size() == truth.size(), ErrorKind::DimensionMismatch, "r_squared: length mismatch");
  require(truth.size() > 0, ErrorKind::InvalidArgument, "r_squared: empty series");
  const double mu = truth.mean();
  const double ss_tot = (truth.array() - mu).square().sum();
  require(ss_tot > 0.0, ErrorKind::InvalidArgument, "r_squared: truth is constant");
  const double ss_res = (pred - truth).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double coverage_rate(const std::vector<PredictiveSummary>& summaries,
                     const std::vector<Vector>& truths) {
  require(summaries.size() == truths.size(), ErrorKind::DimensionMismatch,
          "coverage_rate: " + std::to_string(summaries.size()) + " summaries vs " +
              std::to_string(truths.size()) + " truths");
  double inside = 0.0;
  double cells = 0.0;
  for (std::size_t r = 0; r < truths.size(); ++r) {
    const auto& s = summaries[r];
    require(s.ci_lo.size() == truths[r].size() && s.ci_hi.size() == truths[r].size(),
            ErrorKind::DimensionMismatch, "coverage_rate: series length mismatch at record " +
                                              std::to_string(r));
    for (Index t = 0; t < truths[r].size(); ++t) {
      const double y = truths[r](t);
      if (y >= s.ci_lo(t) && y <= s.ci_hi(t)) inside += 1.0;
      cells += 1.0;
    }
  }
  require(cells > 0.0, ErrorKind::InvalidArgument, "coverage_rate: no cells");
  return inside / cells;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorKind::InvalidArgument, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::InvalidArgument, "mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace mfsf
