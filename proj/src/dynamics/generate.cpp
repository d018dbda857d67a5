#include <cmath>
#include <thread>

#include "mfsf/dynamics.hpp"

namespace mfsf {

namespace {

Index integral_ratio(double num, double den, const std::string& what) {
  const double r = num / den;
  const Index k = static_cast<Index>(std::llround(r));
  require(k >= 1 && std::abs(r - static_cast<double>(k)) < 1e-9 * r, ErrorKind::Config,
          what + " must be an integral multiple");
  return k;
}

template <class Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(t));
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&, w] {
      try {
        for (Index i = w; i < n; i += t) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

nlohmann::json fidelity_json(const FidelityConfig& f) {
  nlohmann::json j{{"level", to_string(f.level)},
                   {"dt_sim", f.dt_sim},
                   {"stiffness_bias", f.stiffness_bias}};
  j["excitation_perturbation"] =
      f.excitation_perturbation ? nlohmann::json(*f.excitation_perturbation) : nlohmann::json();
  return j;
}

ExcitationSpec resolved_excitation(const GenerationSpec& spec) {
  ExcitationSpec e = spec.excitation;
  e.dt = spec.hf.dt_sim;
  e.duration = spec.grid.duration();
  e.seed = derive_seed(spec.seed, "excitation");
  return e;
}

double perturbation_factor(const GenerationSpec& spec, Index record) {
  if (!spec.hf.excitation_perturbation) return 1.0;
  Rng rng(derive_seed(spec.seed, "perturbation/" + std::to_string(record)));
  const double h = *spec.hf.excitation_perturbation;
  return 1.0 + rng.uniform(-h, h);
}

}  // namespace

const char* to_string(Fidelity f) { return f == Fidelity::LF ? "LF" : "HF"; }

Fidelity fidelity_from_string(const std::string& s) {
  if (s == "LF" || s == "lf") return Fidelity::LF;
  if (s == "HF" || s == "hf") return Fidelity::HF;
  fail(ErrorKind::Config, "unknown fidelity '" + s + "'");
}

Vector simulate_record(const StructuralConfig& cfg, const FidelityConfig& fid, const Vector& theta,
                       std::span<const double> base_accel, double excitation_dt,
                       const OutputGrid& grid, double amplitude_factor) {
  const Index stride = integral_ratio(fid.dt_sim, excitation_dt, "simulation dt / excitation dt");
  std::vector<double> base = decimate(base_accel, stride);
  for (double& v : base) v *= amplitude_factor;
  const SystemMatrices sys = assemble_matrices(cfg, theta, fid.stiffness_bias);
  const Matrix c = rayleigh_damping(sys.mass, sys.stiffness, cfg.damping_ratio, cfg.damping_modes);
  return newmark_solve(sys.mass, c, sys.stiffness, base, fid.dt_sim, cfg.sensor_dof, grid);
}

void GenerationSpec::validate() const {
  structure.validate();
  require(n_lf >= 1 && n_hf >= 1, ErrorKind::Config, "dataset sizes must be >= 1");
  require(n_hf <= n_lf, ErrorKind::Config,
          "n_hf (" + std::to_string(n_hf) + ") must not exceed n_lf (" + std::to_string(n_lf) + ")");
  require(lf.dt_sim > hf.dt_sim, ErrorKind::Config, "LF dt_sim must exceed HF dt_sim");
  require(hf.stiffness_bias == 1.0, ErrorKind::Config, "HF stiffness_bias must be 1");
  require(lf.stiffness_bias > 0.0, ErrorKind::Config, "LF stiffness_bias must be positive");
  require(!lf.excitation_perturbation, ErrorKind::Config,
          "excitation perturbation applies to the HF level only");
  if (hf.excitation_perturbation)
    require(*hf.excitation_perturbation >= 0.0 && *hf.excitation_perturbation < 1.0,
            ErrorKind::Config, "excitation perturbation half-width must lie in [0, 1)");
  require(theta_lo < theta_hi && theta_lo > -1.0, ErrorKind::Config, "bad parameter prior bounds");
  require(grid.n_points >= 1 && grid.sample_dt > 0.0, ErrorKind::Config, "bad output grid");
  integral_ratio(lf.dt_sim, hf.dt_sim, "LF dt_sim / HF dt_sim");
  integral_ratio(grid.sample_dt, lf.dt_sim, "sample interval / LF dt_sim");
  integral_ratio(grid.sample_dt, hf.dt_sim, "sample interval / HF dt_sim");
  require(excitation.bandwidth_hz > 0.0 && excitation.bandwidth_hz < 0.5 / hf.dt_sim,
          ErrorKind::Config, "excitation bandwidth must lie below the HF Nyquist frequency");
}

std::pair<Matrix, Matrix> paired_responses(const GenerationSpec& spec, const Matrix& theta) {
  spec.validate();
  const ExcitationSpec exc = resolved_excitation(spec);
  const std::vector<double> base = generate_excitation(exc);
  Matrix lf(theta.rows(), spec.grid.n_points), hf(theta.rows(), spec.grid.n_points);
  parallel_for(theta.rows(), spec.threads, [&](Index i) {
    const Vector th = theta.row(i).transpose();
    lf.row(i) = simulate_record(spec.structure, spec.lf, th, base, exc.dt, spec.grid).transpose();
    hf.row(i) = simulate_record(spec.structure, spec.hf, th, base, exc.dt, spec.grid,
                                perturbation_factor(spec, i))
                    .transpose();
  });
  return {lf, hf};
}

std::pair<Dataset, Dataset> generate_pairs(const GenerationSpec& spec) {
  spec.validate();
  const Index m = spec.structure.n_groups();
  const ExcitationSpec exc = resolved_excitation(spec);
  const std::vector<double> base = generate_excitation(exc);

  const std::uint64_t lf_seed = derive_seed(spec.seed, "theta/lf");
  const std::uint64_t hf_seed = derive_seed(spec.seed, "theta/hf");

  auto make = [&](Fidelity level, Index n, std::uint64_t theta_seed, const FidelityConfig& fid) {
    Dataset d;
    d.fidelity = level;
    d.theta = sample_parameters(n, m, theta_seed, spec.theta_lo, spec.theta_hi);
    d.y.resize(n, spec.grid.n_points);
    d.theta_lo = Vector::Constant(m, spec.theta_lo);
    d.theta_hi = Vector::Constant(m, spec.theta_hi);
    d.sample_rate_hz = 1.0 / spec.grid.sample_dt;
    std::vector<double> factors(static_cast<std::size_t>(n), 1.0);
    parallel_for(n, spec.threads, [&](Index i) {
      const double f = level == Fidelity::HF ? perturbation_factor(spec, i) : 1.0;
      factors[static_cast<std::size_t>(i)] = f;
      d.y.row(i) = simulate_record(spec.structure, fid, d.theta.row(i).transpose(), base, exc.dt,
                                   spec.grid, f)
                       .transpose();
    });
    d.metadata = {{"fidelity", to_string(level)},
                  {"master_seed", spec.seed},
                  {"theta_seed", theta_seed},
                  {"excitation_seed", exc.seed},
                  {"excitation", {{"dt", exc.dt}, {"duration", exc.duration},
                                  {"bandwidth_hz", exc.bandwidth_hz}, {"amplitude", exc.amplitude}}},
                  {"fidelity_config", fidelity_json(fid)},
                  {"structure", {{"n_dof", spec.structure.n_dof},
                                 {"story_stiffness", spec.structure.story_stiffness},
                                 {"story_mass", spec.structure.story_mass},
                                 {"damping_ratio", spec.structure.damping_ratio},
                                 {"groups", spec.structure.group_of_story},
                                 {"sensor_dof", spec.structure.sensor_dof},
                                 {"damping_modes", {spec.structure.damping_modes.first,
                                                    spec.structure.damping_modes.second}}}}};
    if (level == Fidelity::HF && spec.hf.excitation_perturbation)
      d.metadata["amplitude_factors"] = factors;
    return d;
  };

  return {make(Fidelity::LF, spec.n_lf, lf_seed, spec.lf),
          make(Fidelity::HF, spec.n_hf, hf_seed, spec.hf)};
}

double pearson_correlation(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() > 1, ErrorKind::DimensionMismatch,
          "pearson_correlation: lengths differ or too short");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
  require(den > 0.0, ErrorKind::InvalidArgument, "pearson_correlation: constant series");
  return da.dot(db) / den;
}

}  // namespace mfsf
