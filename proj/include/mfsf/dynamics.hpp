#pragma once

// Lumped-mass shear-chain simulator used to produce paired low/high-fidelity
// acceleration datasets: Rayleigh damping, band-limited Gaussian base
// excitation and Newmark-beta time integration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mfsf/nnmath.hpp"

namespace mfsf {

struct StructuralConfig {
  Index n_dof = 18;
  double story_stiffness = 2.0e6;  // N/m
  double story_mass = 1000.0;      // kg
  double damping_ratio = 0.02;
  std::vector<Index> group_of_story;  // story j -> parameter group
  Index sensor_dof = 17;
  std::pair<Index, Index> damping_modes{0, 2};

  Index n_groups() const;
  void validate() const;
};

// n_dof stories split evenly into n_groups consecutive groups, sensor at the top.
StructuralConfig default_structure(Index n_dof = 18, Index n_groups = 9);

struct ExcitationSpec {
  double dt = 0.001;
  double duration = 10.0;
  std::uint64_t seed = 0;
  double bandwidth_hz = 8.0;
  double amplitude = 1.0;  // m/s^2, standard deviation of the series

  Index steps() const;  // number of intervals; the series has steps() + 1 samples
};

enum class Fidelity { LF, HF };

const char* to_string(Fidelity f);
Fidelity fidelity_from_string(const std::string& s);

struct FidelityConfig {
  Fidelity level = Fidelity::HF;
  double dt_sim = 0.001;
  double stiffness_bias = 1.0;
  // Half-width of the uniform excitation amplitude perturbation F_delta.
  std::optional<double> excitation_perturbation;
};

struct OutputGrid {
  double sample_dt = 0.05;  // 20 Hz
  Index n_points = 200;

  double duration() const { return sample_dt * static_cast<double>(n_points); }
};

struct SystemMatrices {
  Matrix mass;
  Matrix stiffness;
};

// i.i.d. uniform draws in [lo, hi]^m, one row per sample.
Matrix sample_parameters(Index n, Index m, std::uint64_t seed, double lo = -0.3, double hi = 0.3);

// Story j stiffness = nominal * bias * (1 + theta[group(j)]).
SystemMatrices assemble_matrices(const StructuralConfig& cfg, const Vector& theta,
                                 double stiffness_bias = 1.0);

// Undamped natural circular frequencies, ascending.
Vector natural_frequencies(const Matrix& mass, const Matrix& stiffness);

// C = a0 M + a1 K matching `zeta` at modes i and j. With i == j the single
// mode is matched by stiffness-proportional damping.
Matrix rayleigh_damping(const Matrix& mass, const Matrix& stiffness, double zeta,
                        std::pair<Index, Index> modes);

// RBJ Butterworth low-pass biquad coefficients {b0, b1, b2, a1, a2}.
std::array<double, 5> butterworth_lowpass(double cutoff_hz, double sample_rate_hz);

std::vector<double> generate_excitation(const ExcitationSpec& spec);

struct NewmarkOptions {
  double beta = 0.25;
  double gamma = 0.5;
};

struct NewmarkResult {
  Matrix displacement;  // n_dof x (steps + 1)
  Matrix velocity;
  Matrix acceleration;
};

// Integrates M a + C v + K u = pattern * load(t) from rest; `load` holds the
// amplitude at every step (steps + 1 entries).
NewmarkResult newmark_integrate(const Matrix& mass, const Matrix& damping, const Matrix& stiffness,
                                const Vector& pattern, std::span<const double> load, double dt,
                                const NewmarkOptions& opts = {});

// Base-excited system: effective force -M 1 a_g(t). Returns the absolute
// acceleration at `sensor_dof` decimated onto `grid` (t = k * sample_dt,
// k = 1..n_points). `base_accel` is sampled at `dt`.
Vector newmark_solve(const Matrix& mass, const Matrix& damping, const Matrix& stiffness,
                     std::span<const double> base_accel, double dt, Index sensor_dof,
                     const OutputGrid& grid, const NewmarkOptions& opts = {});

// Every `stride`-th sample starting at index 0.
std::vector<double> decimate(std::span<const double> series, Index stride);

// Response of one record; `base_accel` sampled at `excitation_dt`, which must
// divide fid.dt_sim.
Vector simulate_record(const StructuralConfig& cfg, const FidelityConfig& fid, const Vector& theta,
                       std::span<const double> base_accel, double excitation_dt,
                       const OutputGrid& grid, double amplitude_factor = 1.0);

struct Dataset {
  Fidelity fidelity = Fidelity::HF;
  Matrix theta;  // N x m
  Matrix y;      // N x W
  Vector theta_lo;
  Vector theta_hi;
  double sample_rate_hz = 20.0;
  nlohmann::json metadata = nlohmann::json::object();

  Index size() const { return y.rows(); }
  Index series_length() const { return y.cols(); }
  Index cond_dim() const { return theta.cols(); }
  Dataset subset(std::span<const Index> rows) const;
  void validate() const;
};

struct GenerationSpec {
  StructuralConfig structure;
  FidelityConfig lf;
  FidelityConfig hf;
  ExcitationSpec excitation;  // dt and duration are derived from hf / grid
  OutputGrid grid;
  Index n_lf = 1000;
  Index n_hf = 200;
  double theta_lo = -0.3;
  double theta_hi = 0.3;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// LF and HF datasets on independent theta draws sharing one base excitation.
std::pair<Dataset, Dataset> generate_pairs(const GenerationSpec& spec);

// LF and HF responses for the same theta rows (used by the correlation checks).
std::pair<Matrix, Matrix> paired_responses(const GenerationSpec& spec, const Matrix& theta);

double pearson_correlation(const Vector& a, const Vector& b);

// CSV with header theta_1..theta_m,y_1..y_W (17 significant digits) and a
// JSON manifest beside it.
void write_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                   const std::filesystem::path& manifest_path);
Dataset read_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& manifest_path);

}  // namespace mfsf
