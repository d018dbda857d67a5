#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "mfsf/dynamics.hpp"

namespace mfsf {

Index StructuralConfig::n_groups() const {
  Index g = 0;
  for (Index s : group_of_story) g = std::max(g, s + 1);
  return g;
}

void StructuralConfig::validate() const {
  require(n_dof >= 1, ErrorKind::Config, "structure.n_dof must be >= 1");
  require(static_cast<Index>(group_of_story.size()) == n_dof, ErrorKind::Config,
          "structure.groups must assign every story exactly once");
  for (Index g : group_of_story)
    require(g >= 0, ErrorKind::Config, "structure.groups entries must be non-negative");
  require(n_dof >= n_groups(), ErrorKind::Config, "structure.n_dof must be >= number of groups");
  require(story_stiffness > 0.0 && story_mass > 0.0, ErrorKind::Config,
          "structure stiffness and mass must be positive");
  require(damping_ratio >= 0.0 && damping_ratio < 0.2, ErrorKind::Config,
          "structure.damping_ratio must lie in [0, 0.2)");
  require(sensor_dof >= 0 && sensor_dof < n_dof, ErrorKind::Config,
          "structure.sensor_dof out of range");
}

StructuralConfig default_structure(Index n_dof, Index n_groups) {
  require(n_groups >= 1 && n_dof >= n_groups, ErrorKind::Config,
          "need n_dof >= n_groups >= 1");
  StructuralConfig cfg;
  cfg.n_dof = n_dof;
  cfg.sensor_dof = n_dof - 1;
  for (Index j = 0; j < n_dof; ++j) cfg.group_of_story.push_back(j * n_groups / n_dof);
  if (n_dof < 3) cfg.damping_modes = {0, n_dof - 1};
  return cfg;
}

Matrix sample_parameters(Index n, Index m, std::uint64_t seed, double lo, double hi) {
  require(n >= 1 && m >= 1, ErrorKind::InvalidArgument, "sample_parameters: n and m must be >= 1");
  Rng rng(seed);
  Matrix out(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) out(i, j) = rng.uniform(lo, hi);
  return out;
}

SystemMatrices assemble_matrices(const StructuralConfig& cfg, const Vector& theta,
                                 double stiffness_bias) {
  require(theta.size() == cfg.n_groups(), ErrorKind::DimensionMismatch,
          "assemble_matrices: theta has length " + std::to_string(theta.size()) + ", expected " +
              std::to_string(cfg.n_groups()));
  for (Index i = 0; i < theta.size(); ++i)
    require(theta(i) > -1.0 && std::isfinite(theta(i)), ErrorKind::InvalidArgument,
            "assemble_matrices: theta_" + std::to_string(i + 1) +
                " gives non-physical stiffness (must exceed -1)");
  const Index n = cfg.n_dof;
  SystemMatrices s{Matrix::Identity(n, n) * cfg.story_mass, Matrix::Zero(n, n)};
  // Story j connects floor j to floor j-1 (the ground for j = 0).
  for (Index j = 0; j < n; ++j) {
    const double k = cfg.story_stiffness * stiffness_bias *
                     (1.0 + theta(cfg.group_of_story[static_cast<std::size_t>(j)]));
    s.stiffness(j, j) += k;
    if (j > 0) {
      s.stiffness(j - 1, j - 1) += k;
      s.stiffness(j, j - 1) -= k;
      s.stiffness(j - 1, j) -= k;
    }
  }
  return s;
}

Vector natural_frequencies(const Matrix& mass, const Matrix& stiffness) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(stiffness, mass);
  require(es.info() == Eigen::Success, ErrorKind::Runtime, "eigen solver failed");
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
}

Matrix rayleigh_damping(const Matrix& mass, const Matrix& stiffness, double zeta,
                        std::pair<Index, Index> modes) {
  if (zeta == 0.0) return Matrix::Zero(mass.rows(), mass.cols());
  const Vector w = natural_frequencies(mass, stiffness);
  const auto [i, j] = modes;
  require(i >= 0 && j >= i && j < w.size(), ErrorKind::InvalidArgument,
          "rayleigh_damping: mode pair (" + std::to_string(i) + ", " + std::to_string(j) +
              ") outside spectrum of size " + std::to_string(w.size()));
  if (i == j) return (2.0 * zeta / w(i)) * stiffness;
  require(std::abs(w(j) - w(i)) > 1e-9 * w(j), ErrorKind::InvalidArgument,
          "rayleigh_damping: repeated frequencies at the anchor modes");
  const double a0 = 2.0 * zeta * w(i) * w(j) / (w(i) + w(j));
  const double a1 = 2.0 * zeta / (w(i) + w(j));
  return a0 * mass + a1 * stiffness;
}

}  // namespace mfsf
