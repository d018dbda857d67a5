#include <cmath>

#include "mfsf/dynamics.hpp"

namespace mfsf {

namespace {

// Average-acceleration style Newmark recurrence; `observe(step, u, v, a)` is
// called for step 0 and after every update.
template <class Load, class Observer>
void newmark_run(const Matrix& M, const Matrix& C, const Matrix& K, const Vector& pattern,
                 Load&& load, Index steps, double dt, const NewmarkOptions& o, Observer&& observe) {
  const Index n = M.rows();
  require(M.cols() == n && C.rows() == n && C.cols() == n && K.rows() == n && K.cols() == n &&
              pattern.size() == n,
          ErrorKind::DimensionMismatch, "newmark: system matrices and load pattern disagree");
  require(dt > 0.0 && o.beta > 0.0 && o.gamma >= 0.0, ErrorKind::InvalidArgument,
          "newmark: dt and beta must be positive");

  const double b = o.beta;
  const double g = o.gamma;
  const Matrix k_eff = K + (g / (b * dt)) * C + (1.0 / (b * dt * dt)) * M;
  const Eigen::LDLT<Matrix> solver(k_eff);
  require(solver.info() == Eigen::Success && solver.isPositive() &&
              solver.vectorD().cwiseAbs().minCoeff() > 1e-300,
          ErrorKind::Runtime, "newmark: singular effective stiffness");
  const Eigen::LDLT<Matrix> mass_solver(M);
  require(mass_solver.info() == Eigen::Success, ErrorKind::Runtime, "newmark: singular mass matrix");

  Vector u = Vector::Zero(n);
  Vector v = Vector::Zero(n);
  Vector a = mass_solver.solve(pattern * load(0));
  observe(Index{0}, u, v, a);

  const double c_mu = 1.0 / (b * dt * dt), c_mv = 1.0 / (b * dt), c_ma = 1.0 / (2.0 * b) - 1.0;
  const double c_cu = g / (b * dt), c_cv = g / b - 1.0, c_ca = dt * (g / (2.0 * b) - 1.0);
  Vector rhs(n), u_next(n), a_next(n);
  for (Index s = 1; s <= steps; ++s) {
    rhs.noalias() = pattern * load(s);
    rhs.noalias() += M * (c_mu * u + c_mv * v + c_ma * a);
    rhs.noalias() += C * (c_cu * u + c_cv * v + c_ca * a);
    u_next = solver.solve(rhs);
    a_next = c_mu * (u_next - u) - c_mv * v - c_ma * a;
    v += dt * ((1.0 - g) * a + g * a_next);
    u = u_next;
    a = a_next;
    observe(s, u, v, a);
  }
}

}  // namespace

NewmarkResult newmark_integrate(const Matrix& mass, const Matrix& damping, const Matrix& stiffness,
                                const Vector& pattern, std::span<const double> load, double dt,
                                const NewmarkOptions& opts) {
  require(!load.empty(), ErrorKind::InvalidArgument, "newmark: empty load history");
  const Index steps = static_cast<Index>(load.size()) - 1;
  const Index n = mass.rows();
  NewmarkResult r{Matrix(n, steps + 1), Matrix(n, steps + 1), Matrix(n, steps + 1)};
  newmark_run(
      mass, damping, stiffness, pattern, [&](Index s) { return load[static_cast<std::size_t>(s)]; },
      steps, dt, opts, [&](Index s, const Vector& u, const Vector& v, const Vector& a) {
        r.displacement.col(s) = u;
        r.velocity.col(s) = v;
        r.acceleration.col(s) = a;
      });
  return r;
}

Vector newmark_solve(const Matrix& mass, const Matrix& damping, const Matrix& stiffness,
                     std::span<const double> base_accel, double dt, Index sensor_dof,
                     const OutputGrid& grid, const NewmarkOptions& opts) {
  const double ratio = grid.sample_dt / dt;
  const Index stride = static_cast<Index>(std::llround(ratio));
  require(stride >= 1 && std::abs(ratio - static_cast<double>(stride)) < 1e-9 * ratio,
          ErrorKind::InvalidArgument,
          "newmark_solve: dt must divide the output sample interval exactly");
  const Index steps = stride * grid.n_points;
  require(static_cast<Index>(base_accel.size()) >= steps + 1, ErrorKind::InvalidArgument,
          "newmark_solve: excitation shorter than the output window");
  require(sensor_dof >= 0 && sensor_dof < mass.rows(), ErrorKind::InvalidArgument,
          "newmark_solve: sensor_dof out of range");

  const Vector pattern = -(mass * Vector::Ones(mass.rows()));
  Vector out(grid.n_points);
  newmark_run(
      mass, damping, stiffness, pattern,
      [&](Index s) { return base_accel[static_cast<std::size_t>(s)]; }, steps, dt, opts,
      [&](Index s, const Vector&, const Vector&, const Vector& a) {
        if (s > 0 && s % stride == 0)
          out(s / stride - 1) = a(sensor_dof) + base_accel[static_cast<std::size_t>(s)];
      });
  return out;
}

std::vector<double> decimate(std::span<const double> series, Index stride) {
  require(stride >= 1, ErrorKind::InvalidArgument, "decimate: stride must be >= 1");
  std::vector<double> out;
  for (std::size_t i = 0; i < series.size(); i += static_cast<std::size_t>(stride))
    out.push_back(series[i]);
  return out;
}

}  // namespace mfsf
