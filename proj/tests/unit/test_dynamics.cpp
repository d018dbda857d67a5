#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mfsf/dynamics.hpp"
#include "mfsf/experiment.hpp"

using namespace mfsf;

namespace {

constexpr double kPi = std::numbers::pi;

template <typename A, typename B>
bool same(const A& a, const B& b) {
  return a == b;
}

Matrix mat1(double v) { return Matrix::Constant(1, 1, v); }

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Displacement history of an SDOF system under f(t) = sin(w t) from rest.
Vector sdof_sine_displacement(double m, double c, double k, double w, double dt, Index steps) {
  std::vector<double> load(static_cast<std::size_t>(steps + 1));
  for (Index i = 0; i <= steps; ++i) load[static_cast<std::size_t>(i)] = std::sin(w * dt * i);
  const NewmarkResult r = newmark_integrate(mat1(m), mat1(c), mat1(k), Vector::Ones(1), load, dt);
  return r.displacement.row(0).transpose();
}

// Periodogram power of x (sampled at dt) at frequency f.
double periodogram(const std::vector<double>& x, double dt, double f) {
  std::complex<double> acc = 0.0;
  const double w = 2.0 * kPi * f * dt;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += x[i] * std::complex<double>(std::cos(w * static_cast<double>(i)), -std::sin(w * static_cast<double>(i)));
  return std::norm(acc) / static_cast<double>(x.size());
}

GenerationSpec preset_spec(const std::string& preset, std::uint64_t seed) {
  GenerationSpec s = ExperimentConfig::from_json({{"preset", preset}}).generation;
  s.seed = seed;
  return s;
}

GenerationSpec small_spec(std::uint64_t seed) { return preset_spec("case1", seed); }

}  // namespace

TEST_CASE("sample_parameters") {
  const Matrix a = sample_parameters(100000, 9, 17);
  CHECK(a.rows() == 100000);
  CHECK(a.cols() == 9);
  CHECK(a.minCoeff() >= -0.3);
  CHECK(a.maxCoeff() <= 0.3);
  CHECK(a.colwise().mean().cwiseAbs().maxCoeff() < 0.01);
  CHECK(same(sample_parameters(50, 9, 17), sample_parameters(50, 9, 17)));
  CHECK(!same(sample_parameters(50, 9, 17), sample_parameters(50, 9, 18)));
}

TEST_CASE("assemble_matrices") {
  StructuralConfig cfg = default_structure(3, 3);
  cfg.story_stiffness = 10.0;
  cfg.story_mass = 2.0;

  SUBCASE("nominal 3-DOF chain") {
    const SystemMatrices s = assemble_matrices(cfg, Vector::Zero(3));
    Matrix k(3, 3);
    k << 20, -10, 0, -10, 20, -10, 0, -10, 10;
    CHECK(same(s.stiffness, k));
    CHECK(same(s.mass, Matrix(Vector::Constant(3, 2.0).asDiagonal())));
  }
  SUBCASE("uniform -0.3 scales K by 0.7") {
    const SystemMatrices s0 = assemble_matrices(cfg, Vector::Zero(3));
    const SystemMatrices s = assemble_matrices(cfg, Vector::Constant(3, -0.3));
    CHECK((s.stiffness - 0.7 * s0.stiffness).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("stiffness bias multiplies every story") {
    const SystemMatrices s0 = assemble_matrices(cfg, Vector::Zero(3));
    const SystemMatrices s = assemble_matrices(cfg, Vector::Zero(3), 1.05);
    CHECK((s.stiffness - 1.05 * s0.stiffness).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("group map: two stories per group") {
    const StructuralConfig c = default_structure(18, 9);
    Vector th = Vector::Zero(9);
    th(8) = 0.5;
    const SystemMatrices s = assemble_matrices(c, th);
    CHECK(s.stiffness(17, 17) == doctest::Approx(1.5 * c.story_stiffness));
    CHECK(s.stiffness(15, 15) == doctest::Approx(2.5 * c.story_stiffness));
    CHECK(s.stiffness(16, 16) == doctest::Approx(3.0 * c.story_stiffness));
  }
  SUBCASE("M^-1 K eigenvalues positive for random theta") {
    const StructuralConfig c = default_structure(18, 9);
    const Matrix thetas = sample_parameters(1000, 9, 4);
    double smallest = 1e300;
    for (Index i = 0; i < thetas.rows(); ++i) {
      const SystemMatrices s = assemble_matrices(c, thetas.row(i).transpose());
      const Matrix a = s.mass.inverse() * s.stiffness;
      smallest = std::min(smallest, Eigen::EigenSolver<Matrix>(a, false).eigenvalues().real().minCoeff());
    }
    CHECK(smallest > 0.0);
  }
  SUBCASE("non-physical stiffness") {
    CHECK_THROWS_AS(assemble_matrices(cfg, Vector::Constant(3, -1.0)), Error);
    CHECK_THROWS_AS(assemble_matrices(cfg, Vector::Constant(3, -1.5)), Error);
    CHECK_THROWS_AS(assemble_matrices(cfg, Vector::Zero(2)), Error);
  }
}

TEST_CASE("rayleigh_damping") {
  SUBCASE("zeta = 0 gives C = 0") {
    const SystemMatrices s = assemble_matrices(default_structure(6, 3), Vector::Zero(3));
    CHECK(rayleigh_damping(s.mass, s.stiffness, 0.0, {0, 2}).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("modal damping at the anchor modes equals zeta") {
    const SystemMatrices s = assemble_matrices(default_structure(18, 9), Vector::Constant(9, 0.1));
    const Matrix c = rayleigh_damping(s.mass, s.stiffness, 0.02, {0, 2});
    const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(s.stiffness, s.mass);
    for (Index i : {0, 2}) {
      const Vector phi = es.eigenvectors().col(i);
      const double w = std::sqrt(es.eigenvalues()(i));
      const double zeta = phi.dot(c * phi) / (2.0 * w * phi.dot(s.mass * phi));
      CHECK(std::abs(zeta - 0.02) < 1e-10);
    }
  }
  SUBCASE("repeated frequencies") {
    const Matrix m = Matrix::Identity(2, 2);
    const Matrix k = 4.0 * Matrix::Identity(2, 2);
    CHECK_THROWS_AS(rayleigh_damping(m, k, 0.02, {0, 1}), Error);
  }
  SUBCASE("SDOF free decay follows exp(-zeta w t)") {
    const double m = 1.0, k = 4.0 * kPi * kPi, w = 2.0 * kPi, zeta = 0.02, dt = 1e-3;
    const Matrix c = rayleigh_damping(mat1(m), mat1(k), zeta, {0, 0});
    // Short pulse, then free vibration.
    const Index steps = 20000;
    std::vector<double> load(steps + 1, 0.0);
    for (Index i = 0; i <= 50; ++i) load[static_cast<std::size_t>(i)] = 1.0;
    const NewmarkResult r = newmark_integrate(mat1(m), c, mat1(k), Vector::Ones(1), load, dt);
    const Vector u = r.displacement.row(0).transpose();
    std::vector<std::pair<double, double>> peaks;
    for (Index i = 200; i < steps; ++i)
      if (u(i) > u(i - 1) && u(i) >= u(i + 1)) peaks.emplace_back(dt * i, u(i));
    REQUIRE(peaks.size() > 10);
    double worst = 0.0;
    for (const auto& [t, a] : peaks) {
      const double expected = peaks.front().second * std::exp(-zeta * w * (t - peaks.front().first));
      worst = std::max(worst, std::abs(a / expected - 1.0));
    }
    CHECK(worst < 0.01);
  }
}

TEST_CASE("generate_excitation") {
  ExcitationSpec spec;
  spec.seed = 42;
  spec.amplitude = 1.5;
  const std::vector<double> x = generate_excitation(spec);
  REQUIRE(static_cast<Index>(x.size()) == spec.steps() + 1);

  SUBCASE("mean and amplitude") {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    CHECK(std::abs(mean) < 4.0 * spec.amplitude / std::sqrt(static_cast<double>(x.size())));
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    CHECK(std::sqrt(var / static_cast<double>(x.size())) == doctest::Approx(spec.amplitude).epsilon(1e-9));
  }
  SUBCASE("power above twice the bandwidth is 20 dB below the passband") {
    const double df = 1.0 / spec.duration;
    double pass = 0.0, stop = 0.0;
    int n_pass = 0, n_stop = 0;
    for (double f = df; f < spec.bandwidth_hz; f += df, ++n_pass) pass += periodogram(x, spec.dt, f);
    for (double f = 2.0 * spec.bandwidth_hz; f < 0.5 / spec.dt; f += 4.0 * df, ++n_stop)
      stop += periodogram(x, spec.dt, f);
    const double db = 10.0 * std::log10((pass / n_pass) / (stop / n_stop));
    MESSAGE("passband / stopband: " << db << " dB");
    CHECK(db >= 20.0);
  }
  SUBCASE("determinism") {
    CHECK(same(generate_excitation(spec), x));
    ExcitationSpec other = spec;
    other.seed = 43;
    CHECK(!same(generate_excitation(other), x));
  }
}

TEST_CASE("Newmark integration") {
  SUBCASE("quiescent system stays at rest") {
    const SystemMatrices s = assemble_matrices(default_structure(6, 3), Vector::Zero(3));
    const Matrix c = rayleigh_damping(s.mass, s.stiffness, 0.02, {0, 2});
    const std::vector<double> zero(4001, 0.0);
    const Vector y = newmark_solve(s.mass, c, s.stiffness, zero, 0.001, 5, OutputGrid{0.05, 80});
    CHECK(y.size() == 80);
    CHECK(y.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("SDOF off-resonance steady-state amplitude") {
    // m = 1, k = 4 pi^2, undamped: u = A sin(w t) + free terms at w_n.
    const double m = 1.0, k = 4.0 * kPi * kPi, dt = 1e-3;
    const double wn = std::sqrt(k / m);
    for (double w : {0.5 * wn, 1.7 * wn}) {
      const Index steps = 20000;
      const Vector u = sdof_sine_displacement(m, 0.0, k, w, dt, steps);
      Matrix basis(steps + 1, 4);
      for (Index i = 0; i <= steps; ++i) {
        const double t = dt * i;
        basis.row(i) << std::sin(w * t), std::cos(w * t), std::sin(wn * t), std::cos(wn * t);
      }
      const Vector coef = basis.colPivHouseholderQr().solve(u);
      const double amplitude = std::hypot(coef(0), coef(1));
      const double expected = 1.0 / std::abs(k - m * w * w);
      MESSAGE("w/wn = " << w / wn << ": " << amplitude << " vs " << expected);
      CHECK(std::abs(amplitude / expected - 1.0) < 0.01);
    }
  }

  SUBCASE("second-order convergence against a dt/8 reference") {
    const double m = 1.0, k = 4.0 * kPi * kPi, c = 0.1, w = 3.3, dt = 0.01, t_end = 5.0;
    const Index n = static_cast<Index>(std::lround(t_end / dt));
    const Vector ref = sdof_sine_displacement(m, c, k, w, dt / 8.0, 8 * n);
    auto error = [&](int factor) {
      const Vector u = sdof_sine_displacement(m, c, k, w, dt / factor, factor * n);
      double e = 0.0;
      for (Index i = 0; i <= n; ++i) e += std::pow(u(factor * i) - ref(8 * i), 2);
      return std::sqrt(e);
    };
    const double e1 = error(1), e2 = error(2);
    const double ratio = e1 / e2;
    MESSAGE("error ratio " << ratio << ", order " << std::log2(ratio));
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
    CHECK(std::log2(ratio) >= 1.8);
    CHECK(std::log2(ratio) <= 2.2);
  }

  SUBCASE("halving the HF step changes the response by < 0.5%") {
    const StructuralConfig cfg = default_structure(18, 9);
    ExcitationSpec e;
    e.dt = 0.0005;
    e.seed = 3;
    const std::vector<double> base = generate_excitation(e);
    const Vector th = sample_parameters(1, 9, 8).row(0).transpose();
    const OutputGrid grid;
    const Vector y1 = simulate_record(cfg, {Fidelity::HF, 0.001, 1.0, std::nullopt}, th, base, e.dt, grid);
    const Vector y2 = simulate_record(cfg, {Fidelity::HF, 0.0005, 1.0, std::nullopt}, th, base, e.dt, grid);
    const double rel = (y1 - y2).norm() / y2.norm();
    MESSAGE("relative change " << rel);
    CHECK(rel < 0.005);
  }

  SUBCASE("linearity") {
    const StructuralConfig cfg = default_structure(18, 9);
    ExcitationSpec e;
    e.seed = 5;
    std::vector<double> base = generate_excitation(e);
    const Vector th = Vector::Constant(9, 0.1);
    const FidelityConfig hf{Fidelity::HF, 0.001, 1.0, std::nullopt};
    const Vector y1 = simulate_record(cfg, hf, th, base, e.dt, OutputGrid{});
    for (double& v : base) v *= 2.0;
    const Vector y2 = simulate_record(cfg, hf, th, base, e.dt, OutputGrid{});
    CHECK((y2 - 2.0 * y1).norm() / (2.0 * y1).norm() < 1e-8);
  }

  SUBCASE("energy decays once the excitation stops") {
    const StructuralConfig cfg = default_structure(18, 9);
    const SystemMatrices s = assemble_matrices(cfg, Vector::Zero(9));
    const Matrix c = rayleigh_damping(s.mass, s.stiffness, 0.02, {0, 2});
    ExcitationSpec e;
    e.seed = 9;
    std::vector<double> base = generate_excitation(e);
    const std::size_t half = base.size() / 2;
    std::fill(base.begin() + static_cast<std::ptrdiff_t>(half), base.end(), 0.0);
    const NewmarkResult r = newmark_integrate(s.mass, c, s.stiffness,
                                              -s.mass * Vector::Ones(cfg.n_dof), base, e.dt);
    auto energy = [&](Index i) {
      const Vector u = r.displacement.col(i), v = r.velocity.col(i);
      return 0.5 * v.dot(s.mass * v) + 0.5 * u.dot(s.stiffness * u);
    };
    bool monotone = true;
    for (Index i = static_cast<Index>(half) + 1; i < r.displacement.cols(); ++i)
      monotone = monotone && energy(i) <= energy(i - 1) * (1.0 + 1e-12);
    CHECK(monotone);
    // Windowed displacement envelope at the sensor.
    const Index win = 1000;
    double prev = 1e300;
    for (Index start = static_cast<Index>(half); start + win <= r.displacement.cols(); start += win) {
      const double peak = r.displacement.row(cfg.sensor_dof).segment(start, win).cwiseAbs().maxCoeff();
      CHECK(peak < prev);
      prev = peak;
    }
  }

  SUBCASE("amplitude factor of one reproduces the unperturbed record bitwise") {
    const StructuralConfig cfg = default_structure(18, 9);
    ExcitationSpec e;
    e.seed = 2;
    const std::vector<double> base = generate_excitation(e);
    const Vector th = Vector::Constant(9, -0.2);
    const FidelityConfig hf{Fidelity::HF, 0.001, 1.0, std::nullopt};
    const Vector a = simulate_record(cfg, hf, th, base, e.dt, OutputGrid{});
    const Vector b = simulate_record(cfg, hf, th, base, e.dt, OutputGrid{}, 1.0 + 0.0);
    CHECK(same(a, b));
  }

  SUBCASE("output grid excludes t = 0 and uses exact decimation") {
    const Matrix m = mat1(1.0), k = mat1(4.0 * kPi * kPi), c = mat1(0.3);
    std::vector<double> base(2001);
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = std::sin(0.01 * static_cast<double>(i));
    const Vector y = newmark_solve(m, c, k, base, 0.001, 0, OutputGrid{0.05, 40});
    std::vector<double> load(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) load[i] = -base[i];
    const NewmarkResult r = newmark_integrate(m, c, k, Vector::Ones(1), load, 0.001);
    for (Index j = 0; j < 40; ++j) {
      const Index step = 50 * (j + 1);
      CHECK(y(j) == doctest::Approx(r.acceleration(0, step) + base[static_cast<std::size_t>(step)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("generate_pairs") {
  SUBCASE("case1 preset sizes") {
    GenerationSpec s = small_spec(7);
    s.n_lf = 1000;
    s.n_hf = 200;
    const auto [lf, hf] = generate_pairs(s);
    CHECK(lf.size() == 1000);
    CHECK(hf.size() == 200);
    CHECK(lf.series_length() == 200);
    CHECK(hf.series_length() == 200);
    CHECK(lf.cond_dim() == 9);
    CHECK(lf.theta.minCoeff() >= -0.3);
    CHECK(hf.theta.maxCoeff() <= 0.3);
    CHECK(!same(lf.theta.topRows(200), hf.theta));
    CHECK(lf.y.allFinite());
    CHECK(hf.y.allFinite());
  }

  SUBCASE("Case 1 strongly correlated; Case 2 more discrepant") {
    std::vector<double> c1_corr, c2_corr, c1_rel, c2_rel;
    for (std::uint64_t seed : {1, 2, 3}) {
      const Matrix theta = sample_parameters(40, 9, seed + 100);
      const GenerationSpec s1 = preset_spec("case1", seed);
      const GenerationSpec s2 = preset_spec("case2", seed);
      REQUIRE(s2.hf.excitation_perturbation == 0.6);
      const auto [l1, h1] = paired_responses(s1, theta);
      const auto [l2, h2] = paired_responses(s2, theta);
      CHECK(same(l1, l2));
      std::vector<double> a, b, ra, rb;
      for (Index i = 0; i < theta.rows(); ++i) {
        const Vector lf = l1.row(i).transpose();
        a.push_back(pearson_correlation(lf, h1.row(i).transpose()));
        b.push_back(pearson_correlation(lf, h2.row(i).transpose()));
        ra.push_back((lf - h1.row(i).transpose()).norm() / h1.row(i).norm());
        rb.push_back((lf - h2.row(i).transpose()).norm() / h2.row(i).norm());
      }
      c1_corr.push_back(median_of(a));
      c2_corr.push_back(median_of(b));
      c1_rel.push_back(median_of(ra));
      c2_rel.push_back(median_of(rb));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      MESSAGE("seed " << k + 1 << ": corr " << c1_corr[k] << " / " << c2_corr[k] << ", rel "
                      << c1_rel[k] << " / " << c2_rel[k]);
      CHECK(c1_corr[k] > 0.9);
      CHECK(c2_rel[k] > c1_rel[k]);
      // A per-record amplitude factor leaves Pearson correlation unchanged.
      CHECK(std::abs(c2_corr[k] - c1_corr[k]) < 1e-10);
    }
  }

  SUBCASE("zero-width perturbation reproduces Case 1 bitwise") {
    GenerationSpec s1 = small_spec(4);
    s1.n_lf = 20;
    s1.n_hf = 10;
    GenerationSpec s2 = s1;
    s2.hf.excitation_perturbation = 0.0;
    CHECK(same(generate_pairs(s1).second.y, generate_pairs(s2).second.y));
  }

  SUBCASE("invalid specs") {
    GenerationSpec s = small_spec(1);
    s.n_lf = 10;
    s.n_hf = 20;
    CHECK_THROWS_AS(generate_pairs(s), Error);
    s = small_spec(1);
    s.lf.dt_sim = 0.0005;
    CHECK_THROWS_AS(generate_pairs(s), Error);
    s = small_spec(1);
    s.lf.dt_sim = 0.02;
    CHECK_THROWS_AS(generate_pairs(s), Error);
  }

  SUBCASE("thread count does not change the output") {
    GenerationSpec s = small_spec(6);
    s.n_lf = 12;
    s.n_hf = 6;
    const auto a = generate_pairs(s);
    s.threads = 3;
    const auto b = generate_pairs(s);
    CHECK(same(a.first.y, b.first.y));
    CHECK(same(a.second.y, b.second.y));
  }
}

TEST_CASE("dataset CSV round trip") {
  GenerationSpec s = small_spec(5);
  s.n_lf = 8;
  s.n_hf = 4;
  const auto [lf, hf] = generate_pairs(s);
  const auto dir = std::filesystem::temp_directory_path() / "mfsf_unit_dataset";
  std::filesystem::create_directories(dir);
  write_dataset(hf, dir / "hf.csv", dir / "hf.manifest.json");
  const Dataset back = read_dataset(dir / "hf.csv", dir / "hf.manifest.json");
  CHECK(back.fidelity == Fidelity::HF);
  CHECK(same(back.theta, hf.theta));
  CHECK(same(back.y, hf.y));
  CHECK(same(back.theta_lo, hf.theta_lo));
  CHECK(back.sample_rate_hz == 20.0);
  CHECK_THROWS_AS(read_dataset(dir / "nope.csv", dir / "hf.manifest.json"), Error);
  std::filesystem::remove_all(dir);
}
