#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "mfsf/nnmath.hpp"
#include "support/oracles.hpp"

using namespace mfsf;
using mfsf::testing::central_difference;
using mfsf::testing::relative_error;

namespace {

// Straightforward forward pass used as an oracle for mlp_forward.
Vector reference_mlp(const Mlp& mlp, const ParamStore& params, const Vector& x) {
  std::vector<double> h(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const auto w = params.value(mlp.weights[l]);
    const auto b = params.value(mlp.biases[l]);
    std::vector<double> next(static_cast<std::size_t>(w.cols()));
    for (Index o = 0; o < w.cols(); ++o) {
      double acc = b(0, o);
      for (Index i = 0; i < w.rows(); ++i) acc += h[static_cast<std::size_t>(i)] * w(i, o);
      const bool last = l + 1 == mlp.weights.size();
      next[static_cast<std::size_t>(o)] = last ? acc : std::tanh(acc);
    }
    h = std::move(next);
  }
  return Eigen::Map<Vector>(h.data(), static_cast<Index>(h.size()));
}

double scalar_mlp_loss(const Mlp& mlp, const ParamStore& params, const Matrix& x) {
  Tape t(false);
  const Var out = mlp_forward(t, mlp, params, ops::constant(t, x));
  return t.value(out).sum();
}

}  // namespace

TEST_CASE("mlp_forward: zero weights give a zero vector") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "net", {3, {}, 2, Activation::Tanh, false});
  const Vector y = mlp_forward(mlp, p, Vector::Constant(3, 0.7));
  CHECK(y.size() == 2);
  CHECK(y.isZero(0.0));
}

TEST_CASE("mlp_forward: identity affine map") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "id", {2, {}, 2, Activation::Tanh, false});
  p.value(mlp.weights[0]) = Matrix::Identity(2, 2);
  const Vector y = mlp_forward(mlp, p, Vector{{1.0, 2.0}});
  CHECK(y(0) == 1.0);
  CHECK(y(1) == 2.0);
}

TEST_CASE("mlp_forward: 2-4-1 tanh net matches a direct re-implementation") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "net", {2, {4}, 1, Activation::Tanh, false});
  Rng rng(42);
  mlp.initialize(p, rng);
  for (const auto& b : mlp.biases) {
    auto v = p.value(b);
    for (Index i = 0; i < v.cols(); ++i) v(0, i) = rng.uniform(-0.5, 0.5);
  }
  const Vector x{{0.5, -0.3}};
  const Vector got = mlp_forward(mlp, p, x);
  const Vector want = reference_mlp(mlp, p, x);
  CHECK(got.size() == 1);
  CHECK(std::abs(got(0) - want(0)) < 1e-14);
  CHECK(mlp_forward(mlp, p, x)(0) == got(0));
}

TEST_CASE("mlp_forward: input width mismatch names the tensor") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "cond", {3, {}, 1, Activation::Tanh, false});
  try {
    mlp_forward(mlp, p, Vector::Zero(2));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
    CHECK(std::string(e.what()).find("cond.W0") != std::string::npos);
  }
}

TEST_CASE("MlpSpec parameter count and init") {
  const MlpSpec spec{5, {7, 3}, 4, Activation::Relu, true};
  CHECK(spec.parameter_count() == 5u * 7 + 7 + 7 * 3 + 3 + 3 * 4 + 4);
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "m", spec);
  CHECK(p.size() == spec.parameter_count());
  Rng rng(3);
  mlp.initialize(p, rng);
  CHECK(p.value(mlp.weights.back()).isZero(0.0));
  CHECK(p.value(mlp.biases.back()).isZero(0.0));
  const double bound = std::sqrt(6.0 / (5 + 7));
  CHECK(p.value(mlp.weights[0]).cwiseAbs().maxCoeff() <= bound);
  CHECK(p.value(mlp.weights[0]).cwiseAbs().maxCoeff() > 0.0);
  CHECK(p.value(mlp.biases[0]).isZero(0.0));
}

TEST_CASE("backward: zero affine net, loss = sum of outputs") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "lin", {3, {}, 2, Activation::Tanh, false});
  const Vector x{{0.3, -1.2, 2.0}};
  Tape t;
  const Var out = mlp_forward(t, mlp, p, ops::constant(t, Matrix(x.transpose())));
  backward(t, out, Matrix::Ones(1, 2), p);
  const auto gw = p.grad(mlp.weights[0]);
  for (Index i = 0; i < 3; ++i)
    for (Index o = 0; o < 2; ++o) CHECK(gw(i, o) == doctest::Approx(x(i)).epsilon(1e-15));
  CHECK(p.grad(mlp.biases[0]).isApprox(Matrix::Ones(1, 2)));
}

TEST_CASE("backward: repeated calls accumulate, empty tape is a no-op") {
  ParamStore p;
  const Mlp mlp = Mlp::create(p, "lin", {2, {}, 1, Activation::Tanh, false});
  const Matrix x{{1.0, 2.0}};
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    const Var out = mlp_forward(t, mlp, p, ops::constant(t, x));
    backward(t, out, Matrix::Ones(1, 1), p);
  }
  CHECK(p.grad(mlp.biases[0])(0, 0) == 2.0);
  Tape empty;
  backward(empty, Var{0}, Matrix::Ones(1, 1), p);
  CHECK(p.grad(mlp.biases[0])(0, 0) == 2.0);
  p.zero_grad();
  CHECK(p.grad_norm() == 0.0);
}

TEST_CASE("backward: MLP parameters match central differences") {
  for (Activation act : {Activation::Tanh, Activation::Relu}) {
    ParamStore p;
    const Mlp mlp = Mlp::create(p, "net", {4, {6, 5}, 3, act, false});
    Rng rng(7);
    mfsf::testing::randomize(p, rng, 0.8);
    Matrix x(3, 4);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    p.zero_grad();
    Tape t;
    const Var out = mlp_forward(t, mlp, p, ops::constant(t, x));
    backward(t, out, Matrix::Ones(3, 3), p);
    const std::vector<double> g = p.grads();
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double fd = central_difference(p, i, 1e-5, [&] { return scalar_mlp_loss(mlp, p, x); });
      worst = std::max(worst, relative_error(g[i], fd));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("backward: every tape op matches central differences through its inputs") {
  // Three parameter tensors enter through affine(I, W, 0) so each op is
  // differentiated with respect to real parameters.
  ParamStore q;
  const TensorSlot wa = q.add("wa", 3, 4), wb = q.add("wb", 3, 4), wl = q.add("wl", 3, 4);
  const TensorSlot zero_b = q.add("zb", 1, 4);
  Rng rng(11);
  for (Index i = 0; i < 12; ++i) {
    q.value(wa).data()[i] = 2.0 + rng.uniform(-1.0, 1.0);  // positive for log()
    q.value(wb).data()[i] = rng.uniform(-1.0, 1.0);
    q.value(wl).data()[i] = rng.uniform(-0.3, 0.3);
  }
  const Matrix eye = Matrix::Identity(3, 3);
  // Fixed non-uniform output weights so the seed gradient is not all ones.
  auto output_weights = [](Index rows, Index cols) {
    Matrix w(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) w(i, j) = 1.0 + 0.3 * static_cast<double>(i) - 0.2 * static_cast<double>(j);
    return w;
  };

  using Builder = std::function<Var(Tape&, Var, Var, Var)>;
  const std::vector<std::pair<const char*, Builder>> cases = {
      {"add", [](Tape& t, Var x, Var y, Var) { return ops::add(t, x, y); }},
      {"sub", [](Tape& t, Var x, Var y, Var) { return ops::sub(t, x, y); }},
      {"mul", [](Tape& t, Var x, Var y, Var) { return ops::mul(t, x, y); }},
      {"scale", [](Tape& t, Var x, Var, Var) { return ops::scale(t, x, -1.7); }},
      {"tanh", [](Tape& t, Var, Var y, Var) { return ops::tanh(t, y); }},
      {"relu", [](Tape& t, Var, Var y, Var) { return ops::relu(t, y); }},
      {"exp", [](Tape& t, Var, Var y, Var) { return ops::exp(t, y); }},
      {"log", [](Tape& t, Var x, Var, Var) { return ops::log(t, x); }},
      {"soft_clamp", [](Tape& t, Var, Var y, Var) { return ops::soft_clamp(t, ops::scale(t, y, 3.0), 2.0); }},
      {"hard_clamp", [](Tape& t, Var, Var y, Var) { return ops::hard_clamp(t, y, -0.5, 0.5); }},
      {"select_cols", [](Tape& t, Var x, Var, Var) { return ops::select_cols(t, x, {3, 0, 0, 2}); }},
      {"slice_cols", [](Tape& t, Var x, Var, Var) { return ops::slice_cols(t, x, 1, 4 - 1); }},
      {"concat_cols", [](Tape& t, Var x, Var y, Var) { return ops::concat_cols(t, x, y); }},
      {"scatter_cols",
       [](Tape& t, Var x, Var y, Var) {
         return ops::scatter_cols(t, ops::slice_cols(t, x, 0, 2), {4, 1},
                                  ops::slice_cols(t, y, 0, 3), {0, 2, 3}, 5);
       }},
      {"row_sum", [](Tape& t, Var x, Var, Var) { return ops::row_sum(t, x); }},
      {"gaussian_logpdf", [](Tape& t, Var x, Var y, Var l) { return ops::gaussian_logpdf(t, x, y, l); }},
      {"std_normal_logpdf", [](Tape& t, Var, Var y, Var) { return ops::std_normal_logpdf(t, y); }},
  };

  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    auto loss = [&](bool record) {
      Tape t(record);
      const Var x = ops::constant(t, eye);
      const Var va = ops::affine(t, x, q, wa, zero_b);
      const Var vb = ops::affine(t, x, q, wb, zero_b);
      const Var vl = ops::affine(t, x, q, wl, zero_b);
      const Var out = build(t, va, vb, vl);
      const Matrix w = output_weights(t.value(out).rows(), t.value(out).cols());
      const double value = (t.value(out).array() * w.array()).sum();
      if (record) {
        q.zero_grad();
        backward(t, out, w, q);
      }
      return value;
    };
    loss(true);
    const std::vector<double> g = q.grads();
    double worst = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double fd = central_difference(q, i, 1e-5, [&] { return loss(false); });
      worst = std::max(worst, relative_error(g[i], fd));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("gaussian_logpdf: reference values") {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(gaussian_logpdf(std::vector<double>{0.0}, std::vector<double>{0.0},
                        std::vector<double>{0.0}) == doctest::Approx(-0.9189385332).epsilon(1e-10));
  CHECK(gaussian_logpdf(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0},
                        std::vector<double>{0.0, 0.0}) ==
        doctest::Approx(-1.8378770664).epsilon(1e-10));
  CHECK(-half_log_2pi == doctest::Approx(-0.9189385332).epsilon(1e-10));
  CHECK_THROWS_AS(gaussian_logpdf(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0},
                                  std::vector<double>{0.0}),
                  Error);
}

TEST_CASE("gaussian_logpdf: x=2, mean 0, std 2 against quadrature") {
  const double ls = std::log(2.0);
  const double value = gaussian_logpdf(std::vector<double>{2.0}, std::vector<double>{0.0},
                                       std::vector<double>{ls});
  // The density integrates to one on a fine grid, and its value at 2 equals
  // the normalized kernel exp(-x^2/8) / Z with Z from the same quadrature.
  const double h = 1e-3;
  double integral = 0.0, kernel_mass = 0.0;
  for (double x = -40.0; x <= 40.0; x += h) {
    integral += std::exp(gaussian_logpdf(std::vector<double>{x}, std::vector<double>{0.0},
                                         std::vector<double>{ls})) * h;
    kernel_mass += std::exp(-x * x / 8.0) * h;
  }
  CHECK(std::abs(integral - 1.0) < 1e-6);
  CHECK(std::abs(std::exp(value) - std::exp(-0.5) / kernel_mass) < 1e-9);
}

TEST_CASE("gaussian_logpdf gradient w.r.t. the mean vanishes at x = mean") {
  ParamStore p;
  const TensorSlot mu = p.add("mu", 1, 3);
  const TensorSlot zb = p.add("zb", 1, 3);
  p.value(mu) << 0.4, -1.0, 2.5;
  Tape t;
  const Var one = ops::constant(t, Matrix::Identity(1, 1));
  const Var mean = ops::affine(t, one, p, mu, zb);
  const Var x = ops::constant(t, Matrix(p.value(mu)));
  const Var ls = ops::constant(t, Matrix::Constant(1, 3, 0.3));
  const Var out = ops::gaussian_logpdf(t, x, mean, ls);
  backward(t, out, Matrix::Ones(1, 1), p);
  CHECK(p.grad(mu).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam_step examples") {
  SUBCASE("zero gradients leave parameters unchanged") {
    ParamStore p;
    const TensorSlot s = p.add("w", 2, 2);
    p.value(s) << 1, 2, 3, 4;
    const std::vector<double> before = p.values();
    AdamState st = AdamState::for_params(p, 1e-2);
    adam_step(st, p);
    CHECK(p.values() == before);
    CHECK(st.step_count == 1);
  }
  SUBCASE("first step with grad = 1 moves by lr regardless of betas") {
    for (auto [b1, b2] : {std::pair{0.9, 0.999}, std::pair{0.5, 0.9}, std::pair{0.0, 0.0}}) {
      ParamStore p;
      const TensorSlot s = p.add("w", 1, 1);
      p.value(s)(0, 0) = 0.25;
      AdamState st = AdamState::for_params(p, 1e-3);
      st.beta1 = b1;
      st.beta2 = b2;
      p.grad(s)(0, 0) = 1.0;
      adam_step(st, p);
      // lr * 1 / (1 + eps) by the bias-corrected recurrences.
      CHECK(p.value(s)(0, 0) - 0.25 == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    }
  }
  SUBCASE("quadratic bowl converges") {
    ParamStore p;
    const TensorSlot s = p.add("w", 1, 1);
    p.value(s)(0, 0) = 1.0;
    AdamState st = AdamState::for_params(p, 1e-2);
    for (int i = 0; i < 2000; ++i) {
      p.zero_grad();
      p.grad(s)(0, 0) = 2.0 * p.value(s)(0, 0);
      adam_step(st, p);
    }
    CHECK(std::abs(p.value(s)(0, 0)) < 1e-3);
    CHECK(st.step_count == 2000);
  }
}

TEST_CASE("clip_grad_norm rescales to the bound") {
  ParamStore p;
  const TensorSlot s = p.add("w", 1, 2);
  p.grad(s) << 3.0, 4.0;
  CHECK(clip_grad_norm(p, 1.0) == doctest::Approx(5.0));
  CHECK(p.grad_norm() == doctest::Approx(1.0));
  CHECK(clip_grad_norm(p, 10.0) == doctest::Approx(1.0));
  CHECK(p.grad_norm() == doctest::Approx(1.0));
}

TEST_CASE("ParamStore layout invariants and bit-exact round trip") {
  ParamStore p;
  p.add("a.W0", 3, 5);
  p.add("a.b0", 1, 5);
  p.add("z", 7, 1);
  CHECK_THROWS_AS(p.add("z", 1, 1), Error);
  std::size_t covered = 0;
  for (const auto& r : p.layout()) {
    CHECK(r.slot.offset == covered);
    covered += r.slot.size();
  }
  CHECK(covered == p.size());
  CHECK(p.grads().size() == p.values().size());

  Rng rng(99);
  for (double& v : p.values()) v = rng.normal() * 1e-3 + rng.uniform();
  p.values()[0] = -0.0;
  p.values()[1] = 1e-310;  // subnormal
  const auto path = std::filesystem::temp_directory_path() / "mfsf_param_roundtrip.params";
  p.save(path);
  const ParamStore back = ParamStore::load(path);
  CHECK(back.same_layout(p));
  CHECK(std::memcmp(back.values().data(), p.values().data(), p.size() * sizeof(double)) == 0);
  std::filesystem::remove(path);

  ParamStore other;
  other.add("a.W0", 3, 5);
  CHECK_THROWS_AS(p.assign_values(other), Error);
}

TEST_CASE("ParamStore load rejects foreign files") {
  const auto path = std::filesystem::temp_directory_path() / "mfsf_bad.params";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMFSF";
  }
  CHECK_THROWS_AS(ParamStore::load(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("Rng determinism and derived seeds") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
  Rng u(8);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
}
