#pragma once

// Dense neural-network primitives: a flat parameter store, a per-evaluation
// reverse-mode tape over batched matrix operations, MLPs and Adam.
//
// Every tape value is a (batch x features) matrix; a single sample is a
// one-row matrix.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfsf/error.hpp"
#include "mfsf/rng.hpp"

namespace mfsf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// ParamStore

struct TensorSlot {
  std::size_t offset = 0;
  Index rows = 0;
  Index cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct TensorRecord {
  std::string name;
  TensorSlot slot;

  bool operator==(const TensorRecord&) const = default;
};

bool operator==(const TensorSlot& a, const TensorSlot& b);

class ParamStore {
 public:
  // Appends a zero-filled tensor; names must be unique.
  TensorSlot add(const std::string& name, Index rows, Index cols);

  const TensorSlot& slot(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return values_.size(); }
  const std::vector<TensorRecord>& layout() const { return layout_; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<double>& grads() const { return grads_; }

  Eigen::Map<Matrix> value(const TensorSlot& s);
  Eigen::Map<const Matrix> value(const TensorSlot& s) const;
  Eigen::Map<Matrix> grad(const TensorSlot& s);
  Eigen::Map<const Matrix> grad(const TensorSlot& s) const;

  void zero_grad();
  double grad_norm() const;

  // Replaces all values; `other` must have an identical layout.
  void assign_values(const ParamStore& other);
  bool same_layout(const ParamStore& other) const { return layout_ == other.layout_; }

  // Binary format: "MFSF01", u64 LE header length, JSON header, then the
  // values as little-endian float64 in layout order.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<TensorRecord> layout_;
};

// ---------------------------------------------------------------------------
// Tape

struct Var {
  std::size_t id = 0;
};

class Tape;
using BackwardFn = std::function<void(Tape&, ParamStore&, std::size_t self)>;

// Records a forward computation. With recording disabled the same operations
// run but keep no backward closures, which is how evaluation and sampling
// share the training code path.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  Var push(Matrix value, bool requires_grad, BackwardFn fn);

  // Gradient buffer of a node (zero-initialized on first access).
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() > 0; }
  void accumulate(Var target, const Matrix& delta);

  // Reverse pass from `output`, seeded with `output_grad`; parameter
  // gradients are added into `params.grads()`.
  void backward(Var output, const Matrix& output_grad, ParamStore& params);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool recording_;
};

// Free-function form of Tape::backward. A tape with no nodes is a no-op.
void backward(Tape& tape, Var output, const Matrix& output_grad, ParamStore& params);

namespace ops {

Var constant(Tape& t, Matrix value);
// x * W + b with W (in x out) and b (1 x out) read from `params`.
Var affine(Tape& t, Var x, const ParamStore& params, TensorSlot weight, TensorSlot bias);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var tanh(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var log(Tape& t, Var a);
// c * tanh(a / c)
Var soft_clamp(Tape& t, Var a, double c);
// Clamps to [lo, hi]; gradient is zero where the bound is active.
Var hard_clamp(Tape& t, Var a, double lo, double hi);
Var select_cols(Tape& t, Var a, std::vector<Index> cols);
Var slice_cols(Tape& t, Var a, Index start, Index count);
Var concat_cols(Tape& t, Var a, Var b);
// Output of width `width` with a's columns at `a_cols` and b's at `b_cols`.
Var scatter_cols(Tape& t, Var a, std::vector<Index> a_cols, Var b,
                 std::vector<Index> b_cols, Index width);
// Row-wise sum: (B x n) -> (B x 1).
Var row_sum(Tape& t, Var a);
// Row-wise diagonal Gaussian log density: (B x n) inputs -> (B x 1).
Var gaussian_logpdf(Tape& t, Var x, Var mean, Var log_std);
Var std_normal_logpdf(Tape& t, Var x);

}  // namespace ops

// Scalar reference form: sum_i [-0.5 log 2pi - ls_i - 0.5 ((x_i - mu_i) / e^ls_i)^2].
double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       std::span<const double> log_std);

// ---------------------------------------------------------------------------
// MLP

enum class Activation { Tanh, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  Index input_dim = 1;
  std::vector<Index> hidden_dims;
  Index output_dim = 1;
  Activation activation = Activation::Tanh;
  bool final_zero_init = false;

  std::size_t parameter_count() const;
};

struct Mlp {
  MlpSpec spec;
  std::string name;
  std::vector<TensorSlot> weights;
  std::vector<TensorSlot> biases;

  // Registers `name.W<i>` / `name.b<i>` tensors in `params`.
  static Mlp create(ParamStore& params, const std::string& name, const MlpSpec& spec);

  // Glorot-uniform weights, zero biases; last layer zeroed when
  // spec.final_zero_init is set.
  void initialize(ParamStore& params, Rng& rng) const;
};

Var mlp_forward(Tape& tape, const Mlp& mlp, const ParamStore& params, Var x);

// Single-vector convenience wrapper (no gradient recording).
Vector mlp_forward(const Mlp& mlp, const ParamStore& params, const Vector& x);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamStore& params, double lr);
};

void adam_step(AdamState& state, ParamStore& params);

// Rescales gradients so their global norm is at most `max_norm`; returns the
// norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace mfsf
