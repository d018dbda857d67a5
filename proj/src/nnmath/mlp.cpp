#include <cmath>

#include "mfsf/nnmath.hpp"

namespace mfsf {

const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  Index in = input_dim;
  for (Index h : hidden_dims) {
    n += static_cast<std::size_t>((in + 1) * h);
    in = h;
  }
  return n + static_cast<std::size_t>((in + 1) * output_dim);
}

Mlp Mlp::create(ParamStore& params, const std::string& name, const MlpSpec& spec) {
  require(spec.input_dim >= 1 && spec.output_dim >= 1, ErrorKind::InvalidArgument,
          "mlp '" + name + "': dimensions must be positive");
  Mlp mlp{spec, name, {}, {}};
  Index in = spec.input_dim;
  std::vector<Index> widths = spec.hidden_dims;
  widths.push_back(spec.output_dim);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    require(widths[i] >= 1, ErrorKind::InvalidArgument,
            "mlp '" + name + "': hidden width must be positive");
    mlp.weights.push_back(params.add(name + ".W" + std::to_string(i), in, widths[i]));
    mlp.biases.push_back(params.add(name + ".b" + std::to_string(i), 1, widths[i]));
    in = widths[i];
  }
  return mlp;
}

void Mlp::initialize(ParamStore& params, Rng& rng) const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto w = params.value(weights[i]);
    params.value(biases[i]).setZero();
    const bool last = i + 1 == weights.size();
    if (last && spec.final_zero_init) {
      w.setZero();
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
  }
}

Var mlp_forward(Tape& tape, const Mlp& mlp, const ParamStore& params, Var x) {
  const Index width = tape.value(x).cols();
  require(width == mlp.spec.input_dim, ErrorKind::DimensionMismatch,
          "mlp '" + mlp.name + "': input width " + std::to_string(width) + " does not match " +
              mlp.name + ".W0 rows " + std::to_string(mlp.spec.input_dim));
  Var h = x;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    const TensorSlot& w = mlp.weights[i];
    require(w.offset + w.size() <= params.size(), ErrorKind::DimensionMismatch,
            "mlp '" + mlp.name + "': tensor " + mlp.name + ".W" + std::to_string(i) +
                " is not in the parameter store");
    h = ops::affine(tape, h, params, w, mlp.biases[i]);
    if (i + 1 < mlp.weights.size())
      h = mlp.spec.activation == Activation::Tanh ? ops::tanh(tape, h) : ops::relu(tape, h);
  }
  return h;
}

Vector mlp_forward(const Mlp& mlp, const ParamStore& params, const Vector& x) {
  Tape tape(false);
  const Var in = ops::constant(tape, x.transpose());
  return tape.value(mlp_forward(tape, mlp, params, in)).row(0).transpose();
}

}  // namespace mfsf
