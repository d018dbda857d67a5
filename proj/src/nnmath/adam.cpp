#include <cmath>

#include "mfsf/nnmath.hpp"

namespace mfsf {

AdamState AdamState::for_params(const ParamStore& params, double lr) {
  require(lr > 0.0, ErrorKind::InvalidArgument, "learning rate must be positive");
  AdamState s;
  s.m.assign(params.size(), 0.0);
  s.v.assign(params.size(), 0.0);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& state, ParamStore& params) {
  auto& w = params.values();
  const auto& g = params.grads();
  require(state.m.size() == w.size() && state.v.size() == w.size(), ErrorKind::DimensionMismatch,
          "adam: moment buffers do not match parameter count");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (double& g : params.grads()) g *= f;
  }
  return norm;
}

}  // namespace mfsf
