#include <cmath>
#include <numbers>

#include "mfsf/dynamics.hpp"

namespace mfsf {

Index ExcitationSpec::steps() const {
  require(dt > 0.0 && duration > 0.0, ErrorKind::InvalidArgument,
          "excitation dt and duration must be positive");
  const double r = duration / dt;
  const double n = std::round(r);
  require(std::abs(r - n) < 1e-9 * std::max(1.0, r), ErrorKind::InvalidArgument,
          "excitation duration must be an integral multiple of dt");
  return static_cast<Index>(n);
}

std::array<double, 5> butterworth_lowpass(double cutoff_hz, double sample_rate_hz) {
  require(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate_hz, ErrorKind::InvalidArgument,
          "low-pass cutoff must lie below Nyquist");
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sample_rate_hz;
  const double alpha = std::sin(w0) * std::numbers::sqrt2 / 2.0;  // Q = 1/sqrt(2)
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

std::vector<double> generate_excitation(const ExcitationSpec& spec) {
  const Index n = spec.steps() + 1;
  Rng rng(spec.seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (double& v : x) v = rng.normal();

  const auto [b0, b1, b2, a1, a2] = butterworth_lowpass(spec.bandwidth_hz, 1.0 / spec.dt);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double& v : x) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double f = sd > 0.0 ? spec.amplitude / sd : 0.0;
  for (double& v : x) v *= f;
  return x;
}

}  // namespace mfsf
