#include <cmath>

#include "mfsf/training.hpp"

namespace mfsf {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.begin(), v.end()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

Standardizer fit_standardizer(const Dataset& data) {
  require(data.size() > 0, ErrorKind::InvalidArgument, "fit_standardizer: empty dataset");
  Standardizer s;
  const double n = static_cast<double>(data.size());
  s.y_mean = data.y.colwise().mean().transpose();
  const Matrix centered = data.y.rowwise() - s.y_mean.transpose();
  s.y_std = (centered.colwise().squaredNorm().transpose() / n).cwiseSqrt();
  s.y_std = s.y_std.cwiseMax(Standardizer::kStdFloor);
  s.theta_lo = data.theta_lo;
  s.theta_hi = data.theta_hi;
  require(s.theta_lo.size() == data.cond_dim() && s.theta_hi.size() == data.cond_dim() &&
              (s.theta_hi - s.theta_lo).minCoeff() > 0.0,
          ErrorKind::InvalidArgument, "fit_standardizer: dataset lacks valid prior bounds");
  return s;
}

Matrix Standardizer::transform_y(const Matrix& y) const {
  require(y.cols() == y_mean.size(), ErrorKind::DimensionMismatch,
          "standardizer: series length " + std::to_string(y.cols()) + " != " +
              std::to_string(y_mean.size()));
  return (y.rowwise() - y_mean.transpose()).array().rowwise() / y_std.transpose().array();
}

Matrix Standardizer::inverse_y(const Matrix& z) const {
  require(z.cols() == y_mean.size(), ErrorKind::DimensionMismatch,
          "standardizer: series length mismatch");
  return (z.array().rowwise() * y_std.transpose().array()).matrix().rowwise() + y_mean.transpose();
}

Matrix Standardizer::transform_theta(const Matrix& theta) const {
  require(theta.cols() == theta_lo.size(), ErrorKind::DimensionMismatch,
          "standardizer: theta has " + std::to_string(theta.cols()) + " components, expected " +
              std::to_string(theta_lo.size()));
  const Eigen::RowVectorXd width = (theta_hi - theta_lo).transpose();
  return ((theta.rowwise() - theta_lo.transpose()).array().rowwise() / width.array() * 2.0 - 1.0)
      .matrix();
}

Matrix Standardizer::inverse_theta(const Matrix& t) const {
  require(t.cols() == theta_lo.size(), ErrorKind::DimensionMismatch,
          "standardizer: theta width mismatch");
  const Eigen::RowVectorXd width = (theta_hi - theta_lo).transpose();
  return (((t.array() + 1.0) * 0.5).rowwise() * width.array()).matrix().rowwise() +
         theta_lo.transpose();
}

nlohmann::json Standardizer::to_json() const {
  return {{"y_mean", to_std(y_mean)},
          {"y_std", to_std(y_std)},
          {"theta_lo", to_std(theta_lo)},
          {"theta_hi", to_std(theta_hi)}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  try {
    Standardizer s;
    s.y_mean = from_std(j.at("y_mean").get<std::vector<double>>());
    s.y_std = from_std(j.at("y_std").get<std::vector<double>>());
    s.theta_lo = from_std(j.at("theta_lo").get<std::vector<double>>());
    s.theta_hi = from_std(j.at("theta_hi").get<std::vector<double>>());
    require(s.y_mean.size() == s.y_std.size() && s.theta_lo.size() == s.theta_hi.size(),
            ErrorKind::Io, "standardizer: inconsistent vector lengths");
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed standardizer: ") + e.what());
  }
}

}  // namespace mfsf
