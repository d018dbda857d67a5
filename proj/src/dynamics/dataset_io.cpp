#include <cstdio>
#include <fstream>
#include <sstream>

#include "mfsf/dynamics.hpp"

namespace mfsf {

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset d = *this;
  d.theta.resize(static_cast<Index>(rows.size()), theta.cols());
  d.y.resize(static_cast<Index>(rows.size()), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < size(), ErrorKind::InvalidArgument,
            "dataset subset: row " + std::to_string(rows[i]) + " out of range");
    d.theta.row(static_cast<Index>(i)) = theta.row(rows[i]);
    d.y.row(static_cast<Index>(i)) = y.row(rows[i]);
  }
  return d;
}

void Dataset::validate() const {
  require(theta.rows() == y.rows(), ErrorKind::InvalidArgument, "dataset: theta/y row counts differ");
  require(theta_lo.size() == theta.cols() && theta_hi.size() == theta.cols(),
          ErrorKind::InvalidArgument, "dataset: prior bounds do not match theta width");
  for (Index i = 0; i < theta.rows(); ++i)
    for (Index j = 0; j < theta.cols(); ++j)
      require(theta(i, j) >= theta_lo(j) && theta(i, j) <= theta_hi(j), ErrorKind::InvalidArgument,
              "dataset: theta outside prior bounds at row " + std::to_string(i));
}

void write_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                   const std::filesystem::path& manifest_path) {
  data.validate();
  std::ofstream out(csv_path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + csv_path.string());
  std::string line;
  for (Index j = 0; j < data.cond_dim(); ++j) line += (j ? ",theta_" : "theta_") + std::to_string(j + 1);
  for (Index j = 0; j < data.series_length(); ++j) line += ",y_" + std::to_string(j + 1);
  out << line << "\n";
  char buf[32];
  for (Index i = 0; i < data.size(); ++i) {
    line.clear();
    for (Index j = 0; j < data.cond_dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.theta(i, j));
      if (j) line += ',';
      line += buf;
    }
    for (Index j = 0; j < data.series_length(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.y(i, j));
      line += ',';
      line += buf;
    }
    out << line << "\n";
  }
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + csv_path.string());

  nlohmann::json manifest = data.metadata;
  manifest["fidelity"] = to_string(data.fidelity);
  manifest["rows"] = data.size();
  manifest["cond_dim"] = data.cond_dim();
  manifest["series_length"] = data.series_length();
  manifest["sample_rate_hz"] = data.sample_rate_hz;
  manifest["theta_lo"] = std::vector<double>(data.theta_lo.begin(), data.theta_lo.end());
  manifest["theta_hi"] = std::vector<double>(data.theta_hi.begin(), data.theta_hi.end());
  manifest["csv"] = csv_path.filename().string();
  std::ofstream mout(manifest_path, std::ios::trunc);
  require(static_cast<bool>(mout), ErrorKind::Io, "cannot write " + manifest_path.string());
  mout << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& manifest_path) {
  std::ifstream min(manifest_path);
  require(static_cast<bool>(min), ErrorKind::MissingArtifact, "cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, manifest_path.string() + ": " + e.what());
  }

  Dataset d;
  try {
    d.fidelity = fidelity_from_string(manifest.at("fidelity").get<std::string>());
    const auto m = manifest.at("cond_dim").get<Index>();
    const auto w = manifest.at("series_length").get<Index>();
    const auto rows = manifest.at("rows").get<Index>();
    d.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
    const auto lo = manifest.at("theta_lo").get<std::vector<double>>();
    const auto hi = manifest.at("theta_hi").get<std::vector<double>>();
    d.theta_lo = Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size()));
    d.theta_hi = Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size()));
    d.theta.resize(rows, m);
    d.y.resize(rows, w);
    d.metadata = manifest;

    std::ifstream in(csv_path);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot read " + csv_path.string());
    std::string line;
    std::getline(in, line);
    for (Index i = 0; i < rows; ++i) {
      require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io,
              csv_path.string() + ": expected " + std::to_string(rows) + " rows");
      const char* p = line.c_str();
      for (Index j = 0; j < m + w; ++j) {
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        require(end != p, ErrorKind::Io,
                csv_path.string() + ": bad value at row " + std::to_string(i + 1));
        (j < m ? d.theta(i, j) : d.y(i, j - m)) = v;
        p = end;
        if (*p == ',') ++p;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, manifest_path.string() + ": " + e.what());
  }
  d.validate();
  return d;
}

}  // namespace mfsf
