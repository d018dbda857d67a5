#include <cstdio>
#include <fstream>

#include "mfsf/training.hpp"

namespace mfsf {

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& dir, const FlowModel& model,
                     const Standardizer& standardizer, const nlohmann::json& sidecar) {
  std::filesystem::create_directories(dir);
  model.save(dir / "model");
  std::ofstream s(dir / "standardizer.json", std::ios::trunc);
  require(static_cast<bool>(s), ErrorKind::Io, "cannot write " + (dir / "standardizer.json").string());
  s << standardizer.to_json().dump(2) << "\n";
  std::ofstream c(dir / "checkpoint.json", std::ios::trunc);
  require(static_cast<bool>(c), ErrorKind::Io, "cannot write " + (dir / "checkpoint.json").string());
  c << sidecar.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "model.params"), ErrorKind::MissingArtifact,
          "no checkpoint at " + dir.string());
  auto read_json = [&](const std::filesystem::path& p) {
    std::ifstream in(p);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot read " + p.string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, p.string() + ": " + e.what());
    }
  };
  Checkpoint ck{FlowModel::load(dir / "model"),
                Standardizer::from_json(read_json(dir / "standardizer.json")),
                read_json(dir / "checkpoint.json")};
  require(ck.standardizer.y_mean.size() == ck.model.data_dim &&
              ck.standardizer.theta_lo.size() == ck.model.cond_dim,
          ErrorKind::Io, dir.string() + ": standardizer does not match model dimensions");
  return ck;
}

}  // namespace mfsf
