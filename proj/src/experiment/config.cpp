#include <algorithm>
#include <fstream>

#include "mfsf/error.hpp"
#include "mfsf/experiment.hpp"

namespace mfsf {

using nlohmann::json;

namespace {

json common_preset() {
  return {
      {"preset", "desk_small"},
      {"case", 1},
      {"seed", 1},
      {"out_dir", "runs"},
      {"threads", 1},
      {"structure",
       {{"n_dof", 18},
        {"n_groups", 9},
        {"story_stiffness", 2.0e6},
        {"story_mass", 1000.0},
        {"damping_ratio", 0.02},
        {"damping_modes", {0, 2}},
        {"sensor_dof", nullptr}}},
      {"excitation", {{"bandwidth_hz", 8.0}, {"amplitude", 1.0}}},
      {"grid", {{"sample_dt", 0.05}, {"n_points", 200}}},
      {"lf", {{"dt_sim", 0.01}, {"stiffness_bias", 1.03}}},
      {"hf", {{"dt_sim", 0.001}, {"perturbation_half_width", 0.6}}},
      {"data",
       {{"n_lf", 1000},
        {"n_hf", 200},
        {"lf_val", 20},
        {"hf_test", 20},
        {"theta_lo", -0.3},
        {"theta_hi", 0.3}}},
      {"model",
       {{"latent_dim", 10},
        {"hidden_dims", {64, 64}},
        {"decoder_hidden_dims", {64, 64}},
        {"activation", "tanh"},
        {"clamp", 2.0},
        {"couplings_before", 4},
        {"couplings_after", 2}}},
      {"train_lf", {{"epochs", 1000}, {"batch_size", 64}, {"lr", 1e-4}}},
      {"train_hf", {{"epochs", 1000}, {"batch_size", 64}, {"lr", 1e-4}}},
      {"hf_val_fraction", 0.1},
      {"hf_val_min", 2},
      {"scenarios", {"HF-only-180", "MF-100", "MF-180"}},
      {"predict", {{"n_samples", kDefaultPredictSamples}, {"alpha", 0.05}}},
  };
}

void check_keys(const json& obj, const json& schema, const std::string& where) {
  require(obj.is_object(), ErrorKind::Config,
          (where.empty() ? std::string("config") : where) + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    require(schema.contains(key), ErrorKind::Config, "unknown config field '" + path + "'");
    const json& expected = schema.at(key);
    if (expected.is_object()) check_keys(value, expected, path);
  }
}

template <typename T>
T get_field(const json& doc, const json::json_pointer& ptr) {
  const std::string path = ptr.to_string().substr(1);
  std::string dotted = path;
  std::replace(dotted.begin(), dotted.end(), '/', '.');
  require(doc.contains(ptr), ErrorKind::Config, "missing config field '" + dotted + "'");
  try {
    return doc.at(ptr).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, "config field '" + dotted + "' has the wrong type");
  }
}

template <typename T>
T field(const json& doc, const char* pointer) {
  return get_field<T>(doc, json::json_pointer(pointer));
}

std::vector<Index> index_list(const json& doc, const char* pointer) {
  std::vector<Index> out;
  for (auto v : field<std::vector<long long>>(doc, pointer)) out.push_back(static_cast<Index>(v));
  return out;
}

}  // namespace

std::vector<std::string> preset_names() { return {"case1", "case2", "desk_small"}; }

json preset_json(const std::string& name) {
  json j = common_preset();
  j["preset"] = name;
  if (name == "case1") {
    j["case"] = 1;
    j["out_dir"] = "runs/case1";
  } else if (name == "case2") {
    j["case"] = 2;
    j["out_dir"] = "runs/case2";
  } else if (name == "desk_small") {
    j["out_dir"] = "runs/desk_small";
    j["structure"]["n_dof"] = 9;
    j["grid"]["n_points"] = 64;
    j["lf"]["stiffness_bias"] = 1.05;
    j["data"]["n_hf"] = 60;
    j["model"]["latent_dim"] = 8;
    j["model"]["hidden_dims"] = {128, 128};
    j["model"]["decoder_hidden_dims"] = {128, 128};
    j["train_lf"] = {{"epochs", 200}, {"batch_size", 16}, {"lr", 1e-3}};
    j["train_hf"] = {{"epochs", 400}, {"batch_size", 16}, {"lr", 1e-3}};
    j["scenarios"] = {"HF-only-40", "MF-22", "MF-40"};
  } else {
    fail(ErrorKind::Config, "unknown preset '" + name + "' (expected case1, case2 or desk_small)");
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc_in) {
  require(doc_in.is_object(), ErrorKind::Config, "config: expected a JSON object");
  std::string preset = "desk_small";
  if (doc_in.contains("preset")) {
    require(doc_in.at("preset").is_string(), ErrorKind::Config, "config field 'preset' must be a string");
    preset = doc_in.at("preset").get<std::string>();
  }
  json doc = preset_json(preset);
  // Train sections are open-ended (grad_clip etc.), so check them against
  // the full key set rather than the preset's subset.
  json schema = doc;
  const json train_schema = TrainConfig{}.to_json();
  schema["train_lf"] = train_schema;
  schema["train_hf"] = train_schema;
  check_keys(doc_in, schema, "");
  doc.merge_patch(doc_in);

  ExperimentConfig c;
  c.preset = preset;
  c.case_id = field<int>(doc, "/case");
  c.seed = field<std::uint64_t>(doc, "/seed");
  c.out_dir = field<std::string>(doc, "/out_dir");
  c.threads = field<int>(doc, "/threads");

  auto& st = c.generation.structure;
  const Index n_dof = field<Index>(doc, "/structure/n_dof");
  const Index n_groups = field<Index>(doc, "/structure/n_groups");
  require(n_dof >= 1 && n_groups >= 1 && n_groups <= n_dof, ErrorKind::Config,
          "structure: need 1 <= n_groups <= n_dof");
  st = default_structure(n_dof, n_groups);
  st.story_stiffness = field<double>(doc, "/structure/story_stiffness");
  st.story_mass = field<double>(doc, "/structure/story_mass");
  st.damping_ratio = field<double>(doc, "/structure/damping_ratio");
  const auto modes = index_list(doc, "/structure/damping_modes");
  require(modes.size() == 2, ErrorKind::Config, "structure.damping_modes must have two entries");
  st.damping_modes = {modes[0], modes[1]};
  if (doc.at("structure").contains("sensor_dof") && !doc.at("structure").at("sensor_dof").is_null())
    st.sensor_dof = field<Index>(doc, "/structure/sensor_dof");

  c.generation.excitation.bandwidth_hz = field<double>(doc, "/excitation/bandwidth_hz");
  c.generation.excitation.amplitude = field<double>(doc, "/excitation/amplitude");
  c.generation.grid.sample_dt = field<double>(doc, "/grid/sample_dt");
  c.generation.grid.n_points = field<Index>(doc, "/grid/n_points");

  c.generation.lf.level = Fidelity::LF;
  c.generation.lf.dt_sim = field<double>(doc, "/lf/dt_sim");
  c.generation.lf.stiffness_bias = field<double>(doc, "/lf/stiffness_bias");
  c.generation.hf.level = Fidelity::HF;
  c.generation.hf.dt_sim = field<double>(doc, "/hf/dt_sim");
  c.generation.hf.stiffness_bias = 1.0;
  require(c.case_id == 1 || c.case_id == 2, ErrorKind::Config, "config field 'case' must be 1 or 2");
  if (c.case_id == 2)
    c.generation.hf.excitation_perturbation = field<double>(doc, "/hf/perturbation_half_width");

  c.generation.n_lf = field<Index>(doc, "/data/n_lf");
  c.generation.n_hf = field<Index>(doc, "/data/n_hf");
  c.generation.theta_lo = field<double>(doc, "/data/theta_lo");
  c.generation.theta_hi = field<double>(doc, "/data/theta_hi");
  c.lf_val = field<Index>(doc, "/data/lf_val");
  c.hf_test = field<Index>(doc, "/data/hf_test");

  c.model.latent_dim = field<Index>(doc, "/model/latent_dim");
  c.model.options.conditioner.hidden_dims = index_list(doc, "/model/hidden_dims");
  c.model.options.decoder.hidden_dims = index_list(doc, "/model/decoder_hidden_dims");
  const Activation act = activation_from_string(field<std::string>(doc, "/model/activation"));
  c.model.options.conditioner.activation = act;
  c.model.options.decoder.activation = act;
  c.model.options.conditioner.clamp = field<double>(doc, "/model/clamp");
  c.model.options.decoder.clamp = c.model.options.conditioner.clamp;
  c.model.options.couplings_before = field<int>(doc, "/model/couplings_before");
  c.model.options.couplings_after = field<int>(doc, "/model/couplings_after");

  c.train_lf = TrainConfig::from_json(doc.at("train_lf"));
  c.train_hf = TrainConfig::from_json(doc.at("train_hf"));
  c.hf_val_fraction = field<double>(doc, "/hf_val_fraction");
  c.hf_val_min = field<Index>(doc, "/hf_val_min");
  c.scenarios = field<std::vector<std::string>>(doc, "/scenarios");
  c.n_samples = field<Index>(doc, "/predict/n_samples");
  c.alpha = field<double>(doc, "/predict/alpha");

  c.set_seed(c.seed);
  c.set_threads(c.threads);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

json ExperimentConfig::to_json() const {
  const auto& g = generation;
  const auto& st = g.structure;
  json j{
      {"preset", preset},
      {"case", case_id},
      {"seed", seed},
      {"out_dir", out_dir.string()},
      {"threads", threads},
      {"structure",
       {{"n_dof", st.n_dof},
        {"n_groups", st.n_groups()},
        {"story_stiffness", st.story_stiffness},
        {"story_mass", st.story_mass},
        {"damping_ratio", st.damping_ratio},
        {"damping_modes", {st.damping_modes.first, st.damping_modes.second}},
        {"sensor_dof", st.sensor_dof}}},
      {"excitation", {{"bandwidth_hz", g.excitation.bandwidth_hz}, {"amplitude", g.excitation.amplitude}}},
      {"grid", {{"sample_dt", g.grid.sample_dt}, {"n_points", g.grid.n_points}}},
      {"lf", {{"dt_sim", g.lf.dt_sim}, {"stiffness_bias", g.lf.stiffness_bias}}},
      {"hf", {{"dt_sim", g.hf.dt_sim}}},
      {"data",
       {{"n_lf", g.n_lf},
        {"n_hf", g.n_hf},
        {"lf_val", lf_val},
        {"hf_test", hf_test},
        {"theta_lo", g.theta_lo},
        {"theta_hi", g.theta_hi}}},
      {"model",
       {{"latent_dim", model.latent_dim},
        {"hidden_dims", model.options.conditioner.hidden_dims},
        {"decoder_hidden_dims", model.options.decoder.hidden_dims},
        {"activation", to_string(model.options.conditioner.activation)},
        {"clamp", model.options.conditioner.clamp},
        {"couplings_before", model.options.couplings_before},
        {"couplings_after", model.options.couplings_after}}},
      {"train_lf", train_lf.to_json()},
      {"train_hf", train_hf.to_json()},
      {"hf_val_fraction", hf_val_fraction},
      {"hf_val_min", hf_val_min},
      {"scenarios", scenarios},
      {"predict", {{"n_samples", n_samples}, {"alpha", alpha}}},
  };
  if (g.hf.excitation_perturbation) j["hf"]["perturbation_half_width"] = *g.hf.excitation_perturbation;
  return j;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  generation.seed = s;
}

void ExperimentConfig::set_threads(int n) {
  require(n >= 1, ErrorKind::Config, "threads must be >= 1");
  threads = n;
  generation.threads = n;
}

void ExperimentConfig::validate() const {
  try {
    generation.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  require(lf_val >= 1 && lf_val < generation.n_lf, ErrorKind::Config,
          "data.lf_val must lie in [1, n_lf)");
  require(hf_test >= 1 && hf_test < generation.n_hf, ErrorKind::Config,
          "data.hf_test must lie in [1, n_hf)");
  const Index pool = generation.n_hf - hf_test;
  require(model.latent_dim >= 2 && model.latent_dim < generation.grid.n_points, ErrorKind::Config,
          "model.latent_dim must satisfy 2 <= latent_dim < grid.n_points");
  for (Index h : model.options.conditioner.hidden_dims)
    require(h >= 1, ErrorKind::Config, "model.hidden_dims entries must be positive");
  for (Index h : model.options.decoder.hidden_dims)
    require(h >= 1, ErrorKind::Config, "model.decoder_hidden_dims entries must be positive");
  require(model.options.conditioner.clamp > 0.0, ErrorKind::Config, "model.clamp must be positive");
  require(model.options.couplings_before >= 0 && model.options.couplings_after >= 0,
          ErrorKind::Config, "model coupling counts must be non-negative");
  require(hf_val_fraction >= 0.0 && hf_val_fraction < 1.0, ErrorKind::Config,
          "hf_val_fraction must lie in [0, 1)");
  require(hf_val_min >= 0, ErrorKind::Config, "hf_val_min must be >= 0");
  require(!scenarios.empty(), ErrorKind::Config, "scenarios must not be empty");
  for (const auto& label : scenarios) {
    const Scenario s = Scenario::parse(label);
    require(s.n_hf <= pool, ErrorKind::Config,
            "scenario " + label + " needs more HF records than the pool holds (" +
                std::to_string(pool) + ")");
    if (s.kind != Scenario::Kind::LFOnly) hf_split(s.n_hf, hf_val_fraction, hf_val_min);
  }
  require(n_samples >= 1, ErrorKind::Config, "predict.n_samples must be >= 1");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::Config, "predict.alpha must lie in (0, 1)");
}

}  // namespace mfsf
