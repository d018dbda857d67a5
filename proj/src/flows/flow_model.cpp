#include <fstream>

#include "mfsf/flows.hpp"

namespace mfsf {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix replicate_rows(const Vector& v, Index n) { return v.transpose().replicate(n, 1); }

json mlp_json(const Mlp& m) {
  std::vector<Index> hidden(m.spec.hidden_dims.begin(), m.spec.hidden_dims.end());
  return {{"name", m.name},
          {"input_dim", m.spec.input_dim},
          {"hidden_dims", hidden},
          {"output_dim", m.spec.output_dim},
          {"activation", to_string(m.spec.activation)},
          {"final_zero_init", m.spec.final_zero_init}};
}

Mlp mlp_from_json(ParamStore& params, const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<Index>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<Index>>();
  spec.output_dim = j.at("output_dim").get<Index>();
  spec.activation = activation_from_string(j.at("activation").get<std::string>());
  spec.final_zero_init = j.at("final_zero_init").get<bool>();
  return Mlp::create(params, j.at("name").get<std::string>(), spec);
}

}  // namespace

// ---------------------------------------------------------------------------
// FlowModel

std::vector<std::size_t> FlowModel::bijective_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (std::holds_alternative<CouplingLayer>(layers[i])) out.push_back(i);
  return out;
}

std::vector<std::size_t> FlowModel::surjective_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (std::holds_alternative<FunnelLayer>(layers[i])) out.push_back(i);
  return out;
}

std::vector<Index> FlowModel::widths() const {
  std::vector<Index> w;
  for (const auto& layer : layers)
    std::visit(Overloaded{[&](const CouplingLayer& c) { w.push_back(c.dim); },
                          [&](const FunnelLayer& f) { w.push_back(f.out_dim); }},
               layer);
  return w;
}

Index FlowModel::noise_dim() const {
  Index n = base_dim;
  for (const auto& layer : layers)
    if (const auto* f = std::get_if<FunnelLayer>(&layer)) n += f->discard_dim();
  return n;
}

void FlowModel::validate() const {
  Index w = data_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::visit(Overloaded{[&](const CouplingLayer& c) {
                            require(c.dim == w, ErrorKind::InvalidArgument,
                                    "layer " + std::to_string(i) + ": width chain broken");
                          },
                          [&](const FunnelLayer& f) {
                            require(f.in_dim == w, ErrorKind::InvalidArgument,
                                    "layer " + std::to_string(i) + ": width chain broken");
                            w = f.out_dim;
                          }},
               layers[i]);
  }
  require(w == base_dim, ErrorKind::InvalidArgument, "final width does not equal base_dim");
}

Var FlowModel::log_likelihood(Tape& t, Var y, Var theta) const {
  require(t.value(y).cols() == data_dim, ErrorKind::DimensionMismatch,
          "flow_loglik: y has " + std::to_string(t.value(y).cols()) + " columns, expected " +
              std::to_string(data_dim));
  require(t.value(theta).cols() == cond_dim && t.value(theta).rows() == t.value(y).rows(),
          ErrorKind::DimensionMismatch,
          "flow_loglik: theta must be " + std::to_string(t.value(y).rows()) + "x" +
              std::to_string(cond_dim));
  Var u = y;
  std::optional<Var> total;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerStep step = std::visit(
        [&](const auto& layer) { return layer.normalize(t, params, u, theta, i); }, layers[i]);
    if (!t.value(step.next).allFinite() || !t.value(step.contribution).allFinite())
      fail(ErrorKind::NonFinite, "flow_loglik: non-finite state after layer " + std::to_string(i));
    u = step.next;
    total = total ? ops::add(t, *total, step.contribution) : step.contribution;
  }
  const Var base = ops::std_normal_logpdf(t, u);
  return total ? ops::add(t, *total, base) : base;
}

Vector FlowModel::log_likelihood(const Matrix& y, const Matrix& theta) const {
  Tape t(false);
  const Var out = log_likelihood(t, ops::constant(t, y), ops::constant(t, theta));
  return t.value(out).col(0);
}

double FlowModel::log_likelihood(const Vector& y, const Vector& theta) const {
  return log_likelihood(Matrix(y.transpose()), Matrix(theta.transpose()))(0);
}

Matrix FlowModel::generate(const Matrix& noise, const Vector& theta) const {
  require(noise.cols() == noise_dim(), ErrorKind::DimensionMismatch,
          "generate: noise has " + std::to_string(noise.cols()) + " columns, expected " +
              std::to_string(noise_dim()));
  require(theta.size() == cond_dim, ErrorKind::DimensionMismatch,
          "generate: theta has length " + std::to_string(theta.size()) + ", expected " +
              std::to_string(cond_dim));
  const Index n = noise.rows();
  Tape t(false);
  const Var th = ops::constant(t, replicate_rows(theta, n));
  Var u = ops::constant(t, noise.leftCols(base_dim));
  Index col = base_dim;
  for (std::size_t i = layers.size(); i-- > 0;) {
    u = std::visit(Overloaded{[&](const CouplingLayer& c) { return c.generate(t, params, u, th, i); },
                              [&](const FunnelLayer& f) {
                                const Matrix block = noise.middleCols(col, f.discard_dim());
                                col += f.discard_dim();
                                return f.generate(t, params, u, th, block, i);
                              }},
                   layers[i]);
  }
  return t.value(u);
}

Matrix FlowModel::sample(const Vector& theta, Index n, Rng& rng) const {
  require(n >= 1, ErrorKind::InvalidArgument, "sample: n_samples must be >= 1");
  Matrix noise(n, noise_dim());
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.normal();
  return generate(noise, theta);
}

json FlowModel::architecture() const {
  json layers_json = json::array();
  for (const auto& layer : layers) {
    std::visit(Overloaded{[&](const CouplingLayer& c) {
                            std::vector<int> mask(c.mask.begin(), c.mask.end());
                            layers_json.push_back({{"type", "coupling"},
                                                   {"dim", c.dim},
                                                   {"mask", mask},
                                                   {"permutation", c.input_permutation.perm},
                                                   {"clamp", c.clamp},
                                                   {"conditioner", mlp_json(c.conditioner)}});
                          },
                          [&](const FunnelLayer& f) {
                            layers_json.push_back({{"type", "funnel"},
                                                   {"in_dim", f.in_dim},
                                                   {"out_dim", f.out_dim},
                                                   {"permutation", f.input_permutation.perm},
                                                   {"keep_index_set", f.keep_idx},
                                                   {"clamp", f.clamp},
                                                   {"log_std_bounds", {f.log_std_min, f.log_std_max}},
                                                   {"kept_conditioner", mlp_json(f.kept_conditioner)},
                                                   {"decoder", mlp_json(f.decoder)}});
                          }},
               layer);
  }
  return {{"format", "mfsf-flow-1"}, {"data_dim", data_dim}, {"cond_dim", cond_dim},
          {"base_dim", base_dim},    {"seed", seed},         {"layers", layers_json}};
}

FlowModel FlowModel::from_architecture(const json& arch) {
  try {
    require(arch.at("format").get<std::string>() == "mfsf-flow-1", ErrorKind::Io,
            "unsupported architecture format");
    FlowModel m;
    m.data_dim = arch.at("data_dim").get<Index>();
    m.cond_dim = arch.at("cond_dim").get<Index>();
    m.base_dim = arch.at("base_dim").get<Index>();
    m.seed = arch.at("seed").get<std::uint64_t>();
    for (const auto& lj : arch.at("layers")) {
      const std::string type = lj.at("type").get<std::string>();
      PermutationLayer perm{lj.at("permutation").get<std::vector<Index>>()};
      perm.validate();
      if (type == "coupling") {
        CouplingLayer c;
        c.dim = lj.at("dim").get<Index>();
        for (int b : lj.at("mask").get<std::vector<int>>()) c.mask.push_back(b != 0);
        c.input_permutation = std::move(perm);
        c.clamp = lj.at("clamp").get<double>();
        for (Index i = 0; i < c.dim; ++i)
          (c.mask[static_cast<std::size_t>(i)] ? c.trans_idx : c.pass_idx).push_back(i);
        c.conditioner = mlp_from_json(m.params, lj.at("conditioner"));
        m.layers.emplace_back(std::move(c));
      } else if (type == "funnel") {
        FunnelLayer f;
        f.in_dim = lj.at("in_dim").get<Index>();
        f.out_dim = lj.at("out_dim").get<Index>();
        f.input_permutation = std::move(perm);
        f.keep_idx = lj.at("keep_index_set").get<std::vector<Index>>();
        std::vector<bool> kept(static_cast<std::size_t>(f.in_dim), false);
        for (Index k : f.keep_idx) kept.at(static_cast<std::size_t>(k)) = true;
        for (Index i = 0; i < f.in_dim; ++i)
          if (!kept[static_cast<std::size_t>(i)]) f.drop_idx.push_back(i);
        f.clamp = lj.at("clamp").get<double>();
        f.log_std_min = lj.at("log_std_bounds").at(0).get<double>();
        f.log_std_max = lj.at("log_std_bounds").at(1).get<double>();
        f.kept_conditioner = mlp_from_json(m.params, lj.at("kept_conditioner"));
        f.decoder = mlp_from_json(m.params, lj.at("decoder"));
        m.layers.emplace_back(std::move(f));
      } else {
        fail(ErrorKind::Io, "unknown layer type '" + type + "'");
      }
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed architecture descriptor: ") + e.what());
  }
}

void FlowModel::save(const std::filesystem::path& stem) const {
  params.save(stem.string() + ".params");
  std::ofstream out(stem.string() + ".arch.json", std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + stem.string() + ".arch.json");
  out << architecture().dump(2) << "\n";
}

FlowModel FlowModel::load(const std::filesystem::path& stem) {
  const std::string arch_path = stem.string() + ".arch.json";
  std::ifstream in(arch_path);
  require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot read " + arch_path);
  json arch;
  try {
    arch = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, arch_path + ": " + e.what());
  }
  FlowModel m = from_architecture(arch);
  const ParamStore stored = ParamStore::load(stem.string() + ".params");
  require(stored.same_layout(m.params), ErrorKind::Io,
          stem.string() + ": parameter layout does not match architecture");
  m.params.assign_values(stored);
  return m;
}

// ---------------------------------------------------------------------------
// FlowBuilder

FlowBuilder::FlowBuilder(Index data_dim, Index cond_dim, std::uint64_t seed) : width_(data_dim) {
  require(data_dim >= 1 && cond_dim >= 0, ErrorKind::InvalidArgument, "bad flow dimensions");
  model_.data_dim = data_dim;
  model_.cond_dim = cond_dim;
  model_.seed = seed;
}

FlowBuilder& FlowBuilder::conditioner(const ConditionerOptions& opts) {
  cond_opts_ = opts;
  return *this;
}

FlowBuilder& FlowBuilder::decoder(const ConditionerOptions& opts) {
  dec_opts_ = opts;
  return *this;
}

FlowBuilder& FlowBuilder::coupling(std::vector<bool> mask, std::optional<PermutationLayer> perm) {
  const std::string name = "layer" + std::to_string(model_.layers.size());
  model_.layers.emplace_back(CouplingLayer::create(model_.params, name, width_, std::move(mask),
                                                   perm.value_or(PermutationLayer::identity(width_)),
                                                   model_.cond_dim, cond_opts_));
  return *this;
}

FlowBuilder& FlowBuilder::funnel(Index out_dim, std::optional<PermutationLayer> perm) {
  const std::string name = "layer" + std::to_string(model_.layers.size());
  model_.layers.emplace_back(FunnelLayer::create(model_.params, name, width_, out_dim,
                                                 perm.value_or(PermutationLayer::identity(width_)),
                                                 model_.cond_dim, cond_opts_, dec_opts_));
  width_ = out_dim;
  return *this;
}

FlowModel FlowBuilder::build() {
  model_.base_dim = width_;
  model_.validate();
  Rng rng(derive_seed(model_.seed, "flow/init"));
  for (const auto& layer : model_.layers)
    std::visit(Overloaded{[&](const CouplingLayer& c) { c.conditioner.initialize(model_.params, rng); },
                          [&](const FunnelLayer& f) {
                            f.kept_conditioner.initialize(model_.params, rng);
                            f.decoder.initialize(model_.params, rng);
                          }},
               layer);
  return std::move(model_);
}

std::vector<bool> alternating_mask(Index dim, int parity) {
  std::vector<bool> m(static_cast<std::size_t>(dim));
  for (Index i = 0; i < dim; ++i) m[static_cast<std::size_t>(i)] = ((i + parity) % 2) == 1;
  return m;
}

FlowModel build_default_model(Index data_dim, Index latent_dim, Index cond_dim, std::uint64_t seed,
                              const DefaultModelOptions& opts) {
  require(latent_dim > 0 && latent_dim < data_dim, ErrorKind::InvalidArgument,
          "default model needs 0 < Q < W (got W=" + std::to_string(data_dim) +
              ", Q=" + std::to_string(latent_dim) + ")");
  require(latent_dim >= 2, ErrorKind::InvalidArgument, "coupling after the funnel needs Q >= 2");
  Rng perm_rng(derive_seed(seed, "flow/permutations"));
  FlowBuilder b(data_dim, cond_dim, seed);
  b.conditioner(opts.conditioner).decoder(opts.decoder);
  int parity = 0;
  for (int k = 0; k < opts.couplings_before; ++k, parity ^= 1) {
    auto perm = k == 0 ? PermutationLayer::identity(data_dim)
                       : PermutationLayer::random(data_dim, perm_rng);
    b.coupling(alternating_mask(data_dim, parity), std::move(perm));
  }
  b.funnel(latent_dim, PermutationLayer::random(data_dim, perm_rng));
  for (int k = 0; k < opts.couplings_after; ++k, parity ^= 1)
    b.coupling(alternating_mask(latent_dim, parity), PermutationLayer::random(latent_dim, perm_rng));
  return b.build();
}

// ---------------------------------------------------------------------------
// Single-sample helpers

namespace {

Matrix row(const Vector& v) { return v.transpose(); }

}  // namespace

std::pair<Vector, double> coupling_normalize(const CouplingLayer& layer, const ParamStore& params,
                                             const Vector& u, const Vector& theta) {
  Tape t(false);
  const LayerStep s = layer.normalize(t, params, ops::constant(t, row(u)), ops::constant(t, row(theta)), 0);
  return {t.value(s.next).row(0).transpose(), t.value(s.contribution)(0, 0)};
}

Vector coupling_generate(const CouplingLayer& layer, const ParamStore& params, const Vector& u_next,
                         const Vector& theta) {
  Tape t(false);
  const Var u = layer.generate(t, params, ops::constant(t, row(u_next)), ops::constant(t, row(theta)), 0);
  return t.value(u).row(0).transpose();
}

std::pair<Vector, double> funnel_normalize(const FunnelLayer& layer, const ParamStore& params,
                                           const Vector& u, const Vector& theta) {
  Tape t(false);
  const LayerStep s = layer.normalize(t, params, ops::constant(t, row(u)), ops::constant(t, row(theta)), 0);
  return {t.value(s.next).row(0).transpose(), t.value(s.contribution)(0, 0)};
}

Vector funnel_generate(const FunnelLayer& layer, const ParamStore& params, const Vector& z,
                       const Vector& theta, Rng& rng) {
  Matrix noise(1, layer.discard_dim());
  for (Index c = 0; c < noise.cols(); ++c) noise(0, c) = rng.normal();
  Tape t(false);
  const Var u = layer.generate(t, params, ops::constant(t, row(z)), ops::constant(t, row(theta)), noise, 0);
  return t.value(u).row(0).transpose();
}

double flow_loglik(const FlowModel& model, const Vector& y, const Vector& theta) {
  return model.log_likelihood(y, theta);
}

std::vector<Vector> flow_sample(const FlowModel& model, const Vector& theta, Index n_samples, Rng& rng) {
  const Matrix draws = model.sample(theta, n_samples, rng);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (Index i = 0; i < draws.rows(); ++i) out.emplace_back(draws.row(i).transpose());
  return out;
}

}  // namespace mfsf
