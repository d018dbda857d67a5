#pragma once

// Conditional normalizing-flow layers and the composite model.
//
// Direction convention: "normalize" maps data towards the base density
// (y = u_K -> ... -> u_0), "generate" maps base draws back to data space.
// Layers are stored data side first: position p in `FlowModel::layers` is
// layer index K - p when layers are counted from the base density.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mfsf/nnmath.hpp"

namespace mfsf {

// Fixed re-indexing: normalize gives out[i] = in[perm[i]]. Log-det is 0.
struct PermutationLayer {
  std::vector<Index> perm;

  static PermutationLayer identity(Index dim);
  static PermutationLayer random(Index dim, Rng& rng);  // Fisher-Yates

  Index dim() const { return static_cast<Index>(perm.size()); }
  bool is_identity() const;
  std::vector<Index> inverse() const;
  void validate() const;

  Var normalize(Tape& t, Var u) const;
  Var generate(Tape& t, Var u) const;
};

// Output of one normalize step: the next state and the per-row
// log-likelihood contribution (B x 1).
struct LayerStep {
  Var next;
  Var contribution;
};

struct ConditionerOptions {
  std::vector<Index> hidden_dims{64, 64};
  Activation activation = Activation::Tanh;
  double clamp = 2.0;
};

// Masked affine coupling. Entries with mask == true are transformed:
//   t' = (t - shift) * exp(-s),  s = clamp * tanh(raw / clamp),
// with (shift, raw) = conditioner(pass-through entries ++ theta).
// An optional input permutation is applied first in the normalize direction.
struct CouplingLayer {
  Index dim = 0;
  std::vector<bool> mask;
  PermutationLayer input_permutation;
  Mlp conditioner;
  double clamp = 2.0;
  std::vector<Index> pass_idx;
  std::vector<Index> trans_idx;

  static CouplingLayer create(ParamStore& params, const std::string& name, Index dim,
                              std::vector<bool> mask, PermutationLayer perm, Index cond_dim,
                              const ConditionerOptions& opts);

  LayerStep normalize(Tape& t, const ParamStore& params, Var u, Var theta,
                      std::size_t layer_id) const;
  Var generate(Tape& t, const ParamStore& params, Var u_next, Var theta,
               std::size_t layer_id) const;
};

// Surjective funnel W -> Q. The kept block (keep_idx after the input
// permutation) maps bijectively to z through a conditional affine map
// f(z; u-, theta) = z * exp(s) + shift; the discarded block is modelled by a
// Gaussian decoder N(mean(z, theta), diag exp(2 log_std(z, theta))).
struct FunnelLayer {
  Index in_dim = 0;
  Index out_dim = 0;
  PermutationLayer input_permutation;
  std::vector<Index> keep_idx;
  std::vector<Index> drop_idx;
  Mlp kept_conditioner;  // (u- ++ theta) -> (shift, raw scale), Q each
  Mlp decoder;           // (z ++ theta) -> (mean, log_std), W - Q each
  double clamp = 2.0;
  double log_std_min = -7.0;
  double log_std_max = 7.0;

  static FunnelLayer create(ParamStore& params, const std::string& name, Index in_dim,
                            Index out_dim, PermutationLayer perm, Index cond_dim,
                            const ConditionerOptions& kept_opts,
                            const ConditionerOptions& decoder_opts);

  Index discard_dim() const { return in_dim - out_dim; }

  LayerStep normalize(Tape& t, const ParamStore& params, Var u, Var theta,
                      std::size_t layer_id) const;
  // `noise` is (B x discard_dim) of standard normal draws.
  Var generate(Tape& t, const ParamStore& params, Var z, Var theta, const Matrix& noise,
               std::size_t layer_id) const;
};

using FlowLayer = std::variant<CouplingLayer, FunnelLayer>;

class FlowModel {
 public:
  Index data_dim = 0;
  Index cond_dim = 0;
  Index base_dim = 0;
  std::uint64_t seed = 0;
  std::vector<FlowLayer> layers;
  ParamStore params;

  // Layer index partition (positions in `layers`).
  std::vector<std::size_t> bijective_layers() const;
  std::vector<std::size_t> surjective_layers() const;
  // Output width of each layer, data side first.
  std::vector<Index> widths() const;
  // Number of standard-normal draws needed per generated sample.
  Index noise_dim() const;

  // Per-row log q(y | theta): (B x data_dim), (B x cond_dim) -> (B x 1).
  Var log_likelihood(Tape& t, Var y, Var theta) const;
  Vector log_likelihood(const Matrix& y, const Matrix& theta) const;
  double log_likelihood(const Vector& y, const Vector& theta) const;

  // Generates from explicit noise rows: base draws in the first base_dim
  // columns, then one block per funnel in generate order.
  Matrix generate(const Matrix& noise, const Vector& theta) const;
  // n x data_dim draws; row i consumes noise_dim() normals from `rng` in order.
  Matrix sample(const Vector& theta, Index n, Rng& rng) const;

  nlohmann::json architecture() const;
  static FlowModel from_architecture(const nlohmann::json& arch);

  // <stem>.params (binary ParamStore) + <stem>.arch.json.
  void save(const std::filesystem::path& stem) const;
  static FlowModel load(const std::filesystem::path& stem);

  void validate() const;
};

// Incremental construction; the data side is added first.
class FlowBuilder {
 public:
  FlowBuilder(Index data_dim, Index cond_dim, std::uint64_t seed);

  FlowBuilder& conditioner(const ConditionerOptions& opts);
  FlowBuilder& decoder(const ConditionerOptions& opts);
  FlowBuilder& coupling(std::vector<bool> mask,
                        std::optional<PermutationLayer> perm = std::nullopt);
  FlowBuilder& funnel(Index out_dim, std::optional<PermutationLayer> perm = std::nullopt);

  Index current_width() const { return width_; }
  FlowModel build();

 private:
  FlowModel model_;
  Index width_;
  ConditionerOptions cond_opts_;
  ConditionerOptions dec_opts_;
};

// Alternating mask of length dim; entry i is transformed iff (i + parity) is odd.
std::vector<bool> alternating_mask(Index dim, int parity);

struct DefaultModelOptions {
  ConditionerOptions conditioner;
  ConditionerOptions decoder;
  int couplings_before = 4;
  int couplings_after = 2;
};

// Four coupling blocks at width W, a funnel W -> Q, two coupling blocks at
// width Q; masks alternate and permutations are drawn from `seed`.
FlowModel build_default_model(Index data_dim, Index latent_dim, Index cond_dim, std::uint64_t seed,
                              const DefaultModelOptions& opts = {});

// Single-sample forms of the layer maps.
std::pair<Vector, double> coupling_normalize(const CouplingLayer& layer, const ParamStore& params,
                                             const Vector& u, const Vector& theta);
Vector coupling_generate(const CouplingLayer& layer, const ParamStore& params,
                         const Vector& u_next, const Vector& theta);
std::pair<Vector, double> funnel_normalize(const FunnelLayer& layer, const ParamStore& params,
                                           const Vector& u, const Vector& theta);
Vector funnel_generate(const FunnelLayer& layer, const ParamStore& params, const Vector& z,
                       const Vector& theta, Rng& rng);

double flow_loglik(const FlowModel& model, const Vector& y, const Vector& theta);
std::vector<Vector> flow_sample(const FlowModel& model, const Vector& theta, Index n_samples,
                                Rng& rng);

}  // namespace mfsf
