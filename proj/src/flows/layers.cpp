#include <numeric>
#include <string>

#include "mfsf/flows.hpp"

namespace mfsf {

namespace {

void check_finite(const Tape& t, Var v, std::size_t layer_id, const char* kind, const char* what) {
  if (!t.value(v).allFinite())
    fail(ErrorKind::NonFinite, "layer " + std::to_string(layer_id) + " (" + kind +
                                   "): non-finite " + what);
}

Var conditioner_input(Tape& t, Var part, Var theta) {
  return t.value(theta).cols() == 0 ? part : ops::concat_cols(t, part, theta);
}

}  // namespace

// ---------------------------------------------------------------------------
// PermutationLayer

PermutationLayer PermutationLayer::identity(Index dim) {
  PermutationLayer p;
  p.perm.resize(static_cast<std::size_t>(dim));
  std::iota(p.perm.begin(), p.perm.end(), Index{0});
  return p;
}

PermutationLayer PermutationLayer::random(Index dim, Rng& rng) {
  PermutationLayer p = identity(dim);
  for (std::size_t i = p.perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.index(i));
    std::swap(p.perm[i - 1], p.perm[j]);
  }
  return p;
}

bool PermutationLayer::is_identity() const {
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (perm[i] != static_cast<Index>(i)) return false;
  return true;
}

std::vector<Index> PermutationLayer::inverse() const {
  std::vector<Index> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i);
  return inv;
}

void PermutationLayer::validate() const {
  std::vector<bool> seen(perm.size(), false);
  for (Index p : perm) {
    require(p >= 0 && p < dim() && !seen[static_cast<std::size_t>(p)], ErrorKind::InvalidArgument,
            "permutation is not a bijection on [0, " + std::to_string(dim()) + ")");
    seen[static_cast<std::size_t>(p)] = true;
  }
}

Var PermutationLayer::normalize(Tape& t, Var u) const {
  return is_identity() ? u : ops::select_cols(t, u, perm);
}

Var PermutationLayer::generate(Tape& t, Var u) const {
  return is_identity() ? u : ops::select_cols(t, u, inverse());
}

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer CouplingLayer::create(ParamStore& params, const std::string& name, Index dim,
                                    std::vector<bool> mask, PermutationLayer perm, Index cond_dim,
                                    const ConditionerOptions& opts) {
  require(static_cast<Index>(mask.size()) == dim, ErrorKind::InvalidArgument,
          name + ": mask length " + std::to_string(mask.size()) + " != dim " + std::to_string(dim));
  require(perm.dim() == dim, ErrorKind::InvalidArgument, name + ": permutation width mismatch");
  perm.validate();
  require(opts.clamp > 0.0, ErrorKind::InvalidArgument, name + ": clamp must be positive");
  CouplingLayer c;
  c.dim = dim;
  c.mask = std::move(mask);
  c.input_permutation = std::move(perm);
  c.clamp = opts.clamp;
  for (Index i = 0; i < dim; ++i) (c.mask[static_cast<std::size_t>(i)] ? c.trans_idx : c.pass_idx).push_back(i);
  require(!c.trans_idx.empty() && !c.pass_idx.empty(), ErrorKind::InvalidArgument,
          name + ": mask needs at least one transformed and one pass-through entry");
  MlpSpec spec;
  spec.input_dim = static_cast<Index>(c.pass_idx.size()) + cond_dim;
  spec.hidden_dims = opts.hidden_dims;
  spec.output_dim = 2 * static_cast<Index>(c.trans_idx.size());
  spec.activation = opts.activation;
  spec.final_zero_init = true;
  c.conditioner = Mlp::create(params, name + ".cond", spec);
  return c;
}

LayerStep CouplingLayer::normalize(Tape& t, const ParamStore& params, Var u, Var theta,
                                   std::size_t layer_id) const {
  require(t.value(u).cols() == dim, ErrorKind::DimensionMismatch,
          "layer " + std::to_string(layer_id) + " (coupling): input width " +
              std::to_string(t.value(u).cols()) + " != " + std::to_string(dim));
  const Index nt = static_cast<Index>(trans_idx.size());
  const Var v = input_permutation.normalize(t, u);
  const Var pass = ops::select_cols(t, v, pass_idx);
  const Var trans = ops::select_cols(t, v, trans_idx);
  const Var h = mlp_forward(t, conditioner, params, conditioner_input(t, pass, theta));
  check_finite(t, h, layer_id, "coupling", "conditioner output");
  const Var shift = ops::slice_cols(t, h, 0, nt);
  const Var s = ops::soft_clamp(t, ops::slice_cols(t, h, nt, nt), clamp);
  const Var out = ops::mul(t, ops::sub(t, trans, shift), ops::exp(t, ops::scale(t, s, -1.0)));
  const Var next = ops::scatter_cols(t, pass, pass_idx, out, trans_idx, dim);
  const Var logdet = ops::scale(t, ops::row_sum(t, s), -1.0);
  return {next, logdet};
}

Var CouplingLayer::generate(Tape& t, const ParamStore& params, Var u_next, Var theta,
                            std::size_t layer_id) const {
  require(t.value(u_next).cols() == dim, ErrorKind::DimensionMismatch,
          "layer " + std::to_string(layer_id) + " (coupling): input width mismatch");
  const Index nt = static_cast<Index>(trans_idx.size());
  const Var pass = ops::select_cols(t, u_next, pass_idx);
  const Var out = ops::select_cols(t, u_next, trans_idx);
  const Var h = mlp_forward(t, conditioner, params, conditioner_input(t, pass, theta));
  check_finite(t, h, layer_id, "coupling", "conditioner output");
  const Var shift = ops::slice_cols(t, h, 0, nt);
  const Var s = ops::soft_clamp(t, ops::slice_cols(t, h, nt, nt), clamp);
  const Var trans = ops::add(t, ops::mul(t, out, ops::exp(t, s)), shift);
  const Var v = ops::scatter_cols(t, pass, pass_idx, trans, trans_idx, dim);
  return input_permutation.generate(t, v);
}

// ---------------------------------------------------------------------------
// FunnelLayer

FunnelLayer FunnelLayer::create(ParamStore& params, const std::string& name, Index in_dim,
                                Index out_dim, PermutationLayer perm, Index cond_dim,
                                const ConditionerOptions& kept_opts,
                                const ConditionerOptions& decoder_opts) {
  require(out_dim > 0 && out_dim < in_dim, ErrorKind::InvalidArgument,
          name + ": funnel needs 0 < Q < W (got W=" + std::to_string(in_dim) +
              ", Q=" + std::to_string(out_dim) + ")");
  require(perm.dim() == in_dim, ErrorKind::InvalidArgument, name + ": permutation width mismatch");
  perm.validate();
  FunnelLayer f;
  f.in_dim = in_dim;
  f.out_dim = out_dim;
  f.input_permutation = std::move(perm);
  f.clamp = kept_opts.clamp;
  for (Index i = 0; i < in_dim; ++i) (i < out_dim ? f.keep_idx : f.drop_idx).push_back(i);

  MlpSpec kept;
  kept.input_dim = (in_dim - out_dim) + cond_dim;
  kept.hidden_dims = kept_opts.hidden_dims;
  kept.output_dim = 2 * out_dim;
  kept.activation = kept_opts.activation;
  kept.final_zero_init = true;
  f.kept_conditioner = Mlp::create(params, name + ".kept", kept);

  MlpSpec dec;
  dec.input_dim = out_dim + cond_dim;
  dec.hidden_dims = decoder_opts.hidden_dims;
  dec.output_dim = 2 * (in_dim - out_dim);
  dec.activation = decoder_opts.activation;
  dec.final_zero_init = true;
  f.decoder = Mlp::create(params, name + ".decoder", dec);
  return f;
}

LayerStep FunnelLayer::normalize(Tape& t, const ParamStore& params, Var u, Var theta,
                                 std::size_t layer_id) const {
  require(t.value(u).cols() == in_dim, ErrorKind::DimensionMismatch,
          "layer " + std::to_string(layer_id) + " (funnel): input width " +
              std::to_string(t.value(u).cols()) + " != " + std::to_string(in_dim));
  const Index q = out_dim;
  const Index d = discard_dim();
  const Var v = input_permutation.normalize(t, u);
  const Var dropped = ops::select_cols(t, v, drop_idx);
  const Var kept = ops::select_cols(t, v, keep_idx);

  const Var h = mlp_forward(t, kept_conditioner, params, conditioner_input(t, dropped, theta));
  check_finite(t, h, layer_id, "funnel", "kept-block conditioner output");
  const Var shift = ops::slice_cols(t, h, 0, q);
  const Var s = ops::soft_clamp(t, ops::slice_cols(t, h, q, q), clamp);
  const Var z = ops::mul(t, ops::sub(t, kept, shift), ops::exp(t, ops::scale(t, s, -1.0)));

  const Var dec = mlp_forward(t, decoder, params, conditioner_input(t, z, theta));
  check_finite(t, dec, layer_id, "funnel", "decoder output");
  const Var mean = ops::slice_cols(t, dec, 0, d);
  const Var log_std = ops::hard_clamp(t, ops::slice_cols(t, dec, d, d), log_std_min, log_std_max);
  const Var contribution =
      ops::sub(t, ops::gaussian_logpdf(t, dropped, mean, log_std), ops::row_sum(t, s));
  return {z, contribution};
}

Var FunnelLayer::generate(Tape& t, const ParamStore& params, Var z, Var theta, const Matrix& noise,
                          std::size_t layer_id) const {
  require(t.value(z).cols() == out_dim, ErrorKind::DimensionMismatch,
          "layer " + std::to_string(layer_id) + " (funnel): latent width mismatch");
  require(noise.rows() == t.value(z).rows() && noise.cols() == discard_dim(),
          ErrorKind::DimensionMismatch,
          "layer " + std::to_string(layer_id) + " (funnel): noise block has wrong shape");
  const Index q = out_dim;
  const Index d = discard_dim();
  const Var dec = mlp_forward(t, decoder, params, conditioner_input(t, z, theta));
  check_finite(t, dec, layer_id, "funnel", "decoder output");
  const Var mean = ops::slice_cols(t, dec, 0, d);
  const Var log_std = ops::hard_clamp(t, ops::slice_cols(t, dec, d, d), log_std_min, log_std_max);
  const Var dropped =
      ops::add(t, mean, ops::mul(t, ops::exp(t, log_std), ops::constant(t, noise)));

  const Var h = mlp_forward(t, kept_conditioner, params, conditioner_input(t, dropped, theta));
  check_finite(t, h, layer_id, "funnel", "kept-block conditioner output");
  const Var shift = ops::slice_cols(t, h, 0, q);
  const Var s = ops::soft_clamp(t, ops::slice_cols(t, h, q, q), clamp);
  const Var kept = ops::add(t, ops::mul(t, z, ops::exp(t, s)), shift);
  const Var v = ops::scatter_cols(t, dropped, drop_idx, kept, keep_idx, in_dim);
  return input_permutation.generate(t, v);
}

}  // namespace mfsf
