#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/quantum.hpp"
#include "qcaa/tensor.hpp"

namespace qcaa {

enum class AttentionKind { kQuantum, kFull };

inline const char* to_string(AttentionKind kind) {
  return kind == AttentionKind::kQuantum ? "quantum" : "full";
}

/// Encoder blocks alternate starting with quantum attention at layer 0.
inline AttentionKind select_attention(std::size_t layer_index) {
  return layer_index % 2 == 0 ? AttentionKind::kQuantum : AttentionKind::kFull;
}

struct AttentionConfig {
  std::size_t n_heads = 8;
  double entanglement_factor = 0.1;  // lambda
  bool mask_enabled = false;
  std::optional<double> softmax_scale;  // defaults to 1/sqrt(head_dim)
  double attention_dropout = 0.0;
  double norm_eps = 1e-5;

  std::size_t head_dim(std::size_t d_model) const {
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw DimensionError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                           std::to_string(n_heads));
    }
    return d_model / n_heads;
  }

  double scale_for(std::size_t head_dim) const {
    const double alpha = softmax_scale.value_or(1.0 / std::sqrt(static_cast<double>(head_dim)));
    if (!(alpha > 0.0)) throw ParameterError("softmax scale must be positive");
    return alpha;
  }
};

/// Row-major [L, S] mask; nonzero entries are excluded from attention.
using AttentionMask = std::vector<std::uint8_t>;

inline AttentionMask causal_mask(std::size_t length, std::size_t keys) {
  AttentionMask mask(length * keys, 0);
  for (std::size_t l = 0; l < length; ++l) {
    for (std::size_t s = l + 1; s < keys; ++s) mask[l * keys + s] = 1;
  }
  return mask;
}

struct AttentionOutput {
  Tensor values;   // [B, L, H, D]
  Tensor weights;  // [B, H, L, S]
};

namespace detail {

struct AttentionDims {
  std::size_t batch, queries, keys, heads, key_dim, value_dim;
};

inline AttentionDims check_attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4) {
    throw DimensionError("attention expects rank-4 Q [B,L,H,E], K [B,S,H,E], V [B,S,H,D]");
  }
  AttentionDims d{q.dim(0), q.dim(1), k.dim(1), q.dim(2), q.dim(3), v.dim(3)};
  if (k.dim(0) != d.batch || v.dim(0) != d.batch || k.dim(2) != d.heads || v.dim(2) != d.heads ||
      v.dim(1) != d.keys) {
    throw DimensionError("attention: batch/head/key axes disagree between " + to_string(q.shape()) + ", " +
                         to_string(k.shape()) + ", " + to_string(v.shape()));
  }
  if (k.dim(3) != d.key_dim) {
    throw DimensionError("attention: query head dim " + std::to_string(d.key_dim) + " != key head dim " +
                         std::to_string(k.dim(3)));
  }
  return d;
}

// Masks, normalizes and applies the weights to V.
inline AttentionOutput finish_attention(ForwardContext& ctx, const Tensor& scores, const Tensor& v,
                                        const AttentionConfig& cfg, const AttentionDims& d,
                                        const AttentionMask& mask) {
  Graph& g = ctx.graph;
  Tensor s = scale(g, scores, cfg.scale_for(d.key_dim));
  if (cfg.mask_enabled) {
    const AttentionMask effective = mask.empty() ? causal_mask(d.queries, d.keys) : mask;
    if (effective.size() != d.queries * d.keys) {
      throw DimensionError("attention mask must have L*S = " + std::to_string(d.queries * d.keys) + " entries");
    }
    s = mask_fill(g, s, effective);
  }
  Tensor weights = softmax(g, s, 3);
  Tensor dropped = dropout(g, weights, cfg.attention_dropout, ctx.rng, ctx.training);
  return {contract(g, dropped, v, "bhls,bshd->blhd"), weights};
}

}  // namespace detail

/// softmax(alpha * Q K^T) V per head.
inline AttentionOutput full_attention(ForwardContext& ctx, const Tensor& q, const Tensor& k, const Tensor& v,
                                      const AttentionConfig& cfg, const AttentionMask& mask = {}) {
  const auto d = detail::check_attention_shapes(q, k, v);
  Tensor scores = contract(ctx.graph, q, k, "blhe,bshe->bhls");
  return detail::finish_attention(ctx, scores, v, cfg, d, mask);
}

/// Hybrid score S = <Z>(circuit, Q K^T) + lambda * V K^T, shape [B, H, L, S].
///
/// The V-K contraction pairs value position l with key position s, so it only
/// has the score shape for self-attention (L == S) with D == E.
inline Tensor qcsa_scores(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                          const QuantumCircuit& circuit, double lambda) {
  const auto d = detail::check_attention_shapes(q, k, v);
  if (d.queries != d.keys) {
    throw ContractError("quantum attention needs L == S, got L=" + std::to_string(d.queries) +
                        " S=" + std::to_string(d.keys));
  }
  if (d.value_dim != d.key_dim) {
    throw DimensionError("quantum attention needs value head dim == key head dim");
  }
  Tensor superposition = contract(g, q, k, "blhe,bshe->bhls");
  Tensor quantum = circuit_expectation(g, superposition, circuit);
  if (lambda == 0.0) return quantum;
  Tensor entanglement = contract(g, v, k, "blhd,bshd->bhls");
  return add(g, quantum, scale(g, entanglement, lambda));
}

inline AttentionOutput qcsa_attention(ForwardContext& ctx, const Tensor& q, const Tensor& k, const Tensor& v,
                                      const AttentionConfig& cfg, const QuantumCircuit& circuit,
                                      const AttentionMask& mask = {}) {
  const auto d = detail::check_attention_shapes(q, k, v);
  Tensor scores = qcsa_scores(ctx.graph, q, k, v, circuit, cfg.entanglement_factor);
  return detail::finish_attention(ctx, scores, v, cfg, d, mask);
}

/// Projection weights of one attention sublayer; the per-head matrices are the
/// column blocks of the d_model x d_model weights.
struct MultiHeadParams {
  Tensor w_query;  // [d_model, d_model]
  Tensor w_key;
  Tensor w_value;
  Tensor w_out;
  Tensor norm_gamma;  // [d_model]
  Tensor norm_beta;
};

/// Projects x to per-head Q/K/V, attends, concatenates heads, applies W_O and
/// returns LayerNorm(W_O concat + x).
inline Tensor multi_head(ForwardContext& ctx, const Tensor& x, const MultiHeadParams& params, AttentionKind kind,
                         const AttentionConfig& cfg, const QuantumCircuit* circuit = nullptr,
                         AttentionOutput* attention = nullptr) {
  if (x.rank() != 3) throw DimensionError("multi_head expects [B, N, d_model], got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t tokens = x.dim(1);
  const std::size_t d_model = x.dim(2);
  const std::size_t e = cfg.head_dim(d_model);
  const Shape split{batch, tokens, cfg.n_heads, e};
  Graph& g = ctx.graph;
  Tensor q = reshape(g, linear(g, x, params.w_query), split);
  Tensor k = reshape(g, linear(g, x, params.w_key), split);
  Tensor v = reshape(g, linear(g, x, params.w_value), split);

  AttentionOutput out;
  if (kind == AttentionKind::kQuantum) {
    if (circuit == nullptr) throw ContractError("quantum attention layer has no circuit");
    out = qcsa_attention(ctx, q, k, v, cfg, *circuit);
  } else {
    out = full_attention(ctx, q, k, v, cfg);
  }
  if (attention != nullptr) *attention = out;
  Tensor merged = reshape(g, out.values, {batch, tokens, d_model});
  Tensor projected = linear(g, merged, params.w_out);
  return layer_norm(g, add(g, projected, x), params.norm_gamma, params.norm_beta, 2, cfg.norm_eps);
}

}  // namespace qcaa
