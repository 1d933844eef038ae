#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/tensor.hpp"

namespace qcaa {

inline constexpr std::size_t kDefaultNumPatches = 6;

struct PatchLayout {
  std::size_t seq_len = 0;
  std::size_t num_patches_requested = kDefaultNumPatches;
  std::size_t patch_len = 0;
  std::size_t stride = 0;
  std::size_t padding = 0;
  std::size_t token_count = 0;

  std::size_t padded_len() const noexcept { return seq_len + padding; }
};

/// Patch length is seq_len / num_patches rounded half up, stride is half the
/// patch length (at least 1) and the series is end-padded by one stride.
inline PatchLayout evaluate_patch_params(std::size_t seq_len,
                                         std::optional<std::size_t> num_patches = std::nullopt) {
  const std::size_t requested = num_patches.value_or(kDefaultNumPatches);
  if (requested < 1 || seq_len < requested) {
    throw ParameterError("seq_len " + std::to_string(seq_len) + " must be at least num_patches " +
                         std::to_string(requested) + " >= 1");
  }
  PatchLayout layout;
  layout.seq_len = seq_len;
  layout.num_patches_requested = requested;
  layout.patch_len = (2 * seq_len + requested) / (2 * requested);
  layout.stride = std::max<std::size_t>(1, layout.patch_len / 2);
  layout.padding = layout.stride;
  layout.token_count = (seq_len - layout.patch_len) / layout.stride + 2;
  return layout;
}

/// One-line rendering used by the eval-patch command.
inline std::string describe(const PatchLayout& layout) {
  return "seq_len=" + std::to_string(layout.seq_len) + " patch_len=" + std::to_string(layout.patch_len) +
         " stride=" + std::to_string(layout.stride) + " padding=" + std::to_string(layout.padding) +
         " tokens=" + std::to_string(layout.token_count);
}

/// Repeats the last value `padding` times, then cuts windows at multiples of
/// the stride. Returns [N, patch_len].
inline Tensor make_patches(std::span<const double> series, const PatchLayout& layout) {
  if (series.size() != layout.seq_len) {
    throw DimensionError("make_patches: series has " + std::to_string(series.size()) + " values, layout expects " +
                         std::to_string(layout.seq_len));
  }
  Tensor out({layout.token_count, layout.patch_len});
  auto o = out.data();
  const double last = series.back();
  for (std::size_t n = 0; n < layout.token_count; ++n) {
    for (std::size_t i = 0; i < layout.patch_len; ++i) {
      const std::size_t t = n * layout.stride + i;
      o[n * layout.patch_len + i] = t < series.size() ? series[t] : last;
    }
  }
  return out;
}

/// Patches every row of a [rows, seq_len] tensor into [rows, N, patch_len].
inline Tensor make_patches_batched(const Tensor& rows, const PatchLayout& layout) {
  if (rows.rank() != 2 || rows.dim(1) != layout.seq_len) {
    throw DimensionError("make_patches_batched expects [rows, " + std::to_string(layout.seq_len) + "], got " +
                         to_string(rows.shape()));
  }
  const std::size_t count = rows.dim(0);
  const std::size_t per = layout.token_count * layout.patch_len;
  Tensor out({count, layout.token_count, layout.patch_len});
  for (std::size_t r = 0; r < count; ++r) {
    const Tensor p = make_patches(rows.data().subspan(r * layout.seq_len, layout.seq_len), layout);
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * per));
  }
  return out;
}

struct PatchEmbedParams {
  Tensor projection;  // [patch_len, d_model]
  Tensor bias;        // [d_model]
  Tensor position;    // [max_tokens, d_model]
  double dropout_p = 0.0;
};

/// Linear patch projection plus learned position rows, then dropout.
inline Tensor patch_embed(ForwardContext& ctx, const Tensor& patches, const PatchEmbedParams& params) {
  if (patches.rank() != 3) {
    throw DimensionError("patch_embed expects [rows, N, patch_len], got " + to_string(patches.shape()));
  }
  const std::size_t tokens = patches.dim(1);
  if (tokens > params.position.dim(0)) {
    throw ParameterError("patch_embed: " + std::to_string(tokens) + " tokens exceed the " +
                         std::to_string(params.position.dim(0)) + " learned positions");
  }
  Graph& g = ctx.graph;
  Tensor embedded = linear(g, patches, params.projection, params.bias);
  Tensor positions =
      tokens == params.position.dim(0) ? params.position : slice_leading(g, params.position, tokens);
  return dropout(g, add_broadcast(g, embedded, positions), params.dropout_p, ctx.rng, ctx.training);
}

}  // namespace qcaa
