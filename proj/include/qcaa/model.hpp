#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qcaa/attention.hpp"
#include "qcaa/errors.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/patching.hpp"
#include "qcaa/quantum.hpp"
#include "qcaa/rng.hpp"
#include "qcaa/tensor.hpp"
#include "qcaa/text.hpp"

namespace qcaa {

enum class Task { kLongTermForecast, kShortTermForecast, kClassification, kAnomalyDetection };

inline const char* to_string(Task task) {
  switch (task) {
    case Task::kLongTermForecast: return "long_term_forecast";
    case Task::kShortTermForecast: return "short_term_forecast";
    case Task::kClassification: return "classification";
    case Task::kAnomalyDetection: return "anomaly_detection";
  }
  return "unknown";
}

inline Task parse_task(std::string_view name) {
  for (Task t : {Task::kLongTermForecast, Task::kShortTermForecast, Task::kClassification,
                 Task::kAnomalyDetection}) {
    if (name == to_string(t)) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

inline bool is_forecast(Task task) {
  return task == Task::kLongTermForecast || task == Task::kShortTermForecast;
}

struct ModelConfig {
  Task task = Task::kLongTermForecast;
  std::size_t seq_len = 96;
  std::size_t pred_len = 96;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t e_layers = 2;
  std::size_t d_ff = 0;  // 0 means 4 * d_model
  double dropout = 0.1;
  std::size_t num_patches = kDefaultNumPatches;
  int n_qubits = 4;
  double entanglement_factor = 0.1;
  double angle_encoding_scale = 1.0;
  CircuitBackend circuit_backend = CircuitBackend::kFast;
  std::size_t num_classes = 2;
  std::size_t n_vars = 1;
  bool channel_independence = false;  // recorded only; variates always share weights
  int k_scales = 4;                   // recorded only
  double instance_norm_eps = 1e-5;
  double layer_norm_eps = 1e-5;

  std::size_t ffn_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }

  PatchLayout patch_layout() const { return evaluate_patch_params(seq_len, num_patches); }

  AttentionConfig attention_config() const {
    AttentionConfig cfg;
    cfg.n_heads = n_heads;
    cfg.entanglement_factor = entanglement_factor;
    cfg.mask_enabled = false;
    cfg.attention_dropout = dropout;
    cfg.norm_eps = layer_norm_eps;
    return cfg;
  }

  /// Width of the target window produced by the flatten head.
  std::size_t target_window() const { return task == Task::kAnomalyDetection ? seq_len : pred_len; }

  void validate() const {
    if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model must be a positive multiple of n_heads");
    }
    if (e_layers < 1) throw ConfigError("e_layers must be at least 1");
    if (is_forecast(task) && pred_len < 1) throw ConfigError("pred_len must be at least 1 for forecasting");
    if (n_qubits < 1 || n_qubits > StateVector::kMaxQubits) throw ConfigError("n_qubits must be in [1, 12]");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (n_vars < 1) throw ConfigError("n_vars must be at least 1");
    if (seq_len < 2) throw ConfigError("seq_len must be at least 2");
    if (num_patches < 1 || seq_len < num_patches) throw ConfigError("seq_len must be at least num_patches");
    if (task == Task::kClassification && num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (!(instance_norm_eps > 0.0) || !(layer_norm_eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(entanglement_factor >= 0.0)) throw ConfigError("entanglement_factor must be non-negative");
  }

  std::vector<std::pair<std::string, std::string>> to_key_values() const {
    using text::format_double;
    return {
        {"task", to_string(task)},
        {"seq_len", std::to_string(seq_len)},
        {"pred_len", std::to_string(pred_len)},
        {"d_model", std::to_string(d_model)},
        {"n_heads", std::to_string(n_heads)},
        {"e_layers", std::to_string(e_layers)},
        {"d_ff", std::to_string(d_ff)},
        {"dropout", format_double(dropout)},
        {"num_patches", std::to_string(num_patches)},
        {"n_qubits", std::to_string(n_qubits)},
        {"entanglement_factor", format_double(entanglement_factor)},
        {"angle_encoding_scale", format_double(angle_encoding_scale)},
        {"circuit_backend", circuit_backend == CircuitBackend::kFast ? "fast" : "statevector"},
        {"num_classes", std::to_string(num_classes)},
        {"n_vars", std::to_string(n_vars)},
        {"channel_independence", channel_independence ? "1" : "0"},
        {"k_scales", std::to_string(k_scales)},
        {"instance_norm_eps", format_double(instance_norm_eps)},
        {"layer_norm_eps", format_double(layer_norm_eps)},
    };
  }

  /// Applies one key=value pair; returns false for keys that are not model fields.
  bool set(std::string_view key, std::string_view value) {
    auto as_uint = [&]() -> std::size_t {
      const auto v = text::parse_uint(value);
      if (!v) throw ConfigError("'" + std::string(key) + "' needs a non-negative integer, got '" +
                                std::string(value) + "'");
      return static_cast<std::size_t>(*v);
    };
    auto as_double = [&]() {
      const auto v = text::parse_double(value);
      if (!v) throw ConfigError("'" + std::string(key) + "' needs a number, got '" + std::string(value) + "'");
      return *v;
    };
    if (key == "task") task = parse_task(value);
    else if (key == "seq_len") seq_len = as_uint();
    else if (key == "pred_len") pred_len = as_uint();
    else if (key == "d_model") d_model = as_uint();
    else if (key == "n_heads") n_heads = as_uint();
    else if (key == "e_layers") e_layers = as_uint();
    else if (key == "d_ff") d_ff = as_uint();
    else if (key == "dropout") dropout = as_double();
    else if (key == "num_patches") num_patches = as_uint();
    else if (key == "n_qubits") n_qubits = static_cast<int>(as_uint());
    else if (key == "entanglement_factor") entanglement_factor = as_double();
    else if (key == "angle_encoding_scale") angle_encoding_scale = as_double();
    else if (key == "circuit_backend") {
      if (value == "fast") circuit_backend = CircuitBackend::kFast;
      else if (value == "statevector") circuit_backend = CircuitBackend::kStatevector;
      else throw ConfigError("circuit_backend must be 'fast' or 'statevector'");
    } else if (key == "num_classes") num_classes = as_uint();
    else if (key == "n_vars") n_vars = as_uint();
    else if (key == "channel_independence") channel_independence = as_uint() != 0;
    else if (key == "k_scales") k_scales = static_cast<int>(as_uint());
    else if (key == "instance_norm_eps") instance_norm_eps = as_double();
    else if (key == "layer_norm_eps") layer_norm_eps = as_double();
    else return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Instance normalization

/// Per-(sample, variate) statistics over the time axis.
struct NormStats {
  std::size_t batch = 0;
  std::size_t n_vars = 0;
  std::vector<double> mean;   // [batch * n_vars]
  std::vector<double> stdev;  // sqrt(var), without eps
  std::vector<double> denom;  // sqrt(var + eps), the factor actually divided out
  double eps = 1e-5;
};

inline std::pair<Tensor, NormStats> instance_normalize(const Tensor& x, double eps) {
  if (x.rank() != 3) throw DimensionError("instance_normalize expects [B, L, n_vars], got " + to_string(x.shape()));
  if (x.dim(1) < 2) throw DimensionError("instance_normalize needs at least two time steps");
  if (!(eps > 0.0)) throw ParameterError("instance_normalize: eps must be positive");
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t vars = x.dim(2);
  NormStats stats;
  stats.batch = batch;
  stats.n_vars = vars;
  stats.eps = eps;
  stats.mean.resize(batch * vars);
  stats.stdev.resize(batch * vars);
  stats.denom.resize(batch * vars);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t m = 0; m < vars; ++m) {
      double mean = 0.0;
      for (std::size_t t = 0; t < len; ++t) mean += in[(b * len + t) * vars + m];
      mean /= static_cast<double>(len);
      double var = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double d = in[(b * len + t) * vars + m] - mean;
        var += d * d;
      }
      var /= static_cast<double>(len);
      const double denom = std::sqrt(var + eps);
      stats.mean[b * vars + m] = mean;
      stats.stdev[b * vars + m] = std::sqrt(var);
      stats.denom[b * vars + m] = denom;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t k = (b * len + t) * vars + m;
        o[k] = (in[k] - mean) / denom;
      }
    }
  }
  return {out, stats};
}

/// y * sqrt(var + eps) + mean per (sample, variate); differentiable in y.
inline Tensor de_normalize(Graph& g, const Tensor& y, const NormStats& stats) {
  if (y.rank() != 3 || y.dim(0) != stats.batch || y.dim(2) != stats.n_vars) {
    throw DimensionError("de_normalize: " + to_string(y.shape()) + " does not match stats for batch " +
                         std::to_string(stats.batch) + " and " + std::to_string(stats.n_vars) + " variates");
  }
  const std::size_t len = y.dim(1);
  const std::size_t vars = stats.n_vars;
  const bool tracked = detail::tracks(y);
  Tensor out(y.shape(), tracked);
  auto in = y.data();
  auto o = out.data();
  for (std::size_t k = 0; k < o.size(); ++k) {
    const std::size_t b = k / (len * vars);
    const std::size_t m = k % vars;
    o[k] = in[k] * stats.denom[b * vars + m] + stats.mean[b * vars + m];
  }
  if (tracked) {
    g.record(out, {y}, [y, out, denom = stats.denom, len, vars]() mutable {
      auto go = out.grad();
      auto gy = y.mutable_grad();
      for (std::size_t k = 0; k < go.size(); ++k) {
        gy[k] += go[k] * denom[(k / (len * vars)) * vars + k % vars];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

struct EncoderLayerParams {
  MultiHeadParams attention;
  Tensor ffn_w1;  // [d_model, d_ff]
  Tensor ffn_b1;
  Tensor ffn_w2;  // [d_ff, d_model]
  Tensor ffn_b2;
  Tensor norm_gamma;  // post-FFN layer norm
  Tensor norm_beta;
  std::optional<QuantumCircuit> circuit;  // quantum layers only
};

struct HeadParams {
  Tensor weight;
  Tensor bias;
};

struct ModelParams {
  PatchEmbedParams embedding;
  std::vector<EncoderLayerParams> layers;
  HeadParams head;

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out{
        {"embed.projection", &embedding.projection},
        {"embed.bias", &embedding.bias},
        {"embed.position", &embedding.position},
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& l = layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      out.insert(out.end(), {
                                {p + "attn.w_query", &l.attention.w_query},
                                {p + "attn.w_key", &l.attention.w_key},
                                {p + "attn.w_value", &l.attention.w_value},
                                {p + "attn.w_out", &l.attention.w_out},
                                {p + "attn.norm_gamma", &l.attention.norm_gamma},
                                {p + "attn.norm_beta", &l.attention.norm_beta},
                                {p + "ffn.w1", &l.ffn_w1},
                                {p + "ffn.b1", &l.ffn_b1},
                                {p + "ffn.w2", &l.ffn_w2},
                                {p + "ffn.b2", &l.ffn_b2},
                                {p + "ffn.norm_gamma", &l.norm_gamma},
                                {p + "ffn.norm_beta", &l.norm_beta},
                            });
      if (l.circuit) out.emplace_back(p + "circuit.theta", &l.circuit->theta);
    }
    out.emplace_back("head.weight", &head.weight);
    out.emplace_back("head.bias", &head.bias);
    return out;
  }

  std::vector<std::pair<std::string, Tensor>> named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named_tensors()) out.emplace_back(name, *t);
    return out;
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
  }

  /// Deep copy with independent storage.
  ModelParams clone() const {
    ModelParams copy = *this;
    for (auto& [name, t] : copy.named_tensors()) *t = t->clone();
    return copy;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_tensors()) n += t.size();
    return n;
  }
};

namespace detail {

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), true);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace detail

/// Deterministic initialization: linear layers U(+-1/sqrt(fan_in)), layer
/// norms (1, 0), positions U(+-0.02), circuit angles U(+-0.1).
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const auto layout = cfg.patch_layout();
  const std::size_t d = cfg.d_model;
  const std::size_t ff = cfg.ffn_width();
  ModelParams p;
  p.embedding.projection = detail::fan_in_uniform({layout.patch_len, d}, layout.patch_len, rng);
  p.embedding.bias = detail::fan_in_uniform({d}, layout.patch_len, rng);
  p.embedding.position = detail::uniform_tensor({layout.token_count, d}, 0.02, rng);
  p.embedding.dropout_p = cfg.dropout;
  for (std::size_t i = 0; i < cfg.e_layers; ++i) {
    EncoderLayerParams l;
    l.attention.w_query = detail::fan_in_uniform({d, d}, d, rng);
    l.attention.w_key = detail::fan_in_uniform({d, d}, d, rng);
    l.attention.w_value = detail::fan_in_uniform({d, d}, d, rng);
    l.attention.w_out = detail::fan_in_uniform({d, d}, d, rng);
    l.attention.norm_gamma = Tensor::full({d}, 1.0, true);
    l.attention.norm_beta = Tensor::zeros({d}, true);
    l.ffn_w1 = detail::fan_in_uniform({d, ff}, d, rng);
    l.ffn_b1 = detail::fan_in_uniform({ff}, d, rng);
    l.ffn_w2 = detail::fan_in_uniform({ff, d}, ff, rng);
    l.ffn_b2 = detail::fan_in_uniform({d}, ff, rng);
    l.norm_gamma = Tensor::full({d}, 1.0, true);
    l.norm_beta = Tensor::zeros({d}, true);
    if (select_attention(i) == AttentionKind::kQuantum) {
      QuantumCircuit c;
      c.theta = detail::uniform_tensor({static_cast<std::size_t>(cfg.n_qubits)}, 0.1, rng);
      c.angle_encoding_scale = cfg.angle_encoding_scale;
      c.backend = cfg.circuit_backend;
      l.circuit = std::move(c);
    }
    p.layers.push_back(std::move(l));
  }
  const std::size_t nf = layout.token_count * d;
  if (cfg.task == Task::kClassification) {
    const std::size_t in = cfg.n_vars * nf;
    p.head.weight = detail::fan_in_uniform({in, cfg.num_classes}, in, rng);
    p.head.bias = detail::fan_in_uniform({cfg.num_classes}, in, rng);
  } else {
    p.head.weight = detail::fan_in_uniform({nf, cfg.target_window()}, nf, rng);
    p.head.bias = detail::fan_in_uniform({cfg.target_window()}, nf, rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Blocks and heads

/// ReLU(h W1 + b1) W2 + b2 applied to every token.
inline Tensor ffn(Graph& g, const Tensor& h, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                  const Tensor& b2) {
  if (w1.rank() != 2 || w2.rank() != 2 || w1.dim(1) != w2.dim(0) || w2.dim(1) != h.shape().back()) {
    throw DimensionError("ffn: widths do not chain d_model -> d_ff -> d_model");
  }
  return linear(g, activation(g, linear(g, h, w1, b1), Activation::kRelu), w2, b2);
}

/// Post-norm encoder block:
///   H' = LayerNorm(Attention(X) + X)
///   H  = LayerNorm(FFN(H') + H')
inline Tensor encoder_block(ForwardContext& ctx, const Tensor& tokens, std::size_t layer_index,
                            const EncoderLayerParams& params, const ModelConfig& cfg,
                            AttentionOutput* attention = nullptr) {
  const AttentionKind kind = select_attention(layer_index);
  const QuantumCircuit* circuit = params.circuit ? &*params.circuit : nullptr;
  Tensor h1 = multi_head(ctx, tokens, params.attention, kind, cfg.attention_config(), circuit, attention);
  Graph& g = ctx.graph;
  Tensor f = ffn(g, h1, params.ffn_w1, params.ffn_b1, params.ffn_w2, params.ffn_b2);
  return layer_norm(g, add(g, f, h1), params.norm_gamma, params.norm_beta, 2, cfg.layer_norm_eps);
}

/// Flatten (tokens x features) -> Linear -> Dropout, then fold variates back
/// out of the batch axis: [B*M, N, d] -> [B, target, M].
inline Tensor flatten_head(ForwardContext& ctx, const Tensor& tokens, const HeadParams& head, std::size_t n_vars,
                           double dropout_p) {
  if (tokens.rank() != 3 || tokens.dim(0) % n_vars != 0) {
    throw DimensionError("flatten_head expects [B*n_vars, N, d_model], got " + to_string(tokens.shape()));
  }
  Graph& g = ctx.graph;
  const std::size_t rows = tokens.dim(0);
  const std::size_t nf = tokens.dim(1) * tokens.dim(2);
  if (head.weight.dim(0) != nf) {
    throw DimensionError("flatten_head: weight expects " + std::to_string(head.weight.dim(0)) +
                         " features, tokens give " + std::to_string(nf));
  }
  const std::size_t target = head.weight.dim(1);
  Tensor y = linear(g, reshape(g, tokens, {rows, nf}), head.weight, head.bias);
  y = dropout(g, y, dropout_p, ctx.rng, ctx.training);
  y = reshape(g, y, {rows / n_vars, n_vars, target});
  return permute(g, y, {0, 2, 1});
}

/// Forecast in normalized units, [B, T, n_vars].
inline Tensor forecast_head(ForwardContext& ctx, const Tensor& tokens, const HeadParams& head,
                            std::size_t n_vars, double dropout_p) {
  return flatten_head(ctx, tokens, head, n_vars, dropout_p);
}

/// GELU -> Dropout -> Flatten over (variates, tokens, features) -> Linear.
inline Tensor classification_head(ForwardContext& ctx, const Tensor& tokens, const HeadParams& head,
                                  std::size_t n_vars, double dropout_p) {
  if (tokens.rank() != 3 || tokens.dim(0) % n_vars != 0) {
    throw DimensionError("classification_head expects [B*n_vars, N, d_model], got " + to_string(tokens.shape()));
  }
  Graph& g = ctx.graph;
  const std::size_t batch = tokens.dim(0) / n_vars;
  Tensor z = activation(g, tokens, Activation::kGelu);
  z = dropout(g, z, dropout_p, ctx.rng, ctx.training);
  z = reshape(g, z, {batch, z.size() / batch});
  return linear(g, z, head.weight, head.bias);
}

/// Reconstruction of the input window in the original units, [B, L, n_vars].
inline Tensor anomaly_head(ForwardContext& ctx, const Tensor& tokens, const HeadParams& head, std::size_t n_vars,
                           double dropout_p, const NormStats& stats) {
  return de_normalize(ctx.graph, flatten_head(ctx, tokens, head, n_vars, dropout_p), stats);
}

struct ModelOutput {
  Tensor output;  // forecast [B,T,M], reconstruction [B,L,M] or logits [B,C]
  NormStats stats;
  std::vector<AttentionKind> attention_trace;
  std::vector<Tensor> attention_weights;  // [B*M, H, N, N] per layer
};

/// Normalize -> patch -> embed -> encoder blocks -> task head (-> de-normalize).
inline ModelOutput model_forward(ForwardContext& ctx, const ModelConfig& cfg, const ModelParams& params,
                                 const Tensor& x_enc) {
  if (x_enc.rank() != 3 || x_enc.dim(1) != cfg.seq_len || x_enc.dim(2) != cfg.n_vars) {
    throw DimensionError("model input must be [B, " + std::to_string(cfg.seq_len) + ", " +
                         std::to_string(cfg.n_vars) + "], got " + to_string(x_enc.shape()));
  }
  if (params.layers.size() != cfg.e_layers) throw ContractError("parameters do not match e_layers");
  Graph& g = ctx.graph;
  const std::size_t batch = x_enc.dim(0);
  const std::size_t vars = cfg.n_vars;
  const auto layout = cfg.patch_layout();

  ModelOutput result;
  auto [normalized, stats] = instance_normalize(x_enc, cfg.instance_norm_eps);
  result.stats = std::move(stats);

  // Channel independence: each variate becomes its own row of the batch.
  Tensor rows = reshape(g, permute(g, normalized, {0, 2, 1}), {batch * vars, cfg.seq_len});
  Tensor tokens = patch_embed(ctx, make_patches_batched(rows, layout), params.embedding);

  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    AttentionOutput attn;
    tokens = encoder_block(ctx, tokens, i, params.layers[i], cfg, &attn);
    result.attention_trace.push_back(select_attention(i));
    result.attention_weights.push_back(attn.weights);
  }

  switch (cfg.task) {
    case Task::kLongTermForecast:
    case Task::kShortTermForecast:
      result.output = de_normalize(g, forecast_head(ctx, tokens, params.head, vars, cfg.dropout), result.stats);
      break;
    case Task::kAnomalyDetection:
      result.output = anomaly_head(ctx, tokens, params.head, vars, cfg.dropout, result.stats);
      break;
    case Task::kClassification:
      result.output = classification_head(ctx, tokens, params.head, vars, cfg.dropout);
      break;
  }
  return result;
}

/// Evaluation-mode forward without graph recording.
inline Tensor predict(const ModelConfig& cfg, const ModelParams& params, const Tensor& x_enc) {
  NoGradGuard no_grad;
  Graph g;
  Rng rng(0);
  ForwardContext ctx{g, rng, false};
  return model_forward(ctx, cfg, params, x_enc).output;
}

}  // namespace qcaa
