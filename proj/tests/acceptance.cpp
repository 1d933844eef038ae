// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "qcaa/cli.hpp"
#include "qcaa/grad_check.hpp"
#include "qcaa/qcaa.hpp"

using namespace qcaa;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------

Verdict quantum_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int n : {1, 2, 4, 6}) {
    for (int trial = 0; trial < 1000; ++trial) {
      CircuitParams p;
      for (int i = 0; i < n; ++i) p.theta.push_back(rng.uniform(-std::numbers::pi, std::numbers::pi));
      p.angle_encoding_scale = rng.uniform(0.1, 3.0);
      const double score = rng.normal() * 3.0;
      const double analytic = std::cos(p.theta[0] + std::tanh(score) * p.angle_encoding_scale);
      const double sim = qcsa_expectation(p, score);
      const double fast = qcsa_expectation_fast(p, score);
      worst = std::max({worst, std::abs(sim - analytic), std::abs(fast - analytic), std::abs(sim - fast)});
    }
  }
  const double secs = seconds_since(t0);
  v.check(worst <= 1e-12, "max deviation " + fmt(worst));
  v.check(secs < 5.0, "runtime " + fmt(secs) + " s");
  v.note("max deviation " + fmt(worst) + ", " + fmt(secs) + " s");
  return v;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst_op = 0.0;
  std::string worst_name;
  auto op = [&](const std::string& name, const ScalarFn& f, std::vector<Tensor> inputs) {
    const double err = grad_check(f, std::move(inputs));
    if (err > worst_op) {
      worst_op = err;
      worst_name = name;
    }
    v.check(err <= 1e-4, name + " " + fmt(err));
  };

  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), w34 = random_tensor({3, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);
  op("add", [&](Graph& g) { return sum(g, mul(g, add(g, a, b), w34)); }, {a, b});
  op("sub", [&](Graph& g) { return sum(g, mul(g, sub(g, a, b), w34)); }, {a, b});
  op("mul", [&](Graph& g) { return sum(g, mul(g, mul(g, a, b), w34)); }, {a, b});
  op("scale", [&](Graph& g) { return sum(g, mul(g, scale(g, a, -1.7), w34)); }, {a});
  op("add_broadcast", [&](Graph& g) { return sum(g, mul(g, add_broadcast(g, a, bias), w34)); }, {a, bias});
  const Tensor w43 = random_tensor({4, 3}, rng);
  op("reshape", [&](Graph& g) { return sum(g, mul(g, reshape(g, a, {4, 3}), w43)); }, {a});
  op("permute", [&](Graph& g) { return sum(g, mul(g, permute(g, a, {1, 0}), w43)); }, {a});
  const Tensor w24 = random_tensor({2, 4}, rng);
  op("slice_leading", [&](Graph& g) { return sum(g, mul(g, slice_leading(g, a, 2), w24)); }, {a});
  const Tensor lw = random_tensor({4, 5}, rng), lb = random_tensor({5}, rng), w35 = random_tensor({3, 5}, rng);
  op("linear", [&](Graph& g) { return sum(g, mul(g, linear(g, a, lw, lb), w35)); }, {a, lw, lb});
  const Tensor q = random_tensor({2, 3, 2, 4}, rng), k = random_tensor({2, 3, 2, 4}, rng);
  const Tensor vv = random_tensor({2, 3, 2, 4}, rng), ws = random_tensor({2, 2, 3, 3}, rng);
  op("contract", [&](Graph& g) { return sum(g, mul(g, contract(g, q, k, "blhe,bshe->bhls"), ws)); }, {q, k});
  op("softmax", [&](Graph& g) { return sum(g, mul(g, softmax(g, a, 1), w34)); }, {a});
  const Tensor gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
  op("layer_norm", [&](Graph& g) { return sum(g, mul(g, layer_norm(g, a, gamma, beta, 1, 1e-5), w34)); },
     {a, gamma, beta});
  for (auto [kind, name] : {std::pair{Activation::kRelu, "relu"}, std::pair{Activation::kGelu, "gelu"},
                            std::pair{Activation::kTanh, "tanh"}}) {
    op(name, [&, kind](Graph& g) { return sum(g, mul(g, activation(g, a, kind), w34)); }, {a});
  }
  op("dropout",
     [&](Graph& g) {
       Rng drop_rng(9);
       return sum(g, mul(g, dropout(g, a, 0.3, drop_rng, true), w34));
     },
     {a});
  const AttentionMask mask34{0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0};
  op("mask_fill", [&](Graph& g) { return sum(g, mul(g, softmax(g, mask_fill(g, a, mask34), 1), w34)); }, {a});
  op("mean", [&](Graph& g) { return mean(g, mul(g, a, b)); }, {a, b});
  for (auto backend : {CircuitBackend::kFast, CircuitBackend::kStatevector}) {
    QuantumCircuit circuit{random_tensor({3}, rng), 1.3, backend};
    op(backend == CircuitBackend::kFast ? "circuit_fast" : "circuit_statevector",
       [&](Graph& g) { return sum(g, mul(g, circuit_expectation(g, a, circuit), w34)); }, {a, circuit.theta});
  }
  const Tensor x3 = random_tensor({2, 6, 2}, rng), wx3 = random_tensor({2, 6, 2}, rng);
  {
    const auto stats = instance_normalize(x3, 1e-5).second;
    const Tensor y = random_tensor({2, 6, 2}, rng);
    op("de_normalize", [&](Graph& g) { return sum(g, mul(g, de_normalize(g, y, stats), wx3)); }, {y});
  }
  const Tensor w1 = random_tensor({4, 6}, rng), b1 = random_tensor({6}, rng);
  const Tensor w2 = random_tensor({6, 4}, rng), b2 = random_tensor({4}, rng);
  op("ffn", [&](Graph& g) { return sum(g, mul(g, ffn(g, a, w1, b1, w2, b2), w34)); }, {a, w1, b1, w2, b2});
  {
    AttentionConfig cfg;
    cfg.n_heads = 2;
    const Tensor wo = random_tensor({2, 3, 2, 4}, rng);
    op("full_attention",
       [&](Graph& g) {
         Rng r(0);
         ForwardContext ctx{g, r, false};
         return sum(g, mul(g, full_attention(ctx, q, k, vv, cfg).values, wo));
       },
       {q, k, vv});
    QuantumCircuit circuit{random_tensor({2}, rng), 1.0, CircuitBackend::kStatevector};
    op("qcsa_attention",
       [&](Graph& g) {
         Rng r(0);
         ForwardContext ctx{g, r, false};
         return sum(g, mul(g, qcsa_attention(ctx, q, k, vv, cfg, circuit).values, wo));
       },
       {q, k, vv, circuit.theta});
  }
  {
    const auto layout = evaluate_patch_params(24);
    PatchEmbedParams pe{random_tensor({layout.patch_len, 4}, rng), random_tensor({4}, rng),
                        random_tensor({layout.token_count, 4}, rng), 0.0};
    const Tensor rows = random_tensor({2, 24}, rng);
    const Tensor patches = make_patches_batched(rows, layout);
    const Tensor wp = random_tensor({2, layout.token_count, 4}, rng);
    op("patch_embed",
       [&](Graph& g) {
         Rng r(0);
         ForwardContext ctx{g, r, false};
         return sum(g, mul(g, patch_embed(ctx, patches, pe), wp));
       },
       {patches, pe.projection, pe.bias, pe.position});
  }

  // Full model.
  double worst_model = 0.0;
  for (auto backend : {CircuitBackend::kFast, CircuitBackend::kStatevector}) {
    ModelConfig cfg;
    cfg.seq_len = 24;
    cfg.pred_len = 4;
    cfg.n_vars = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.e_layers = 2;
    cfg.d_ff = 16;
    cfg.n_qubits = 2;
    cfg.dropout = 0.0;
    cfg.circuit_backend = backend;
    auto params = init_params(cfg, 3);
    const Tensor x = random_tensor({2, 24, 1}, rng), wy = random_tensor({2, 4, 1}, rng);
    const double err = grad_check(
        [&](Graph& g) {
          Rng r(0);
          ForwardContext ctx{g, r, false};
          return sum(g, mul(g, model_forward(ctx, cfg, params, x).output, wy));
        },
        params.trainable());
    worst_model = std::max(worst_model, err);
  }
  v.check(worst_model <= 1e-3, "full model " + fmt(worst_model));

  // Parameter shift against finite differences of the simulated circuit.
  double worst_shift = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    CircuitParams p;
    const int n = 1 + trial % 5;
    for (int i = 0; i < n; ++i) p.theta.push_back(rng.uniform(-3.0, 3.0));
    p.angle_encoding_scale = rng.uniform(0.5, 2.0);
    const double score = rng.normal();
    const auto grad = qcsa_expectation_grad(p, score);
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      CircuitParams up = p, down = p;
      up.theta[i] += h;
      down.theta[i] -= h;
      const double fd = (qcsa_expectation(up, score) - qcsa_expectation(down, score)) / (2 * h);
      worst_shift = std::max(worst_shift, std::abs(grad.d_theta[i] - fd));
    }
    const double fd_s = (qcsa_expectation(p, score + h) - qcsa_expectation(p, score - h)) / (2 * h);
    worst_shift = std::max(worst_shift, std::abs(grad.d_score - fd_s));
  }
  v.check(worst_shift <= 1e-6, "parameter shift " + fmt(worst_shift));

  const double secs = seconds_since(t0);
  v.check(secs < 120.0, "runtime " + fmt(secs) + " s");
  v.note("worst op " + worst_name + " " + fmt(worst_op) + ", model " + fmt(worst_model) + ", shift " +
         fmt(worst_shift) + ", " + fmt(secs) + " s");
  return v;
}

// ---------------------------------------------------------------------------

Verdict patch_table() {
  Verdict v;
  const auto t0 = Clock::now();
  const std::vector<std::array<std::size_t, 3>> rows = {
      {96, 16, 8}, {240, 40, 20}, {420, 70, 35}, {24, 4, 2}, {48, 8, 4}, {100, 17, 8}, {512, 85, 42}};
  for (const auto& [len, pl, st] : rows) {
    const auto layout = evaluate_patch_params(len);
    v.check(layout.patch_len == pl && layout.stride == st,
            std::to_string(len) + " gave (" + std::to_string(layout.patch_len) + "," +
                std::to_string(layout.stride) + ")");
  }
  const double secs = seconds_since(t0);
  v.check(secs < 1.0, "runtime " + fmt(secs) + " s");
  v.note("7 rows, 512 -> (85,42)");
  return v;
}

// ---------------------------------------------------------------------------

Verdict attention_invariants() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(404);
  double row_err = 0.0, perm_err = 0.0, masked_max = 0.0, quantum_max = 0.0;
  bool trace_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t batch = 1 + rng.index(2), len = 1 + rng.index(6), heads = 1 + rng.index(3),
                      dim = 1 + rng.index(4);
    const Tensor q = random_tensor({batch, len, heads, dim}, rng, 2.0);
    const Tensor k = random_tensor({batch, len, heads, dim}, rng, 2.0);
    const Tensor val = random_tensor({batch, len, heads, dim}, rng);
    AttentionConfig cfg;
    cfg.n_heads = heads;
    cfg.entanglement_factor = rng.uniform(0.0, 1.0);

    NoGradGuard no_grad;
    Graph g;
    Rng ctx_rng(0);
    ForwardContext ctx{g, ctx_rng, false};

    // Random mask with at least one open key per query.
    AttentionMask mask(len * len, 0);
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t keep = rng.index(len);
      for (std::size_t s = 0; s < len; ++s) mask[l * len + s] = s != keep && rng.uniform() < 0.4;
    }

    QuantumCircuit circuit{random_tensor({static_cast<std::size_t>(1 + rng.index(4))}, rng), rng.uniform(0.5, 2.0),
                           CircuitBackend::kFast};
    const Tensor quantum = circuit_expectation(g, contract(g, q, k, "blhe,bshe->bhls"), circuit);
    for (double x : quantum.data()) quantum_max = std::max(quantum_max, std::abs(x));

    for (int kind = 0; kind < 2; ++kind) {
      for (bool masked : {false, true}) {
        AttentionConfig run_cfg = cfg;
        run_cfg.mask_enabled = masked;
        const AttentionMask m = masked ? mask : AttentionMask{};
        const auto out = kind == 0 ? full_attention(ctx, q, k, val, run_cfg, m)
                                   : qcsa_attention(ctx, q, k, val, run_cfg, circuit, m);
        const auto w = out.weights.data();
        for (std::size_t row = 0; row < w.size() / len; ++row) {
          double total = 0.0;
          for (std::size_t s = 0; s < len; ++s) {
            total += w[row * len + s];
            if (masked && mask[(row % len) * len + s]) masked_max = std::max(masked_max, std::abs(w[row * len + s]));
          }
          row_err = std::max(row_err, std::abs(total - 1.0));
        }
      }
    }

    // Joint permutation of key/value positions.
    std::vector<std::size_t> perm(len);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = len; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    Tensor kp(k.shape()), vp(val.shape());
    const std::size_t block = heads * dim;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t s = 0; s < len; ++s) {
        for (std::size_t j = 0; j < block; ++j) {
          kp.data()[(bi * len + s) * block + j] = k.data()[(bi * len + perm[s]) * block + j];
          vp.data()[(bi * len + s) * block + j] = val.data()[(bi * len + perm[s]) * block + j];
        }
      }
    }
    const auto base = full_attention(ctx, q, k, val, cfg).values;
    const auto moved = full_attention(ctx, q, kp, vp, cfg).values;
    for (std::size_t i = 0; i < base.size(); ++i) perm_err = std::max(perm_err, std::abs(base.data()[i] - moved.data()[i]));

    // Layer alternation in the encoder trace.
    ModelConfig mc;
    mc.seq_len = 16;
    mc.pred_len = 2;
    mc.d_model = 4;
    mc.n_heads = 2;
    mc.d_ff = 4;
    mc.n_qubits = 1;
    mc.e_layers = 1 + static_cast<std::size_t>(trial % 4);
    mc.dropout = 0.0;
    const auto params = init_params(mc, static_cast<std::uint64_t>(trial));
    Graph mg;
    ForwardContext mctx{mg, ctx_rng, false};
    const auto trace = model_forward(mctx, mc, params, random_tensor({1, 16, 1}, rng)).attention_trace;
    trace_ok = trace_ok && trace.size() == mc.e_layers;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      trace_ok = trace_ok && trace[i] == (i % 2 == 0 ? AttentionKind::kQuantum : AttentionKind::kFull);
    }
  }
  const double secs = seconds_since(t0);
  v.check(row_err <= 1e-9, "row sums off by " + fmt(row_err));
  v.check(quantum_max <= 1.0, "quantum term magnitude " + fmt(quantum_max));
  v.check(masked_max == 0.0, "masked weight " + fmt(masked_max));
  v.check(perm_err <= 1e-10, "permutation error " + fmt(perm_err));
  v.check(trace_ok, "layer alternation");
  v.check(secs < 30.0, "runtime " + fmt(secs) + " s");
  v.note("row sum " + fmt(row_err) + ", |quantum| max " + fmt(quantum_max) + ", permutation " + fmt(perm_err) +
         ", " + fmt(secs) + " s");
  return v;
}

// ---------------------------------------------------------------------------
// Scaled-down end-to-end runs. Each returns its metrics JSON text.

struct RunResult {
  std::string json;
  double seconds = 0.0;
};

RunResult forecasting_run(double* model_mse, double* naive_mse) {
  const auto t0 = Clock::now();
  Rng rng(0);
  const auto series = sine_mixture({2000, 3, 3, 0.1}, rng);
  const auto sp = split_series(series, {0.7, 0.1, 0.2});
  ModelConfig cfg;
  cfg.task = Task::kLongTermForecast;
  cfg.seq_len = 96;
  cfg.pred_len = 24;
  cfg.n_vars = 3;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.e_layers = 2;
  cfg.d_ff = 64;
  cfg.n_qubits = 4;
  cfg.entanglement_factor = 0.1;
  cfg.dropout = 0.1;
  const auto train_set = make_windows(sp.train, 96, 24, cfg.task);
  const auto val_set = make_windows(sp.val, 96, 24, cfg.task);
  const auto test_set = make_windows(sp.test, 96, 24, cfg.task);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 32;
  tc.max_epochs = 100;
  tc.patience = 100;
  tc.max_steps = 200;
  tc.seed = 0;
  const auto result = train(cfg, init_params(cfg, 0), train_set, val_set, tc);
  MetricReport report = cli::evaluate_forecast(cfg, result.params, test_set, 64);

  double naive = 0.0;
  std::size_t n = 0;
  for (const auto& s : test_set.samples) {
    for (std::size_t t = 0; t < 24; ++t) {
      for (std::size_t m = 0; m < 3; ++m) {
        const double d = s.target[t * 3 + m] - s.input[95 * 3 + m];
        naive += d * d;
        ++n;
      }
    }
  }
  naive /= static_cast<double>(n);
  report.task = to_string(cfg.task);
  report.values["naive_mse"] = naive;
  report.counts["steps"] = result.history.steps;
  *model_mse = *report.get("mse");
  *naive_mse = naive;
  return {report.dump(), seconds_since(t0)};
}

RunResult classification_run(double* accuracy, std::size_t* epochs) {
  const auto t0 = Clock::now();
  Rng rng(0);
  const auto train_raw = two_class_windows({400, 64, 1, 0.1}, rng);
  const auto val_raw = two_class_windows({100, 64, 1, 0.1}, rng);
  const auto test_raw = two_class_windows({100, 64, 1, 0.1}, rng);
  ModelConfig cfg;
  cfg.task = Task::kClassification;
  cfg.seq_len = 64;
  cfg.n_vars = 1;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.n_qubits = 4;
  cfg.num_classes = 2;
  cfg.dropout = 0.1;
  const auto train_set = make_windows(train_raw.series, 64, 0, cfg.task, train_raw.labels);
  const auto val_set = make_windows(val_raw.series, 64, 0, cfg.task, val_raw.labels);
  const auto test_set = make_windows(test_raw.series, 64, 0, cfg.task, test_raw.labels);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 10;
  tc.patience = 10;
  tc.seed = 0;
  const auto result = train(cfg, init_params(cfg, 0), train_set, val_set, tc);
  MetricReport report = classification_metrics(cli::detail::predict_labels(cfg, result.params, test_set, 64),
                                               cli::detail::labels_of(test_set));
  report.task = to_string(cfg.task);
  report.counts["stopped_epoch"] = result.history.stopped_epoch;
  *accuracy = *report.get("accuracy");
  *epochs = result.history.stopped_epoch;
  return {report.dump(), seconds_since(t0)};
}

RunResult anomaly_run(double* f1) {
  const auto t0 = Clock::now();
  Rng rng(0);
  const auto labeled = add_spikes(sine_mixture({5000, 1, 3, 0.05}, rng), {0.01, 6.0}, rng);
  const auto sp = split_series(labeled.series, {0.6, 0.1, 0.3});
  ModelConfig cfg;
  cfg.task = Task::kAnomalyDetection;
  cfg.seq_len = 96;
  cfg.n_vars = 1;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.n_qubits = 4;
  cfg.dropout = 0.0;
  const auto train_set = make_windows(sp.train, 96, 0, cfg.task);
  const auto val_set = make_windows(sp.val, 96, 0, cfg.task);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 20;
  tc.patience = 5;
  tc.seed = 0;
  tc.anomaly_ratio = 1.0;
  const auto result = train(cfg, init_params(cfg, 0), train_set, val_set, tc);
  const auto train_scores = score_series(cfg, result.params, sp.train);
  const auto test_scores = score_series(cfg, result.params, sp.test);
  const auto flags = detect_anomalies(train_scores, test_scores, tc.anomaly_ratio);
  const std::vector<std::uint8_t> truth(labeled.labels.begin() + static_cast<std::ptrdiff_t>(sp.test_offset),
                                        labeled.labels.end());
  MetricReport report = anomaly_metrics(flags, truth, false);
  report.task = to_string(cfg.task);
  report.values["threshold"] = anomaly_threshold(train_scores, test_scores, tc.anomaly_ratio);
  *f1 = report.get("f1").value_or(0.0);
  return {report.dump(), seconds_since(t0)};
}

// ---------------------------------------------------------------------------

Verdict normalization_and_descent() {
  Verdict v;
  Rng rng(909);
  const Tensor x = random_tensor({4, 24, 3}, rng, 5.0);
  {
    Tensor shifted = x.clone();
    for (auto& val : shifted.data()) val += 11.0;
    const auto [y, stats] = instance_normalize(x, 1e-5);
    Graph g;
    const Tensor back = de_normalize(g, y, stats);
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(back.data()[i] - x.data()[i]));
    v.check(err <= 1e-10, "round trip " + fmt(err));
    v.note("round trip " + fmt(err));
  }

  ModelConfig cfg;
  cfg.seq_len = 24;
  cfg.pred_len = 4;
  cfg.n_vars = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.e_layers = 2;
  cfg.d_ff = 16;
  cfg.n_qubits = 2;
  cfg.dropout = 0.0;
  auto params = init_params(cfg, 5);
  {
    Tensor shifted = x.clone();
    const double c = -42.5;
    for (auto& val : shifted.data()) val += c;
    const Tensor base = predict(cfg, params, x);
    const Tensor moved = predict(cfg, params, shifted);
    double err = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) err = std::max(err, std::abs(moved.data()[i] - (base.data()[i] + c)));
    v.check(err <= 1e-9, "shift equivariance " + fmt(err));
    v.note("shift " + fmt(err));
  }

  // Fixed batch, 200 optimizer steps, 10-step moving average of the loss.
  Tensor target(Shape{4, 4, 3});
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t m = 0; m < 3; ++m) target.data()[(b * 4 + t) * 3 + m] = x.data()[(b * 24 + 20 + t) * 3 + m];
    }
  }
  Adam opt(1e-3);
  const auto weights = params.trainable();
  std::vector<double> losses;
  Rng ctx_rng(0);
  for (int step = 0; step < 200; ++step) {
    Graph g;
    ForwardContext ctx{g, ctx_rng, true};
    for (const auto& t : weights) t.zero_grad();
    Tensor loss = mse_loss(g, model_forward(ctx, cfg, params, x).output, target);
    losses.push_back(loss.item());
    g.backward(loss);
    opt.step(weights);
  }
  std::size_t violations = 0;
  double prev = 0.0;
  for (std::size_t i = 9; i < losses.size(); ++i) {
    double avg = 0.0;
    for (std::size_t j = i - 9; j <= i; ++j) avg += losses[j];
    avg /= 10.0;
    if (i > 9 && !(avg < prev)) ++violations;
    prev = avg;
  }
  v.check(violations == 0, std::to_string(violations) + " smoothed-loss increases");
  v.note("loss " + fmt(losses.front()) + " -> " + fmt(losses.back()));
  return v;
}

// ---------------------------------------------------------------------------

Verdict complexity() {
  Verdict v;
  Rng rng(1010);
  const std::size_t d = 64, heads = 8;
  MultiHeadParams p{random_tensor({d, d}, rng, 0.1), random_tensor({d, d}, rng, 0.1), random_tensor({d, d}, rng, 0.1),
                    random_tensor({d, d}, rng, 0.1), Tensor::full({d}, 1.0),        Tensor::zeros({d})};
  QuantumCircuit circuit{random_tensor({4}, rng), 1.0, CircuitBackend::kFast};
  AttentionConfig cfg;
  cfg.n_heads = heads;
  const Tensor x = random_tensor({8, 12, d}, rng);
  auto time_layer = [&](AttentionKind kind) {
    NoGradGuard no_grad;
    Rng r(0);
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = Clock::now();
      for (int i = 0; i < 40; ++i) {
        Graph g;
        ForwardContext ctx{g, r, false};
        multi_head(ctx, x, p, kind, cfg, kind == AttentionKind::kQuantum ? &circuit : nullptr);
      }
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  time_layer(AttentionKind::kFull);
  const double full = time_layer(AttentionKind::kFull);
  const double quantum = time_layer(AttentionKind::kQuantum);
  const double ratio = quantum / full;
  v.check(ratio <= 10.0, "ratio " + fmt(ratio));
  v.note("quantum/full wall time " + fmt(ratio) + (ratio <= 3.0 ? " (within 3x)" : " (above 3x target)"));
  return v;
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const char* name, const Verdict& v) {
    all = all && v.pass;
    std::printf("criterion %d %s: %s (%s)\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  };
  auto guarded = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      Verdict v;
      v.check(false, std::string("exception: ") + e.what());
      report(id, name, v);
    }
  };

  guarded(1, "quantum_oracle", quantum_oracle);
  guarded(2, "gradients", gradient_suite);
  guarded(3, "patch_table", patch_table);
  guarded(4, "attention_invariants", attention_invariants);

  std::vector<std::string> first_json, second_json;
  guarded(5, "synthetic_forecast", [&] {
    Verdict v;
    double mse = 0.0, naive = 0.0;
    const auto r = forecasting_run(&mse, &naive);
    first_json.push_back(r.json);
    v.check(mse < 0.5 * naive, "mse " + fmt(mse) + " vs naive " + fmt(naive));
    v.check(r.seconds < 300.0, "runtime " + fmt(r.seconds) + " s");
    v.note("mse " + fmt(mse) + ", naive " + fmt(naive) + ", ratio " + fmt(mse / naive) + ", " + fmt(r.seconds) + " s");
    return v;
  });
  guarded(6, "synthetic_classification", [&] {
    Verdict v;
    double acc = 0.0;
    std::size_t epochs = 0;
    const auto r = classification_run(&acc, &epochs);
    first_json.push_back(r.json);
    v.check(acc >= 0.9, "accuracy " + fmt(acc));
    v.check(epochs <= 50, "epochs " + std::to_string(epochs));
    v.check(r.seconds < 300.0, "runtime " + fmt(r.seconds) + " s");
    v.note("accuracy " + fmt(acc) + " after " + std::to_string(epochs) + " epochs, " + fmt(r.seconds) + " s");
    return v;
  });
  guarded(7, "synthetic_anomaly", [&] {
    Verdict v;
    double f1 = 0.0;
    const auto r = anomaly_run(&f1);
    first_json.push_back(r.json);
    v.check(f1 >= 0.8, "f1 " + fmt(f1));
    v.check(r.seconds < 300.0, "runtime " + fmt(r.seconds) + " s");
    v.note("f1 " + fmt(f1) + ", " + fmt(r.seconds) + " s");
    return v;
  });
  guarded(8, "determinism", [&] {
    Verdict v;
    double a = 0.0, b = 0.0;
    std::size_t e = 0;
    second_json.push_back(forecasting_run(&a, &b).json);
    second_json.push_back(classification_run(&a, &e).json);
    second_json.push_back(anomaly_run(&a).json);
    v.check(first_json.size() == 3, "first pass incomplete");
    const char* names[] = {"forecast", "classification", "anomaly"};
    for (std::size_t i = 0; i < std::min(first_json.size(), second_json.size()); ++i) {
      v.check(first_json[i] == second_json[i], std::string(names[i]) + " metrics differ");
    }
    v.note("3 reruns compared byte for byte");
    return v;
  });
  guarded(9, "normalization_and_descent", normalization_and_descent);
  guarded(10, "complexity", complexity);

  std::printf("acceptance: %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 1;
}
