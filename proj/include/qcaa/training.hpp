#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qcaa/data.hpp"
#include "qcaa/errors.hpp"
#include "qcaa/model.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/text.hpp"

namespace qcaa {

// ---------------------------------------------------------------------------
// Losses

/// Mean squared error over every element (batch, time and variate).
inline Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  Tensor diff = sub(g, pred, target);
  return mean(g, mul(g, diff, diff));
}

/// Mean negative log-likelihood of the true class under softmax(logits).
inline Tensor cross_entropy_loss(Graph& g, const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy_loss expects [B, C] logits");
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  auto z = logits.data();
  std::vector<double> probs(z.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = z.subspan(b * classes, classes);
    const double peak = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - peak);
    const double log_denom = std::log(denom) + peak;
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - log_denom);
    total += log_denom - row[static_cast<std::size_t>(labels[b])];
  }
  const bool tracked = detail::tracks(logits);
  Tensor out = Tensor::scalar(total / static_cast<double>(batch), tracked);
  if (tracked) {
    g.record(out, {logits}, [logits, out, probs = std::move(probs), labels, batch, classes]() {
      const double go = out.grad()[0] / static_cast<double>(batch);
      auto gz = logits.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
          gz[b * classes + c] += go * (probs[b * classes + c] - onehot);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  }

  /// One update from the accumulated gradients; tensors without a gradient
  /// are left untouched. The tensor list must be stable across calls.
  void step(const std::vector<Tensor>& params) {
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor p = params[i];
      if (!p.has_grad()) continue;
      auto w = p.data();
      auto gr = p.grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * gr[k];
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * gr[k] * gr[k];
        w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> first_, second_;
};

/// Scales all gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
inline double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double v : p.grad()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& v : p.mutable_grad()) v *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double anomaly_ratio = 1.0;  // percent
  double grad_clip = 5.0;      // global norm; 0 disables
  std::size_t max_steps = 0;   // 0 means unlimited

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (max_epochs < 1) throw ConfigError("epochs must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(anomaly_ratio > 0.0 && anomaly_ratio < 50.0)) throw ConfigError("anomaly_ratio must be in (0, 50)");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double time_s = 0.0;
};

inline std::string format_epoch(const EpochRecord& r) {
  return "epoch=" + std::to_string(r.epoch) + " train_loss=" + text::format_double(r.train_loss) +
         " val_loss=" + text::format_double(r.val_loss) + " time_s=" + text::format_fixed(r.time_s, 3);
}

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

struct Batch {
  Tensor input;   // [B, L, M]
  Tensor target;  // [B, target_len, M]; undefined for classification
  std::vector<int> labels;
};

inline Batch make_batch(const WindowedDataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t b = indices.size();
  Batch batch;
  batch.input = Tensor({b, ds.seq_len, ds.n_vars});
  const bool has_target = ds.task != Task::kClassification;
  if (has_target) batch.target = Tensor({b, ds.target_len, ds.n_vars});
  auto in = batch.input.data();
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = ds.samples.at(indices[i]);
    std::copy(s.input.begin(), s.input.end(), in.begin() + static_cast<std::ptrdiff_t>(i * s.input.size()));
    if (has_target) {
      auto tg = batch.target.data();
      std::copy(s.target.begin(), s.target.end(), tg.begin() + static_cast<std::ptrdiff_t>(i * s.target.size()));
    } else {
      batch.labels.push_back(s.label);
    }
  }
  return batch;
}

/// Training objective for the configured task on one batch.
inline Tensor task_loss(ForwardContext& ctx, const ModelConfig& cfg, const ModelParams& params, const Batch& batch) {
  Tensor out = model_forward(ctx, cfg, params, batch.input).output;
  if (cfg.task == Task::kClassification) return cross_entropy_loss(ctx.graph, out, batch.labels);
  return mse_loss(ctx.graph, out, batch.target);
}

/// Sample-weighted mean loss in evaluation mode.
inline double evaluate_loss(const ModelConfig& cfg, const ModelParams& params, const WindowedDataset& ds,
                            std::size_t batch_size) {
  if (ds.empty()) throw DataError("cannot evaluate on an empty split");
  NoGradGuard no_grad;
  Rng rng(0);
  double total = 0.0;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(ds.size(), begin + batch_size); ++i) idx.push_back(i);
    Graph g;
    ForwardContext ctx{g, rng, false};
    total += task_loss(ctx, cfg, params, make_batch(ds, idx)).item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(ds.size());
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam with seeded shuffling and early stopping on validation loss; the
/// parameters of the best validation epoch are returned.
inline TrainResult train(const ModelConfig& cfg, const ModelParams& init, const WindowedDataset& train_set,
                         const WindowedDataset& val_set, const TrainConfig& tcfg, const EpochCallback& on_epoch = {}) {
  tcfg.validate();
  cfg.validate();
  if (train_set.empty()) throw DataError("training split has no windows");
  if (val_set.empty()) throw DataError("validation split has no windows");

  TrainResult result;
  ModelParams params = init.clone();
  const std::vector<Tensor> weights = params.trainable();
  Adam opt(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.adam_eps);
  Rng rng(tcfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best = std::numeric_limits<double>::infinity();
  ModelParams best_params = params.clone();
  std::size_t stale = 0;
  Graph g;
  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
      if (tcfg.max_steps > 0 && result.history.steps >= tcfg.max_steps) break;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), begin + tcfg.batch_size)));
      g.reset();
      ForwardContext ctx{g, rng, true};
      Tensor loss = task_loss(ctx, cfg, params, make_batch(train_set, idx));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(result.history.steps + 1));
      }
      for (const auto& w : weights) w.clear_grad();
      g.backward(loss);
      clip_grad_norm(weights, tcfg.grad_clip);
      opt.step(weights);
      ++result.history.steps;
      loss_sum += value * static_cast<double>(idx.size());
      seen += idx.size();
    }
    g.reset();
    for (const auto& w : weights) w.clear_grad();
    if (seen == 0) break;  // step budget exhausted before this epoch

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = evaluate_loss(cfg, params, val_set, tcfg.batch_size);
    if (!std::isfinite(rec.val_loss)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    result.history.stopped_epoch = epoch;
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      best_params = params.clone();
      result.history.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      result.history.early_stopped = true;
      break;
    }
    if (tcfg.max_steps > 0 && result.history.steps >= tcfg.max_steps) break;
  }
  result.params = std::move(best_params);
  return result;
}

// ---------------------------------------------------------------------------
// Decision rules

/// Argmax per row; ties go to the lower class index.
inline std::vector<int> classify(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) < 2) throw DimensionError("classify expects [B, C] with C >= 2");
  const std::size_t classes = logits.dim(1);
  std::vector<int> out;
  auto z = logits.data();
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (z[b * classes + c] > z[b * classes + best]) best = c;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

/// Mean squared reconstruction error over variates, one score per timestep,
/// flattened as [B * L].
inline std::vector<double> anomaly_scores(const Tensor& x, const Tensor& recon) {
  detail::require_same_shape(x, recon, "anomaly_scores");
  if (x.rank() != 3) throw DimensionError("anomaly_scores expects [B, L, M]");
  const std::size_t vars = x.dim(2);
  const std::size_t steps = x.dim(0) * x.dim(1);
  auto a = x.data();
  auto r = recon.data();
  std::vector<double> out(steps, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t m = 0; m < vars; ++m) {
      const double d = a[t * vars + m] - r[t * vars + m];
      out[t] += d * d;
    }
    out[t] /= static_cast<double>(vars);
  }
  return out;
}

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double anomaly_threshold(const std::vector<double>& train_scores, const std::vector<double>& test_scores,
                                double anomaly_ratio) {
  if (test_scores.empty()) throw DataError("anomaly thresholding needs test scores");
  std::vector<double> combined(train_scores);
  combined.insert(combined.end(), test_scores.begin(), test_scores.end());
  return percentile(std::move(combined), 100.0 - anomaly_ratio);
}

/// Flags test scores strictly above the (100 - anomaly_ratio)th percentile of
/// the combined train and test scores.
inline std::vector<std::uint8_t> detect_anomalies(const std::vector<double>& train_scores,
                                                  const std::vector<double>& test_scores, double anomaly_ratio) {
  const double threshold = anomaly_threshold(train_scores, test_scores, anomaly_ratio);
  std::vector<std::uint8_t> flags;
  flags.reserve(test_scores.size());
  for (double s : test_scores) flags.push_back(s > threshold ? 1 : 0);
  return flags;
}

/// Per-timestep reconstruction scores for a whole series: consecutive
/// non-overlapping windows, plus one end-aligned window covering any tail.
inline std::vector<double> score_series(const ModelConfig& cfg, const ModelParams& params,
                                        const MultivariateSeries& s, std::size_t batch_size = 64) {
  const std::size_t len = cfg.seq_len;
  const std::size_t n = s.length();
  if (n < len) {
    throw DataError("series of length " + std::to_string(n) + " is shorter than seq_len " + std::to_string(len));
  }
  if (s.n_vars != cfg.n_vars) {
    throw DataError("series has " + std::to_string(s.n_vars) + " variates, model expects " + std::to_string(cfg.n_vars));
  }
  std::vector<std::size_t> starts;
  for (std::size_t start = 0; start + len <= n; start += len) starts.push_back(start);
  if (n % len != 0) starts.push_back(n - len);

  std::vector<double> scores(n, 0.0);
  for (std::size_t begin = 0; begin < starts.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, starts.size() - begin);
    Tensor x({count, len, s.n_vars});
    auto xd = x.data();
    for (std::size_t i = 0; i < count; ++i) {
      const auto rows = detail::rows_of(s, starts[begin + i], len);
      std::copy(rows.begin(), rows.end(), xd.begin() + static_cast<std::ptrdiff_t>(i * rows.size()));
    }
    const auto window_scores = anomaly_scores(x, predict(cfg, params, x));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t start = starts[begin + i];
      // The tail window only fills steps not covered by a full window.
      const std::size_t first = start % len == 0 ? 0 : (n / len) * len - start;
      for (std::size_t t = first; t < len; ++t) scores[start + t] = window_scores[i * len + t];
    }
  }
  return scores;
}

}  // namespace qcaa
