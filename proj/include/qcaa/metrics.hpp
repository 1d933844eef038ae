#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "qcaa/errors.hpp"

namespace qcaa {

/// Named metric values plus counts. A metric that is undefined for the given
/// inputs is stored as nullopt and serialized as null; the reason goes in flags.
struct MetricReport {
  std::string task;
  std::map<std::string, std::optional<double>> values;
  std::map<std::string, std::uint64_t> counts;
  std::set<std::string> flags;

  std::optional<double> get(const std::string& name) const {
    const auto it = values.find(name);
    return it == values.end() ? std::nullopt : it->second;
  }

  void merge(const MetricReport& other) {
    for (const auto& [k, v] : other.values) values[k] = v;
    for (const auto& [k, v] : other.counts) counts[k] = v;
    flags.insert(other.flags.begin(), other.flags.end());
  }

  nlohmann::json to_json() const {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [k, v] : values) metrics[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    nlohmann::json j;
    j["task"] = task;
    j["metrics"] = metrics;
    j["counts"] = counts;
    j["flags"] = flags;
    return j;
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }
};

namespace detail {

inline void require_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
  }
  if (a == 0) throw DataError(std::string(what) + ": empty input");
}

}  // namespace detail

inline MetricReport regression_metrics(const std::vector<double>& pred, const std::vector<double>& target) {
  detail::require_pair(pred.size(), target.size(), "regression_metrics");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    se += d * d;
    ae += std::abs(d);
  }
  const double n = static_cast<double>(pred.size());
  MetricReport r;
  r.values["mse"] = se / n;
  r.values["mae"] = ae / n;
  r.counts["elements"] = pred.size();
  return r;
}

// ---------------------------------------------------------------------------
// M4 metrics

/// Sample autocorrelation at lags 1..max_lag.
inline std::vector<double> autocorrelation(const std::vector<double>& x, std::size_t max_lag) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  std::vector<double> acf(max_lag, 0.0);
  if (denom == 0.0) return acf;
  for (std::size_t k = 1; k <= max_lag && k < n; ++k) {
    double num = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) num += (x[t] - mean) * (x[t + k] - mean);
    acf[k - 1] = num / denom;
  }
  return acf;
}

/// 90% one-sided autocorrelation test at lag m, as used by the M4 benchmarks.
inline bool seasonality_test(const std::vector<double>& insample, std::size_t m) {
  if (m <= 1 || insample.size() < 3 * m) return false;
  const auto acf = autocorrelation(insample, m);
  double acc = 1.0;
  for (std::size_t k = 0; k + 1 < m; ++k) acc += 2.0 * acf[k] * acf[k];
  const double limit = 1.645 * std::sqrt(acc) / std::sqrt(static_cast<double>(insample.size()));
  return std::abs(acf[m - 1]) > limit;
}

/// Classical multiplicative seasonal indices (length m, mean 1), indexed by
/// position modulo m from the start of the in-sample series.
inline std::vector<double> seasonal_indices(const std::vector<double>& x, std::size_t m) {
  const std::size_t n = x.size();
  std::vector<double> trend(n, std::nan(""));
  // Centered moving average; 2 x m when m is even.
  if (m % 2 == 1) {
    const std::size_t half = m / 2;
    for (std::size_t t = half; t + half < n; ++t) {
      double s = 0.0;
      for (std::size_t k = t - half; k <= t + half; ++k) s += x[k];
      trend[t] = s / static_cast<double>(m);
    }
  } else {
    const std::size_t half = m / 2;
    for (std::size_t t = half; t + half < n; ++t) {
      double s = 0.5 * x[t - half] + 0.5 * x[t + half];
      for (std::size_t k = t - half + 1; k < t + half; ++k) s += x[k];
      trend[t] = s / static_cast<double>(m);
    }
  }
  std::vector<double> sum(m, 0.0);
  std::vector<std::size_t> cnt(m, 0);
  for (std::size_t t = 0; t < n; ++t) {
    if (std::isnan(trend[t]) || trend[t] == 0.0) continue;
    sum[t % m] += x[t] / trend[t];
    ++cnt[t % m];
  }
  std::vector<double> idx(m, 1.0);
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    idx[k] = cnt[k] > 0 ? sum[k] / static_cast<double>(cnt[k]) : 1.0;
    total += idx[k];
  }
  const double mean = total / static_cast<double>(m);
  for (auto& v : idx) v /= mean;
  return idx;
}

/// Last value of the seasonally adjusted series, re-seasonalized over the
/// horizon; plain naive when no seasonality is detected.
inline std::vector<double> naive2_forecast(const std::vector<double>& insample, std::size_t horizon, std::size_t m) {
  if (insample.empty()) throw DataError("naive2 needs in-sample data");
  const std::size_t n = insample.size();
  std::vector<double> out(horizon, insample.back());
  if (!seasonality_test(insample, m)) return out;
  const auto idx = seasonal_indices(insample, m);
  const double level = insample.back() / idx[(n - 1) % m];
  for (std::size_t h = 0; h < horizon; ++h) out[h] = level * idx[(n + h) % m];
  return out;
}

namespace detail {

struct M4Terms {
  std::optional<double> smape, mape, mase;
};

inline M4Terms m4_terms(const std::vector<double>& pred, const std::vector<double>& target,
                        const std::vector<double>& insample, std::size_t m, std::set<std::string>& flags,
                        const std::string& prefix) {
  M4Terms out;
  double smape = 0.0, mape = 0.0, abs_err = 0.0;
  std::size_t n_smape = 0, n_mape = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = std::abs(target[i] - pred[i]);
    abs_err += err;
    const double sden = std::abs(target[i]) + std::abs(pred[i]);
    if (sden > 0.0) {
      smape += err / sden;
      ++n_smape;
    } else {
      flags.insert(prefix + "smape_zero_denominator");
    }
    if (target[i] != 0.0) {
      mape += err / std::abs(target[i]);
      ++n_mape;
    } else {
      flags.insert(prefix + "mape_zero_denominator");
    }
  }
  if (n_smape > 0) out.smape = 200.0 * smape / static_cast<double>(n_smape);
  if (n_mape > 0) out.mape = 100.0 * mape / static_cast<double>(n_mape);
  const std::size_t lag = m > 1 ? m : 1;
  double scale = 0.0;
  for (std::size_t t = lag; t < insample.size(); ++t) scale += std::abs(insample[t] - insample[t - lag]);
  scale /= static_cast<double>(insample.size() - lag);
  if (scale > 0.0) {
    out.mase = abs_err / static_cast<double>(pred.size()) / scale;
  } else {
    flags.insert(prefix + "mase_zero_denominator");
  }
  return out;
}

}  // namespace detail

/// sMAPE, MAPE, MASE and OWA of one forecast against its Naive2 benchmark.
inline MetricReport m4_metrics(const std::vector<double>& pred, const std::vector<double>& target,
                               const std::vector<double>& insample, std::size_t m) {
  detail::require_pair(pred.size(), target.size(), "m4_metrics");
  const std::size_t lag = m > 1 ? m : 1;
  if (insample.size() <= lag) {
    throw DataError("m4_metrics: in-sample length " + std::to_string(insample.size()) +
                    " must exceed the seasonality " + std::to_string(lag));
  }
  MetricReport r;
  const auto model = detail::m4_terms(pred, target, insample, m, r.flags, "");
  std::set<std::string> naive_flags;
  const auto naive = detail::m4_terms(naive2_forecast(insample, pred.size(), m), target, insample, m, naive_flags,
                                      "naive2_");
  r.flags.insert(naive_flags.begin(), naive_flags.end());
  r.values["smape"] = model.smape;
  r.values["mape"] = model.mape;
  r.values["mase"] = model.mase;
  std::optional<double> owa;
  if (model.smape && model.mase && naive.smape && naive.mase && *naive.smape > 0.0 && *naive.mase > 0.0) {
    owa = 0.5 * (*model.smape / *naive.smape + *model.mase / *naive.mase);
  } else {
    r.flags.insert("owa_undefined");
  }
  r.values["owa"] = owa;
  r.counts["horizon"] = pred.size();
  return r;
}

inline MetricReport classification_metrics(const std::vector<int>& pred, const std::vector<int>& truth) {
  detail::require_pair(pred.size(), truth.size(), "classification_metrics");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  MetricReport r;
  r.values["accuracy"] = static_cast<double>(correct) / static_cast<double>(pred.size());
  r.counts["samples"] = pred.size();
  r.counts["correct"] = correct;
  return r;
}

/// Marks every true anomalous segment fully detected when any point in it is
/// flagged.
inline std::vector<std::uint8_t> point_adjust(std::vector<std::uint8_t> flags, const std::vector<std::uint8_t>& truth) {
  std::size_t t = 0;
  while (t < truth.size()) {
    if (!truth[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    bool hit = false;
    for (; end < truth.size() && truth[end]; ++end) {
      if (flags[end]) hit = true;
    }
    if (hit) std::fill(flags.begin() + static_cast<std::ptrdiff_t>(t), flags.begin() + static_cast<std::ptrdiff_t>(end), 1);
    t = end;
  }
  return flags;
}

/// Precision, recall and F1. Precision is 0 when nothing is flagged; recall
/// (and F1) are null when the truth has no positives.
inline MetricReport anomaly_metrics(const std::vector<std::uint8_t>& flags, const std::vector<std::uint8_t>& truth,
                                    bool adjust = false) {
  detail::require_pair(flags.size(), truth.size(), "anomaly_metrics");
  const auto pred = adjust ? point_adjust(flags, truth) : flags;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (truth[i]) ++fn;
  }
  MetricReport r;
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  if (tp + fp == 0) r.flags.insert("no_predicted_positives");
  r.values["precision"] = precision;
  if (tp + fn == 0) {
    r.values["recall"] = std::nullopt;
    r.values["f1"] = std::nullopt;
    r.flags.insert("no_true_positives_in_truth");
  } else {
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.values["recall"] = recall;
    r.values["f1"] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  r.counts["true_positives"] = tp;
  r.counts["false_positives"] = fp;
  r.counts["false_negatives"] = fn;
  r.counts["points"] = pred.size();
  if (adjust) r.flags.insert("point_adjusted");
  return r;
}

}  // namespace qcaa
