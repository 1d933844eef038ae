#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/model.hpp"
#include "qcaa/rng.hpp"
#include "qcaa/text.hpp"

namespace qcaa {

/// Row-major [length x n_vars] table of observations.
struct MultivariateSeries {
  std::size_t n_vars = 0;
  std::vector<double> values;
  std::vector<std::string> timestamps;  // empty or one per row
  std::vector<std::string> column_names;  // value columns only; may be empty

  std::size_t length() const { return n_vars == 0 ? 0 : values.size() / n_vars; }
  double at(std::size_t t, std::size_t m) const { return values[t * n_vars + m]; }
  double& at(std::size_t t, std::size_t m) { return values[t * n_vars + m]; }

  /// Rows [begin, end) as a new series.
  MultivariateSeries slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length()) {
      throw IndexError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for length " +
                       std::to_string(length()));
    }
    MultivariateSeries out;
    out.n_vars = n_vars;
    out.column_names = column_names;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * n_vars),
                      values.begin() + static_cast<std::ptrdiff_t>(end * n_vars));
    if (!timestamps.empty()) {
      out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                            timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }

  /// Rows [length - rows, length).
  MultivariateSeries tail(std::size_t rows) const {
    if (rows > length()) {
      throw DataError("need at least " + std::to_string(rows) + " rows, series has " + std::to_string(length()));
    }
    return slice(length() - rows, length());
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    lines.push_back(std::move(line));
  }
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  return lines;
}

}  // namespace detail

/// Reads a comma-separated numeric table. With a header, a column whose name
/// equals `timestamp_column` is kept as opaque text; without a header, a
/// non-numeric first cell marks the first column as timestamps.
inline MultivariateSeries load_csv(const std::filesystem::path& path, bool has_header = true,
                                   std::optional<std::string> timestamp_column = "date") {
  const auto lines = detail::read_lines(path);
  std::size_t row0 = 0;
  std::optional<std::size_t> ts_col;
  std::vector<std::string> header;
  if (has_header) {
    if (lines.empty()) throw DataError("'" + path.string() + "' has no header row");
    for (auto cell : text::split(lines[0], ',')) header.emplace_back(text::trim(cell));
    if (timestamp_column) {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == *timestamp_column) ts_col = c;
      }
    }
    row0 = 1;
  } else if (timestamp_column && !lines.empty()) {
    const auto first = text::split(lines[0], ',');
    if (!text::parse_double(first[0])) ts_col = 0;
  }

  MultivariateSeries s;
  std::size_t width = has_header ? header.size() : 0;
  for (std::size_t r = row0; r < lines.size(); ++r) {
    const auto cells = text::split(lines[r], ',');
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw DataError("row " + std::to_string(r + 1) + ": expected " + std::to_string(width) + " columns, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (ts_col && c == *ts_col) {
        s.timestamps.emplace_back(text::trim(cells[c]));
        continue;
      }
      const auto v = text::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw DataError("row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) +
                        ": cannot parse '" + std::string(cells[c]) + "' as a finite number");
      }
      s.values.push_back(*v);
    }
  }
  s.n_vars = width - (ts_col ? 1 : 0);
  if (s.n_vars == 0 || s.values.empty()) throw DataError("'" + path.string() + "' has no numeric data");
  if (has_header) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (!ts_col || c != *ts_col) s.column_names.push_back(header[c]);
    }
  }
  return s;
}

/// Writes with a header row; values use the shortest round-trip representation.
inline void write_csv(const std::filesystem::path& path, const MultivariateSeries& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const bool with_ts = !s.timestamps.empty();
  std::string line = with_ts ? "date" : "";
  for (std::size_t m = 0; m < s.n_vars; ++m) {
    if (!line.empty() || m > 0) line += ',';
    line += m < s.column_names.size() ? s.column_names[m] : "v" + std::to_string(m);
  }
  out << line << '\n';
  for (std::size_t t = 0; t < s.length(); ++t) {
    line = with_ts ? s.timestamps[t] : "";
    for (std::size_t m = 0; m < s.n_vars; ++m) {
      if (with_ts || m > 0) line += ',';
      line += text::format_double(s.at(t, m));
    }
    out << line << '\n';
  }
}

/// One labeled classification window: rows [start, start + seq_len).
struct WindowLabel {
  std::size_t start = 0;
  int label = 0;
};

/// Two-column `window_start,label` file; a header row is skipped if present.
inline std::vector<WindowLabel> load_labels(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  std::vector<WindowLabel> out;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto cells = text::split(lines[r], ',');
    if (cells.size() != 2) {
      throw DataError("label row " + std::to_string(r + 1) + ": expected 2 columns, got " +
                      std::to_string(cells.size()));
    }
    const auto start = text::parse_uint(cells[0]);
    const auto label = text::parse_uint(cells[1]);
    if (!start || !label) {
      if (r == 0) continue;
      throw DataError("label row " + std::to_string(r + 1) + ": cannot parse '" + lines[r] + "'");
    }
    out.push_back({static_cast<std::size_t>(*start), static_cast<int>(*label)});
  }
  if (out.empty()) throw DataError("'" + path.string() + "' has no labels");
  return out;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<WindowLabel>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "window_start,label\n";
  for (const auto& l : labels) out << l.start << ',' << l.label << '\n';
}

/// Per-timestep 0/1 ground truth, one value per line; a header row is skipped.
inline std::vector<std::uint8_t> load_point_labels(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  std::vector<std::uint8_t> out;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto cells = text::split(lines[r], ',');
    const auto v = text::parse_double(cells.back());
    if (!v) {
      if (r == 0) continue;
      throw DataError("label row " + std::to_string(r + 1) + ": cannot parse '" + lines[r] + "'");
    }
    out.push_back(*v != 0.0 ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits and windows

struct SeriesSplits {
  MultivariateSeries train, val, test;
  std::size_t val_offset = 0;
  std::size_t test_offset = 0;
};

/// Chronological train/val/test split. Validation and test take
/// floor(ratio * length) rows; the remainder goes to train.
inline SeriesSplits split_series(const MultivariateSeries& s, std::array<double, 3> ratios) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ParameterError("split ratios must all be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ParameterError("split ratios must sum to 1");
  }
  const std::size_t n = s.length();
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n)));
  const std::size_t n_train = n - n_val - n_test;
  SeriesSplits out;
  out.val_offset = n_train;
  out.test_offset = n_train + n_val;
  out.train = s.slice(0, n_train);
  out.val = s.slice(n_train, n_train + n_val);
  out.test = s.slice(n_train + n_val, n);
  return out;
}

struct Sample {
  std::size_t start = 0;        // first input row within the source series
  std::vector<double> input;    // [seq_len x n_vars]
  std::vector<double> target;   // [pred_len x n_vars], the input itself, or empty
  int label = -1;
};

struct WindowedDataset {
  Task task = Task::kLongTermForecast;
  std::size_t seq_len = 0;
  std::size_t target_len = 0;  // pred_len, seq_len (reconstruction) or 0
  std::size_t n_vars = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

namespace detail {

inline std::vector<double> rows_of(const MultivariateSeries& s, std::size_t begin, std::size_t count) {
  return {s.values.begin() + static_cast<std::ptrdiff_t>(begin * s.n_vars),
          s.values.begin() + static_cast<std::ptrdiff_t>((begin + count) * s.n_vars)};
}

}  // namespace detail

/// Forecasting: every (input, horizon) pair at unit step. Anomaly detection:
/// non-overlapping windows reconstructing themselves. Classification: one
/// window per label entry.
inline WindowedDataset make_windows(const MultivariateSeries& s, std::size_t seq_len, std::size_t pred_len, Task task,
                                    const std::vector<WindowLabel>& labels = {}) {
  if (seq_len == 0) throw ParameterError("seq_len must be positive");
  WindowedDataset ds;
  ds.task = task;
  ds.seq_len = seq_len;
  ds.n_vars = s.n_vars;
  const std::size_t n = s.length();
  switch (task) {
    case Task::kLongTermForecast:
    case Task::kShortTermForecast: {
      if (pred_len == 0) throw ParameterError("pred_len must be positive for forecasting");
      if (n < seq_len + pred_len) {
        throw DataError("series of length " + std::to_string(n) + " is shorter than seq_len + pred_len = " +
                        std::to_string(seq_len + pred_len));
      }
      ds.target_len = pred_len;
      for (std::size_t start = 0; start + seq_len + pred_len <= n; ++start) {
        ds.samples.push_back({start, detail::rows_of(s, start, seq_len), detail::rows_of(s, start + seq_len, pred_len)});
      }
      break;
    }
    case Task::kAnomalyDetection: {
      if (n < seq_len) {
        throw DataError("series of length " + std::to_string(n) + " is shorter than seq_len " +
                        std::to_string(seq_len));
      }
      ds.target_len = seq_len;
      for (std::size_t start = 0; start + seq_len <= n; start += seq_len) {
        auto rows = detail::rows_of(s, start, seq_len);
        ds.samples.push_back({start, rows, rows});
      }
      break;
    }
    case Task::kClassification: {
      if (labels.empty()) throw DataError("classification windows need labels");
      for (const auto& l : labels) {
        if (l.start + seq_len > n) {
          throw DataError("labeled window at " + std::to_string(l.start) + " runs past the series end " +
                          std::to_string(n));
        }
        ds.samples.push_back({l.start, detail::rows_of(s, l.start, seq_len), {}, l.label});
      }
      break;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic series

struct SineComponent {
  double amplitude = 1.0;
  double frequency = 0.05;  // cycles per step
  double phase = 0.0;
};

struct SineMixtureSpec {
  std::size_t length = 1000;
  std::size_t n_vars = 1;
  std::size_t components = 3;
  double noise_std = 0.0;
  double min_period = 8.0;
  double max_period = 48.0;
};

/// Per variate: sum_j a_j sin(2 pi f_j t + phi_j) + noise_std * N(0, 1).
inline MultivariateSeries sine_mixture(const SineMixtureSpec& spec, Rng& rng,
                                       std::vector<std::vector<SineComponent>>* components_out = nullptr) {
  MultivariateSeries s;
  s.n_vars = spec.n_vars;
  s.values.assign(spec.length * spec.n_vars, 0.0);
  std::vector<std::vector<SineComponent>> comps(spec.n_vars);
  for (auto& per_var : comps) {
    for (std::size_t j = 0; j < spec.components; ++j) {
      SineComponent c;
      c.amplitude = rng.uniform(0.5, 1.5);
      c.frequency = 1.0 / rng.uniform(spec.min_period, spec.max_period);
      c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      per_var.push_back(c);
    }
  }
  for (std::size_t t = 0; t < spec.length; ++t) {
    for (std::size_t m = 0; m < spec.n_vars; ++m) {
      double v = 0.0;
      for (const auto& c : comps[m]) {
        v += c.amplitude * std::sin(2.0 * std::numbers::pi * c.frequency * static_cast<double>(t) + c.phase);
      }
      if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
      s.at(t, m) = v;
    }
  }
  if (components_out) *components_out = std::move(comps);
  return s;
}

inline MultivariateSeries gaussian_noise(std::size_t length, std::size_t n_vars, double stdev, Rng& rng) {
  MultivariateSeries s;
  s.n_vars = n_vars;
  s.values.resize(length * n_vars);
  for (auto& v : s.values) v = stdev * rng.normal();
  return s;
}

struct SpikeSpec {
  double rate = 0.01;          // fraction of timesteps spiked
  double magnitude_sigmas = 6.0;  // spike size in per-variate standard deviations
};

struct LabeledSeries {
  MultivariateSeries series;
  std::vector<std::uint8_t> labels;  // one per timestep
};

/// Adds spikes at round(rate * length) distinct seeded positions. Each spike
/// hits every variate with a random sign and magnitude_sigmas times that
/// variate's standard deviation.
inline LabeledSeries add_spikes(MultivariateSeries s, const SpikeSpec& spec, Rng& rng) {
  const std::size_t n = s.length();
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ParameterError("spike rate must be in [0, 1)");
  if (!(spec.magnitude_sigmas >= 5.0)) throw ParameterError("spike magnitude must be at least 5 sigma");
  std::vector<double> sd(s.n_vars, 0.0);
  for (std::size_t m = 0; m < s.n_vars; ++m) {
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += s.at(t, m);
    mean /= static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) sd[m] += (s.at(t, m) - mean) * (s.at(t, m) - mean);
    sd[m] = std::sqrt(sd[m] / static_cast<double>(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t t = 0; t < n; ++t) order[t] = t;
  rng.shuffle(order);
  const auto count = static_cast<std::size_t>(std::llround(spec.rate * static_cast<double>(n)));
  LabeledSeries out;
  out.labels.assign(n, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = order[i];
    out.labels[t] = 1;
    for (std::size_t m = 0; m < s.n_vars; ++m) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      s.at(t, m) += sign * spec.magnitude_sigmas * sd[m];
    }
  }
  out.series = std::move(s);
  return out;
}

struct TwoClassSpec {
  std::size_t windows = 100;
  std::size_t seq_len = 64;
  std::size_t n_vars = 1;
  double noise_std = 0.1;  // observation noise on the sine class
};

struct ClassificationSet {
  MultivariateSeries series;  // windows laid end to end
  std::vector<WindowLabel> labels;
};

/// Class 1 windows are sine mixtures, class 0 windows are Gaussian noise with
/// the same per-window variance. Classes alternate in a seeded order.
inline ClassificationSet two_class_windows(const TwoClassSpec& spec, Rng& rng) {
  ClassificationSet out;
  out.series.n_vars = spec.n_vars;
  std::vector<int> classes(spec.windows);
  for (std::size_t i = 0; i < spec.windows; ++i) classes[i] = static_cast<int>(i % 2);
  rng.shuffle(classes);
  for (std::size_t w = 0; w < spec.windows; ++w) {
    SineMixtureSpec sine{spec.seq_len, spec.n_vars, 2, spec.noise_std};
    MultivariateSeries window = sine_mixture(sine, rng);
    if (classes[w] == 0) {
      for (std::size_t m = 0; m < spec.n_vars; ++m) {
        double mean = 0.0, var = 0.0;
        for (std::size_t t = 0; t < spec.seq_len; ++t) mean += window.at(t, m);
        mean /= static_cast<double>(spec.seq_len);
        for (std::size_t t = 0; t < spec.seq_len; ++t) var += (window.at(t, m) - mean) * (window.at(t, m) - mean);
        const double sd = std::sqrt(var / static_cast<double>(spec.seq_len));
        for (std::size_t t = 0; t < spec.seq_len; ++t) window.at(t, m) = mean + sd * rng.normal();
      }
    }
    out.labels.push_back({w * spec.seq_len, classes[w]});
    out.series.values.insert(out.series.values.end(), window.values.begin(), window.values.end());
  }
  return out;
}

}  // namespace qcaa
