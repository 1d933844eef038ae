#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qcaa/checkpoint.hpp"
#include "qcaa/data.hpp"
#include "qcaa/errors.hpp"
#include "qcaa/metrics.hpp"
#include "qcaa/model.hpp"
#include "qcaa/patching.hpp"
#include "qcaa/text.hpp"
#include "qcaa/training.hpp"

namespace qcaa::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kDataError = 2,
  kConfigError = 3,
  kCheckpointError = 4,
  kTrainingError = 5,
};

struct RunConfig {
  std::string command;
  ModelConfig model;
  TrainConfig train;
  std::string data;
  std::string labels;
  std::string reference;
  std::string checkpoint;
  std::string out_dir = ".";
  bool point_adjust = false;
  bool num_classes_set = false;
  // synth only
  std::string kind = "sine";
  std::size_t length = 2000;
  double spike_rate = 0.01;
  double noise_std = 0.1;
};

/// Per-task hyperparameter defaults.
inline void apply_task_defaults(RunConfig& rc, Task task) {
  ModelConfig& m = rc.model;
  TrainConfig& t = rc.train;
  m.task = task;
  switch (task) {
    case Task::kLongTermForecast:
      m.d_model = 512, m.k_scales = 4, m.seq_len = 96, m.pred_len = 96;
      t.batch_size = 32, t.learning_rate = 1e-3, t.patience = 3, t.max_epochs = 10;
      break;
    case Task::kShortTermForecast:
      m.d_model = 128, m.k_scales = 4, m.seq_len = 96, m.pred_len = 48;
      t.batch_size = 16, t.learning_rate = 1e-3, t.patience = 3, t.max_epochs = 10;
      break;
    case Task::kClassification:
      m.d_model = 128, m.k_scales = 3, m.seq_len = 64;
      t.batch_size = 16, t.learning_rate = 1e-3, t.patience = 10, t.max_epochs = 50;
      break;
    case Task::kAnomalyDetection:
      m.d_model = 128, m.k_scales = 3, m.seq_len = 100;
      t.batch_size = 128, t.learning_rate = 1e-4, t.patience = 3, t.max_epochs = 10;
      break;
  }
  m.channel_independence = false;
  t.anomaly_ratio = 1.0;
}

/// Sets one run field from its text form. Keys are the config-file names;
/// flag spellings are accepted as aliases.
inline void set_field(RunConfig& rc, std::string key, const std::string& value) {
  std::replace(key.begin(), key.end(), '-', '_');
  static const std::map<std::string, std::string> aliases = {
      {"qubits", "n_qubits"},         {"lambda", "entanglement_factor"}, {"lr", "learning_rate"},
      {"epochs", "max_epochs"},       {"dropout_p", "dropout"},
  };
  if (const auto it = aliases.find(key); it != aliases.end()) key = it->second;

  auto as_uint = [&]() -> std::size_t {
    const auto v = text::parse_uint(value);
    if (!v) throw ConfigError("'" + key + "' needs a non-negative integer, got '" + value + "'");
    return static_cast<std::size_t>(*v);
  };
  auto as_double = [&]() {
    const auto v = text::parse_double(value);
    if (!v) throw ConfigError("'" + key + "' needs a number, got '" + value + "'");
    return *v;
  };
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("'" + key + "' needs true/false, got '" + value + "'");
  };

  if (key == "num_classes") rc.num_classes_set = true;
  if (key == "channel_independence") {
    rc.model.channel_independence = as_bool();
    return;
  }
  if (rc.model.set(key, value)) return;
  if (key == "learning_rate") rc.train.learning_rate = as_double();
  else if (key == "batch_size") rc.train.batch_size = as_uint();
  else if (key == "max_epochs") rc.train.max_epochs = as_uint();
  else if (key == "patience") rc.train.patience = as_uint();
  else if (key == "seed") rc.train.seed = as_uint();
  else if (key == "anomaly_ratio") rc.train.anomaly_ratio = as_double();
  else if (key == "grad_clip") rc.train.grad_clip = as_double();
  else if (key == "max_steps") rc.train.max_steps = as_uint();
  else if (key == "data") rc.data = value;
  else if (key == "labels") rc.labels = value;
  else if (key == "reference") rc.reference = value;
  else if (key == "checkpoint") rc.checkpoint = value;
  else if (key == "out_dir") rc.out_dir = value;
  else if (key == "point_adjust") rc.point_adjust = as_bool();
  else if (key == "kind") rc.kind = value;
  else if (key == "length") rc.length = as_uint();
  else if (key == "spike_rate") rc.spike_rate = as_double();
  else if (key == "noise_std") rc.noise_std = as_double();
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat JSON object of field names to scalars.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "' must be a flat JSON object");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) out.emplace_back(k, v.get<std::string>());
    else if (v.is_number_float()) out.emplace_back(k, text::format_double(v.get<double>()));
    else if (v.is_number() || v.is_boolean()) out.emplace_back(k, v.dump());
    else throw ConfigError("config key '" + k + "' must hold a scalar");
  }
  return out;
}

/// Task defaults, then the config file, then explicit flags.
inline RunConfig resolve(const std::string& command, const std::vector<std::pair<std::string, std::string>>& file,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig rc;
  rc.command = command;
  Task task = Task::kLongTermForecast;
  for (const auto* source : {&file, &flags}) {
    for (const auto& [k, v] : *source) {
      if (k == "task") task = parse_task(v);
    }
  }
  apply_task_defaults(rc, task);
  for (const auto& [k, v] : file) set_field(rc, k, v);
  for (const auto& [k, v] : flags) set_field(rc, k, v);
  return rc;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline std::filesystem::path prepare_out_dir(const RunConfig& rc) {
  std::filesystem::path dir(rc.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + rc.out_dir + "': " + ec.message());
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << body;
}

inline MultivariateSeries require_data(const RunConfig& rc) {
  if (rc.data.empty()) throw DataError("no --data file given");
  if (!std::filesystem::exists(rc.data)) throw DataError("data file '" + rc.data + "' does not exist");
  return load_csv(rc.data);
}

/// Splits labeled windows by position: first 70% train, next 10% val, rest test.
inline std::array<std::vector<WindowLabel>, 3> split_labels(const std::vector<WindowLabel>& labels) {
  const std::size_t n = labels.size();
  const std::size_t n_val = n / 10;
  const std::size_t n_test = n / 5;
  const std::size_t n_train = n - n_val - n_test;
  std::array<std::vector<WindowLabel>, 3> out;
  for (std::size_t i = 0; i < n; ++i) out[i < n_train ? 0 : (i < n_train + n_val ? 1 : 2)].push_back(labels[i]);
  return out;
}

inline std::vector<int> predict_labels(const ModelConfig& cfg, const ModelParams& params, const WindowedDataset& ds,
                                       std::size_t batch_size) {
  std::vector<int> out;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(ds.size(), begin + batch_size); ++i) idx.push_back(i);
    const auto labels = classify(predict(cfg, params, make_batch(ds, idx).input));
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

inline std::vector<int> labels_of(const WindowedDataset& ds) {
  std::vector<int> out;
  for (const auto& s : ds.samples) out.push_back(s.label);
  return out;
}

}  // namespace detail

/// Forecast MSE/MAE over every test window in original units.
inline MetricReport evaluate_forecast(const ModelConfig& cfg, const ModelParams& params, const WindowedDataset& ds,
                                      std::size_t batch_size) {
  std::vector<double> pred, target;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(ds.size(), begin + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(ds, idx);
    const auto p = predict(cfg, params, b.input).values();
    pred.insert(pred.end(), p.begin(), p.end());
    const auto t = b.target.values();
    target.insert(target.end(), t.begin(), t.end());
  }
  MetricReport r = regression_metrics(pred, target);
  r.counts["samples"] = ds.size();
  r.counts["horizon"] = cfg.pred_len;
  return r;
}

inline int cmd_train(const RunConfig& rc_in, std::ostream& out) {
  RunConfig rc = rc_in;
  const MultivariateSeries series = detail::require_data(rc);
  ModelConfig& cfg = rc.model;
  cfg.n_vars = series.n_vars;
  const TrainConfig& tcfg = rc.train;
  tcfg.validate();

  WindowedDataset train_set, val_set, test_set;
  SeriesSplits splits;
  std::vector<std::uint8_t> point_truth;
  if (cfg.task == Task::kClassification) {
    if (rc.labels.empty()) throw DataError("classification training needs --labels");
    const auto labels = load_labels(rc.labels);
    int max_label = 0;
    for (const auto& l : labels) max_label = std::max(max_label, l.label);
    if (!rc.num_classes_set) cfg.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    if (static_cast<std::size_t>(max_label) >= cfg.num_classes) {
      throw DataError("label " + std::to_string(max_label) + " exceeds num_classes " + std::to_string(cfg.num_classes));
    }
    const auto parts = detail::split_labels(labels);
    train_set = make_windows(series, cfg.seq_len, 0, cfg.task, parts[0]);
    val_set = make_windows(series, cfg.seq_len, 0, cfg.task, parts[1]);
    test_set = make_windows(series, cfg.seq_len, 0, cfg.task, parts[2]);
  } else {
    splits = split_series(series, {0.7, 0.1, 0.2});
    train_set = make_windows(splits.train, cfg.seq_len, cfg.pred_len, cfg.task);
    val_set = make_windows(splits.val, cfg.seq_len, cfg.pred_len, cfg.task);
    if (cfg.task != Task::kAnomalyDetection) test_set = make_windows(splits.test, cfg.seq_len, cfg.pred_len, cfg.task);
    if (cfg.task == Task::kAnomalyDetection && !rc.labels.empty()) {
      point_truth = load_point_labels(rc.labels);
      if (point_truth.size() != series.length()) {
        throw DataError("label file has " + std::to_string(point_truth.size()) + " rows, data has " +
                        std::to_string(series.length()));
      }
    }
  }
  cfg.validate();

  const auto dir = detail::prepare_out_dir(rc);
  std::ofstream history(dir / "history.log", std::ios::trunc);
  if (!history) throw DataError("cannot write history.log");
  const ModelParams init = init_params(cfg, tcfg.seed);
  const TrainResult result = train(cfg, init, train_set, val_set, tcfg, [&](const EpochRecord& r) {
    const std::string line = format_epoch(r);
    out << line << '\n';
    history << line << '\n';
  });
  save_checkpoint(dir / "checkpoint.bin", cfg, result.params);

  MetricReport report;
  switch (cfg.task) {
    case Task::kLongTermForecast:
    case Task::kShortTermForecast:
      report = evaluate_forecast(cfg, result.params, test_set, tcfg.batch_size);
      break;
    case Task::kClassification:
      report = classification_metrics(detail::predict_labels(cfg, result.params, test_set, tcfg.batch_size),
                                      detail::labels_of(test_set));
      break;
    case Task::kAnomalyDetection: {
      const auto train_scores = score_series(cfg, result.params, splits.train);
      const auto test_scores = score_series(cfg, result.params, splits.test);
      const auto flags = detect_anomalies(train_scores, test_scores, tcfg.anomaly_ratio);
      if (!point_truth.empty()) {
        const std::vector<std::uint8_t> truth(point_truth.begin() + static_cast<std::ptrdiff_t>(splits.test_offset),
                                              point_truth.end());
        report = anomaly_metrics(flags, truth, rc.point_adjust);
      }
      report.values["threshold"] = anomaly_threshold(train_scores, test_scores, tcfg.anomaly_ratio);
      report.counts["flagged"] = static_cast<std::uint64_t>(std::count(flags.begin(), flags.end(), 1));
      report.counts["test_points"] = flags.size();
      break;
    }
  }
  report.task = to_string(cfg.task);
  report.counts["best_epoch"] = result.history.best_epoch;
  report.counts["stopped_epoch"] = result.history.stopped_epoch;
  report.counts["steps"] = result.history.steps;
  detail::write_text(dir / "metrics.json", report.dump());
  return kOk;
}

inline Checkpoint require_checkpoint(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw CheckpointError("no --checkpoint given");
  return load_checkpoint(rc.checkpoint);
}

inline int cmd_forecast(const RunConfig& rc, std::ostream&) {
  const Checkpoint ck = require_checkpoint(rc);
  const ModelConfig& cfg = ck.config;
  if (!is_forecast(cfg.task)) throw ConfigError("checkpoint is not a forecasting model");
  const MultivariateSeries series = detail::require_data(rc);
  if (series.n_vars != cfg.n_vars) {
    throw DataError("input has " + std::to_string(series.n_vars) + " variates, model expects " +
                    std::to_string(cfg.n_vars));
  }
  const MultivariateSeries window = series.tail(cfg.seq_len);
  const Tensor x({1, cfg.seq_len, cfg.n_vars}, window.values);
  MultivariateSeries forecast;
  forecast.n_vars = cfg.n_vars;
  forecast.column_names = series.column_names;
  forecast.values = predict(cfg, ck.params, x).values();
  const auto dir = detail::prepare_out_dir(rc);
  write_csv(dir / "forecast.csv", forecast);
  return kOk;
}

inline int cmd_detect(const RunConfig& rc, std::ostream&) {
  const Checkpoint ck = require_checkpoint(rc);
  const ModelConfig& cfg = ck.config;
  if (cfg.task != Task::kAnomalyDetection) throw ConfigError("checkpoint is not an anomaly detection model");
  const MultivariateSeries series = detail::require_data(rc);
  const auto test_scores = score_series(cfg, ck.params, series);
  std::vector<double> ref_scores = test_scores;
  if (!rc.reference.empty()) {
    if (!std::filesystem::exists(rc.reference)) throw DataError("reference file '" + rc.reference + "' does not exist");
    ref_scores = score_series(cfg, ck.params, load_csv(rc.reference));
  }
  const double ratio = rc.train.anomaly_ratio;
  const double threshold = anomaly_threshold(ref_scores, test_scores, ratio);
  const auto flags = detect_anomalies(ref_scores, test_scores, ratio);

  const auto dir = detail::prepare_out_dir(rc);
  std::string body = "index,score,flag\n";
  for (std::size_t t = 0; t < flags.size(); ++t) {
    body += std::to_string(t) + "," + text::format_double(test_scores[t]) + "," + std::to_string(flags[t]) + "\n";
  }
  detail::write_text(dir / "anomalies.csv", body);
  if (!rc.labels.empty()) {
    const auto truth = load_point_labels(rc.labels);
    if (truth.size() != flags.size()) {
      throw DataError("label file has " + std::to_string(truth.size()) + " rows, data has " +
                      std::to_string(flags.size()));
    }
    MetricReport report = anomaly_metrics(flags, truth, rc.point_adjust);
    report.task = to_string(cfg.task);
    report.values["threshold"] = threshold;
    detail::write_text(dir / "metrics.json", report.dump());
  }
  return kOk;
}

inline int cmd_classify(const RunConfig& rc, std::ostream&) {
  const Checkpoint ck = require_checkpoint(rc);
  const ModelConfig& cfg = ck.config;
  if (cfg.task != Task::kClassification) throw ConfigError("checkpoint is not a classification model");
  const MultivariateSeries series = detail::require_data(rc);
  std::vector<WindowLabel> windows;
  const bool labeled = !rc.labels.empty();
  if (labeled) {
    windows = load_labels(rc.labels);
  } else {
    for (std::size_t start = 0; start + cfg.seq_len <= series.length(); start += cfg.seq_len) windows.push_back({start, 0});
  }
  const WindowedDataset ds = make_windows(series, cfg.seq_len, 0, Task::kClassification, windows);
  const auto pred = detail::predict_labels(cfg, ck.params, ds, 64);
  std::vector<WindowLabel> out;
  for (std::size_t i = 0; i < pred.size(); ++i) out.push_back({windows[i].start, pred[i]});
  const auto dir = detail::prepare_out_dir(rc);
  write_labels(dir / "labels.csv", out);
  if (labeled) {
    MetricReport report = classification_metrics(pred, detail::labels_of(ds));
    report.task = to_string(cfg.task);
    detail::write_text(dir / "metrics.json", report.dump());
  }
  return kOk;
}

inline int cmd_eval_patch(std::size_t seq_len, std::optional<std::size_t> num_patches, std::ostream& out) {
  out << describe(evaluate_patch_params(seq_len, num_patches)) << '\n';
  return kOk;
}

/// Writes data.csv (and labels.csv for labeled kinds) for quick experiments.
inline int cmd_synth(const RunConfig& rc, std::ostream&) {
  Rng rng(rc.train.seed);
  const auto dir = detail::prepare_out_dir(rc);
  const std::size_t vars = rc.model.n_vars;
  if (rc.kind == "sine") {
    write_csv(dir / "data.csv", sine_mixture({rc.length, vars, 3, rc.noise_std}, rng));
  } else if (rc.kind == "noise") {
    write_csv(dir / "data.csv", gaussian_noise(rc.length, vars, 1.0, rng));
  } else if (rc.kind == "spiked") {
    const auto s = add_spikes(sine_mixture({rc.length, vars, 3, rc.noise_std}, rng), {rc.spike_rate, 6.0}, rng);
    write_csv(dir / "data.csv", s.series);
    std::string body = "index,label\n";
    for (std::size_t t = 0; t < s.labels.size(); ++t) body += std::to_string(t) + "," + std::to_string(s.labels[t]) + "\n";
    detail::write_text(dir / "labels.csv", body);
  } else if (rc.kind == "two-class") {
    const std::size_t windows = std::max<std::size_t>(2, rc.length / rc.model.seq_len);
    const auto set = two_class_windows({windows, rc.model.seq_len, vars, rc.noise_std}, rng);
    write_csv(dir / "data.csv", set.series);
    write_labels(dir / "labels.csv", set.labels);
  } else {
    throw ConfigError("unknown synth kind '" + rc.kind + "' (sine, noise, spiked, two-class)");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int report_error(std::ostream& err, const char* code, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  err << "error=" << code << " message=" << flat << '\n';
  if (std::string_view(code) == "data_error") return kDataError;
  if (std::string_view(code) == "config_error") return kConfigError;
  if (std::string_view(code) == "checkpoint_error") return kCheckpointError;
  if (std::string_view(code) == "training_error") return kTrainingError;
  if (std::string_view(code) == "parameter_error" || std::string_view(code) == "dimension_error") return kConfigError;
  return kInternal;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Patch-based time series transformer with hybrid quantum-classical attention"};
  app.require_subcommand(1);

  // Flag values are kept as text and applied after the config file so the
  // precedence is defaults < file < flags.
  std::map<std::string, std::string> flag_values;
  std::string config_path;
  std::size_t patch_seq_len = 0;
  std::optional<std::size_t> patch_count;

  auto add_run_options = [&](CLI::App* sub, const std::vector<std::string>& names) {
    for (const auto& name : names) {
      sub->add_option("--" + name, flag_values[name]);
    }
    sub->add_option("--config", config_path, "flat JSON config file");
  };
  const std::vector<std::string> model_flags = {
      "task", "data", "labels", "seq-len", "pred-len", "d-model", "n-heads", "e-layers", "num-patches", "qubits",
      "lambda", "d-ff", "dropout", "lr", "batch-size", "epochs", "patience", "anomaly-ratio", "num-classes", "seed",
      "out-dir", "max-steps"};

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and evaluate it on the test split");
  add_run_options(train_cmd, model_flags);
  train_cmd->add_flag("--point-adjust", "apply point adjustment to anomaly metrics");

  CLI::App* forecast_cmd = app.add_subcommand("forecast", "forecast from the trailing seq_len rows");
  add_run_options(forecast_cmd, {"checkpoint", "data", "out-dir"});

  CLI::App* detect_cmd = app.add_subcommand("detect", "score and flag anomalies per timestep");
  add_run_options(detect_cmd, {"checkpoint", "data", "labels", "reference", "anomaly-ratio", "out-dir"});
  detect_cmd->add_flag("--point-adjust", "apply point adjustment to anomaly metrics");

  CLI::App* classify_cmd = app.add_subcommand("classify", "predict one label per window");
  add_run_options(classify_cmd, {"checkpoint", "data", "labels", "out-dir"});

  CLI::App* patch_cmd = app.add_subcommand("eval-patch", "print the patch layout for a lookback");
  patch_cmd->add_option("--seq-len", patch_seq_len)->required();
  patch_cmd->add_option("--num-patches", patch_count);

  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  add_run_options(synth_cmd, {"kind", "length", "n-vars", "seq-len", "noise-std", "spike-rate", "seed", "out-dir"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, "config_error", e.what());
  }

  try {
    if (patch_cmd->parsed()) return cmd_eval_patch(patch_seq_len, patch_count, out);

    CLI::App* active = app.get_subcommands().front();
    std::vector<std::pair<std::string, std::string>> flags;
    for (const auto& [name, value] : flag_values) {
      const auto* opt = active->get_option_no_throw("--" + name);
      if (opt != nullptr && opt->count() > 0) flags.emplace_back(name, value);
    }
    if (active->get_option_no_throw("--point-adjust") && active->count("--point-adjust") > 0) {
      flags.emplace_back("point_adjust", "true");
    }
    const auto file = config_path.empty() ? std::vector<std::pair<std::string, std::string>>{}
                                          : read_config_file(config_path);
    const RunConfig rc = resolve(active->get_name(), file, flags);

    if (active == train_cmd) return cmd_train(rc, out);
    if (active == forecast_cmd) return cmd_forecast(rc, out);
    if (active == detect_cmd) return cmd_detect(rc, out);
    if (active == classify_cmd) return cmd_classify(rc, out);
    if (active == synth_cmd) return cmd_synth(rc, out);
    return report_error(err, "config_error", "unknown command");
  } catch (const DataError& e) {
    return report_error(err, "data_error", e.what());
  } catch (const ConfigError& e) {
    return report_error(err, "config_error", e.what());
  } catch (const CheckpointError& e) {
    return report_error(err, "checkpoint_error", e.what());
  } catch (const TrainingError& e) {
    return report_error(err, "training_error", e.what());
  } catch (const Error& e) {
    return report_error(err, e.code().c_str(), e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal_error", e.what());
  }
}

}  // namespace qcaa::cli
