#pragma once

// Command-line front end. Settings are layered: built-in defaults, then an
// optional key-value config file, then explicit flags. Every
// artifact-producing command writes manifest.json next to its outputs; the
// manifest's resolved settings replay the run with `--manifest <path>`.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration or usage error,
// 3 data or model-file error, 4 numerical abort.

#include <chrono>
#include <ctime>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgefall/ablation.hpp"
#include "edgefall/config.hpp"
#include "edgefall/data.hpp"
#include "edgefall/distill.hpp"
#include "edgefall/edgefall.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/evaluate.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/power.hpp"
#include "edgefall/trainer.hpp"

namespace edgefall::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

// A configuration error that should be followed by the command's usage text.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  return kExitFailure;
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"ingest",  "synth",   "train",
                                                 "distill", "ablate",  "compare",
                                                 "select",  "bench",   "infer"};
  return names;
}

// Every setting with its built-in default. An empty stride means half the
// window length.
inline KeyValueConfig default_settings() {
  KeyValueConfig c;
  const SensorPowerSpec power;
  const ComputePowerSpec compute;
  const TrainConfig train;
  const DistillConfig distill;
  const std::map<std::string, std::string> values = {
      {"seed", "42"},
      {"out", "edgefall_out"},
      {"threads", "0"},
      {"data.path", ""},
      {"synth", "false"},
      {"synth.n_per_class", "200"},
      {"synth.noise_std", io::format_double(kHardNoiseStd)},
      {"window_len", "20"},
      {"stride", ""},
      {"fall_codes", "101-135"},
      {"normalize", "true"},
      {"split.mode", "subject"},
      {"split.test_fraction", "0.25"},
      {"split.seed", "42"},
      {"split.holdout_subjects", ""},
      {"sensors", "ABG"},
      {"model.lstm_units", "512"},
      {"model.hidden_units", "128"},
      {"model.path", ""},
      {"teacher.path", ""},
      {"train.epochs", std::to_string(train.epochs)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.learning_rate", io::format_double(train.learning_rate)},
      {"train.beta1", io::format_double(train.beta1)},
      {"train.beta2", io::format_double(train.beta2)},
      {"train.adam_epsilon", io::format_double(train.adam_epsilon)},
      {"train.grad_clip_norm", io::format_double(train.grad_clip_norm)},
      {"train.shuffle", "true"},
      {"distill.temperature", io::format_double(distill.temperature)},
      {"distill.alpha", io::format_double(distill.alpha)},
      {"distill.width_factor", io::format_double(distill.width_factor)},
      {"subsets", "ABG,AG,BG,AB,A,G,B"},
      {"select.floor", "0.85"},
      {"select.candidates", ""},
      {"power.voltage", "3.3"},
      {"power.energy_per_mac", io::format_double(compute.energy_per_mac_j)},
      {"power.inference_rate_hz", io::format_double(compute.inference_rate_hz)},
      {"bench.window", "20"},
      {"bench.trials", "50"},
      {"infer.input", ""},
      {"infer.threshold", "0.5"},
  };
  for (const auto& [k, v] : values) c.set(k, v);
  for (auto k : kSensorOrder) {
    const auto i = static_cast<std::size_t>(k);
    const std::string name(sensor_name(k));
    c.set("power.current." + name, io::format_double(power.current_a[i]));
    c.set("power.duty." + name, io::format_double(power.duty_cycle[i]));
  }
  return c;
}

// Fills derived defaults so the manifest carries concrete values.
inline void materialize(KeyValueConfig& s) {
  if (s.get_string("stride").empty()) {
    s.set("stride", std::to_string(std::max<std::size_t>(1, s.get_count("window_len", 20) / 2)));
  }
}

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<SensorSet> parse_subsets(const KeyValueConfig& s) {
  const auto sets = parse_sensor_sets(s.get_string("subsets"));
  if (sets.empty()) throw ConfigError("no sensor subsets given");
  return sets;
}

inline TrainConfig train_config(const KeyValueConfig& s) {
  TrainConfig t;
  t.epochs = s.get_count("train.epochs", t.epochs);
  t.batch_size = s.get_count("train.batch_size", t.batch_size);
  t.learning_rate = s.get_double("train.learning_rate", t.learning_rate);
  t.beta1 = s.get_double("train.beta1", t.beta1);
  t.beta2 = s.get_double("train.beta2", t.beta2);
  t.adam_epsilon = s.get_double("train.adam_epsilon", t.adam_epsilon);
  t.grad_clip_norm = s.get_double("train.grad_clip_norm", t.grad_clip_norm);
  t.shuffle = s.get_bool("train.shuffle", t.shuffle);
  t.seed = s.get_u64("seed", t.seed);
  t.threads = s.get_count("threads", 0);
  t.validate();
  return t;
}

inline DistillConfig distill_config(const KeyValueConfig& s) {
  DistillConfig d;
  d.temperature = s.get_double("distill.temperature", d.temperature);
  d.alpha = s.get_double("distill.alpha", d.alpha);
  d.width_factor = s.get_double("distill.width_factor", d.width_factor);
  d.student_sensor_set = SensorSet::parse(s.get_string("sensors"));
  d.train = train_config(s);
  d.validate();
  return d;
}

inline ModelTopology width_topology(const KeyValueConfig& s, SensorSet sensors) {
  ModelTopology t{sensors.channel_count(), s.get_count("model.lstm_units", 512),
                  s.get_count("model.hidden_units", 128), 1};
  try {
    t.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return t;
}

inline SplitSpec split_spec(const KeyValueConfig& s) {
  SplitSpec spec;
  const auto mode = s.get_string("split.mode");
  if (mode == "subject") {
    spec.mode = SplitMode::SubjectHoldout;
  } else if (mode == "random") {
    spec.mode = SplitMode::Random;
  } else {
    throw ConfigError("split.mode must be subject or random, got \"" + mode + "\"");
  }
  spec.test_fraction = s.get_double("split.test_fraction", spec.test_fraction);
  spec.seed = s.get_u64("split.seed", spec.seed);
  const auto held = s.get_int_set("split.holdout_subjects");
  spec.holdout_subjects.assign(held.begin(), held.end());
  return spec;
}

struct Context {
  KeyValueConfig settings;
  std::filesystem::path out_dir;
  bool quiet = false;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
  std::vector<std::string> outputs;
  std::vector<std::string> inputs;

  void say(const std::string& text) const {
    if (!quiet) *out << text;
  }
  void warn(const std::string& text) const {
    if (!quiet) *err << "edgefall: warning: " << text << "\n";
  }

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(out_dir);
    io::write_file_atomic(out_dir / name, content);
    outputs.push_back(name);
  }

  void input(const std::string& key) {
    const auto v = settings.get_string(key);
    if (!v.empty()) inputs.push_back(v);
  }
};

// Full (unsplit, unnormalized) dataset from --synth, a CSV directory, or a
// dataset JSON file.
inline WindowedDataset load_full_dataset(Context& ctx) {
  const auto& s = ctx.settings;
  const std::size_t T = s.get_count("window_len", 20);
  if (s.get_bool("synth", false)) {
    const double noise = s.get_double("synth.noise_std", kHardNoiseStd);
    return synth_generate(s.get_count("synth.n_per_class", 200), T, SensorSet::all(),
                          s.get_u64("seed", 42), noise);
  }
  const auto path = s.get_string("data.path");
  if (path.empty()) throw UsageError("no dataset: pass --data <dir|dataset.json> or --synth");
  ctx.input("data.path");
  if (!std::filesystem::exists(path)) throw LoadError("dataset path not found: " + path);
  if (!std::filesystem::is_directory(path)) {
    auto ds = load_dataset(path);
    if (ds.window_len() != T) {
      throw ConfigError("dataset file has window length " + std::to_string(ds.window_len()) +
                        " but window_len is " + std::to_string(T));
    }
    return ds;
  }
  auto ingested = ingest_csv(path);
  for (const auto& w : ingested.warnings) ctx.warn(w);
  if (ingested.recordings.empty()) throw DataError("no wrist recordings under " + path);
  std::uint8_t bits = SensorSet::all().bits();
  for (const auto& r : ingested.recordings) bits &= r.available().bits();
  if (bits == 0) throw DataError("recordings share no sensor");
  auto res = window_and_label(ingested.recordings, SensorSet::from_bits(bits), T,
                              s.get_count("stride", T / 2), s.get_int_set("fall_codes"));
  if (res.skipped_short > 0) {
    ctx.warn(std::to_string(res.skipped_short) + " recordings shorter than the window were skipped");
  }
  if (res.dataset.empty()) throw DataError("no windows could be cut from " + path);
  return std::move(res.dataset);
}

struct Prepared {
  WindowedDataset train;
  WindowedDataset test;
};

// Split then normalize with training statistics, or with `fixed` when a
// model already carries its own.
inline Prepared prepare(Context& ctx, const std::optional<NormalizationStats>& fixed = std::nullopt,
                        std::optional<SensorSet> restrict_to = std::nullopt) {
  auto full = load_full_dataset(ctx);
  if (restrict_to) {
    if (!restrict_to->is_subset_of(full.sensor_set())) {
      throw ConfigError("data carries sensors " + full.sensor_set().name() + ", need " +
                        restrict_to->name());
    }
    full = full.slice(*restrict_to);
  }
  auto [train, test] = split(full, split_spec(ctx.settings));
  if (train.empty()) throw DataError("training split is empty");
  if (ctx.settings.get_bool("normalize", true)) {
    train = fixed ? normalize(train, fixed) : normalize(train);
    test = normalize(test, train.normalization());
  }
  return {std::move(train), std::move(test)};
}

inline LstmClassifier obtain_teacher(Context& ctx, const Prepared& data, std::string& note) {
  const auto path = ctx.settings.get_string("teacher.path");
  if (!path.empty()) {
    note = "loaded";
    return load_model(path);
  }
  note = "trained";
  const auto sensors = data.train.sensor_set();
  auto teacher = init_params(width_topology(ctx.settings, sensors), sensors,
                             ctx.settings.get_u64("seed", 42));
  teacher.normalization = data.train.normalization();
  ctx.say("training teacher " + teacher.topology.summary() + "\n");
  return train(teacher, data.train, data.test, train_config(ctx.settings)).first;
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_ingest(Context& ctx) {
  if (ctx.settings.get_string("data.path").empty()) throw UsageError("ingest needs --data <dir>");
  const auto ds = load_full_dataset(ctx);
  ctx.write("dataset.json", dataset_to_json(ds).dump() + "\n");
  ctx.say("windows " + std::to_string(ds.size()) + " (falls " + std::to_string(ds.count_label(1)) +
          "), sensors " + ds.sensor_set().name() + "\n");
}

inline void cmd_synth(Context& ctx) {
  ctx.settings.set("synth", "true");
  const auto ds = load_full_dataset(ctx);
  ctx.write("dataset.json", dataset_to_json(ds).dump() + "\n");
  ctx.say("windows " + std::to_string(ds.size()) + " (falls " + std::to_string(ds.count_label(1)) +
          ")\n");
}

inline void cmd_train(Context& ctx) {
  const auto sensors = SensorSet::parse(ctx.settings.get_string("sensors"));
  const auto data = prepare(ctx, std::nullopt, sensors);
  auto model = init_params(width_topology(ctx.settings, sensors), sensors, ctx.settings.get_u64("seed", 42));
  model.normalization = data.train.normalization();
  const auto [trained, log] = train(model, data.train, data.test, train_config(ctx.settings));
  ctx.write("model.json", model_to_json(trained).dump() + "\n");
  ctx.write("train_log.csv", log.to_csv(true));
  const double acc = data.test.empty() ? log.epochs[log.best_epoch - 1].train_acc
                                       : evaluate(trained, data.test).accuracy;
  ctx.say("model " + trained.topology.summary() + " sensors " + sensors.name() + ", best epoch " +
          std::to_string(log.best_epoch) + ", test accuracy " + percent(acc) + "\n");
}

inline void cmd_distill(Context& ctx) {
  if (ctx.settings.get_string("teacher.path").empty()) throw UsageError("distill needs --teacher <model.json>");
  ctx.input("teacher.path");
  const auto teacher = load_model(ctx.settings.get_string("teacher.path"));
  const auto cfg = distill_config(ctx.settings);
  const bool norm = ctx.settings.get_bool("normalize", true);
  const auto data = prepare(ctx, norm ? teacher.normalization : std::nullopt, teacher.sensor_set);
  const auto [student, log] = distill(teacher, data.train, data.test, cfg);
  ctx.write("student.json", model_to_json(student).dump() + "\n");
  ctx.write("train_log.csv", log.to_csv(true));
  const auto test_s = data.test.slice(cfg.student_sensor_set);
  ctx.say("student " + student.topology.summary() + " sensors " + student.sensor_set.name() +
          (test_s.empty() ? std::string() : ", test accuracy " + percent(evaluate(student, test_s).accuracy)) +
          "\n");
}

inline void cmd_ablate(Context& ctx) {
  const auto data = prepare(ctx);
  const auto subsets = parse_subsets(ctx.settings);
  const auto table = run_ablation(data.train, data.test, width_topology(ctx.settings, SensorSet::all()),
                                  train_config(ctx.settings), ctx.settings.get_u64("seed", 42), subsets);
  ctx.write("ablation.csv", table.to_csv());
  ctx.say(table.to_text());
}

inline void cmd_compare(Context& ctx) {
  std::optional<NormalizationStats> fixed;
  std::optional<SensorSet> sensors;
  std::optional<LstmClassifier> loaded;
  if (const auto path = ctx.settings.get_string("teacher.path"); !path.empty()) {
    ctx.input("teacher.path");
    loaded = load_model(path);
    if (ctx.settings.get_bool("normalize", true)) fixed = loaded->normalization;
    sensors = loaded->sensor_set;
  }
  const auto data = prepare(ctx, fixed, sensors);
  std::string note;
  const auto teacher = loaded ? *loaded : obtain_teacher(ctx, data, note);
  if (!loaded) ctx.write("teacher.json", model_to_json(teacher).dump() + "\n");
  const auto report = compare_three(teacher, parse_subsets(ctx.settings), data.train, data.test,
                                    distill_config(ctx.settings));
  ctx.write("comparison.csv", report.to_csv());
  ctx.write("comparison.json", report.to_json().dump(2) + "\n");
  ctx.write("comparison_plot.csv", report.to_plot_csv());
  ctx.say(report.to_text());
}

inline std::vector<CandidateConfig> read_candidates(const std::string& path, const SensorPowerSpec& sensor_spec,
                                                    const ComputePowerSpec& compute) {
  if (!std::filesystem::exists(path)) throw LoadError("candidate file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw TruncatedFileError("candidate file " + path + " is not valid JSON: " + e.what());
  }
  const auto& list = j.is_object() ? j.at("candidates") : j;
  if (!list.is_array()) throw SchemaError("candidate file must hold an array of candidates");
  std::vector<CandidateConfig> out;
  try {
    for (const auto& c : list) {
      CandidateConfig cand;
      cand.sensor_set = SensorSet::parse(c.at("sensor_set").get<std::string>());
      cand.topology = {cand.sensor_set.channel_count(), c.at("lstm_units").get<std::size_t>(),
                       c.at("hidden_units").get<std::size_t>(), 1};
      cand.window_len = c.value("window_len", std::size_t{20});
      cand.accuracy = c.at("accuracy").get<double>();
      cand.power_mw = c.contains("power_mw")
                          ? c["power_mw"].get<double>()
                          : estimate_power(cand.sensor_set, cand.topology, cand.window_len, sensor_spec, compute);
      out.push_back(cand);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("malformed candidate in " + path + ": " + e.what());
  }
  return out;
}

inline void cmd_select(Context& ctx) {
  const auto sensor_spec = SensorPowerSpec::from_config(ctx.settings);
  const auto compute = ComputePowerSpec::from_config(ctx.settings);
  const double floor = ctx.settings.get_double("select.floor", 0.85);
  SelectionReport report;
  if (const auto path = ctx.settings.get_string("select.candidates"); !path.empty()) {
    ctx.input("select.candidates");
    report = select(read_candidates(path, sensor_spec, compute), floor);
  } else {
    std::optional<NormalizationStats> fixed;
    std::optional<SensorSet> sensors;
    std::optional<LstmClassifier> loaded;
    if (const auto tpath = ctx.settings.get_string("teacher.path"); !tpath.empty()) {
      ctx.input("teacher.path");
      loaded = load_model(tpath);
      if (ctx.settings.get_bool("normalize", true)) fixed = loaded->normalization;
      sensors = loaded->sensor_set;
    }
    const auto data = prepare(ctx, fixed, sensors);
    std::string note;
    const auto teacher = loaded ? *loaded : obtain_teacher(ctx, data, note);
    if (!loaded) ctx.write("teacher.json", model_to_json(teacher).dump() + "\n");
    report = run_selection_loop(teacher, data.train, data.test, parse_subsets(ctx.settings),
                                distill_config(ctx.settings), sensor_spec, compute, floor);
    for (const auto& s : report.skipped) ctx.warn("subset " + s.sensor_set.name() + " skipped: " + s.reason);
  }
  ctx.write("selection.json", report.to_json().dump(2) + "\n");
  ctx.write("selection.txt", report.to_text());
  ctx.say(report.to_text());
}

inline void cmd_bench(Context& ctx) {
  LstmClassifier model;
  if (const auto path = ctx.settings.get_string("model.path"); !path.empty()) {
    ctx.input("model.path");
    model = load_model(path);
  } else {
    const auto sensors = SensorSet::parse(ctx.settings.get_string("sensors"));
    model = init_params(width_topology(ctx.settings, sensors), sensors, ctx.settings.get_u64("seed", 42));
  }
  const auto report = bench_latency(model, ctx.settings.get_count("bench.window", 20),
                                    ctx.settings.get_count("bench.trials", 50),
                                    ctx.settings.get_u64("seed", 42));
  ctx.write("latency.json", report.to_json().dump(2) + "\n");
  char line[200];
  std::snprintf(line, sizeof(line), "model %s, T=%zu, %zu trials: min %.3f ms, median %.3f ms, p95 %.3f ms, %llu MACs\n",
                model.topology.summary().c_str(), report.window_len, report.n_trials, report.stats.min_ms,
                report.stats.median_ms, report.stats.p95_ms, static_cast<unsigned long long>(report.macs));
  ctx.say(line);
}

// Single window as CSV: one row per time step. A header naming channels
// (ax..gz, p; an optional t column is ignored) is optional; without one the
// columns are taken in the model's channel order.
inline Matrix read_window_csv(const std::string& path, const LstmClassifier& model) {
  if (!std::filesystem::exists(path)) throw LoadError("input window not found: " + path);
  const std::string text = io::read_file(path);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> header;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    const auto cells = edgefall::detail::split_csv_line(line);
    const bool has_alpha = std::any_of(line.begin(), line.end(), [](char ch) {
      return std::isalpha(static_cast<unsigned char>(ch)) && ch != 'e' && ch != 'E';
    });
    if (rows.empty() && header.empty() && has_alpha) {
      for (auto c : cells) header.emplace_back(c);
      continue;
    }
    std::vector<double> row;
    for (auto c : cells) {
      double v = 0;
      if (!io::parse_double(c, v)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value \"" + std::string(c) + "\"");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no samples");

  std::vector<std::size_t> cols;
  if (!header.empty()) {
    const auto wanted = model.sensor_set.channel_names();
    std::size_t data_cols = 0;
    for (const auto& h : header) data_cols += h == "t" ? 0 : 1;
    if (data_cols != wanted.size()) {
      throw ShapeError("input has " + std::to_string(data_cols) + " channels, model expects " +
                       std::to_string(wanted.size()) + " (" + model.sensor_set.name() + ")");
    }
    for (const auto& name : wanted) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw SchemaError("input lacks channel " + name);
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    for (std::size_t c = 0; c < rows[0].size(); ++c) cols.push_back(c);
  }
  const std::size_t width = header.empty() ? rows[0].size() : header.size();
  Matrix w(cols.size(), rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != width) {
      throw ParseError(path + ": row " + std::to_string(t + 1) + " has " + std::to_string(rows[t].size()) +
                       " fields, expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) w(c, t) = rows[t][cols[c]];
  }
  return w;
}

inline void cmd_infer(Context& ctx) {
  const auto mpath = ctx.settings.get_string("model.path");
  const auto ipath = ctx.settings.get_string("infer.input");
  if (mpath.empty() || ipath.empty()) throw UsageError("infer needs --model <model.json> and --input <window.csv>");
  const auto model = load_model(mpath);
  const auto window = prepare_window(model, read_window_csv(ipath, model));
  const double threshold = ctx.settings.get_double("infer.threshold", 0.5);
  const double p = forward(model, window).first;
  const int label = p >= threshold ? 1 : 0;
  *ctx.out << "probability " << io::format_double(p) << "\nlabel " << label
           << (label == 1 ? " (fall)" : " (no fall)") << "\n";
}

using Handler = void (*)(Context&);

inline Handler handler_for(const std::string& command) {
  static const std::map<std::string, Handler> table = {
      {"ingest", cmd_ingest},   {"synth", cmd_synth},     {"train", cmd_train},
      {"distill", cmd_distill}, {"ablate", cmd_ablate},   {"compare", cmd_compare},
      {"select", cmd_select},   {"bench", cmd_bench},     {"infer", cmd_infer}};
  const auto it = table.find(command);
  if (it == table.end()) throw ConfigError("unknown command " + command);
  return it->second;
}

inline nlohmann::json manifest_json(const std::string& command, const Context& ctx, const std::string& started,
                                    const std::string& finished) {
  nlohmann::json config = nlohmann::json::object();
  for (const auto& [k, v] : ctx.settings.entries()) config[k] = v;
  return {{"command", command},
          {"config", config},
          {"seeds", {{"seed", ctx.settings.get_string("seed")}, {"split.seed", ctx.settings.get_string("split.seed")}}},
          {"inputs", ctx.inputs},
          {"outputs", ctx.outputs},
          {"out_dir", ctx.out_dir.string()},
          {"version", kVersion},
          {"started_at", started},
          {"finished_at", finished}};
}

// Runs one command on fully resolved settings.
inline void execute(const std::string& command, KeyValueConfig settings, bool quiet, std::ostream& out,
                    std::ostream& err) {
  materialize(settings);
  Context ctx;
  ctx.settings = std::move(settings);
  ctx.out_dir = ctx.settings.get_string("out");
  ctx.quiet = quiet;
  ctx.out = &out;
  ctx.err = &err;
  const auto started = utc_timestamp();
  handler_for(command)(ctx);
  if (!ctx.outputs.empty()) {
    ctx.write("manifest.json", manifest_json(command, ctx, started, utc_timestamp()).dump(2) + "\n");
    ctx.outputs.pop_back();
  }
}

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
  bool boolean = false;
};

inline const std::vector<FlagSpec>& data_flags() {
  static const std::vector<FlagSpec> f = {
      {"--data", "data.path", "CSV directory or dataset JSON"},
      {"--synth", "synth", "use synthetic data", true},
      {"--n-per-class", "synth.n_per_class", "synthetic windows per class"},
      {"--noise", "synth.noise_std", "synthetic noise standard deviation"},
      {"--window", "window_len", "window length in samples"},
      {"--stride", "stride", "window stride (default: half the window)"},
      {"--fall-codes", "fall_codes", "activity codes labelled as falls, e.g. 101-135"},
      {"--normalize", "normalize", "per-channel z-score (true/false)"},
      {"--split-mode", "split.mode", "subject or random"},
      {"--test-fraction", "split.test_fraction", "test share in random mode"},
      {"--holdout", "split.holdout_subjects", "held-out subject ids"},
      {"--split-seed", "split.seed", "split seed"},
  };
  return f;
}

inline const std::vector<FlagSpec>& train_flags() {
  static const std::vector<FlagSpec> f = {
      {"--lstm-units", "model.lstm_units", "LSTM width"},
      {"--hidden-units", "model.hidden_units", "dense hidden width"},
      {"--epochs", "train.epochs", "training epochs"},
      {"--batch-size", "train.batch_size", "minibatch size"},
      {"--lr", "train.learning_rate", "Adam learning rate"},
      {"--clip", "train.grad_clip_norm", "gradient global-norm clip"},
      {"--threads", "threads", "worker threads (0: automatic)"},
  };
  return f;
}

inline const std::vector<FlagSpec>& distill_flags() {
  static const std::vector<FlagSpec> f = {
      {"--teacher", "teacher.path", "teacher model JSON"},
      {"--temperature", "distill.temperature", "softening temperature"},
      {"--alpha", "distill.alpha", "hard-label weight"},
      {"--width-factor", "distill.width_factor", "student width relative to teacher"},
  };
  return f;
}

inline std::vector<FlagSpec> flags_for(const std::string& command) {
  std::vector<FlagSpec> f;
  auto add = [&](const std::vector<FlagSpec>& more) { f.insert(f.end(), more.begin(), more.end()); };
  const FlagSpec sensors{"--sensors", "sensors", "sensor set, e.g. AB"};
  const FlagSpec subsets{"--subsets", "subsets", "comma-separated sensor sets"};
  if (command == "ingest") {
    f = {{"--data", "data.path", "CSV directory"},
         {"--window", "window_len", "window length in samples"},
         {"--stride", "stride", "window stride"},
         {"--fall-codes", "fall_codes", "activity codes labelled as falls"}};
  } else if (command == "synth") {
    f = {{"--n-per-class", "synth.n_per_class", "windows per class"},
         {"--noise", "synth.noise_std", "noise standard deviation"},
         {"--window", "window_len", "window length in samples"}};
  } else if (command == "train") {
    add(data_flags());
    add(train_flags());
    f.push_back(sensors);
  } else if (command == "distill") {
    add(data_flags());
    add(train_flags());
    add(distill_flags());
    f.push_back(sensors);
  } else if (command == "ablate") {
    add(data_flags());
    add(train_flags());
    f.push_back(subsets);
  } else if (command == "compare") {
    add(data_flags());
    add(train_flags());
    add(distill_flags());
    f.push_back(subsets);
  } else if (command == "select") {
    add(data_flags());
    add(train_flags());
    add(distill_flags());
    f.push_back(subsets);
    f.push_back({"--floor", "select.floor", "accuracy floor in [0, 1]"});
    f.push_back({"--candidates", "select.candidates", "JSON file of evaluated candidates"});
    f.push_back({"--energy-per-mac", "power.energy_per_mac", "joules per MAC"});
    f.push_back({"--inference-rate", "power.inference_rate_hz", "inferences per second"});
  } else if (command == "bench") {
    f = {{"--model", "model.path", "model JSON (default: fresh model from flags)"},
         {"--window", "bench.window", "window length"},
         {"--trials", "bench.trials", "timed trials (at least 30)"},
         {"--lstm-units", "model.lstm_units", "LSTM width"},
         {"--hidden-units", "model.hidden_units", "dense hidden width"},
         sensors};
  } else if (command == "infer") {
    f = {{"--model", "model.path", "model JSON"},
         {"--input", "infer.input", "single-window CSV"},
         {"--threshold", "infer.threshold", "decision threshold"}};
  }
  return f;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sensor-subset fall detection toolkit: LSTM training, distillation, ablation and power-aware selection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path, seed, out_dir, manifest_path;
  bool quiet = false;
  auto* o_config = app.add_option("--config", config_path, "key-value config file");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.add_option("--manifest", manifest_path, "replay the run recorded in a manifest.json");

  struct Bound {
    std::string key;
    bool boolean;
    std::string text;
    bool flag = false;
    CLI::Option* opt = nullptr;
  };
  std::map<std::string, std::deque<Bound>> bound;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"ingest", "read wrist CSV recordings and write windowed dataset.json"},
      {"synth", "generate a synthetic windowed dataset"},
      {"train", "train a classifier; writes model.json and train_log.csv"},
      {"distill", "distill a student from a teacher onto a sensor subset"},
      {"ablate", "train one model per sensor subset; writes ablation.csv"},
      {"compare", "big vs small vs distilled model per subset"},
      {"select", "lowest-power configuration above an accuracy floor"},
      {"bench", "single-window forward latency; writes latency.json"},
      {"infer", "classify one window CSV"}};
  for (const auto& name : commands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    subs[name] = sub;
    auto& list = bound[name];
    for (const auto& spec : detail::flags_for(name)) {
      list.push_back(Bound{spec.key, spec.boolean, {}});
      auto& b = list.back();
      b.opt = spec.boolean ? sub->add_flag(spec.flag, b.flag, spec.help)
                           : sub->add_option(spec.flag, b.text, spec.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  try {
    KeyValueConfig settings;
    if (!manifest_path.empty()) {
      if (!command.empty()) throw UsageError("--manifest replays a recorded run; do not also name a command");
      if (!std::filesystem::exists(manifest_path)) throw LoadError("manifest not found: " + manifest_path);
      nlohmann::json m;
      try {
        m = nlohmann::json::parse(io::read_file(manifest_path));
        command = m.at("command").get<std::string>();
        for (const auto& [k, v] : m.at("config").items()) settings.set(k, v.get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed manifest " + manifest_path + ": " + e.what());
      }
      if (o_out->count() > 0) settings.set("out", out_dir);
    } else {
      if (command.empty()) {
        err << app.help();
        return kExitConfig;
      }
      settings = default_settings();
      if (o_config->count() > 0) settings.merge(KeyValueConfig::load(config_path));
      if (o_seed->count() > 0) settings.set("seed", seed);
      if (o_out->count() > 0) settings.set("out", out_dir);
      for (const auto& b : bound[command]) {
        if (b.opt->count() > 0) settings.set(b.key, b.boolean ? (b.flag ? "true" : "false") : b.text);
      }
    }
    detail::execute(command, std::move(settings), quiet, out, err);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "edgefall: error: " << e.what() << "\n";
    if (!command.empty() && subs.count(command)) err << subs[command]->help();
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "edgefall: error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace edgefall::cli
