#include "cli.hpp"

#include "pcflow/dataio.hpp"
#include "pcflow/eval.hpp"
#include "pcflow/model_io.hpp"
#include "pcflow/toy.hpp"
#include "pcflow/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace pcflow::cli {

namespace fs = std::filesystem;

namespace {

struct Shared {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
  bool no_timestamp = false;

  bool stamp() const { return !no_timestamp; }
  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

struct PrepareArgs {
  std::string input;
  std::string time_col = "timestamp";
  std::string value_col;
  std::string capacity_col;
  Index period_length = 96;
  std::string scaling = "auto";
  std::string output = "scenarios.csv";
};

struct TrainArgs {
  std::string data;
  std::string mode = "pcf";
  std::optional<double> cev;
  std::optional<Index> components;
  bool allow_divergence = false;
};

struct SampleArgs {
  std::string model;
  Index n = 0;
  std::string metadata;
  bool descale = false;
  std::string output = "samples.csv";
};

struct EvalArgs {
  std::string historical;
  std::string generated;
  std::string window = "hann";
};

struct ToyArgs {
  std::string shape = "curve1d";
  std::string mode = "fsnf";
  bool allow_divergence = false;
};

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void add_shared(CLI::App* sub, Shared& shared) {
  sub->add_option("--seed", shared.seed, "Seed for every random stream")->capture_default_str();
  sub->add_option("--out-dir", shared.out_dir, "Directory for outputs")->capture_default_str();
  sub->add_option("--config", shared.config, "key=value file; its values override flags");
  sub->add_flag("--no-timestamp", shared.no_timestamp, "Omit the '# created' header line");
}

void add_model_flags(CLI::App* sub, FlowArchitecture& arch, TrainConfig& train) {
  sub->add_option("--layers", arch.coupling_layers, "Coupling layers")
      ->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--hidden-layers", arch.hidden_layers, "Hidden layers per conditioner")
      ->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--hidden-width", arch.hidden_width, "Hidden width (0: flow dimension)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--epochs", train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--lr", train.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--beta1", train.adam_beta1)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sub->add_option("--beta2", train.adam_beta2)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sub->add_option("--eps", train.adam_epsilon)->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--patience", train.early_stop_patience)
      ->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--val-fraction", train.validation_fraction)
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
}

void write_log_file(const fs::path& path, const TrainLog& log, bool stamp) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_train_log(out, log, stamp);
}

void report_log(std::ostream& out, const TrainLog& log) {
  for (const auto& w : log.warnings) out << "warning: " << w << '\n';
  out << "epochs: " << log.epochs_completed() << ", best epoch: " << log.best_epoch;
  if (log.best_epoch >= 0) out << ", best validation NLL: " << fmt(log.best_val_nll());
  out << '\n';
  if (log.diverged) out << "divergence: " << log.divergence_reason << '\n';
}

int cmd_prepare(const PrepareArgs& a, const Shared& shared, std::ostream& out) {
  CsvSchema schema;
  schema.time_col = a.time_col;
  schema.value_col = a.value_col;
  if (!a.capacity_col.empty()) schema.capacity_col = a.capacity_col;
  const RawSeries raw = load_csv(a.input, schema);
  SliceStats stats;
  ScenarioSet set = clean_and_slice(raw, a.period_length, &stats);

  Scaling mode;
  if (a.scaling == "auto") {
    mode = schema.capacity_col ? Scaling::capacity_factor : Scaling::minmax;
  } else {
    mode = parse_scaling(a.scaling);
  }
  if (mode != Scaling::none) set = scale(set, mode);

  fs::create_directories(shared.out_dir);
  const fs::path path = shared.out(a.output);
  write_scenarios(set, path, shared.stamp());
  out << "windows: " << stats.windows_seen << " seen, " << stats.dropped.size() << " dropped, "
      << set.rows() << " kept\n"
      << "scaling: " << to_string(set.scaling) << '\n'
      << "wrote " << path.string() << '\n';
  return ok;
}

int cmd_train(const TrainArgs& a, const FlowArchitecture& arch, TrainConfig config,
              const Shared& shared, std::ostream& out) {
  config.seed = shared.seed;
  if (a.mode != "pcf" && a.mode != "fsnf") throw ArgumentError("--mode must be pcf or fsnf");
  if (a.mode == "fsnf" && (a.cev || a.components)) {
    throw ArgumentError("--cev/--components only apply to --mode pcf");
  }
  const ScenarioSet all = read_scenarios(a.data);
  auto [train, val] = split(all, config.validation_fraction, config.seed);
  fs::create_directories(shared.out_dir);
  const fs::path log_path = shared.out("train_log.csv");
  const fs::path model_path = shared.out("model.pcf");

  TrainResult result;
  if (a.mode == "pcf") {
    Truncation target;
    target.components = a.components;
    if (!a.components) target.cev_threshold = a.cev.value_or(0.99);
    try {
      result = fit_pcf(train, val, target, arch, config);
    } catch (const DivergedError& e) {
      write_log_file(log_path, e.log(), shared.stamp());
      throw;
    }
    out << "principal components: " << result.model.flow_dim() << " of " << result.model.data_dim
        << " (CEV " << fmt(result.model.pca->cev) << ")\n";
  } else {
    result = fit_fsnf(train, val, arch, config);
  }
  write_log_file(log_path, result.log, shared.stamp());
  save_model(result.model, model_path);
  report_log(out, result.log);
  out << "wrote " << model_path.string() << " and " << log_path.string() << '\n';
  if (result.log.diverged && !a.allow_divergence) {
    throw NumericError("training diverged (" + result.log.divergence_reason +
                       "); pass --allow-divergence to accept");
  }
  return ok;
}

int cmd_sample(const SampleArgs& a, const Shared& shared, std::ostream& out) {
  const auto model = load_model(a.model);
  ScenarioSet like;
  like.period_length = model.data_dim;
  like.interval_minutes = model.data_dim > 0 && 1440 % model.data_dim == 0
                              ? static_cast<int>(1440 / model.data_dim)
                              : 0;
  if (!a.metadata.empty()) {
    ScenarioSet meta = read_scenarios(a.metadata);
    if (meta.data.cols() != model.data_dim) {
      throw DataError("metadata scenarios have length " + std::to_string(meta.data.cols()) +
                      ", the model " + std::to_string(model.data_dim));
    }
    like = std::move(meta);
  } else if (a.descale) {
    throw ArgumentError("--descale needs --metadata");
  }
  ScenarioSet generated = sample_scenarios(model, a.n, shared.seed, like);
  if (a.descale && generated.scaling != Scaling::none) {
    generated.data = descale(generated.data, generated);
    generated.scaling = Scaling::none;
    generated.min = generated.max = generated.capacity_reference = 0.0;
  }
  fs::create_directories(shared.out_dir);
  const fs::path path = shared.out(a.output);
  write_scenarios(generated, path, shared.stamp());
  out << "wrote " << generated.rows() << " scenarios to " << path.string() << '\n';
  return ok;
}

int cmd_eval(const EvalArgs& a, EvalOptions options, const Shared& shared, std::ostream& out) {
  if (a.window == "hann") {
    options.welch.window = WindowKind::hann;
  } else if (a.window == "rectangular") {
    options.welch.window = WindowKind::rectangular;
  } else {
    throw ArgumentError("--window must be hann or rectangular");
  }
  const ScenarioSet historical = read_scenarios(a.historical);
  const ScenarioSet generated = read_scenarios(a.generated);
  const EvalReport report = evaluate(historical, generated, options);
  write_report(report, options, shared.out_dir, shared.stamp());
  out << "KS statistic " << fmt(report.ks.statistic) << ", p-value " << fmt(report.ks.p_value)
      << '\n';
  for (const auto& [threshold, m] : report.cev_table) {
    out << "CEV " << fmt(threshold) << ": " << m << " components\n";
  }
  out << "wrote report to " << shared.out_dir << '\n';
  return ok;
}

int cmd_toy(const ToyArgs& a, ToyOptions options, const Shared& shared, std::ostream& out) {
  options.shape = parse_toy_shape(a.shape);
  options.mode = parse_toy_mode(a.mode);
  options.train.seed = shared.seed;
  ToyResult result = run_toy(options);

  fs::create_directories(shared.out_dir);
  auto write_rows = [&](const std::string& name, const MatrixXd& rows) {
    std::ofstream f(shared.out(name));
    if (!f) throw DataError("cannot write " + shared.out(name).string());
    if (shared.stamp()) f << timestamp_comment() << '\n';
    write_matrix_csv(f, rows);
  };
  write_rows("toy_data.csv", result.data);
  write_rows("toy_samples.csv", result.samples);
  write_log_file(shared.out("train_log.csv"), result.log, shared.stamp());
  {
    std::ofstream f(shared.out("toy_summary.txt"));
    if (!f) throw DataError("cannot write toy_summary.txt");
    if (shared.stamp()) f << timestamp_comment() << '\n';
    f << "shape=" << to_string(options.shape) << '\n'
      << "mode=" << to_string(options.mode) << '\n'
      << "flow_dim=" << result.flow_dim << '\n'
      << "tolerance=" << fmt(options.tolerance) << '\n'
      << "fraction_within=" << fmt(result.fraction_within) << '\n'
      << "mean_distance=" << fmt(result.mean_distance) << '\n'
      << "best_epoch=" << result.log.best_epoch << '\n'
      << "epochs=" << result.log.epochs_completed() << '\n'
      << "diverged=" << (result.log.diverged ? 1 : 0) << '\n';
  }
  report_log(out, result.log);
  out << "fraction within " << fmt(options.tolerance) << " of the manifold: "
      << fmt(result.fraction_within) << ", mean distance " << fmt(result.mean_distance) << '\n';
  if (result.log.diverged && !a.allow_divergence) {
    throw NumericError("training diverged (" + result.log.divergence_reason +
                       "); pass --allow-divergence to accept");
  }
  return ok;
}

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case Error::Category::argument: return usage;
    case Error::Category::data:
    case Error::Category::format: return data;
    case Error::Category::numeric: return numeric;
  }
  return data;
}

// Finds the value of --config in the raw arguments, if any.
std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read config file " + path);
  std::vector<std::string> out;
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError(path + ":" + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    if (key.empty() || key == "config") {
      throw ArgumentError(path + ":" + std::to_string(number) + ": bad key");
    }
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Principal component flows for time-series scenario generation", "pcflow"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Shared shared;
  PrepareArgs prepare;
  TrainArgs train;
  SampleArgs sample_args;
  EvalArgs eval_args;
  ToyArgs toy;
  FlowArchitecture arch;
  TrainConfig config;
  EvalOptions eval_options;
  ToyOptions toy_options;

  auto* p = app.add_subcommand("prepare", "Slice and scale a raw time series into scenarios");
  add_shared(p, shared);
  p->add_option("--input", prepare.input, "Raw CSV")->required();
  p->add_option("--time-col", prepare.time_col)->capture_default_str();
  p->add_option("--value-col", prepare.value_col)->required();
  p->add_option("--capacity-col", prepare.capacity_col, "Installed capacity column");
  p->add_option("--period-length", prepare.period_length, "Readings per scenario")
      ->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("--scaling", prepare.scaling)
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "capacity_factor", "minmax", "none"}));
  p->add_option("--output", prepare.output, "File name inside --out-dir")->capture_default_str();

  auto* t = app.add_subcommand("train", "Fit a flow to prepared scenarios");
  add_shared(t, shared);
  t->add_option("--data", train.data, "Scenario CSV")->required();
  t->add_option("--mode", train.mode)->capture_default_str()->check(CLI::IsMember({"pcf", "fsnf"}));
  auto* cev = t->add_option("--cev", train.cev, "Explained-variance threshold (default 0.99)")
                  ->check(CLI::Range(0.0, 1.0));
  auto* comps = t->add_option("--components", train.components, "Explicit number of components")
                    ->check(CLI::PositiveNumber);
  cev->excludes(comps);
  t->add_flag("--allow-divergence", train.allow_divergence, "Exit 0 even if training diverged");
  add_model_flags(t, arch, config);

  auto* s = app.add_subcommand("sample", "Draw scenarios from a trained model");
  add_shared(s, shared);
  s->add_option("--model", sample_args.model)->required();
  s->add_option("--n", sample_args.n, "Number of scenarios")->required()->check(CLI::PositiveNumber);
  s->add_option("--metadata", sample_args.metadata, "Scenario CSV whose scaling/interval to copy");
  s->add_flag("--descale", sample_args.descale, "Write values in physical units");
  s->add_option("--output", sample_args.output)->capture_default_str();

  auto* e = app.add_subcommand("eval", "Compare generated with historical scenarios");
  add_shared(e, shared);
  e->add_option("--historical", eval_args.historical)->required();
  e->add_option("--generated", eval_args.generated)->required();
  e->add_option("--segment-length", eval_options.welch.segment_length, "Welch segment (0: D/2)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  e->add_option("--overlap", eval_options.welch.overlap_fraction)
      ->capture_default_str()->check(CLI::Range(0.0, 0.9));
  e->add_option("--window", eval_args.window)->capture_default_str()
      ->check(CLI::IsMember({"hann", "rectangular"}));
  e->add_option("--bandwidth", eval_options.bandwidth, "KDE bandwidth (default: Silverman)")
      ->check(CLI::PositiveNumber);
  e->add_option("--kde-points", eval_options.kde_points)->capture_default_str()
      ->check(CLI::Range(2, 1 << 20));
  e->add_option("--clock-from", eval_options.clock_from, "Marginals window start, minutes")
      ->capture_default_str()->check(CLI::Range(0, 1439));
  e->add_option("--clock-to", eval_options.clock_to, "Marginals window end, minutes")
      ->capture_default_str()->check(CLI::Range(0, 1439));

  auto* y = app.add_subcommand("toy", "Two-dimensional manifold demonstration");
  add_shared(y, shared);
  y->add_option("--shape", toy.shape)->capture_default_str()
      ->check(CLI::IsMember({"curve1d", "kite2d"}));
  y->add_option("--mode", toy.mode)->capture_default_str()->check(CLI::IsMember({"pcf", "fsnf"}));
  y->add_option("--points", toy_options.data_points, "Dataset size")
      ->capture_default_str()->check(CLI::Range(10, 10000000));
  y->add_option("--draws", toy_options.draws, "Samples drawn after training")
      ->capture_default_str()->check(CLI::PositiveNumber);
  y->add_option("--cev", toy_options.cev_threshold)->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  y->add_option("--tolerance", toy_options.tolerance, "Distance counted as on the manifold")
      ->capture_default_str()->check(CLI::PositiveNumber);
  y->add_flag("--allow-divergence", toy.allow_divergence, "Exit 0 even if training diverged");
  add_model_flags(y, toy_options.arch, toy_options.train);

  std::vector<std::string> args = args_in;
  try {
    if (auto path = config_path(args)) {
      const auto extra = read_config(*path);
      args.insert(args.end(), extra.begin(), extra.end());
    }
  } catch (const ArgumentError& ex) {
    err << "error: " << ex.what() << '\n';
    return usage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    if (const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) {
      err << "run with --help for usage" << (sub == &app ? "" : " of " + sub->get_name()) << '\n';
    }
    return usage;
  }

  try {
    if (p->parsed()) return cmd_prepare(prepare, shared, out);
    if (t->parsed()) return cmd_train(train, arch, config, shared, out);
    if (s->parsed()) return cmd_sample(sample_args, shared, out);
    if (e->parsed()) return cmd_eval(eval_args, eval_options, shared, out);
    if (y->parsed()) return cmd_toy(toy, toy_options, shared, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code_for(ex);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return data;
  }
  return usage;
}

}  // namespace pcflow::cli
