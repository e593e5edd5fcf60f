#include "mvf/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "mvf/config.hpp"
#include "mvf/evaluate.hpp"
#include "mvf/trainer.hpp"
#include "mvf/verify.hpp"

namespace mvf::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

Checkpoint open_checkpoint(const std::filesystem::path& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot load checkpoint '" + path.string() + "': " + e.what());
  }
}

Dataset open_dataset(const std::filesystem::path& path) {
  try {
    return dataset_from_file(read_tensor_file(path));
  } catch (const std::exception& e) {
    throw UsageError("cannot load dataset '" + path.string() + "': " + e.what());
  }
}

struct ConfigArgs {
  std::string preset = "desk";
  std::string config;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "baseline values: desk or paper");
    cmd->add_option("--config", config, "key = value config file");
    cmd->add_option("--set", overrides, "section.key=value override (repeatable)");
  }

  RunConfig build() const {
    RunConfig cfg = mvf::preset(preset);
    if (!config.empty()) apply_config_file(cfg, config);
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
  }
};

// Keeps the header and rows up to `step` from an earlier metrics log.
std::string metrics_prefix(const std::filesystem::path& path, std::uint64_t step) {
  std::string kept = metrics_header() + "\n";
  std::ifstream in(path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) <= step) kept += line + "\n";
  }
  return kept;
}

std::string svg_sweep(const std::vector<SweepRow>& rows) {
  const double w = 480, h = 320, pad = 40;
  auto px = [&](double t) {
    const double lo = rows.front().t_prime, hi = rows.back().t_prime;
    return pad + (hi > lo ? (t - lo) / (hi - lo) : 0.5) * (w - 2 * pad);
  };
  auto py = [&](double v) { return h - pad - v * (h - 2 * pad); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n";
  auto series = [&](auto get, const char* colour) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) os << px(r.t_prime) << "," << py(get(r)) << " ";
    os << "\"/>\n";
  };
  series([](const SweepRow& r) { return r.speaker_accuracy; }, "steelblue");
  series([](const SweepRow& r) { return r.mean_ssim; }, "darkorange");
  os << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">speaker accuracy (blue), ssim to source (orange) vs t'</text>\n";
  os << "</svg>\n";
  return os.str();
}

int cmd_train(const ConfigArgs& ca, const std::string& output, const std::string& dataset_path,
              const std::string& resume, std::uint64_t stop_after, bool print_config, std::ostream& out,
              std::ostream& err) {
  std::optional<Checkpoint> resumed;
  if (!resume.empty()) resumed = open_checkpoint(resume);

  RunConfig cfg = resumed && ca.config.empty() && ca.overrides.empty() ? resumed->config : ca.build();
  if (!output.empty()) cfg.output_dir = output;
  std::optional<Dataset> data;
  if (!dataset_path.empty()) {
    data = open_dataset(dataset_path);
    cfg.data = data->spec;
  }
  cfg.resolve();
  if (print_config) {
    out << to_config_text(cfg);
    return kExitOk;
  }
  if (resumed) {
    try {
      check_resume_compatible(*resumed, cfg);
    } catch (const std::runtime_error& e) {
      throw UsageError(e.what());
    }
  }

  const auto dir = resolve_output(cfg.output_dir);
  std::filesystem::create_directories(dir);
  write_text(dir / "config.resolved.ini", to_config_text(cfg));
  if (!data) data = build_dataset(cfg.data);

  const auto metrics_path = dir / "metrics.csv";
  const std::string prefix = resumed ? metrics_prefix(metrics_path, resumed->step) : metrics_header() + "\n";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  metrics << prefix;
  std::ofstream eval_log;
  bool eval_header = false;

  TrainHooks hooks;
  hooks.stop_after = stop_after;
  hooks.dump_dir = dir;
  hooks.on_step = [&](const MetricsRow& row) { metrics << format_metrics_row(row) << "\n" << std::flush; };
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    std::ostringstream name;
    name << "step_" << std::setw(8) << std::setfill('0') << c.step << ".mvft";
    save_checkpoint(dir / "checkpoints" / name.str(), c);
  };
  hooks.on_eval = [&](const EvalSnapshot& snap) {
    if (!eval_header) {
      eval_log.open(dir / "eval.csv", resumed ? std::ios::app : std::ios::trunc);
      if (!resumed) {
        eval_log << "step";
        for (const auto& [k, v] : snap.values) eval_log << "," << k;
        eval_log << "\n";
      }
      eval_header = true;
    }
    eval_log << snap.step;
    for (const auto& [k, v] : snap.values) eval_log << "," << std::setprecision(10) << v;
    eval_log << "\n" << std::flush;
  };

  const Checkpoint start = resumed ? *resumed : initial_checkpoint(cfg);
  try {
    const auto result = train(start, *data, hooks);
    save_checkpoint(dir / "checkpoint.mvft", result.state);
    out << (result.completed ? "completed" : "stopped") << " at step " << result.state.step << " of "
        << cfg.total_steps() << "; checkpoint " << (dir / "checkpoint.mvft").string() << "\n";
  } catch (const TrainingAbort& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_convert(const std::string& ckpt_path, std::optional<std::size_t> source, const std::string& source_file,
                int target, double t_prime, std::size_t steps, std::uint64_t seed, const std::string& output,
                const std::string& dataset_path, const std::string& interval, std::ostream& out) {
  Checkpoint ckpt = open_checkpoint(ckpt_path);
  if (!interval.empty()) ckpt.config.convert_interval = parse_convert_interval(interval);
  Dataset data = dataset_path.empty() ? build_dataset(ckpt.config.data) : open_dataset(dataset_path);
  std::size_t item = 0;
  if (!source_file.empty()) {
    TensorFile f;
    try {
      f = read_tensor_file(source_file);
    } catch (const std::exception& e) {
      throw UsageError("cannot load source '" + source_file + "': " + e.what());
    }
    if (!f.has_tensor("x") || !f.has_tensor("c")) throw UsageError("source file needs tensors 'x' and 'c'");
    Dataset one;
    one.spec = data.spec;
    one.speakers = data.speakers;
    one.x = f.tensor("x").reshaped({1, f.tensor("x").size()});
    one.c = f.tensor("c").reshaped({1, f.tensor("c").size()});
    one.s = Tensor::zeros({1, data.speaker_dim()});
    const Readback readback(data.speakers, ckpt.config.data.patch);
    one.speaker = {readback(one.x.data()).speaker};
    one.content = {readback(one.x.data()).content};
    data = std::move(one);
  } else if (source) {
    item = *source;
  } else {
    throw UsageError("convert needs --source or --source-file");
  }
  ConversionResult res;
  try {
    res = convert_item(ckpt.config, ckpt.params, data, item, target, t_prime, steps, seed);
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }

  std::filesystem::path path = output.empty() ? std::filesystem::path(ckpt.config.output_dir) /
                                                    ("convert_" + std::to_string(item) + "_to_" + std::to_string(target) + ".mvft")
                                              : std::filesystem::path(output);
  path = resolve_output(path);
  const Shape hw{ckpt.config.data.patch.height, ckpt.config.data.patch.width};
  TensorFile f;
  f.set_meta("format", "mvf-conversion");
  f.set_meta("report", report_json(res.report));
  f.add("x", res.converted.reshaped(hw));
  f.add("source", data.x.row_copy(item).reshaped(hw));
  f.add("c", data.c.row_copy(item));
  write_tensor_file(path, f, Precision::F64);
  auto report_path = path;
  report_path.replace_extension(".json");
  write_text(report_path, report_json(res.report) + "\n");
  out << report_json(res.report) << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& grid_spec, std::size_t items, std::uint64_t seed,
              std::size_t steps, const std::string& output, const std::string& plot, const std::string& dataset_path,
              const std::string& interval, std::ostream& out) {
  Checkpoint ckpt = open_checkpoint(ckpt_path);
  if (!interval.empty()) ckpt.config.convert_interval = parse_convert_interval(interval);
  const auto grid = parse_grid(grid_spec);
  const Dataset data = dataset_path.empty() ? build_dataset(ckpt.config.data) : open_dataset(dataset_path);
  const auto rows = sweep_tprime(ckpt.config, ckpt.params, data, grid, items, seed, steps);
  const std::string csv = sweep_csv(rows);
  if (!output.empty()) write_text(resolve_output(output), csv);
  if (!plot.empty()) write_text(resolve_output(plot), svg_sweep(rows));
  out << csv;
  return kExitOk;
}

int cmd_verify(const std::string& suite, const std::string& report, std::uint64_t seed, std::ostream& out) {
  verify::Options opts;
  if (seed != 0) opts.seed = seed;
  const auto results = verify::run_suite(suite, opts);
  const auto json = verify::to_json(results);
  if (!report.empty()) write_text(resolve_output(report), json + "\n");
  out << json << "\n";
  return verify::all_passed(results) ? kExitOk : kExitFailure;
}

int cmd_dataset_build(const ConfigArgs& ca, const std::string& output, std::ostream& out) {
  RunConfig cfg = ca.build();
  cfg.resolve();
  const Dataset data = build_dataset(cfg.data);
  const auto path = resolve_output(output);
  write_tensor_file(path, dataset_to_file(data), Precision::F64);
  out << "wrote " << data.size() << " items (" << task_name(data.spec.task) << ", dim " << data.data_dim() << ") to "
      << path.string() << "\n";
  return kExitOk;
}

int cmd_dataset_inspect(const std::string& path, std::ostream& out) {
  const Dataset d = open_dataset(path);
  nlohmann::json j;
  j["task"] = task_name(d.spec.task);
  j["size"] = d.size();
  j["data_dim"] = d.data_dim();
  j["speaker_dim"] = d.speaker_dim();
  j["content_dim"] = d.content_dim();
  double m = 0.0, sq = 0.0;
  for (double v : d.x.data()) m += v;
  m /= static_cast<double>(d.x.size());
  for (double v : d.x.data()) sq += (v - m) * (v - m);
  j["x_mean"] = m;
  j["x_std"] = std::sqrt(sq / static_cast<double>(d.x.size()));
  if (d.spec.task != TaskKind::Gaussian1D) {
    std::vector<std::size_t> counts(d.spec.speakers, 0);
    for (int s : d.speaker) counts.at(static_cast<std::size_t>(s)) += 1;
    j["speaker_counts"] = counts;
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root && path.is_relative()) return std::filesystem::path(root) / path;
  return path;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mean-flow conversion toolkit"};
  app.require_subcommand(1);

  ConfigArgs train_cfg;
  std::string train_output, train_dataset, train_resume;
  std::uint64_t stop_after = 0;
  bool print_config = false;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cfg.attach(train_cmd);
  train_cmd->add_option("--output", train_output, "output directory (overrides run.output_dir)");
  train_cmd->add_option("--dataset", train_dataset, "dataset file from dataset-build");
  train_cmd->add_option("--resume", train_resume, "checkpoint to continue from");
  train_cmd->add_option("--stop-after", stop_after, "stop after this step");
  train_cmd->add_flag("--print-config", print_config, "print the resolved config and exit");

  std::string conv_ckpt, conv_source_file, conv_output, conv_dataset, conv_interval;
  std::optional<std::size_t> conv_source;
  int conv_target = 0;
  double conv_tp = 0.95;
  std::size_t conv_steps = 1;
  std::uint64_t conv_seed = 0;
  auto* convert_cmd = app.add_subcommand("convert", "convert one patch to a target speaker");
  convert_cmd->add_option("--checkpoint", conv_ckpt)->required();
  convert_cmd->add_option("--source", conv_source, "dataset item id");
  convert_cmd->add_option("--source-file", conv_source_file, "tensor file with 'x' and 'c'");
  convert_cmd->add_option("--target-speaker", conv_target)->required();
  convert_cmd->add_option("--t-prime", conv_tp, "mixing ratio")->capture_default_str();
  convert_cmd->add_option("--steps", conv_steps)->capture_default_str();
  convert_cmd->add_option("--seed", conv_seed)->capture_default_str();
  convert_cmd->add_option("--output", conv_output, "output tensor file");
  convert_cmd->add_option("--dataset", conv_dataset);
  convert_cmd->add_option("--interval", conv_interval, "from_t_prime or from_one");

  std::string sw_ckpt, sw_grid = "0.5:1.0:0.05", sw_output, sw_plot, sw_dataset, sw_interval;
  std::size_t sw_items = 64, sw_steps = 1;
  std::uint64_t sw_seed = 0;
  auto* sweep_cmd = app.add_subcommand("sweep-tprime", "metrics versus the mixing ratio");
  sweep_cmd->add_option("--checkpoint", sw_ckpt)->required();
  sweep_cmd->add_option("--grid", sw_grid, "lo:hi:step or comma list")->capture_default_str();
  sweep_cmd->add_option("--items", sw_items)->capture_default_str();
  sweep_cmd->add_option("--seed", sw_seed)->capture_default_str();
  sweep_cmd->add_option("--steps", sw_steps)->capture_default_str();
  sweep_cmd->add_option("--output", sw_output, "CSV file");
  sweep_cmd->add_option("--plot", sw_plot, "SVG file");
  sweep_cmd->add_option("--dataset", sw_dataset);
  sweep_cmd->add_option("--interval", sw_interval, "from_t_prime or from_one");

  std::string suite = "all", report;
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run property suites");
  verify_cmd->add_option("--suite", suite)->check(CLI::IsMember({"autodiff", "flow", "mvf", "oracle", "all"}))->capture_default_str();
  verify_cmd->add_option("--report", report, "JSON report file");
  verify_cmd->add_option("--seed", verify_seed);

  ConfigArgs ds_cfg;
  std::string ds_output;
  auto* ds_build = app.add_subcommand("dataset-build", "generate a dataset file");
  ds_cfg.attach(ds_build);
  ds_build->add_option("--output", ds_output)->required();

  std::string inspect_path;
  auto* ds_inspect = app.add_subcommand("dataset-inspect", "summarize a dataset file");
  ds_inspect->add_option("path", inspect_path)->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd)
      return cmd_train(train_cfg, train_output, train_dataset, train_resume, stop_after, print_config, out, err);
    if (*convert_cmd)
      return cmd_convert(conv_ckpt, conv_source, conv_source_file, conv_target, conv_tp, conv_steps, conv_seed,
                         conv_output, conv_dataset, conv_interval, out);
    if (*sweep_cmd)
      return cmd_sweep(sw_ckpt, sw_grid, sw_items, sw_seed, sw_steps, sw_output, sw_plot, sw_dataset, sw_interval, out);
    if (*verify_cmd) return cmd_verify(suite, report, verify_seed, out);
    if (*ds_build) return cmd_dataset_build(ds_cfg, ds_output, out);
    if (*ds_inspect) return cmd_dataset_inspect(inspect_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvf::cli
