#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ipseg/config.hpp"
#include "ipseg/hash.hpp"
#include "ipseg/inference.hpp"
#include "ipseg/log.hpp"
#include "ipseg/manifest.hpp"
#include "ipseg/report.hpp"
#include "ipseg/shapes_world.hpp"

namespace fs = std::filesystem;
using namespace ipseg;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_dir;

  RunConfig resolve() const {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const std::string& o : overrides) apply_override(config, o);
    return config;
  }
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_data = true) {
  cmd->add_option("-c,--config", opts.config_path, "key = value config file (defaults: reference scenario)")
      ->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", opts.overrides, "override one key, e.g. --set train.epochs=5");
  if (with_data) {
    cmd->add_option("--data", opts.data_dir, "corpus directory written by gen-data (default: generate in memory)");
  }
}

struct Corpora {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

Corpora load_corpora(const RunConfig& config, const std::string& data_dir) {
  if (!data_dir.empty()) {
    return {read_corpus(fs::path(data_dir) / "train" / "manifest.tsv"),
            read_corpus(fs::path(data_dir) / "val" / "manifest.tsv")};
  }
  return {generate_dataset(config.train_data()), generate_dataset(config.validation_data())};
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) { open_output(path) << text; }

void write_metrics(const fs::path& dir, const std::vector<const ExperimentRecord*>& records) {
  std::vector<MetricRow> rows;
  for (const ExperimentRecord* r : records) {
    const auto more = metric_rows(*r);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  auto metrics = open_output(dir / "metrics.csv");
  write_metrics_csv(metrics, rows);
  auto iou = open_output(dir / "iou.csv");
  write_iou_csv(iou, records);
}

int cmd_gen_data(const CommonOptions& opts, const std::string& out) {
  const RunConfig config = opts.resolve();
  const auto train = generate_dataset(config.train_data());
  const auto validation = generate_dataset(config.validation_data());
  write_corpus(fs::path(out) / "train", "manifest.tsv", train);
  write_corpus(fs::path(out) / "val", "manifest.tsv", validation);
  std::cout << "wrote " << train.size() << " training and " << validation.size() << " validation images to " << out
            << " (train digest " << hex_digest(corpus_digest(train)) << ", validation digest "
            << hex_digest(corpus_digest(validation)) << ")\n";
  return 0;
}

int cmd_train(const CommonOptions& opts, const std::string& out) {
  const RunConfig config = opts.resolve();
  const Corpora data = load_corpora(config, opts.data_dir);
  const fs::path dir(out);
  write_text(dir / "config.txt", format_config(config));
  auto events = open_output(dir / "events.jsonl");
  ScenarioOutcome outcome = run_experiment(config, data.train, data.validation, &events);
  write_metrics(dir, {&outcome.record});
  outcome.model->save(dir / "model.ckpt");
  const auto& final = outcome.record.final_metrics("configured");
  std::cout << "final all-mIoU " << final.groups.at("all").miou << "; outputs in " << out << '\n';
  return 0;
}

int cmd_eval(const CommonOptions& opts, const std::string& model_path, const std::string& out) {
  const RunConfig config = opts.resolve();
  const Corpora data = load_corpora(config, opts.data_dir);
  const IncrementalModel model = IncrementalModel::load(model_path);
  const std::vector<InferenceVariant> variants{configured_variant(config)};
  ExperimentRecord record;
  record.run = config.run;
  StepRecord step;
  step.step = model.step_count();
  step.categories = model.head_layout(model.step_count()).categories;
  step.variants = evaluate(model, data.validation, variants, model.head_layout(1).categories,
                           config.include_background);
  record.steps.push_back(std::move(step));
  write_metrics(fs::path(out), {&record});
  std::cout << "all-mIoU " << record.final_metrics("configured").groups.at("all").miou << "; outputs in " << out
            << '\n';
  return 0;
}

int cmd_ablate(const CommonOptions& opts, const std::string& out) {
  const RunConfig config = opts.resolve();
  const Corpora data = load_corpora(config, opts.data_dir);
  const fs::path dir(out);
  write_text(dir / "config.txt", format_config(config));
  auto events = open_output(dir / "events.jsonl");
  const AblationResult result = run_ablation_matrix(config, data.train, data.validation, &events);
  auto csv = open_output(dir / "ablation.csv");
  write_ablation_csv(csv, config.run, result);
  const std::string table = format_ablation_table(result);
  write_text(dir / "ablation.txt", table);
  write_metrics(dir, {&result.without_decoupling, &result.with_decoupling});
  std::vector<MetricRow> rows = metric_rows(result.without_decoupling);
  const auto more = metric_rows(result.with_decoupling);
  rows.insert(rows.end(), more.begin(), more.end());
  write_text(dir / "ablation.svg", render_svg(all_miou_series(rows), config.run + ": all mIoU by step"));
  std::cout << table;
  return 0;
}

int cmd_probe_drift(const CommonOptions& opts, const std::string& model_path, const std::string& out) {
  const RunConfig config = opts.resolve();
  const Corpora data = load_corpora(config, opts.data_dir);
  const ConfusablePair pair = confusable_pair();
  std::optional<IncrementalModel> model;
  if (!model_path.empty()) {
    model.emplace(IncrementalModel::load(model_path));
  } else {
    model.emplace(std::move(*run_experiment(config, data.train, data.validation).model));
  }
  const DriftReport report = drift_probe(*model, data.validation, pair.earlier, pair.later, config.inference);
  auto csv = open_output(out);
  report.write_csv(csv);
  std::cout << "margin of category " << int{pair.earlier} << " over " << int{pair.later} << " on its own pixels: "
            << report.margin(pair.earlier, pair.later, false) << " without, "
            << report.margin(pair.earlier, pair.later, true) << " with the image posterior\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out, const std::string& title) {
  std::vector<MetricRow> rows;
  for (const std::string& path : inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    const auto more = read_metrics_csv(in);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  write_text(out, render_svg(all_miou_series(rows), title));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental segmentation lab on synthetic shapes"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log debug messages");

  CommonOptions opts;
  std::string out, model_path, title = "all mIoU by step";
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("gen-data", "write the training and validation corpora as PPM/PGM");
  add_common(gen, opts, false);
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "run every incremental step and write metrics, events and the model");
  add_common(train, opts);
  train->add_option("-o,--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a saved model on the validation corpus");
  add_common(eval, opts);
  eval->add_option("-m,--model", model_path, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out", out, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "train with and without decoupling and tabulate the five ablation rows");
  add_common(ablate, opts);
  ablate->add_option("-o,--out", out, "output directory")->required();

  auto* probe = app.add_subcommand("probe-drift", "score the confusable category pair with and without the posterior");
  add_common(probe, opts);
  probe->add_option("-m,--model", model_path, "model checkpoint (default: train one)")->check(CLI::ExistingFile);
  probe->add_option("-o,--out", out, "output CSV")->required();

  auto* plot = app.add_subcommand("plot", "render all-mIoU curves from metrics CSV files as SVG");
  plot->add_option("-i,--input", inputs, "metrics CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out", out, "output SVG")->required();
  plot->add_option("-t,--title", title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  if (verbose) log::set_threshold(log::Level::debug);

  try {
    if (*gen) return cmd_gen_data(opts, out);
    if (*train) return cmd_train(opts, out);
    if (*eval) return cmd_eval(opts, model_path, out);
    if (*ablate) return cmd_ablate(opts, out);
    if (*probe) return cmd_probe_drift(opts, model_path, out);
    if (*plot) return cmd_plot(inputs, out, title);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
