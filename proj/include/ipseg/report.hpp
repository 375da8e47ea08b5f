#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipseg/config.hpp"
#include "ipseg/experiment.hpp"

namespace ipseg {

inline constexpr const char* kMetricsSchema = "# schema ipseg-metrics 1";
inline constexpr const char* kIouSchema = "# schema ipseg-iou 1";
inline constexpr const char* kAblationSchema = "# schema ipseg-ablation 1";

/// One line of the metrics CSV.
struct MetricRow {
  std::string run;
  std::string variant;
  std::size_t step = 0;
  std::string group;
  double miou = 0.0;
  double posterior_accuracy = 0.0;
  double pixel_accuracy = 0.0;
};

std::vector<MetricRow> metric_rows(const ExperimentRecord& record);

/// Columns: run,variant,step,group,miou,posterior_accuracy,pixel_accuracy.
/// Values are printed with six decimals, so equal inputs give equal bytes.
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
/// Throws std::runtime_error on a missing schema line or a malformed row.
std::vector<MetricRow> read_metrics_csv(std::istream& in);

/// Columns: run,variant,step,category,iou (category 0 is background).
void write_iou_csv(std::ostream& out, std::span<const ExperimentRecord* const> records);

/// Digest over every parameter name and value of the model.
std::uint64_t model_digest(const IncrementalModel& model);

/// The inference variant a run config asks for.
InferenceVariant configured_variant(const RunConfig& config);

/// Trains the scenario of `config` once and evaluates its configured
/// inference variant. `events` receives the JSON-lines batch log.
ScenarioOutcome run_experiment(const RunConfig& config, std::span<const Sample> train,
                               std::span<const Sample> validation, std::ostream* events = nullptr);

/// A row of the component ablation: image posterior, semantics decoupling
/// and noise filter switched on or off.
struct AblationCell {
  bool image_posterior = false;
  bool decoupling = false;
  bool noise_filter = false;

  /// "ip1-sd0-nf0" style.
  std::string name() const;
};

/// The five rows of the overall ablation: none, IP, SD, IP+SD, all three.
std::vector<AblationCell> ablation_cells();

struct AblationRow {
  AblationCell cell;
  double initial = 0.0;
  double added = 0.0;  // categories of steps 2..T
  double all = 0.0;
  std::string checkpoint;  // hex digest of the trained model the row was evaluated on
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// One training without and one with semantics decoupling; the IP and NF
  /// switches only change inference.
  ExperimentRecord without_decoupling;
  ExperimentRecord with_decoupling;

  const AblationRow& row(const AblationCell& cell) const;
};

/// `customize` may attach hooks to each of the two trainings before it runs;
/// it must not change anything that affects the result.
AblationResult run_ablation_matrix(const RunConfig& config, std::span<const Sample> train,
                                   std::span<const Sample> validation, std::ostream* events = nullptr,
                                   const std::function<void(ExperimentSetup&)>& customize = {});

/// Columns: run,ip,sd,nf,initial,new,all,checkpoint.
void write_ablation_csv(std::ostream& out, const std::string& run, const AblationResult& result);
/// Fixed-width text table of final-step mIoU in percent.
std::string format_ablation_table(const AblationResult& result);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<std::size_t, double>> points;  // (step, value)
};

/// One series per (run, variant) with the "all" group mIoU by step.
std::vector<PlotSeries> all_miou_series(std::span<const MetricRow> rows);

/// Line chart using only svg, line, polyline and text elements. Output
/// bytes depend only on the input.
std::string render_svg(std::span<const PlotSeries> series, const std::string& title);

}  // namespace ipseg
