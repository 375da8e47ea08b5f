#include "ipseg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ipseg/hash.hpp"
#include "ipseg/log.hpp"

namespace ipseg {

namespace {

std::string fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("metrics CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

InferenceVariant cell_variant(const AblationCell& cell, const InferenceOptions& base) {
  InferenceOptions o = base;
  o.image_posterior = cell.image_posterior;
  o.noise_filter = cell.noise_filter;
  o.permanent_background = cell.decoupling;
  return {cell.name(), o};
}

}  // namespace

std::vector<MetricRow> metric_rows(const ExperimentRecord& record) {
  std::vector<MetricRow> rows;
  for (const StepRecord& step : record.steps) {
    for (const VariantMetrics& v : step.variants) {
      for (const char* group : {"initial", "new", "all"}) {
        const auto it = v.groups.find(group);
        if (it == v.groups.end()) continue;
        rows.push_back({record.run, v.name, step.step, group, it->second.miou, it->second.posterior_accuracy,
                        it->second.pixel_accuracy});
      }
    }
  }
  return rows;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << kMetricsSchema << '\n' << "run,variant,step,group,miou,posterior_accuracy,pixel_accuracy\n";
  for (const MetricRow& r : rows) {
    out << r.run << ',' << r.variant << ',' << r.step << ',' << r.group << ',' << fixed(r.miou) << ','
        << fixed(r.posterior_accuracy) << ',' << fixed(r.pixel_accuracy) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != kMetricsSchema) {
    throw std::runtime_error("metrics CSV: first line must be '" + std::string(kMetricsSchema) + "'");
  }
  ++line_no;
  if (!std::getline(in, line)) throw std::runtime_error("metrics CSV: missing header");
  ++line_no;
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) {
      throw std::runtime_error("metrics CSV line " + std::to_string(line_no) + ": expected 7 fields, got " +
                               std::to_string(f.size()));
    }
    MetricRow r;
    r.run = f[0];
    r.variant = f[1];
    r.step = static_cast<std::size_t>(parse_double(f[2], line_no));
    r.group = f[3];
    r.miou = parse_double(f[4], line_no);
    r.posterior_accuracy = parse_double(f[5], line_no);
    r.pixel_accuracy = parse_double(f[6], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_iou_csv(std::ostream& out, std::span<const ExperimentRecord* const> records) {
  out << kIouSchema << '\n' << "run,variant,step,category,iou\n";
  for (const ExperimentRecord* record : records) {
    for (const StepRecord& step : record->steps) {
      for (const VariantMetrics& v : step.variants) {
        for (const auto& [category, iou] : v.iou) {
          out << record->run << ',' << v.name << ',' << step.step << ',' << category << ',' << fixed(iou) << '\n';
        }
      }
    }
  }
}

std::uint64_t model_digest(const IncrementalModel& model) {
  Fnv1a h;
  for (const nn::Parameter* p : model.parameters()) {
    h.update(p->name);
    h.update(p->value.data(), p->value.size() * sizeof(float));
  }
  return h.digest();
}

InferenceVariant configured_variant(const RunConfig& config) { return {"configured", config.inference}; }

ScenarioOutcome run_experiment(const RunConfig& config, std::span<const Sample> train,
                               std::span<const Sample> validation, std::ostream* events) {
  config.validate();
  ExperimentSetup setup;
  setup.run = config.run;
  setup.scenario = config.scenario;
  setup.model = config.model;
  setup.training = config.training;
  setup.variants = {configured_variant(config)};
  setup.include_background = config.include_background;
  setup.events = events;
  return run_scenario(setup, train, validation);
}

std::string AblationCell::name() const {
  return std::string("ip") + (image_posterior ? "1" : "0") + "-sd" + (decoupling ? "1" : "0") + "-nf" +
         (noise_filter ? "1" : "0");
}

std::vector<AblationCell> ablation_cells() {
  return {{false, false, false}, {true, false, false}, {false, true, false}, {true, true, false}, {true, true, true}};
}

const AblationRow& AblationResult::row(const AblationCell& cell) const {
  for (const AblationRow& r : rows) {
    if (r.cell.name() == cell.name()) return r;
  }
  throw std::out_of_range("no ablation row " + cell.name());
}

AblationResult run_ablation_matrix(const RunConfig& config, std::span<const Sample> train,
                                   std::span<const Sample> validation, std::ostream* events,
                                   const std::function<void(ExperimentSetup&)>& customize) {
  config.validate();
  AblationResult result;
  const auto cells = ablation_cells();
  for (bool decoupling : {false, true}) {
    ExperimentSetup setup;
    setup.run = config.run + (decoupling ? "-sd1" : "-sd0");
    setup.scenario = config.scenario;
    setup.model = config.model;
    setup.training = config.training;
    setup.training.decoupling = decoupling;
    setup.include_background = config.include_background;
    setup.events = events;
    for (const AblationCell& cell : cells) {
      if (cell.decoupling == decoupling) setup.variants.push_back(cell_variant(cell, config.inference));
    }
    if (customize) customize(setup);
    log::info("ablation: training " + setup.run);
    ScenarioOutcome outcome = run_scenario(setup, train, validation);
    const std::string checkpoint = hex_digest(model_digest(*outcome.model));
    for (const AblationCell& cell : cells) {
      if (cell.decoupling != decoupling) continue;
      const VariantMetrics& m = outcome.record.final_metrics(cell.name());
      AblationRow row;
      row.cell = cell;
      row.initial = m.groups.at("initial").miou;
      row.added = m.groups.count("new") ? m.groups.at("new").miou : 0.0;
      row.all = m.groups.at("all").miou;
      row.checkpoint = checkpoint;
      result.rows.push_back(row);
    }
    (decoupling ? result.with_decoupling : result.without_decoupling) = std::move(outcome.record);
  }
  std::vector<AblationRow> ordered;
  for (const AblationCell& cell : cells) ordered.push_back(result.row(cell));
  result.rows = std::move(ordered);
  return result;
}

void write_ablation_csv(std::ostream& out, const std::string& run, const AblationResult& result) {
  out << kAblationSchema << '\n' << "run,ip,sd,nf,initial,new,all,checkpoint\n";
  for (const AblationRow& r : result.rows) {
    out << run << ',' << r.cell.image_posterior << ',' << r.cell.decoupling << ',' << r.cell.noise_filter << ','
        << fixed(r.initial) << ',' << fixed(r.added) << ',' << fixed(r.all) << ',' << r.checkpoint << '\n';
  }
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream out;
  out << " IP  SD  NF | initial     new     all\n";
  out << "------------+------------------------\n";
  auto mark = [](bool on) { return on ? " x  " : " -  "; };
  const double base = result.rows.empty() ? 0.0 : result.rows.front().all;
  for (const AblationRow& r : result.rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s%s%s|  %6.2f  %6.2f  %6.2f", mark(r.cell.image_posterior),
                  mark(r.cell.decoupling), mark(r.cell.noise_filter), 100 * r.initial, 100 * r.added, 100 * r.all);
    out << line;
    if (&r != &result.rows.front()) {
      std::snprintf(line, sizeof(line), " (%+.2f)", 100 * (r.all - base));
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<PlotSeries> all_miou_series(std::span<const MetricRow> rows) {
  std::map<std::string, PlotSeries> by_label;
  std::vector<std::string> order;
  for (const MetricRow& r : rows) {
    if (r.group != "all") continue;
    const std::string label = r.run + "/" + r.variant;
    auto [it, inserted] = by_label.try_emplace(label);
    if (inserted) {
      it->second.label = label;
      order.push_back(label);
    }
    it->second.points.emplace_back(r.step, r.miou);
  }
  std::vector<PlotSeries> out;
  for (const std::string& label : order) {
    PlotSeries s = by_label.at(label);
    std::sort(s.points.begin(), s.points.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_svg(std::span<const PlotSeries> series, const std::string& title) {
  constexpr int width = 640, height = 400;
  constexpr int left = 60, right = 200, top = 40, bottom = 50;
  constexpr int plot_w = width - left - right, plot_h = height - top - bottom;
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  std::size_t max_step = 1;
  for (const PlotSeries& s : series) {
    for (const auto& p : s.points) max_step = std::max(max_step, p.first);
  }
  auto x_of = [&](double step) {
    return max_step <= 1 ? left + plot_w / 2.0 : left + (step - 1) * plot_w / static_cast<double>(max_step - 1);
  };
  auto y_of = [&](double v) { return top + (1.0 - std::clamp(v, 0.0, 1.0)) * plot_h; };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    const std::string y = fixed(y_of(v), 2);
    out << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"11\" "
        << "text-anchor=\"end\">" << fixed(v, 2) << "</text>\n";
  }
  for (std::size_t step = 1; step <= max_step; ++step) {
    const std::string x = fixed(x_of(static_cast<double>(step)), 2);
    out << "<line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x << "\" y2=\"" << top + plot_h + 4
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << top + plot_h + 18 << "\" font-family=\"sans-serif\" font-size=\"11\" "
        << "text-anchor=\"middle\">" << step << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";
  out << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 14 " << top + plot_h / 2 << ")\" text-anchor=\"middle\">all mIoU</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = palette[k % std::size(palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i) {
      const auto& [step, v] = series[k].points[i];
      out << (i ? " " : "") << fixed(x_of(static_cast<double>(step)), 2) << ',' << fixed(y_of(v), 2);
    }
    out << "\"/>\n";
    const int ly = top + 10 + static_cast<int>(k) * 18;
    out << "<line x1=\"" << left + plot_w + 16 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 36 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + plot_w + 42 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << xml_escape(series[k].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ipseg
