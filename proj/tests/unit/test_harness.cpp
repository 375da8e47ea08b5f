#include <doctest.h>

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "ipseg/config.hpp"
#include "ipseg/metrics.hpp"
#include "ipseg/report.hpp"
#include "ipseg/rng.hpp"
#include "toy_run.hpp"

using namespace ipseg;

namespace {

const std::vector<int> kCodes{0, 1, 2, 3};

DecisionMap decision_of(std::vector<std::uint8_t> v, std::size_t w = 4) {
  const std::size_t h = v.size() / w;
  return DecisionMap(w, h, std::move(v));
}
GroundTruthMap truth_of(std::vector<std::uint8_t> v, std::size_t w = 4) {
  const std::size_t h = v.size() / w;
  return GroundTruthMap(w, h, std::move(v));
}

// Set of codes present in a decision map, built independently of pixel_labels.
CategorySet categories_in(const DecisionMap& d) {
  std::set<int> s(d.values().begin(), d.values().end());
  CategorySet out;
  for (int c : s)
    if (c != 0) out.insert(c);
  return out;
}

RunConfig small_config() {
  RunConfig c;
  c.run = "small";
  c.data.num_categories = 6;
  c.scenario.num_categories = 6;
  c.data.sample_count = 96;
  c.validation_count = 12;
  c.data.width = c.data.height = 32;
  c.training.epochs = 5;
  c.training.memory_size = 8;
  return c;
}

}  // namespace

TEST_CASE("prediction equal to truth gives IoU 1 for every present category") {
  Rng rng(1);
  std::vector<std::uint8_t> v(64);
  for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(3));
  const auto r = miou(decision_of(v, 8), truth_of(v, 8), kCodes);
  CHECK(r.per_category.count(3) == 0);
  for (const auto& [c, iou] : r.per_category) CHECK(iou == 1.0);
  CHECK(r.mean == 1.0);
}

TEST_CASE("disjoint prediction and truth give IoU 0") {
  const auto r = miou(decision_of({1, 1, 0, 0}), truth_of({0, 0, 1, 1}), kCodes);
  CHECK(r.per_category.at(1) == 0.0);
  CHECK(r.per_category.at(0) == 0.0);
}

TEST_CASE("4x4 hand-built map with intersection 2 and union 4 gives IoU 0.5") {
  // Category 1: predicted at 0,1,2; true at 1,2,3 -> intersection 2, union 4.
  const auto pred = decision_of({1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto gt = truth_of({0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto r = miou(pred, gt, kCodes);
  CHECK(r.per_category.at(1) == 0.5);
  // Background: intersection 12, union 14.
  CHECK(r.per_category.at(0) == doctest::Approx(12.0 / 14.0));
  CHECK(r.mean == doctest::Approx((0.5 + 12.0 / 14.0) / 2));
}

TEST_CASE("ignore pixels are excluded") {
  const auto r = miou(decision_of({1, 1, 0, 0}), truth_of({1, 255, 0, 255}), kCodes);
  CHECK(r.per_category.at(1) == 1.0);
  CHECK(r.per_category.at(0) == 1.0);
}

TEST_CASE("accumulated IoU over several maps pools pixel counts") {
  IouAccumulator acc;
  acc.add(decision_of({1, 1, 0, 0}), truth_of({1, 0, 0, 0}));
  acc.add(decision_of({0, 0, 0, 1}), truth_of({0, 0, 1, 1}));
  const auto iou = acc.per_category(kCodes);
  CHECK(iou.at(1) == doctest::Approx(2.0 / 4.0));
  CHECK(acc.mean(kCodes) == doctest::Approx((iou.at(0) + iou.at(1)) / 2));
}

TEST_CASE("image-level accuracy: perfect, empty posterior and scope") {
  const std::vector<CategorySet> truth{{1}, {1, 2}, {3}};
  CHECK(image_level_accuracy(truth, truth, CategorySet{1, 2, 3}) == 1.0);
  const std::vector<float> low{0.1f, 0.2f, 0.3f};
  std::vector<CategorySet> none;
  for (int i = 0; i < 3; ++i) none.push_back(posterior_labels(low, CategorySet{1, 2, 3}));
  CHECK(image_level_accuracy(none, truth, CategorySet{1, 2, 3}) == 0.0);
  const std::vector<CategorySet> off{{1}, {1}, {3}};
  CHECK(image_level_accuracy(off, truth, CategorySet{1, 2, 3}) == doctest::Approx(2.0 / 3.0));
  CHECK(image_level_accuracy(off, truth, CategorySet{1, 3}) == 1.0);
  const std::vector<float> probs{0.5f, 0.49f, 0.9f};
  CHECK(posterior_labels(probs, CategorySet{2, 4, 6}) == (CategorySet{2, 6}));
}

TEST_CASE("pixel-mode labels agree with an independent set builder") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    DecisionMap d(6, 6);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.bernoulli(0.9) ? 0 : static_cast<std::uint8_t>(rng.below(7));
    CHECK(pixel_labels(d) == categories_in(d));
  }
}

TEST_CASE("config text parses, round-trips and rejects bad input with the line number") {
  const auto c = parse_config("# comment\nrun = demo\n\ntrain.epochs = 3 # trailing\ninfer.alpha_nf=0.5\n");
  CHECK(c.run == "demo");
  CHECK(c.training.epochs == 3);
  CHECK(c.inference.alpha_nf == 0.5);
  CHECK(c.training.lambda1 == 0.5);
  const auto again = parse_config(format_config(c));
  CHECK(format_config(again) == format_config(c));

  auto message = [](const std::string& text) {
    try {
      parse_config(text, "t.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("run = a\nbogus.key = 1\n").find("t.cfg:2") != std::string::npos);
  CHECK(message("train.epochs = 3\ntrain.epochs = 4\n").find("t.cfg:2") != std::string::npos);
  CHECK(message("train.epochs = many\n").find("t.cfg:1") != std::string::npos);
  CHECK(message("train.epochs\n").find("t.cfg:1") != std::string::npos);
  CHECK(message("infer.noise_filter = maybe\n").find("t.cfg:1") != std::string::npos);
  CHECK_FALSE(message("infer.alpha_nf = 1.5\n").empty());
}

TEST_CASE("every documented key has a default that parses back") {
  std::string text;
  for (const auto& k : config_keys()) text += k.name + " = " + k.default_value + "\n";
  const auto c = parse_config(text);
  CHECK(format_config(c) == format_config(RunConfig{}));
  RunConfig o;
  apply_override(o, "train.memory_size=12");
  CHECK(o.training.memory_size == 12);
  CHECK_THROWS_AS(apply_override(o, "train.memory_size"), ConfigError);
}

TEST_CASE("metrics CSV writes fixed decimals and reads back") {
  const std::vector<MetricRow> rows{{"r", "full", 1, "all", 0.5, 0.25, 1.0}, {"r", "full", 2, "new", 1.0 / 3, 0, 0}};
  std::ostringstream out;
  write_metrics_csv(out, rows);
  CHECK(out.str().rfind(std::string(kMetricsSchema) + "\n", 0) == 0);
  CHECK(out.str().find("r,full,2,new,0.333333,0.000000,0.000000") != std::string::npos);
  std::istringstream in(out.str());
  const auto back = read_metrics_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].miou == doctest::Approx(0.333333));
  std::istringstream bad("run,variant\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), std::runtime_error);
}

TEST_CASE("SVG output is deterministic and uses only the allowed elements") {
  const std::vector<PlotSeries> series{{"a", {{1, 0.5}, {2, 0.4}, {3, 0.45}}}, {"b<&>", {{1, 0.6}, {2, 0.55}}}};
  const auto svg = render_svg(series, "mIoU");
  CHECK(svg == render_svg(series, "mIoU"));
  CHECK(svg.find("b&lt;&amp;&gt;") != std::string::npos);
  const std::regex tag("<([a-zA-Z?!][a-zA-Z0-9]*)");
  std::set<std::string> tags;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator(); ++it)
    tags.insert((*it)[1]);
  for (const auto& t : tags) CHECK((t == "svg" || t == "line" || t == "polyline" || t == "text" || t == "?xml"));
}

TEST_CASE("empty input gives a valid empty-axes SVG") {
  const auto svg = render_svg({}, "empty");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") == std::string::npos);
  CHECK(svg.find("<line") != std::string::npos);
}

TEST_CASE("two identical series share identical polyline points") {
  const std::vector<PlotSeries> series{{"x", {{1, 0.7}, {2, 0.6}}}, {"y", {{1, 0.7}, {2, 0.6}}}};
  const auto svg = render_svg(series, "t");
  const std::regex points("points=\"([^\"]*)\"");
  std::vector<std::string> found;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), points); it != std::sregex_iterator(); ++it)
    found.push_back((*it)[1]);
  REQUIRE(found.size() == 2);
  CHECK(found[0] == found[1]);
}

TEST_CASE("inference-only switches leave the trained checkpoints identical") {
  const auto config = small_config();
  const auto train = generate_dataset(config.train_data());
  const auto validation = generate_dataset(config.validation_data());
  const auto result = run_ablation_matrix(config, train, validation);
  REQUIRE(result.rows.size() == 5);
  const auto& none = result.row({false, false, false});
  const auto& ip = result.row({true, false, false});
  const auto& sd = result.row({false, true, false});
  const auto& ip_sd = result.row({true, true, false});
  const auto& all = result.row({true, true, true});
  CHECK(none.checkpoint == ip.checkpoint);
  CHECK(sd.checkpoint == ip_sd.checkpoint);
  CHECK(ip_sd.checkpoint == all.checkpoint);
  CHECK(none.checkpoint != sd.checkpoint);
  for (const auto& r : result.rows) {
    CHECK((r.all >= 0.0 && r.all <= 1.0));
    CHECK((r.initial >= 0.0 && r.initial <= 1.0));
  }
  std::ostringstream csv;
  write_ablation_csv(csv, config.run, result);
  const std::string text = csv.str();
  CHECK(text.rfind(std::string(kAblationSchema) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK(format_ablation_table(result).find(" x   x   x  |") != std::string::npos);
}

TEST_CASE("all-off baseline has no permanent branch and no fusion") {
  const auto cells = ablation_cells();
  REQUIRE(cells.size() == 5);
  CHECK(cells.front().name() == "ip0-sd0-nf0");
  CHECK(cells.back().name() == "ip1-sd1-nf1");
  auto c = small_config();
  c.training.decoupling = false;
  c.inference.image_posterior = false;
  c.inference.noise_filter = false;
  const auto v = configured_variant(c);
  CHECK_FALSE(v.options.image_posterior);
  CHECK_FALSE(v.options.noise_filter);
}

TEST_CASE("metric rows decompose: all-group mIoU is the mean over its member categories") {
  const auto& record = toy::outcome().record;
  for (const auto& step : record.steps) {
    const auto& v = step.variants[0];
    double sum = 0.0;
    int n = 0;
    for (const auto& [c, iou] : v.iou) {
      CHECK((iou >= 0.0 && iou <= 1.0));
      sum += iou;
      ++n;
    }
    CHECK(v.groups.at("all").miou == doctest::Approx(sum / n));
  }
  const auto rows = metric_rows(record);
  CHECK_FALSE(rows.empty());
  const auto series = all_miou_series(rows);
  REQUIRE(series.size() == 1);
  CHECK(series[0].points.size() == record.steps.size());
}
