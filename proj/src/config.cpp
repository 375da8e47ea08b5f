#include "ipseg/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>

namespace ipseg {

namespace {

// Seeds are std::uint64_t, counts std::size_t; both bind to the same alternative.
static_assert(std::is_same_v<std::uint64_t, std::size_t>);
using Target = std::variant<bool*, int*, std::size_t*, double*, std::string*>;

struct Binding {
  const char* name;
  const char* description;
  Target target;
};

std::vector<Binding> bindings(RunConfig& c) {
  return {
      {"run", "run name written into every CSV row", &c.run},
      {"data.seed", "dataset generator seed", &c.data.seed},
      {"data.categories", "number of categories K (4..12)", &c.data.num_categories},
      {"data.train_count", "training images", &c.data.sample_count},
      {"data.validation_count", "validation images", &c.validation_count},
      {"data.width", "image width (multiple of 4)", &c.data.width},
      {"data.height", "image height (multiple of 4)", &c.data.height},
      {"data.max_objects", "objects per image, at most", &c.data.max_objects},
      {"scenario.initial", "categories learned in step 1", &c.scenario.initial_count},
      {"scenario.per_step", "categories added per later step", &c.scenario.per_step},
      {"scenario.overlap", "keep images that also show future categories", &c.scenario.overlap},
      {"model.stem_channels", "channels of the first backbone stage", &c.model.stem_channels},
      {"model.feature_channels", "backbone output channels", &c.model.feature_channels},
      {"model.head_channels", "first hidden width of every head", &c.model.head_channels},
      {"model.posterior_hidden", "width of the image-posterior embedding and trunk", &c.model.posterior_hidden},
      {"model.posterior_layers", "fully connected trunk layers of the image posterior", &c.model.posterior_layers},
      {"model.seed", "weight initialisation seed", &c.model.seed},
      {"train.epochs", "epochs per step", &c.training.epochs},
      {"train.batch_size", "images per batch", &c.training.batch_size},
      {"train.learning_rate", "base SGD learning rate", &c.training.sgd.learning_rate},
      {"train.momentum", "SGD momentum", &c.training.sgd.momentum},
      {"train.weight_decay", "L2 weight decay", &c.training.sgd.weight_decay},
      {"train.poly_power", "exponent of the poly learning-rate decay", &c.training.poly_power},
      {"train.posterior_lr_scale", "learning-rate multiplier of the image posterior", &c.training.posterior_lr_scale},
      {"train.lambda1", "weight of the current-head loss", &c.training.lambda1},
      {"train.lambda2", "weight of the permanent-head loss", &c.training.lambda2},
      {"train.mix_ratio", "fraction of each batch drawn from memory", &c.training.mix_ratio},
      {"train.memory_size", "memory buffer capacity", &c.training.memory_size},
      {"train.pseudo_threshold", "confidence for old-category pixel pseudo-labels (tau)", &c.training.pseudo_threshold},
      {"train.coverage_threshold", "pixel fraction for an image-level pseudo-label (rho)",
       &c.training.coverage_threshold},
      {"train.pseudo_image_labels", "add old categories found by pseudo-labels to image labels",
       &c.training.pseudo_image_labels},
      {"train.decoupling", "train the permanent head (semantics decoupling)", &c.training.decoupling},
      {"train.saliency_flip_rate", "pixel flip probability of the saliency stand-in", &c.training.saliency_flip_rate},
      {"train.saliency_dilation", "dilation radius of the saliency stand-in", &c.training.saliency_dilation},
      {"train.seed", "shuffling, memory mixing and saliency seed", &c.training.seed},
      {"infer.image_posterior", "multiply pixel scores by the image posterior", &c.inference.image_posterior},
      {"infer.noise_filter", "down-weight categories beaten by their head's other-foreground score",
       &c.inference.noise_filter},
      {"infer.permanent_background", "background score from the permanent head", &c.inference.permanent_background},
      {"infer.alpha_bc", "posterior factor of the background score", &c.inference.alpha_bc},
      {"infer.alpha_nf", "noise-filter factor", &c.inference.alpha_nf},
      {"eval.include_background", "count background in mIoU", &c.include_background},
  };
}

std::string format_value(const Target& target) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else {
          char buf[64];
          const auto r = std::to_chars(buf, buf + sizeof(buf), *p);
          return std::string(buf, r.ptr);
        }
      },
      target);
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  const auto r = std::from_chars(text.data(), text.data() + text.size(), out);
  return r.ec == std::errc() && r.ptr == text.data() + text.size();
}

// Returns an empty string on success, else what was expected.
std::string assign(const Target& target, std::string_view text) {
  return std::visit(
      [text](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (text == "true" || text == "1") *p = true;
          else if (text == "false" || text == "0") *p = false;
          else return "true or false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (text.empty()) return "a non-empty string";
          *p = std::string(text);
        } else if constexpr (std::is_same_v<T, double>) {
          if (!parse_number(text, *p)) return "a number";
        } else if constexpr (std::is_same_v<T, int>) {
          if (!parse_number(text, *p)) return "an integer";
        } else {
          if (!parse_number(text, *p)) return "a non-negative integer";
        }
        return "";
      },
      target);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void set_key(RunConfig& config, std::string_view key, std::string_view value, const std::string& where) {
  for (const Binding& b : bindings(config)) {
    if (key != b.name) continue;
    const std::string expected = assign(b.target, value);
    if (!expected.empty()) {
      throw ConfigError(where + ": " + std::string(key) + " expects " + expected + ", got '" + std::string(value) +
                        "'");
    }
    return;
  }
  throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
}

}  // namespace

RunConfig::RunConfig() {
  data.num_categories = 8;
  scenario.num_categories = 8;
}

GeneratorConfig RunConfig::train_data() const {
  GeneratorConfig g = data;
  g.id_prefix = "train";
  return g;
}

GeneratorConfig RunConfig::validation_data() const {
  GeneratorConfig g = data;
  g.id_prefix = "val";
  g.sample_count = validation_count;
  return g;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(data.num_categories >= 4 && data.num_categories <= 12, "data.categories must lie in [4, 12]");
  require(data.sample_count > 0 && validation_count > 0, "data.train_count and data.validation_count must be positive");
  require(data.width >= 8 && data.height >= 8 && data.width % 4 == 0 && data.height % 4 == 0,
          "data.width and data.height must be multiples of 4, at least 8");
  require(data.max_objects >= 1, "data.max_objects must be positive");
  require(scenario.num_categories == data.num_categories, "scenario must cover data.categories");
  require(model.stem_channels > 0 && model.feature_channels > 0 && model.head_channels > 0 &&
              model.posterior_hidden > 0 && model.posterior_layers > 0,
          "model widths and model.posterior_layers must be positive");
  require(training.epochs > 0, "train.epochs must be positive");
  require(inference.alpha_bc > 0.0 && inference.alpha_bc <= 1.0, "infer.alpha_bc must lie in (0, 1]");
  require(inference.alpha_nf > 0.0 && inference.alpha_nf <= 1.0, "infer.alpha_nf must lie in (0, 1]");
  try {
    scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  try {
    training.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

std::vector<ConfigKey> config_keys() {
  RunConfig defaults;
  std::vector<ConfigKey> keys;
  for (const Binding& b : bindings(defaults)) keys.push_back({b.name, format_value(b.target), b.description});
  return keys;
}

RunConfig parse_config(std::string_view text, std::string_view origin) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!seen.insert(std::string(key)).second) throw ConfigError(where + ": duplicate key '" + std::string(key) + "'");
    set_key(config, key, value, where);
  }
  config.scenario.num_categories = config.data.num_categories;
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set_key(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
          "override '" + std::string(assignment) + "'");
  config.scenario.num_categories = config.data.num_categories;
  config.validate();
}

std::string format_config(const RunConfig& config) {
  RunConfig copy = config;
  std::ostringstream out;
  for (const Binding& b : bindings(copy)) out << b.name << " = " << format_value(b.target) << '\n';
  return out.str();
}

}  // namespace ipseg
