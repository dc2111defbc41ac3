#include "eql/settings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "eql/error.hpp"

namespace eql {

const std::vector<SettingSpec>& setting_specs() {
  static const std::vector<SettingSpec> specs = {
      {"loss", "bce", "loss variant: bce, ce, focal, qfl, sigmoid-eql, softmax-eql, efl, eqfl"},
      {"classes", "20", "number of synthetic categories"},
      {"dim", "16", "feature dimension of synthetic data"},
      {"base-count", "500", "instances of the head category"},
      {"imbalance", "100", "head:tail instance ratio (sets decay unless decay is given)"},
      {"decay", "auto", "exponential count decay per category index"},
      {"spread", "1.2", "standard deviation of each Gaussian cluster"},
      {"test-per-class", "100", "balanced held-out instances per category (synthetic data)"},
      {"data", "", "CSV dataset to load instead of synthesizing"},
      {"test-fraction", "0.3", "held-out fraction when loading a CSV dataset"},
      {"iters", "2000", "training iterations"},
      {"batch-size", "64", "instances per batch"},
      {"lr", "1.0", "learning rate"},
      {"momentum", "0.9", "SGD momentum"},
      {"seed", "1", "64-bit seed for data, initialization and sampling"},
      {"telemetry-every", "50", "telemetry cadence in iterations (0 disables)"},
      {"hidden", "0", "hidden units (0: linear classifier)"},
      {"activation", "relu", "hidden activation: relu or tanh"},
      {"objectness", "false", "train an objectness head and compose it at evaluation"},
      {"bias-init", "auto", "classifier bias (auto: 0.001 for equalized losses, else 0)"},
      {"alpha", "4", "Sigmoid-EQL positive up-weight strength"},
      {"map", "sigmoid_like", "Sigmoid-EQL mapping: linear, sqrt, exp, sigmoid_like"},
      {"gamma", "12", "sigmoid-like mapping steepness"},
      {"mu", "0.8", "sigmoid-like mapping inflection point"},
      {"pi", "1", "Softmax-EQL calibration degree"},
      {"alpha-t", "0.25", "focal balance factor for positives"},
      {"alpha-weighting", "true", "apply alpha-t / (1 - alpha-t) in focal and EFL"},
      {"gamma-b", "2", "base focusing parameter"},
      {"s", "8", "EFL/EQFL focusing scale"},
      {"reduction", "mean", "mean or sum"},
      {"quality-target", "1", "soft target of the labelled category for qfl/eqfl"},
      {"initial-ratio", "1", "gradient ratio reported before any gradient is seen"},
      {"accumulate-base", "false", "accumulate un-equalized loss gradients"},
      {"force-balanced-stats", "false", "weight every iteration as if all ratios were 1"},
      {"groups", "auto", "comma-separated category cut points for grouped accuracy"},
  };
  return specs;
}

namespace {

const SettingSpec* find_spec(std::string_view key) {
  const auto& specs = setting_specs();
  const auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.key == key; });
  return it == specs.end() ? nullptr : &*it;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Settings::Settings() {
  for (const auto& s : setting_specs()) values_[s.key] = s.default_value;
}

void Settings::set(std::string_view key, std::string value) {
  if (!find_spec(key)) throw ParameterError("unknown setting '" + std::string(key) + "'");
  values_[std::string(key)] = std::move(value);
  explicit_.insert(std::string(key));
}

const std::string& Settings::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ParameterError("unknown setting '" + std::string(key) + "'");
  return it->second;
}

bool Settings::explicitly_set(std::string_view key) const { return explicit_.contains(key); }

void Settings::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw IngestionError(where + ": expected key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (!find_spec(key)) throw IngestionError(where + ": unknown key '" + key + "'");
    set(key, trim(std::string_view(body).substr(eq + 1)));
  }
}

void Settings::load_summary(const std::filesystem::path& path) {
  constexpr std::string_view prefix = "config.";
  for (const auto& [key, value] : read_summary(path)) {
    if (!key.starts_with(prefix)) continue;
    const std::string name = key.substr(prefix.size());
    if (!find_spec(name)) throw IngestionError(path.string() + ": unknown key '" + key + "'");
    set(name, value);
  }
}

namespace {

template <typename T>
T parse_number(const Settings& s, std::string_view key) {
  const std::string& text = s.get(key);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("setting '" + std::string(key) + "': cannot parse '" + text + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ParameterError("setting '" + std::string(key) + "' must be finite");
    }
  }
  return value;
}

bool parse_bool(const Settings& s, std::string_view key) {
  const std::string& text = s.get(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ParameterError("setting '" + std::string(key) + "': expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_index_list(const std::string& text, std::string_view key) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(std::string_view(text).substr(start, comma - start));
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ParameterError("setting '" + std::string(key) + "': bad list '" + text + "'");
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

ExperimentConfig resolve_experiment(const Settings& s) {
  ExperimentConfig c;
  c.data.classes = parse_number<std::size_t>(s, "classes");
  c.data.dim = parse_number<std::size_t>(s, "dim");
  c.data.base_count = parse_number<std::size_t>(s, "base-count");
  c.data.cluster_spread = parse_number<double>(s, "spread");
  c.imbalance = parse_number<double>(s, "imbalance");
  if (s.get("decay") == "auto") {
    c.data.decay = decay_for_imbalance(c.imbalance, c.data.classes);
  } else {
    c.data.decay = parse_number<double>(s, "decay");
  }
  c.test_per_class = parse_number<std::size_t>(s, "test-per-class");
  if (!s.get("data").empty()) c.data_csv = s.get("data");
  c.test_fraction = parse_number<double>(s, "test-fraction");

  TrainConfig& t = c.train;
  t.loss.variant = parse_loss_variant(s.get("loss"));
  t.loss.alpha = parse_number<double>(s, "alpha");
  t.loss.mapping.kind = parse_mapping_kind(s.get("map"));
  t.loss.mapping.gamma = parse_number<double>(s, "gamma");
  t.loss.mapping.mu = parse_number<double>(s, "mu");
  t.loss.pi = parse_number<double>(s, "pi");
  t.loss.alpha_t = parse_number<double>(s, "alpha-t");
  t.loss.alpha_weighting = parse_bool(s, "alpha-weighting");
  t.loss.gamma_b = parse_number<double>(s, "gamma-b");
  t.loss.s = parse_number<double>(s, "s");
  t.loss.reduction = parse_reduction(s.get("reduction"));
  t.iterations = parse_number<std::size_t>(s, "iters");
  t.batch_size = parse_number<std::size_t>(s, "batch-size");
  t.learning_rate = parse_number<double>(s, "lr");
  t.momentum = parse_number<double>(s, "momentum");
  t.seed = parse_number<std::uint64_t>(s, "seed");
  t.telemetry_every = parse_number<std::size_t>(s, "telemetry-every");
  t.hidden_units = parse_number<std::size_t>(s, "hidden");
  const std::string& act = s.get("activation");
  if (act == "relu") {
    t.activation = Activation::relu;
  } else if (act == "tanh") {
    t.activation = Activation::tanh;
  } else {
    throw ParameterError("setting 'activation': expected relu or tanh");
  }
  t.objectness_head = parse_bool(s, "objectness");
  c.evaluate_with_objectness = t.objectness_head;
  if (s.get("bias-init") != "auto") t.bias_init = parse_number<double>(s, "bias-init");
  t.quality_target = parse_number<double>(s, "quality-target");
  t.initial_ratio = parse_number<double>(s, "initial-ratio");
  t.accumulate_base_gradients = parse_bool(s, "accumulate-base");
  t.force_balanced_stats = parse_bool(s, "force-balanced-stats");
  if (s.get("groups") != "auto") {
    c.group_bounds = parse_index_list(s.get("groups"), "groups");
    std::size_t prev = 0;
    for (std::size_t b : c.group_bounds) {
      if (b <= prev) throw ParameterError("setting 'groups': cut points must be increasing and > 0");
      if (!c.data_csv && b >= c.data.classes) {
        throw ParameterError("setting 'groups': cut points must be < classes");
      }
      prev = b;
    }
  }

  t.validate();
  if (!c.data_csv) {
    if (c.data.classes < 2) throw ParameterError("classes must be >= 2");
    if (c.data.dim < 1) throw ParameterError("dim must be >= 1");
    if (c.data.base_count < 1) throw ParameterError("base-count must be >= 1");
    if (!(c.data.cluster_spread > 0.0)) throw ParameterError("spread must be > 0");
    if (!(c.data.decay >= 0.0)) throw ParameterError("decay must be >= 0");
    if (c.test_per_class < 1) throw ParameterError("test-per-class must be >= 1");
  }
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) {
    throw ParameterError("test-fraction must lie in (0, 1)");
  }
  return c;
}

Summary describe_config(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  Summary out;
  auto put = [&](const std::string& key, std::string value) { out["config." + key] = std::move(value); };
  put("loss", std::string(to_string(t.loss.variant)));
  put("classes", std::to_string(c.data.classes));
  put("dim", std::to_string(c.data.dim));
  put("base-count", std::to_string(c.data.base_count));
  put("imbalance", format_real(c.imbalance));
  put("decay", format_real(c.data.decay));
  put("spread", format_real(c.data.cluster_spread));
  put("test-per-class", std::to_string(c.test_per_class));
  put("data", c.data_csv ? c.data_csv->string() : "");
  put("test-fraction", format_real(c.test_fraction));
  put("iters", std::to_string(t.iterations));
  put("batch-size", std::to_string(t.batch_size));
  put("lr", format_real(t.learning_rate));
  put("momentum", format_real(t.momentum));
  put("seed", std::to_string(t.seed));
  put("telemetry-every", std::to_string(t.telemetry_every));
  put("hidden", std::to_string(t.hidden_units));
  put("activation", t.activation == Activation::relu ? "relu" : "tanh");
  put("objectness", t.objectness_head ? "true" : "false");
  put("bias-init", format_real(t.resolved_bias_init()));
  put("alpha", format_real(t.loss.alpha));
  put("map", std::string(to_string(t.loss.mapping.kind)));
  put("gamma", format_real(t.loss.mapping.gamma));
  put("mu", format_real(t.loss.mapping.mu));
  put("pi", format_real(t.loss.pi));
  put("alpha-t", format_real(t.loss.alpha_t));
  put("alpha-weighting", t.loss.alpha_weighting ? "true" : "false");
  put("gamma-b", format_real(t.loss.gamma_b));
  put("s", format_real(t.loss.s));
  put("reduction", std::string(to_string(t.loss.reduction)));
  put("quality-target", format_real(t.quality_target));
  put("initial-ratio", format_real(t.initial_ratio));
  put("accumulate-base", t.accumulate_base_gradients ? "true" : "false");
  put("force-balanced-stats", t.force_balanced_stats ? "true" : "false");
  std::string groups;
  for (std::size_t b : c.group_bounds) groups += (groups.empty() ? "" : ",") + std::to_string(b);
  put("groups", groups.empty() ? "auto" : groups);
  return out;
}

}  // namespace eql
