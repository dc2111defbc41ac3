#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "eql/data.hpp"
#include "eql/trainer.hpp"

namespace eql {

/// One experiment key. The same name is a `--key` flag and a `key=value` config line.
struct SettingSpec {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Every known key, defaults forming the standard long-tailed benchmark.
const std::vector<SettingSpec>& setting_specs();

/// String-valued experiment settings; typed parsing happens in resolve_experiment().
class Settings {
 public:
  Settings();

  /// Throws ParameterError for an unknown key.
  void set(std::string_view key, std::string value);
  const std::string& get(std::string_view key) const;
  bool explicitly_set(std::string_view key) const;

  /// `key=value` lines; `#` starts a comment; blank lines are ignored.
  /// Unknown keys and malformed lines throw IngestionError naming the line.
  void load_file(const std::filesystem::path& path);

  /// Applies the `config.*` entries of a run summary; other entries are ignored.
  void load_summary(const std::filesystem::path& path);

  const std::map<std::string, std::string, std::less<>>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::set<std::string, std::less<>> explicit_;
};

struct ExperimentConfig {
  SynthParams data{};
  double imbalance = 100.0;
  std::size_t test_per_class = 100;
  std::optional<std::filesystem::path> data_csv;
  double test_fraction = 0.3;
  TrainConfig train{};
  std::vector<std::size_t> group_bounds;  // empty: default_group_bounds(classes)
  bool evaluate_with_objectness = false;
};

/// Typed, validated view of the settings. Throws ParameterError.
ExperimentConfig resolve_experiment(const Settings& settings);

/// Fully resolved configuration as `config.<key>` entries.
Summary describe_config(const ExperimentConfig& config);

struct RunOutcome {
  ExperimentConfig config;
  TrainResult result;
  AccuracyReport report;
  double tail_ratio = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Synthesizes (or loads and splits) the data, trains, and evaluates on the held-out set.
/// Synthetic runs evaluate on a balanced draw of `test_per_class` instances per category
/// from the same cluster centers.
RunOutcome run_experiment(const ExperimentConfig& config, const IterationObserver& observer = {});

/// describe_config() plus `result.*` entries.
Summary run_summary(const RunOutcome& outcome);

struct CompareRow {
  LossVariant arm = LossVariant::bce;
  std::uint64_t seed = 0;
  AccuracyReport report;
  double tail_ratio = 0.0;
  double final_loss = 0.0;
  double max_loss_gap = 0.0;  // max |loss_t - loss_t(first arm)| over the trajectory
};

struct CompareReport {
  std::vector<LossVariant> arms;
  std::vector<std::uint64_t> seeds;
  std::vector<CompareRow> rows;  // arm-major: rows[a * seeds.size() + s]

  const CompareRow& at(std::size_t arm, std::size_t seed) const {
    return rows[arm * seeds.size() + seed];
  }
};

/// Matched-seed runs of every arm; the seed drives data, initialization and sampling.
/// Runs execute in parallel and share nothing.
CompareReport run_compare(const ExperimentConfig& base, const std::vector<LossVariant>& arms,
                          const std::vector<std::uint64_t>& seeds);

struct SweepRow {
  std::string name;  // mapping kind, or the baseline loss
  MappingFn mapping;
  std::vector<double> overall;  // per seed
  std::vector<double> tail;     // per seed (absent tail groups count as 0)
};

struct SweepReport {
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;
};

/// Sigmoid-EQL once per mapping kind (gamma/mu taken from `base`), optionally plus a BCE row.
SweepReport run_sweep(const ExperimentConfig& base, const std::vector<MappingKind>& maps,
                      const std::vector<std::uint64_t>& seeds, bool with_baseline);

double mean_of(const std::vector<double>& values);
/// Population standard deviation.
double stddev_of(const std::vector<double>& values);

}  // namespace eql
