// eql: training experiments, gradient checks, A/B loss comparisons and
// mapping-function sweeps for the equalization loss family.
//
// Exit status: 0 success, 1 usage/configuration error, 2 runtime or numeric error
// (including a failed gradient check).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eql/error.hpp"
#include "eql/settings.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Error raised while turning arguments into a configuration.
struct UsageError : eql::Error {
  using eql::Error::Error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("at least one seed is required");
  return out;
}

/// The experiment keys registered as flags on one subcommand.
struct SettingFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string summary_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value file; flags override it");
    cmd->add_option("--from-summary", summary_path, "reuse the configuration echoed in a run summary");
    for (const auto& spec : eql::setting_specs()) {
      const std::string shown = spec.default_value.empty() ? "" : " [" + spec.default_value + "]";
      options[spec.key] = cmd->add_option("--" + spec.key, values[spec.key], spec.help + shown);
    }
  }

  eql::ExperimentConfig resolve() const {
    try {
      eql::Settings settings;
      if (!summary_path.empty()) settings.load_summary(summary_path);
      if (!config_path.empty()) settings.load_file(config_path);
      for (const auto& [key, opt] : options) {
        if (opt->count() > 0) settings.set(key, values.at(key));
      }
      if (!settings.explicitly_set("seed")) {
        if (const char* env = std::getenv("EQL_SEED")) settings.set("seed", env);
      }
      return eql::resolve_experiment(settings);
    } catch (const eql::Error& e) {
      throw UsageError(e.what());
    }
  }
};

void print_accuracy_groups(std::ostream& out, const eql::AccuracyReport& report) {
  for (const auto& g : report.groups) {
    out << "  categories " << g.begin << "-" << g.end - 1 << ": ";
    if (g.accuracy) {
      out << std::fixed << std::setprecision(4) << *g.accuracy << " (" << g.count << " instances)\n";
    } else {
      out << "absent\n";
    }
  }
}

int cmd_train(const SettingFlags& flags, const std::string& out_prefix) {
  const eql::ExperimentConfig config = flags.resolve();
  const eql::RunOutcome run = eql::run_experiment(config);
  const std::filesystem::path telemetry = out_prefix + ".telemetry.csv";
  const std::filesystem::path summary = out_prefix + ".summary";
  if (telemetry.has_parent_path()) std::filesystem::create_directories(telemetry.parent_path());
  eql::write_telemetry_csv(telemetry, run.result.telemetry);
  eql::write_summary(summary, eql::run_summary(run));

  std::cout << "loss " << eql::to_string(config.train.loss.variant) << ", "
            << run.result.stats.iteration() << " iterations, final batch loss "
            << eql::format_real(run.result.loss_history.back()) << "\n";
  std::cout << "overall accuracy " << std::fixed << std::setprecision(4) << run.report.overall
            << ", tail-quartile mean ratio " << run.tail_ratio << "\n";
  print_accuracy_groups(std::cout, run.report);
  std::cout << "wrote " << telemetry.string() << " and " << summary.string() << "\n";
  return 0;
}

int cmd_gradcheck(const std::vector<std::string>& losses, bool all, std::size_t trials, double tol,
                  double step, std::uint64_t seed) {
  std::vector<eql::LossVariant> variants;
  try {
    if (all) {
      variants.assign(std::begin(eql::kAllLossVariants), std::end(eql::kAllLossVariants));
    }
    for (const auto& name : losses) {
      for (const auto& item : split_list(name)) variants.push_back(eql::parse_loss_variant(item));
    }
    if (variants.empty()) throw UsageError("name a loss with --loss or pass --all");
    if (trials < 1) throw eql::ParameterError("--trials must be >= 1");
    if (!(tol > 0.0)) throw eql::ParameterError("--tol must be > 0");
    if (!(step > 0.0)) throw eql::ParameterError("--step must be > 0");
  } catch (const eql::Error& e) {
    throw UsageError(e.what());
  }

  eql::GradCheckOptions options;
  options.trials = trials;
  options.tolerance = tol;
  options.step = step;
  options.seed = seed;
  bool all_pass = true;
  std::cout << "variant,trials,checked,excluded,max_rel_error,max_abs_error,status\n";
  for (eql::LossVariant v : variants) {
    const eql::GradCheckReport r = eql::grad_check(v, options);
    all_pass = all_pass && r.passed;
    std::cout << eql::to_string(v) << ',' << r.trials << ',' << r.checked << ',' << r.excluded << ','
              << std::scientific << std::setprecision(3) << r.max_relative_error << ','
              << r.max_absolute_error << ',' << (r.passed ? "pass" : "FAIL") << '\n';
    if (!r.passed && r.worst) {
      const auto& w = *r.worst;
      std::cerr << "  " << eql::to_string(v) << ": worst entry trial " << w.trial << " row " << w.row
                << " col " << w.col << " analytic " << eql::format_real(w.analytic) << " numeric "
                << eql::format_real(w.numeric) << (w.absolute ? " abs error " : " rel error ")
                << eql::format_real(w.error) << '\n';
    }
  }
  return all_pass ? 0 : kExitRuntime;
}

std::string group_cell(const eql::AccuracyReport& r, std::size_t g) {
  return g < r.groups.size() && r.groups[g].accuracy ? eql::format_real(*r.groups[g].accuracy) : "absent";
}

int cmd_compare(const SettingFlags& flags, const std::string& arms_text, const std::string& seeds_text,
                const std::string& out_prefix) {
  const eql::ExperimentConfig config = flags.resolve();
  std::vector<eql::LossVariant> arms;
  try {
    for (const auto& name : split_list(arms_text)) arms.push_back(eql::parse_loss_variant(name));
  } catch (const eql::Error& e) {
    throw UsageError(e.what());
  }
  if (arms.empty()) throw UsageError("--arms needs at least one loss");
  const auto seeds = parse_seeds(seeds_text);

  const eql::CompareReport report = eql::run_compare(config, arms, seeds);
  const std::size_t groups = report.rows.front().report.groups.size();

  std::ostringstream table;
  table << "arm,seed,overall";
  for (std::size_t g = 0; g < groups; ++g) {
    const auto& grp = report.rows.front().report.groups[g];
    table << ",acc_" << grp.begin << '_' << grp.end - 1;
  }
  table << ",tail_ratio_mean,final_loss,max_loss_gap\n";
  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::vector<double> overall, tail_ratio, final_loss, gap;
    std::vector<std::vector<double>> group_acc(groups);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& row = report.at(a, s);
      table << eql::to_string(row.arm) << ',' << row.seed << ',' << eql::format_real(row.report.overall);
      for (std::size_t g = 0; g < groups; ++g) {
        table << ',' << group_cell(row.report, g);
        if (row.report.groups[g].accuracy) group_acc[g].push_back(*row.report.groups[g].accuracy);
      }
      table << ',' << eql::format_real(row.tail_ratio) << ',' << eql::format_real(row.final_loss) << ','
            << eql::format_real(row.max_loss_gap) << '\n';
      overall.push_back(row.report.overall);
      tail_ratio.push_back(row.tail_ratio);
      final_loss.push_back(row.final_loss);
      gap.push_back(row.max_loss_gap);
    }
    table << eql::to_string(arms[a]) << ",mean," << eql::format_real(eql::mean_of(overall));
    for (std::size_t g = 0; g < groups; ++g) {
      table << ',' << (group_acc[g].empty() ? "absent" : eql::format_real(eql::mean_of(group_acc[g])));
    }
    table << ',' << eql::format_real(eql::mean_of(tail_ratio)) << ','
          << eql::format_real(eql::mean_of(final_loss)) << ','
          << eql::format_real(*std::max_element(gap.begin(), gap.end())) << '\n';
  }
  std::cout << table.str();
  if (!out_prefix.empty()) {
    std::ofstream out(out_prefix + ".compare.csv", std::ios::binary);
    out << table.str();
    if (!out) throw eql::IngestionError("cannot write " + out_prefix + ".compare.csv");
  }
  return 0;
}

int cmd_sweep(const SettingFlags& flags, const std::string& maps_text, const std::string& seeds_text,
              bool with_baseline, const std::string& out_prefix) {
  const eql::ExperimentConfig config = flags.resolve();
  std::vector<eql::MappingKind> maps;
  try {
    for (const auto& name : split_list(maps_text)) maps.push_back(eql::parse_mapping_kind(name));
  } catch (const eql::Error& e) {
    throw UsageError(e.what());
  }
  if (maps.empty()) throw UsageError("--maps needs at least one mapping function");
  const auto seeds = parse_seeds(seeds_text);

  const eql::SweepReport report = eql::run_sweep(config, maps, seeds, with_baseline);
  std::ostringstream table;
  table << "map,gamma,mu,overall_mean,overall_std,tail_mean,tail_std\n";
  for (const auto& row : report.rows) {
    table << row.name << ',' << eql::format_real(row.mapping.gamma) << ','
          << eql::format_real(row.mapping.mu) << ',' << eql::format_real(eql::mean_of(row.overall)) << ','
          << eql::format_real(eql::stddev_of(row.overall)) << ','
          << eql::format_real(eql::mean_of(row.tail)) << ',' << eql::format_real(eql::stddev_of(row.tail))
          << '\n';
  }
  std::cout << table.str();
  if (!out_prefix.empty()) {
    std::ofstream out(out_prefix + ".sweep.csv", std::ios::binary);
    out << table.str();
    if (!out) throw eql::IngestionError("cannot write " + out_prefix + ".sweep.csv");
  }
  return 0;
}

int cmd_synth(const SettingFlags& flags, const std::string& out_path, bool held_out) {
  const eql::ExperimentConfig config = flags.resolve();
  eql::SynthParams params = config.data;
  if (held_out) {
    params.decay = 0.0;
    params.base_count = config.test_per_class;
  }
  const eql::Dataset data = eql::synth_longtail(params, config.train.seed, held_out ? 1 : 0);
  eql::save_csv(data, out_path);
  std::cout << "wrote " << data.size() << " instances over " << data.num_categories << " categories to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equalization losses: training, gradient checks, comparisons and sweeps"};
  app.require_subcommand(1);

  SettingFlags train_flags;
  std::string train_out = "run";
  auto* train = app.add_subcommand("train", "train one model and write telemetry + summary");
  train_flags.attach(train);
  train->add_option("--out", train_out, "output prefix (<out>.telemetry.csv, <out>.summary)");

  std::vector<std::string> gc_losses;
  bool gc_all = false;
  std::size_t gc_trials = 100;
  double gc_tol = 1e-5;
  double gc_step = 1e-6;
  std::uint64_t gc_seed = eql::GradCheckOptions{}.seed;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of analytic gradients");
  gradcheck->add_option("--loss", gc_losses, "loss variant(s), comma-separated");
  gradcheck->add_flag("--all", gc_all, "check every loss variant");
  gradcheck->add_option("--trials", gc_trials, "random trials per variant [100]");
  gradcheck->add_option("--tol", gc_tol, "max relative error [1e-5]");
  gradcheck->add_option("--step", gc_step, "central-difference step [1e-6]");
  gradcheck->add_option("--seed", gc_seed, "seed for the random trials");

  SettingFlags compare_flags;
  std::string compare_arms;
  std::string compare_seeds = "1,2,3,4,5";
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "matched-seed comparison of loss arms");
  compare_flags.attach(compare);
  compare->add_option("--arms", compare_arms, "comma-separated loss variants")->required();
  compare->add_option("--seeds", compare_seeds, "comma-separated seeds [1,2,3,4,5]");
  compare->add_option("--out", compare_out, "also write <out>.compare.csv");

  SettingFlags sweep_flags;
  std::string sweep_maps = "linear,sqrt,exp,sigmoid_like";
  std::string sweep_seeds = "1,2,3,4,5";
  bool sweep_baseline = false;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Sigmoid-EQL with each mapping function");
  sweep_flags.attach(sweep);
  sweep->add_option("--maps", sweep_maps, "comma-separated mapping kinds");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds [1,2,3,4,5]");
  sweep->add_flag("--with-baseline", sweep_baseline, "add a plain BCE row");
  sweep->add_option("--out", sweep_out, "also write <out>.sweep.csv");

  SettingFlags synth_flags;
  std::string synth_out;
  bool synth_held_out = false;
  auto* synth = app.add_subcommand("synth", "write a synthetic long-tailed dataset as CSV");
  synth_flags.attach(synth);
  synth->add_option("--out", synth_out, "CSV path")->required();
  synth->add_flag("--held-out", synth_held_out, "write the balanced held-out draw instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == train) return cmd_train(train_flags, train_out);
    if (active == gradcheck) {
      return cmd_gradcheck(gc_losses, gc_all, gc_trials, gc_tol, gc_step, gc_seed);
    }
    if (active == compare) return cmd_compare(compare_flags, compare_arms, compare_seeds, compare_out);
    if (active == sweep) {
      return cmd_sweep(sweep_flags, sweep_maps, sweep_seeds, sweep_baseline, sweep_out);
    }
    if (active == synth) return cmd_synth(synth_flags, synth_out, synth_held_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nrun 'eql " << active->get_name() << " --help' for usage\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
