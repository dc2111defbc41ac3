#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "eql/error.hpp"
#include "eql/settings.hpp"

namespace eql {

namespace {

// Runs fn(0..count-1) on a few threads. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, Fn fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t k = 0;
      {
        std::lock_guard lock(mu);
        if (next >= count || failure) return;
        k = next++;
      }
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const IterationObserver& observer) {
  Dataset train_set;
  Dataset test_set;
  const std::uint64_t seed = config.train.seed;
  if (config.data_csv) {
    Split parts = split(load_csv(*config.data_csv), config.test_fraction, seed);
    train_set = std::move(parts.train);
    test_set = std::move(parts.test);
  } else {
    train_set = synth_longtail(config.data, seed, 0);
    SynthParams held_out = config.data;
    held_out.decay = 0.0;
    held_out.base_count = config.test_per_class;
    test_set = synth_longtail(held_out, seed, 1);
  }

  RunOutcome out;
  out.config = config;
  if (out.config.group_bounds.empty()) {
    out.config.group_bounds = default_group_bounds(train_set.num_categories);
  }
  out.train_size = train_set.size();
  out.test_size = test_set.size();
  out.result = train(train_set, config.train, observer);
  out.report = evaluate(out.result.model, test_set, out.config.group_bounds,
                        config.evaluate_with_objectness);
  out.tail_ratio = tail_ratio_mean(out.result.stats);
  return out;
}

Summary run_summary(const RunOutcome& o) {
  Summary s = describe_config(o.config);
  auto put = [&](const std::string& key, std::string value) { s["result." + key] = std::move(value); };
  put("train_size", std::to_string(o.train_size));
  put("test_size", std::to_string(o.test_size));
  put("classes", std::to_string(o.result.stats.num_categories()));
  put("iterations", std::to_string(o.result.stats.iteration()));
  put("final_loss", format_real(o.result.loss_history.empty() ? 0.0 : o.result.loss_history.back()));
  put("overall_accuracy", format_real(o.report.overall));
  put("tail_ratio_mean", format_real(o.tail_ratio));
  for (std::size_t g = 0; g < o.report.groups.size(); ++g) {
    const auto& grp = o.report.groups[g];
    const std::string prefix = "group." + std::to_string(g) + ".";
    put(prefix + "categories", std::to_string(grp.begin) + "-" + std::to_string(grp.end - 1));
    put(prefix + "count", std::to_string(grp.count));
    put(prefix + "accuracy", grp.accuracy ? format_real(*grp.accuracy) : "absent");
  }
  const GradStats& st = o.result.stats;
  const std::size_t width = std::to_string(st.num_categories() - 1).size();
  for (std::size_t j = 0; j < st.num_categories(); ++j) {
    std::string idx = std::to_string(j);
    idx.insert(0, width - idx.size(), '0');
    put("ratio." + idx, format_real(st.ratio(j)));
    put("g_pos." + idx, format_real(st.g_pos()[j]));
    put("g_neg." + idx, format_real(st.g_neg()[j]));
  }
  return s;
}

CompareReport run_compare(const ExperimentConfig& base, const std::vector<LossVariant>& arms,
                          const std::vector<std::uint64_t>& seeds) {
  if (arms.empty() || seeds.empty()) throw ParameterError("compare needs at least one arm and one seed");
  CompareReport report;
  report.arms = arms;
  report.seeds = seeds;
  report.rows.resize(arms.size() * seeds.size());
  std::vector<std::vector<double>> histories(report.rows.size());

  parallel_for(report.rows.size(), [&](std::size_t k) {
    ExperimentConfig cfg = base;
    cfg.train.loss.variant = arms[k / seeds.size()];
    cfg.train.seed = seeds[k % seeds.size()];
    cfg.train.telemetry_every = 0;
    RunOutcome run = run_experiment(cfg);
    CompareRow& row = report.rows[k];
    row.arm = cfg.train.loss.variant;
    row.seed = cfg.train.seed;
    row.report = std::move(run.report);
    row.tail_ratio = run.tail_ratio;
    row.final_loss = run.result.loss_history.back();
    histories[k] = std::move(run.result.loss_history);
  });

  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const auto& first = histories[k % seeds.size()];
    double gap = 0.0;
    for (std::size_t t = 0; t < first.size(); ++t) gap = std::max(gap, std::fabs(histories[k][t] - first[t]));
    report.rows[k].max_loss_gap = gap;
  }
  return report;
}

SweepReport run_sweep(const ExperimentConfig& base, const std::vector<MappingKind>& maps,
                      const std::vector<std::uint64_t>& seeds, bool with_baseline) {
  if (maps.empty() || seeds.empty()) throw ParameterError("sweep needs at least one map and one seed");
  SweepReport report;
  report.seeds = seeds;
  for (MappingKind kind : maps) {
    SweepRow row;
    row.name = std::string(to_string(kind));
    row.mapping = base.train.loss.mapping;
    row.mapping.kind = kind;
    report.rows.push_back(std::move(row));
  }
  if (with_baseline) {
    SweepRow row;
    row.name = "bce";
    row.mapping = base.train.loss.mapping;
    report.rows.push_back(std::move(row));
  }
  for (auto& row : report.rows) {
    row.overall.assign(seeds.size(), 0.0);
    row.tail.assign(seeds.size(), 0.0);
  }

  const std::size_t total = report.rows.size() * seeds.size();
  parallel_for(total, [&](std::size_t k) {
    SweepRow& row = report.rows[k / seeds.size()];
    const std::size_t s = k % seeds.size();
    ExperimentConfig cfg = base;
    cfg.train.loss.variant = row.name == "bce" ? LossVariant::bce : LossVariant::sigmoid_eql;
    cfg.train.loss.mapping = row.mapping;
    cfg.train.seed = seeds[s];
    cfg.train.telemetry_every = 0;
    const RunOutcome run = run_experiment(cfg);
    row.overall[s] = run.report.overall;
    row.tail[s] = run.report.groups.back().accuracy.value_or(0.0);
  });
  return report;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double m = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

}  // namespace eql
