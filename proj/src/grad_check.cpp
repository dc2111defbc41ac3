#include <cmath>
#include <vector>

#include "eql/error.hpp"
#include "eql/trainer.hpp"
#include "loss_kernels.hpp"

namespace eql {

namespace {

using detail::quad;

struct Trial {
  Matrix logits;
  LabelBatch labels;
  std::vector<double> quality;
  GradStats stats;
  LossConfig cfg;
};

Trial random_trial(LossVariant variant, Rng& rng) {
  const std::size_t rows = 1 + rng.next_below(8);
  const std::size_t cols = 2 + rng.next_below(9);
  Trial t{Matrix(rows, cols), LabelBatch(rows), std::vector<double>(rows), GradStats(cols), {}};
  for (double& z : t.logits.values()) z = rng.uniform(-5.0, 5.0);
  for (auto& y : t.labels) y = rng.next_below(cols);
  for (double& q : t.quality) q = rng.next_double();

  std::vector<double> g_pos(cols);
  std::vector<double> g_neg(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    g_pos[j] = rng.next_double() < 0.1 ? 0.0 : rng.uniform(0.0, 3.0);
    g_neg[j] = rng.next_double() < 0.1 ? 0.0 : rng.uniform(0.0, 3.0);
  }
  t.stats = GradStats::from_accumulators(std::move(g_pos), std::move(g_neg), 1 + rng.next_below(1000));

  LossConfig& c = t.cfg;
  c.variant = variant;
  c.alpha = rng.uniform(0.0, 8.0);
  c.mapping.kind = static_cast<MappingKind>(rng.next_below(4));
  c.mapping.gamma = rng.uniform(1.0, 15.0);
  c.mapping.mu = rng.uniform(0.2, 0.9);
  c.pi = rng.uniform(0.0, 2.0);
  c.alpha_t = rng.uniform(0.05, 1.0);
  c.alpha_weighting = rng.next_double() < 0.8;
  c.gamma_b = rng.uniform(1.0, 3.0);
  c.s = rng.uniform(0.0, 10.0);
  c.reduction = rng.next_double() < 0.5 ? Reduction::mean : Reduction::sum;
  return t;
}

}  // namespace

GradCheckReport grad_check(LossVariant variant, const GradCheckOptions& options) {
  if (options.trials < 1) throw ParameterError("grad_check needs at least one trial");
  if (!(options.tolerance > 0.0) || !(options.step > 0.0)) {
    throw ParameterError("grad_check tolerance and step must be positive");
  }

  GradCheckReport report;
  report.variant = variant;
  report.trials = options.trials;
  report.tolerance = options.tolerance;
  double worst_score = -1.0;

  const auto family = detail::family_of(variant);
  Rng rng = Rng::stream(options.seed, static_cast<std::uint64_t>(variant));
  const quad h = options.step;

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    Trial t = random_trial(variant, rng);
    LossOutput analytic = compute_loss(t.logits, t.labels, t.quality, t.stats, t.cfg);
    if (options.tamper) options.tamper(analytic.grad);

    const auto terms = category_weights(t.stats, t.cfg);
    const double scale = detail::reduction_scale(variant, t.cfg.reduction, t.logits.rows(), t.logits.cols());

    for (std::size_t i = 0; i < t.logits.rows(); ++i) {
      // Rows are independent given frozen statistics, so only row i moves with z_ij.
      std::vector<quad> z(t.logits.cols());
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = t.logits(i, j);
      for (std::size_t j = 0; j < z.size(); ++j) {
        if (family == detail::Family::quality) {
          const double target = j == t.labels[i] ? t.quality[i] : 0.0;
          if (std::fabs(target - sigmoid(t.logits(i, j))) < options.kink_margin) {
            ++report.excluded;
            continue;
          }
        }
        const quad saved = z[j];
        z[j] = saved + h;
        const quad up = detail::row_loss<quad>(family, z, t.labels[i], t.quality[i], terms);
        z[j] = saved - h;
        const quad down = detail::row_loss<quad>(family, z, t.labels[i], t.quality[i], terms);
        z[j] = saved;
        const double numeric = static_cast<double>((up - down) / (2 * h)) * scale;
        const double a = analytic.grad(i, j);

        GradCheckEntry entry;
        entry.trial = trial;
        entry.row = i;
        entry.col = j;
        entry.analytic = a;
        entry.numeric = numeric;
        double score = 0.0;
        if (std::fabs(a) < options.absolute_floor) {
          entry.absolute = true;
          entry.error = std::fabs(a - numeric);
          report.max_absolute_error = std::max(report.max_absolute_error, entry.error);
          score = entry.error / options.absolute_tolerance;
        } else {
          entry.error = std::fabs(a - numeric) / std::max(std::fabs(a), std::fabs(numeric));
          report.max_relative_error = std::max(report.max_relative_error, entry.error);
          score = entry.error / options.tolerance;
        }
        if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
        ++report.checked;
        if (score > 1.0) report.passed = false;
        if (score > worst_score) {
          worst_score = score;
          entry.logits = t.logits;
          entry.labels = t.labels;
          report.worst = std::move(entry);
        }
      }
    }
  }
  return report;
}

}  // namespace eql
