#include "eql/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eql/error.hpp"
#include "loss_kernels.hpp"

namespace eql {

using detail::Family;
using detail::family_of;

std::string_view to_string(LossVariant variant) noexcept {
  switch (variant) {
    case LossVariant::bce:
      return "bce";
    case LossVariant::ce:
      return "ce";
    case LossVariant::focal:
      return "focal";
    case LossVariant::qfl:
      return "qfl";
    case LossVariant::sigmoid_eql:
      return "sigmoid-eql";
    case LossVariant::softmax_eql:
      return "softmax-eql";
    case LossVariant::efl:
      return "efl";
    case LossVariant::eqfl:
      return "eqfl";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view name) {
  std::string key(name);
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  for (LossVariant v : kAllLossVariants) {
    if (key == to_string(v)) return v;
  }
  throw ParameterError("unknown loss '" + std::string(name) +
                       "' (expected one of bce, ce, focal, qfl, sigmoid-eql, softmax-eql, efl, eqfl)");
}

std::string_view to_string(Reduction reduction) noexcept {
  return reduction == Reduction::mean ? "mean" : "sum";
}

Reduction parse_reduction(std::string_view name) {
  if (name == "mean") return Reduction::mean;
  if (name == "sum") return Reduction::sum;
  throw ParameterError("unknown reduction '" + std::string(name) + "' (expected mean or sum)");
}

bool is_softmax_family(LossVariant variant) noexcept {
  return family_of(variant) == Family::softmax;
}

bool is_equalized(LossVariant variant) noexcept {
  return variant == LossVariant::sigmoid_eql || variant == LossVariant::softmax_eql ||
         variant == LossVariant::efl || variant == LossVariant::eqfl;
}

bool uses_quality_targets(LossVariant variant) noexcept {
  return family_of(variant) == Family::quality;
}

void LossConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ParameterError("loss config: " + msg); };
  if (!std::isfinite(alpha) || alpha < 0.0) fail("alpha must be >= 0");
  if (!std::isfinite(pi) || pi < 0.0) fail("pi must be >= 0");
  if (!std::isfinite(s) || s < 0.0) fail("s must be >= 0");
  if (!std::isfinite(gamma_b) || gamma_b < 0.0) fail("gamma_b must be >= 0");
  if ((variant == LossVariant::efl || variant == LossVariant::eqfl) && gamma_b <= 0.0) {
    fail("gamma_b must be > 0 for efl/eqfl (the weighting factor divides by it)");
  }
  if (alpha_weighting && !(alpha_t > 0.0 && alpha_t <= 1.0)) fail("alpha_t must lie in (0, 1]");
  if (!std::isfinite(mapping.gamma) || !std::isfinite(mapping.mu)) {
    fail("mapping parameters must be finite");
  }
}

std::vector<CategoryWeights> category_weights(const GradStats& stats, const LossConfig& cfg) {
  const std::size_t num_cat = stats.num_categories();
  std::vector<CategoryWeights> out(num_cat);
  const double a_pos = cfg.alpha_weighting ? cfg.alpha_t : 1.0;
  const double a_neg = cfg.alpha_weighting ? 1.0 - cfg.alpha_t : 1.0;

  for (std::size_t j = 0; j < num_cat; ++j) {
    CategoryWeights& t = out[j];
    switch (cfg.variant) {
      case LossVariant::bce:
      case LossVariant::ce:
        break;
      case LossVariant::sigmoid_eql: {
        const double r = map_ratio(cfg.mapping, stats.ratio(j));
        t.weight_neg = r;
        t.weight_pos = 1.0 + cfg.alpha * (1.0 - r);
        break;
      }
      case LossVariant::softmax_eql:
        if (cfg.pi != 0.0) {
          // max() rather than (g + eps) keeps rescaled accumulators an exact uniform shift.
          const double floor = stats.eps() > 0.0 ? stats.eps() : std::numeric_limits<double>::min();
          t.offset = cfg.pi * std::log(std::max(stats.g_pos()[j], floor));
        }
        break;
      case LossVariant::focal:
        t.weight_pos = a_pos;
        t.weight_neg = a_neg;
        t.gamma = cfg.gamma_b;
        break;
      case LossVariant::qfl:
        t.gamma = cfg.gamma_b;
        break;
      case LossVariant::efl:
      case LossVariant::eqfl: {
        const double gamma_v = cfg.s * (1.0 - stats.ratio(j));
        const double gamma = cfg.gamma_b + gamma_v;
        const double w = gamma / cfg.gamma_b;
        t.gamma = gamma;
        if (cfg.variant == LossVariant::efl) {
          t.weight_pos = w * a_pos;
          t.weight_neg = w * a_neg;
        } else {
          t.weight_pos = w;
          t.weight_neg = w;
        }
        break;
      }
    }
  }
  return out;
}

namespace {

void check_inputs(const Matrix& logits, std::span<const std::size_t> labels,
                  std::span<const double> quality, LossVariant variant) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw DimensionError("logits must be non-empty");
  }
  if (labels.size() != logits.rows()) {
    throw DimensionError("logits have " + std::to_string(logits.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels were given");
  }
  for (std::size_t label : labels) {
    if (label >= logits.cols()) {
      throw DimensionError("label " + std::to_string(label) + " out of range for " +
                           std::to_string(logits.cols()) + " categories");
    }
  }
  if (!logits.all_finite()) {
    throw NumericError("logits contain non-finite values");
  }
  if (uses_quality_targets(variant)) {
    if (quality.size() != logits.rows()) {
      throw DimensionError("quality targets have length " + std::to_string(quality.size()) +
                           ", expected " + std::to_string(logits.rows()));
    }
    for (double q : quality) {
      if (!(q >= 0.0 && q <= 1.0)) {
        throw ParameterError("quality targets must lie in [0, 1]");
      }
    }
  }
}

// d/dz of -w (1 - p_t)^g log p_t with p_t = sigmoid(u), u = +z (y = 1) or -z (y = 0):
//   w * sign * (1 - p_t)^g * (g p_t log p_t - (1 - p_t)).
double focal_grad(double z, bool positive, double weight, double gamma) {
  const double u = positive ? z : -z;
  const double p_t = sigmoid(u);
  const double one_minus = sigmoid(-u);
  const double log_pt = std::log(detail::clamp_prob(p_t));
  const double g = weight * detail::power(one_minus, gamma) * (gamma * p_t * log_pt - one_minus);
  return positive ? g : -g;
}

// d/dz of -w |t - p|^g [t log p + (1 - t) log(1 - p)]:
//   w |t - p|^g (p - t) + w BCE(t, p) g |t - p|^(g - 1) sgn(p - t) p (1 - p).
// Zero where p == t.
double quality_grad(double z, double target, double weight, double gamma) {
  const double p = sigmoid(z);
  const double q = sigmoid(-z);
  const double diff = p - target;
  if (diff == 0.0) return 0.0;
  const double dist = std::fabs(diff);
  const double bce_term = -(target * std::log(detail::clamp_prob(p)) +
                            (1.0 - target) * std::log(detail::clamp_prob(q)));
  const double modulating = detail::power(dist, gamma);
  double g = modulating * diff;
  if (gamma != 0.0) {
    const double sgn = diff > 0.0 ? 1.0 : -1.0;
    g += bce_term * gamma * std::pow(dist, gamma - 1.0) * sgn * p * q;
  }
  return weight * g;
}

LossOutput run_loss(LossVariant variant, const Matrix& logits, std::span<const std::size_t> labels,
                    std::span<const double> quality, const GradStats& stats, LossConfig cfg) {
  cfg.variant = variant;
  cfg.validate();
  check_inputs(logits, labels, quality, variant);
  if (stats.num_categories() != logits.cols()) {
    throw DimensionError("stats track " + std::to_string(stats.num_categories()) +
                         " categories, logits have " + std::to_string(logits.cols()));
  }

  const std::vector<CategoryWeights> terms = category_weights(stats, cfg);
  const Family family = family_of(variant);
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  const double scale = detail::reduction_scale(variant, cfg.reduction, rows, cols);

  LossOutput out{0.0, Matrix(rows, cols)};
  std::vector<double> row_values(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto z = logits.row(i);
    const std::size_t label = labels[i];
    const double target_q = family == Family::quality ? quality[i] : 1.0;
    row_values[i] = detail::row_loss<double>(family, z, label, target_q, terms);

    auto g = out.grad.row(i);
    if (family == Family::softmax) {
      std::vector<double> offsets(cols);
      for (std::size_t j = 0; j < cols; ++j) offsets[j] = terms[j].offset;
      const std::vector<double> p = stable_softmax(z, offsets);
      for (std::size_t j = 0; j < cols; ++j) {
        g[j] = scale * (p[j] - (j == label ? 1.0 : 0.0));
      }
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const bool positive = (j == label);
      const double weight = positive ? terms[j].weight_pos : terms[j].weight_neg;
      double d = 0.0;
      switch (family) {
        case Family::binary:
          d = weight * (sigmoid(z[j]) - (positive ? 1.0 : 0.0));
          break;
        case Family::focal:
          d = focal_grad(z[j], positive, weight, terms[j].gamma);
          break;
        case Family::quality:
          d = quality_grad(z[j], positive ? target_q : 0.0, weight, terms[j].gamma);
          break;
        case Family::softmax:
          break;
      }
      g[j] = scale * d;
    }
  }
  out.value = scale * stable_sum(row_values);
  if (!std::isfinite(out.value) || !out.grad.all_finite()) {
    throw NumericError(std::string(to_string(variant)) + " produced a non-finite result");
  }
  return out;
}

GradStats balanced_stats(std::size_t num_categories) {
  return GradStats(std::max<std::size_t>(num_categories, 1));
}

}  // namespace

LossOutput bce(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg) {
  return run_loss(LossVariant::bce, logits, labels, {}, balanced_stats(logits.cols()), cfg);
}

LossOutput ce(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg) {
  return run_loss(LossVariant::ce, logits, labels, {}, balanced_stats(logits.cols()), cfg);
}

LossOutput focal(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg) {
  return run_loss(LossVariant::focal, logits, labels, {}, balanced_stats(logits.cols()), cfg);
}

LossOutput qfl(const Matrix& logits, std::span<const std::size_t> labels,
               std::span<const double> quality, const LossConfig& cfg) {
  return run_loss(LossVariant::qfl, logits, labels, quality, balanced_stats(logits.cols()), cfg);
}

LossOutput sigmoid_eql(const Matrix& logits, std::span<const std::size_t> labels,
                       const GradStats& stats, const LossConfig& cfg) {
  return run_loss(LossVariant::sigmoid_eql, logits, labels, {}, stats, cfg);
}

LossOutput softmax_eql(const Matrix& logits, std::span<const std::size_t> labels,
                       const GradStats& stats, const LossConfig& cfg) {
  return run_loss(LossVariant::softmax_eql, logits, labels, {}, stats, cfg);
}

LossOutput efl(const Matrix& logits, std::span<const std::size_t> labels, const GradStats& stats,
               const LossConfig& cfg) {
  return run_loss(LossVariant::efl, logits, labels, {}, stats, cfg);
}

LossOutput eqfl(const Matrix& logits, std::span<const std::size_t> labels,
                std::span<const double> quality, const GradStats& stats, const LossConfig& cfg) {
  return run_loss(LossVariant::eqfl, logits, labels, quality, stats, cfg);
}

LossOutput compute_loss(const Matrix& logits, std::span<const std::size_t> labels,
                        std::span<const double> quality, const GradStats& stats,
                        const LossConfig& cfg) {
  if (!is_equalized(cfg.variant)) {
    return run_loss(cfg.variant, logits, labels, quality, balanced_stats(logits.cols()), cfg);
  }
  return run_loss(cfg.variant, logits, labels, quality, stats, cfg);
}

Matrix compose_objectness(const Matrix& probs, std::span<const double> objectness) {
  if (objectness.size() != probs.rows()) {
    throw DimensionError("objectness has length " + std::to_string(objectness.size()) +
                         ", expected " + std::to_string(probs.rows()));
  }
  Matrix out = probs;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (!(objectness[i] >= 0.0 && objectness[i] <= 1.0)) {
      throw ParameterError("objectness probabilities must lie in [0, 1]");
    }
    for (double& v : out.row(i)) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ParameterError("category probabilities must lie in [0, 1]");
      }
      v *= objectness[i];
    }
  }
  return out;
}

}  // namespace eql
