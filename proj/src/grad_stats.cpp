#include "eql/grad_stats.hpp"

#include <algorithm>
#include <cmath>

#include "eql/error.hpp"

namespace eql {

double map_ratio(const MappingFn& fn, double x) noexcept {
  x = std::clamp(x, 0.0, 1.0);
  double y = x;
  switch (fn.kind) {
    case MappingKind::linear:
      y = x;
      break;
    case MappingKind::sqrt:
      y = std::sqrt(x);
      break;
    case MappingKind::exp:
      y = x * x;
      break;
    case MappingKind::sigmoid_like:
      y = sigmoid(fn.gamma * (x - fn.mu));
      break;
  }
  return std::clamp(y, 0.0, 1.0);
}

std::string_view to_string(MappingKind kind) noexcept {
  switch (kind) {
    case MappingKind::linear:
      return "linear";
    case MappingKind::sqrt:
      return "sqrt";
    case MappingKind::exp:
      return "exp";
    case MappingKind::sigmoid_like:
      return "sigmoid_like";
  }
  return "unknown";
}

MappingKind parse_mapping_kind(std::string_view name) {
  if (name == "linear") return MappingKind::linear;
  if (name == "sqrt") return MappingKind::sqrt;
  if (name == "exp") return MappingKind::exp;
  if (name == "sigmoid_like" || name == "sigmoid-like") return MappingKind::sigmoid_like;
  throw ParameterError("unknown mapping function '" + std::string(name) +
                       "' (expected linear, sqrt, exp, sigmoid_like)");
}

GradStats::GradStats(std::size_t num_categories, double initial_ratio, double eps)
    : g_pos_(num_categories, 0.0),
      g_neg_(num_categories, 0.0),
      initial_ratio_(initial_ratio),
      eps_(eps) {
  if (num_categories == 0) {
    throw ParameterError("GradStats needs at least one category");
  }
  if (!(initial_ratio >= 0.0 && initial_ratio <= 1.0)) {
    throw ParameterError("initial ratio must lie in [0, 1]");
  }
  if (!(eps >= 0.0)) {
    throw ParameterError("eps must be non-negative");
  }
}

GradStats GradStats::from_accumulators(std::vector<double> g_pos, std::vector<double> g_neg,
                                       std::size_t iteration, double initial_ratio, double eps) {
  if (g_pos.size() != g_neg.size()) {
    throw DimensionError("g_pos and g_neg lengths differ");
  }
  for (std::size_t j = 0; j < g_pos.size(); ++j) {
    if (!std::isfinite(g_pos[j]) || !std::isfinite(g_neg[j]) || g_pos[j] < 0.0 || g_neg[j] < 0.0) {
      throw ParameterError("accumulators must be finite and non-negative");
    }
  }
  GradStats stats(g_pos.size(), initial_ratio, eps);
  stats.g_pos_ = std::move(g_pos);
  stats.g_neg_ = std::move(g_neg);
  stats.iteration_ = iteration;
  return stats;
}

GradStats& GradStats::accumulate(const Matrix& grad, std::span<const std::size_t> labels) {
  const std::size_t num_cat = num_categories();
  if (grad.cols() != num_cat) {
    throw DimensionError("gradient has " + std::to_string(grad.cols()) + " columns, stats track " +
                         std::to_string(num_cat) + " categories");
  }
  if (grad.rows() != labels.size()) {
    throw DimensionError("gradient has " + std::to_string(grad.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (std::size_t label : labels) {
    if (label >= num_cat) {
      throw DimensionError("label " + std::to_string(label) + " out of range");
    }
  }
  if (!grad.all_finite()) {
    throw NumericError("refusing to accumulate a non-finite gradient");
  }

  std::vector<double> batch_pos(num_cat, 0.0);
  std::vector<double> batch_neg(num_cat, 0.0);
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    const auto row = grad.row(i);
    for (std::size_t j = 0; j < num_cat; ++j) {
      if (labels[i] == j) {
        batch_pos[j] += std::abs(row[j]);
      } else {
        batch_neg[j] += std::abs(row[j]);
      }
    }
  }
  for (std::size_t j = 0; j < num_cat; ++j) {
    g_pos_[j] += batch_pos[j];
    g_neg_[j] += batch_neg[j];
  }
  ++iteration_;
  return *this;
}

double GradStats::ratio(std::size_t j) const {
  if (j >= num_categories()) {
    throw DimensionError("category " + std::to_string(j) + " out of range");
  }
  if (g_pos_[j] == 0.0 && g_neg_[j] == 0.0) {
    return initial_ratio_;
  }
  return std::min(1.0, g_pos_[j] / (g_neg_[j] + eps_));
}

std::vector<double> GradStats::ratios() const {
  std::vector<double> out(num_categories());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = ratio(j);
  }
  return out;
}

PosNegCounts count_pos_neg(std::span<const std::size_t> labels, std::size_t num_categories) {
  PosNegCounts counts{std::vector<std::size_t>(num_categories, 0),
                      std::vector<std::size_t>(num_categories, 0)};
  for (std::size_t label : labels) {
    if (label >= num_categories) {
      throw DimensionError("label " + std::to_string(label) + " out of range for " +
                           std::to_string(num_categories) + " categories");
    }
    ++counts.positives[label];
  }
  for (std::size_t j = 0; j < num_categories; ++j) {
    counts.negatives[j] = labels.size() - counts.positives[j];
  }
  return counts;
}

}  // namespace eql
