#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eql/numerics.hpp"

namespace eql {

using LabelBatch = std::vector<std::size_t>;

enum class MappingKind { linear, sqrt, exp, sigmoid_like };

/// Remaps a gradient ratio in [0, 1] to the negative-sample weight r_j.
struct MappingFn {
  MappingKind kind = MappingKind::sigmoid_like;
  double gamma = 12.0;  // steepness of the sigmoid-like map
  double mu = 0.8;      // inflection point of the sigmoid-like map
};

/// linear: x, sqrt: sqrt(x), exp: x^2, sigmoid_like: 1 / (1 + e^{-gamma (x - mu)}).
/// The input and the result are both clipped to [0, 1].
double map_ratio(const MappingFn& fn, double x) noexcept;

std::string_view to_string(MappingKind kind) noexcept;
/// Accepts "linear", "sqrt", "exp", "sigmoid_like" (or "sigmoid-like"); throws ParameterError.
MappingKind parse_mapping_kind(std::string_view name);

/// Accumulated positive/negative gradient magnitudes per category.
///
/// Single writer: one training loop calls accumulate(); everything else reads
/// between updates. Losses take a `const GradStats&` snapshot and treat every
/// derived quantity as a constant.
class GradStats {
 public:
  explicit GradStats(std::size_t num_categories, double initial_ratio = 1.0, double eps = 1e-12);

  std::size_t num_categories() const noexcept { return g_pos_.size(); }
  std::size_t iteration() const noexcept { return iteration_; }
  double eps() const noexcept { return eps_; }
  double initial_ratio() const noexcept { return initial_ratio_; }

  std::span<const double> g_pos() const noexcept { return g_pos_; }
  std::span<const double> g_neg() const noexcept { return g_neg_; }

  /// g_pos[j] += sum_i y_ij |grad_ij|, g_neg[j] += sum_i (1 - y_ij) |grad_ij|, iteration += 1.
  /// Throws DimensionError on shape/label problems and NumericError on a non-finite entry;
  /// on throw the accumulators are untouched.
  GradStats& accumulate(const Matrix& grad, std::span<const std::size_t> labels);

  /// min(1, g_pos / (g_neg + eps)); the initial ratio while both accumulators are zero.
  double ratio(std::size_t j) const;
  std::vector<double> ratios() const;

  /// Builds stats with explicit accumulator values (tests, replay, bindings).
  static GradStats from_accumulators(std::vector<double> g_pos, std::vector<double> g_neg,
                                     std::size_t iteration = 0, double initial_ratio = 1.0,
                                     double eps = 1e-12);

 private:
  std::vector<double> g_pos_;
  std::vector<double> g_neg_;
  std::size_t iteration_ = 0;
  double initial_ratio_;
  double eps_;
};

struct PosNegCounts {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Positive and negative sample counts per category over a whole label set.
PosNegCounts count_pos_neg(std::span<const std::size_t> labels, std::size_t num_categories);

}  // namespace eql
