#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eql/grad_stats.hpp"
#include "eql/numerics.hpp"

namespace eql {

enum class LossVariant { bce, ce, focal, qfl, sigmoid_eql, softmax_eql, efl, eqfl };

inline constexpr LossVariant kAllLossVariants[] = {
    LossVariant::bce, LossVariant::ce,          LossVariant::focal, LossVariant::qfl,
    LossVariant::sigmoid_eql, LossVariant::softmax_eql, LossVariant::efl, LossVariant::eqfl};

/// mean: over B*C elements for the sigmoid family, over B rows for the softmax family.
enum class Reduction { mean, sum };

std::string_view to_string(LossVariant variant) noexcept;
/// Accepts both "sigmoid-eql" and "sigmoid_eql" spellings; throws ParameterError.
LossVariant parse_loss_variant(std::string_view name);
std::string_view to_string(Reduction reduction) noexcept;
Reduction parse_reduction(std::string_view name);

bool is_softmax_family(LossVariant variant) noexcept;
bool is_equalized(LossVariant variant) noexcept;
bool uses_quality_targets(LossVariant variant) noexcept;

struct LossConfig {
  LossVariant variant = LossVariant::bce;
  double alpha = 4.0;     // Sigmoid-EQL positive up-weight: q = 1 + alpha (1 - r)
  MappingFn mapping{};    // Sigmoid-EQL ratio map
  double pi = 1.0;        // Softmax-EQL calibration degree
  double alpha_t = 0.25;  // focal balance factor (alpha_t for positives, 1 - alpha_t for negatives)
  bool alpha_weighting = true;
  double gamma_b = 2.0;   // base focusing parameter
  double s = 8.0;         // focusing scale for EFL/EQFL
  Reduction reduction = Reduction::mean;

  /// Throws ParameterError when a field is outside its domain for this variant.
  void validate() const;
};

struct LossOutput {
  double value = 0.0;
  Matrix grad;  // d value / d logits, same shape as the logits
};

/// Stats-derived constants for one category. No gradient flows through them.
struct CategoryWeights {
  double weight_pos = 1.0;  // multiplies terms where y = 1 (q_j, alpha_t * w_j, w_j)
  double weight_neg = 1.0;  // multiplies terms where y = 0 (r_j, (1 - alpha_t) * w_j, w_j)
  double gamma = 0.0;       // focusing exponent (gamma_b or gamma_b + s (1 - G_j))
  double offset = 0.0;      // additive logit offset (pi * log G_pos_j)
};

/// Per-category constants for `cfg.variant` given a stats snapshot.
std::vector<CategoryWeights> category_weights(const GradStats& stats, const LossConfig& cfg);

LossOutput bce(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg);
LossOutput ce(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg);
LossOutput focal(const Matrix& logits, std::span<const std::size_t> labels, const LossConfig& cfg);

/// `quality[i]` is the soft target of row i's labelled category; every other column targets 0.
LossOutput qfl(const Matrix& logits, std::span<const std::size_t> labels,
               std::span<const double> quality, const LossConfig& cfg);

LossOutput sigmoid_eql(const Matrix& logits, std::span<const std::size_t> labels,
                       const GradStats& stats, const LossConfig& cfg);
LossOutput softmax_eql(const Matrix& logits, std::span<const std::size_t> labels,
                       const GradStats& stats, const LossConfig& cfg);
LossOutput efl(const Matrix& logits, std::span<const std::size_t> labels, const GradStats& stats,
               const LossConfig& cfg);
LossOutput eqfl(const Matrix& logits, std::span<const std::size_t> labels,
                std::span<const double> quality, const GradStats& stats, const LossConfig& cfg);

/// Dispatches on cfg.variant. `quality` is only read by qfl/eqfl; stats only by the
/// equalized variants.
LossOutput compute_loss(const Matrix& logits, std::span<const std::size_t> labels,
                        std::span<const double> quality, const GradStats& stats,
                        const LossConfig& cfg);

/// p'[i][j] = p[i][j] * p_obj[i]. Evaluation only.
Matrix compose_objectness(const Matrix& probs, std::span<const double> objectness);

}  // namespace eql
