#pragma once

// Forward loss kernels, templated on the scalar type so the finite-difference
// oracle can evaluate them in quad precision. Gradients live in losses.cpp and
// are closed-form in double.

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "eql/losses.hpp"

namespace eql::detail {

using quad = __float128;

inline double r_exp(double x) { return std::exp(x); }
inline double r_log(double x) { return std::log(x); }
inline double r_log1p(double x) { return std::log1p(x); }
inline double r_pow(double x, double y) { return std::pow(x, y); }
inline double r_abs(double x) { return std::fabs(x); }
inline quad r_exp(quad x) { return expq(x); }
inline quad r_log(quad x) { return logq(x); }
inline quad r_log1p(quad x) { return log1pq(x); }
inline quad r_pow(quad x, quad y) { return powq(x, y); }
inline quad r_abs(quad x) { return fabsq(x); }

inline constexpr double kProbFloor = 1e-12;

enum class Family { binary, focal, quality, softmax };

constexpr Family family_of(LossVariant v) noexcept {
  switch (v) {
    case LossVariant::bce:
    case LossVariant::sigmoid_eql:
      return Family::binary;
    case LossVariant::focal:
    case LossVariant::efl:
      return Family::focal;
    case LossVariant::qfl:
    case LossVariant::eqfl:
      return Family::quality;
    case LossVariant::ce:
    case LossVariant::softmax_eql:
      return Family::softmax;
  }
  return Family::binary;
}

template <typename R>
R sigmoid_r(R x) {
  if (x >= R(0)) {
    return R(1) / (R(1) + r_exp(-x));
  }
  const R e = r_exp(x);
  return e / (R(1) + e);
}

template <typename R>
R clamp_prob(R p) {
  return std::clamp(p, R(kProbFloor), R(1) - R(kProbFloor));
}

/// x^g with 0^0 = 1 and the base clamped at 0.
template <typename R>
R power(R x, R g) {
  if (g == R(0)) return R(1);
  if (x <= R(0)) return R(0);
  return r_pow(x, g);
}

/// Unreduced loss of a single row: the sum of its C element terms (sigmoid
/// families) or the row's cross-entropy term (softmax family).
template <typename R>
R row_loss(Family family, std::span<const R> z, std::size_t label, double quality,
           std::span<const CategoryWeights> terms) {
  const std::size_t num_cat = z.size();
  if (family == Family::softmax) {
    R shift = z[0] + R(terms[0].offset);
    for (std::size_t j = 1; j < num_cat; ++j) {
      shift = std::max(shift, z[j] + R(terms[j].offset));
    }
    R total = R(0);
    for (std::size_t j = 0; j < num_cat; ++j) {
      total += r_exp(z[j] + R(terms[j].offset) - shift);
    }
    // log-sum-exp form: no probability is logged, so no clamp and no flat region
    // where the analytic gradient p - onehot would disagree with the value.
    return r_log(total) - (z[label] + R(terms[label].offset) - shift);
  }

  R sum = R(0);
  for (std::size_t j = 0; j < num_cat; ++j) {
    const bool positive = (j == label);
    const CategoryWeights& t = terms[j];
    if (family == Family::quality) {
      const R target = positive ? R(quality) : R(0);
      const R p = sigmoid_r(z[j]);
      const R q = sigmoid_r(-z[j]);  // 1 - p without cancellation
      const R bce_term =
          -(target * r_log(clamp_prob(p)) + (R(1) - target) * r_log(clamp_prob(q)));
      sum += R(positive ? t.weight_pos : t.weight_neg) * power(r_abs(target - p), R(t.gamma)) *
             bce_term;
      continue;
    }
    const R u = positive ? z[j] : -z[j];
    const R p_t = sigmoid_r(u);
    const R log_pt = r_log(clamp_prob(p_t));
    const R weight = R(positive ? t.weight_pos : t.weight_neg);
    if (family == Family::binary) {
      sum += -weight * log_pt;
    } else {
      sum += -weight * power(sigmoid_r(-u), R(t.gamma)) * log_pt;
    }
  }
  return sum;
}

/// Reduction factor applied to the sum of row losses.
inline double reduction_scale(LossVariant v, Reduction r, std::size_t rows, std::size_t cols) {
  if (r == Reduction::sum) return 1.0;
  if (family_of(v) == Family::softmax) return 1.0 / static_cast<double>(rows);
  return 1.0 / static_cast<double>(rows * cols);
}

}  // namespace eql::detail
