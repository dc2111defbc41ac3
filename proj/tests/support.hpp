#pragma once

// Reference implementations for tests: direct long-double transcriptions of the
// loss formulas, independent of the library's kernels, plus random generators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "eql/grad_stats.hpp"
#include "eql/losses.hpp"
#include "eql/numerics.hpp"

namespace ref {

using Real = long double;

inline Real sig(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

inline Real clampp(Real p) { return std::clamp(p, 1e-12L, 1.0L - 1e-12L); }

inline Real ratio(Real gp, Real gn, Real eps = 1e-12L) {
  if (gp == 0 && gn == 0) return 1.0L;
  return std::min(1.0L, gp / (gn + eps));
}

inline Real map(const eql::MappingFn& f, Real x) {
  Real y = 0;
  switch (f.kind) {
    case eql::MappingKind::linear: y = x; break;
    case eql::MappingKind::sqrt: y = std::sqrt(x); break;
    case eql::MappingKind::exp: y = x * x; break;
    case eql::MappingKind::sigmoid_like: y = sig(f.gamma * (x - f.mu)); break;
  }
  return std::clamp(y, 0.0L, 1.0L);
}

/// One sigmoid-family element term: category j of an instance, `t` its target.
inline Real element(const eql::LossConfig& cfg, Real z, bool pos, Real t, Real gp, Real gn) {
  using V = eql::LossVariant;
  const V v = cfg.variant;
  const Real y = pos ? 1 : 0;
  const Real p = sig(z);
  const Real pc = clampp(p);
  const Real bce = -(y * std::log(pc) + (1 - y) * std::log(1 - pc));
  const Real r = ratio(gp, gn);
  Real g = cfg.gamma_b;
  Real w = 1;
  if (v == V::efl || v == V::eqfl) {
    g = cfg.gamma_b + cfg.s * (1 - r);
    w = g / cfg.gamma_b;
  }
  switch (v) {
    case V::sigmoid_eql: {
      const Real rj = map(cfg.mapping, r);
      const Real qj = 1 + cfg.alpha * (1 - rj);
      return (pos ? qj : rj) * bce;
    }
    case V::focal:
    case V::efl: {
      const Real pt = pos ? pc : 1 - pc;
      Real a = 1;
      if (cfg.alpha_weighting) a = pos ? cfg.alpha_t : 1 - cfg.alpha_t;
      return -w * a * std::pow(1 - pt, g) * std::log(pt);
    }
    case V::qfl:
    case V::eqfl:
      return -w * std::pow(std::abs(t - p), g) * (t * std::log(pc) + (1 - t) * std::log(1 - pc));
    default:
      return bce;
  }
}

/// One softmax-family row term, -log of the (calibrated) probability of `label`.
inline Real softmax_row(const eql::LossConfig& cfg, const Real* z, std::size_t cols, std::size_t label,
                        const std::vector<double>& g_pos) {
  std::vector<Real> a(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    Real off = 0;
    if (cfg.variant == eql::LossVariant::softmax_eql) {
      off = cfg.pi * std::log(std::max<Real>(g_pos[j], 1e-12L));
    }
    a[j] = z[j] + off;
  }
  const Real m = *std::max_element(a.begin(), a.end());
  Real s = 0;
  for (Real x : a) s += std::exp(x - m);
  return std::log(s) - (a[label] - m);
}

inline Real reduction_divisor(const eql::LossConfig& cfg, std::size_t rows, std::size_t cols) {
  if (cfg.reduction == eql::Reduction::sum) return 1;
  return eql::is_softmax_family(cfg.variant) ? Real(rows) : Real(rows * cols);
}

inline Real target(const std::vector<std::size_t>& labels, const std::vector<double>& quality,
                   std::size_t i, std::size_t j) {
  if (labels[i] != j) return 0;
  return quality.empty() ? 1.0L : Real(quality[i]);
}

/// Loss value straight from the definitions. `quality` may be empty (targets 1).
inline Real loss(const eql::Matrix& logits, const std::vector<std::size_t>& labels,
                 const std::vector<double>& quality, const eql::GradStats& stats,
                 const eql::LossConfig& cfg) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  const std::vector<double> gp(stats.g_pos().begin(), stats.g_pos().end());
  const std::vector<double> gn(stats.g_neg().begin(), stats.g_neg().end());
  Real total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (eql::is_softmax_family(cfg.variant)) {
      std::vector<Real> z(logits.row(i).begin(), logits.row(i).end());
      total += softmax_row(cfg, z.data(), cols, labels[i], gp);
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      total += element(cfg, logits(i, j), labels[i] == j, target(labels, quality, i, j), gp[j], gn[j]);
    }
  }
  return total / reduction_divisor(cfg, rows, cols);
}

/// Central differences of the reference, restricted to the term each logit enters
/// (an element for sigmoid families, a row for softmax) to keep roundoff low.
inline std::vector<Real> numeric_grad(const eql::Matrix& logits, const std::vector<std::size_t>& labels,
                                      const std::vector<double>& quality, const eql::GradStats& stats,
                                      const eql::LossConfig& cfg, Real h = 1e-6L) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  const std::vector<double> gp(stats.g_pos().begin(), stats.g_pos().end());
  const std::vector<double> gn(stats.g_neg().begin(), stats.g_neg().end());
  const Real div = reduction_divisor(cfg, rows, cols);
  std::vector<Real> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<Real> z(logits.row(i).begin(), logits.row(i).end());
    for (std::size_t j = 0; j < cols; ++j) {
      const Real keep = z[j];
      auto f = [&](Real x) {
        z[j] = x;
        if (eql::is_softmax_family(cfg.variant)) return softmax_row(cfg, z.data(), cols, labels[i], gp);
        return element(cfg, x, labels[i] == j, target(labels, quality, i, j), gp[j], gn[j]);
      };
      out[i * cols + j] = (f(keep + h) - f(keep - h)) / (2 * h) / div;
      z[j] = keep;
    }
  }
  return out;
}

/// Test-side generator, deliberately not the library's Rng.
struct Gen {
  std::mt19937_64 engine;
  explicit Gen(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine);
  }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

  eql::Matrix matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    eql::Matrix m(rows, cols);
    for (double& x : m.values()) x = uniform(lo, hi);
    return m;
  }
  std::vector<std::size_t> labels(std::size_t rows, std::size_t cols) {
    std::vector<std::size_t> out(rows);
    for (auto& l : out) l = below(cols);
    return out;
  }
  /// Accumulators with occasional exact zeros and wide dynamic range.
  eql::GradStats stats(std::size_t cols) {
    std::vector<double> gp(cols), gn(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      gp[j] = chance(0.1) ? 0.0 : std::exp(uniform(-6.0, 4.0));
      gn[j] = chance(0.1) ? 0.0 : std::exp(uniform(-6.0, 4.0));
    }
    return eql::GradStats::from_accumulators(gp, gn);
  }
  eql::MappingFn mapping() {
    eql::MappingFn f;
    f.kind = static_cast<eql::MappingKind>(below(4));
    f.gamma = uniform(1.0, 15.0);
    f.mu = uniform(0.2, 0.9);
    return f;
  }
};

/// Runs `body(gen, case_index)` for `cases` deterministic cases.
inline void for_cases(std::size_t cases, std::uint64_t seed, const std::function<void(Gen&, std::size_t)>& body) {
  Gen gen(seed);
  for (std::size_t c = 0; c < cases; ++c) body(gen, c);
}

inline double max_abs_diff(const eql::Matrix& a, const eql::Matrix& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

}  // namespace ref
