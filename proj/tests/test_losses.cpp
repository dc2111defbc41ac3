#include <doctest.h>

#include <cmath>
#include <vector>

#include "eql/error.hpp"
#include "eql/losses.hpp"
#include "support.hpp"

using eql::GradStats;
using eql::LossConfig;
using eql::LossVariant;
using eql::Matrix;
using eql::Reduction;

namespace {

LossConfig config(LossVariant v, Reduction red = Reduction::sum) {
  LossConfig cfg;
  cfg.variant = v;
  cfg.reduction = red;
  return cfg;
}

const std::vector<double> kNoQuality;

}  // namespace

TEST_CASE("bce examples") {
  const Matrix z(1, 1, 0.0);
  auto out = eql::bce(z, std::vector<std::size_t>{0}, config(LossVariant::bce));
  CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(out.grad(0, 0) == -0.5);

  // One column, label 0: a second column makes the entry a negative.
  const Matrix z2(1, 2, 0.0);
  out = eql::bce(z2, std::vector<std::size_t>{0}, config(LossVariant::bce));
  CHECK(out.grad(0, 1) == 0.5);
  CHECK(out.value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

  // Extreme logits are clamped, never infinite.
  out = eql::bce(Matrix(1, 2, {-800.0, 800.0}), std::vector<std::size_t>{0}, config(LossVariant::bce));
  CHECK(std::isfinite(out.value));
  CHECK(out.value == doctest::Approx(-2.0 * std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("ce examples") {
  auto out = eql::ce(Matrix(1, 2, 0.0), std::vector<std::size_t>{0}, config(LossVariant::ce));
  CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(out.grad(0, 0) == doctest::Approx(-0.5));
  CHECK(out.grad(0, 1) == doctest::Approx(0.5));

  out = eql::ce(Matrix(1, 2, {10.0, 0.0}), std::vector<std::size_t>{0}, config(LossVariant::ce));
  const long double oracle = std::log1p(std::exp(-10.0L));
  CHECK(out.value == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));
  CHECK(out.value == doctest::Approx(4.54e-5).epsilon(1e-3));
  const long double p0 = 1.0L / (1.0L + std::exp(-10.0L));
  CHECK(out.grad(0, 0) == doctest::Approx(static_cast<double>(p0 - 1.0L)).epsilon(1e-9));
}

TEST_CASE("softmax-eql example") {
  auto cfg = config(LossVariant::softmax_eql);
  cfg.pi = 0.5;
  const auto stats = GradStats::from_accumulators({1.0, 4.0}, {1.0, 1.0});
  auto out = eql::softmax_eql(Matrix(1, 2, 0.0), std::vector<std::size_t>{1}, stats, cfg);
  CHECK(out.value == doctest::Approx(-std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(out.value == doctest::Approx(0.405465).epsilon(1e-6));
  CHECK(out.grad(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(out.grad(0, 1) == doctest::Approx(2.0 / 3.0 - 1.0).epsilon(1e-14));

  // All accumulators zero: offsets are uniform and the op is ce.
  const GradStats zero(2);
  const Matrix z(2, 2, {0.3, -1.0, 2.0, 0.5});
  const std::vector<std::size_t> labels{0, 1};
  const auto a = eql::softmax_eql(z, labels, zero, cfg);
  const auto b = eql::ce(z, labels, cfg);
  CHECK(std::abs(a.value - b.value) <= 1e-12);
  CHECK(ref::max_abs_diff(a.grad, b.grad) <= 1e-12);
}

TEST_CASE("focal example") {
  auto cfg = config(LossVariant::focal);
  cfg.gamma_b = 2.0;
  cfg.alpha_t = 0.25;
  auto out = eql::focal(Matrix(1, 1, 0.0), std::vector<std::size_t>{0}, cfg);
  CHECK(out.value == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
  CHECK(out.value == doctest::Approx(0.0433217).epsilon(1e-6));
}

TEST_CASE("efl example") {
  auto cfg = config(LossVariant::efl);
  cfg.gamma_b = 2.0;
  cfg.s = 8.0;
  cfg.alpha_t = 1.0;
  // g_pos = 0 with g_neg > 0 gives ratio 0, so gamma = 10 and w = 5.
  const auto stats = GradStats::from_accumulators({0.0}, {1.0});
  const auto w = eql::category_weights(stats, cfg);
  CHECK(w[0].gamma == 10.0);
  CHECK(w[0].weight_pos == 5.0);
  auto out = eql::efl(Matrix(1, 1, 0.0), std::vector<std::size_t>{0}, stats, cfg);
  CHECK(out.value == doctest::Approx(5.0 * std::pow(0.5, 10) * std::log(2.0)).epsilon(1e-14));
  CHECK(out.value == doctest::Approx(0.0033846).epsilon(1e-5));
}

TEST_CASE("sigmoid-eql at ratio 0 with the linear map") {
  auto cfg = config(LossVariant::sigmoid_eql);
  cfg.mapping = {eql::MappingKind::linear};
  cfg.alpha = 4.0;
  const auto stats = GradStats::from_accumulators({0.0, 0.0}, {1.0, 1.0});
  const Matrix z(2, 2, {0.7, -0.2, 1.5, 0.1});
  const std::vector<std::size_t> labels{0, 1};
  const auto eq = eql::sigmoid_eql(z, labels, stats, cfg);
  const auto base = eql::bce(z, labels, config(LossVariant::bce));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (labels[i] == j) {
        CHECK(eq.grad(i, j) == doctest::Approx(5.0 * base.grad(i, j)).epsilon(1e-15));
      } else {
        CHECK(eq.grad(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("quality focal examples") {
  auto cfg = config(LossVariant::qfl);
  cfg.gamma_b = 2.0;
  // y' = 1 on a positive entry is the focal form with p_t = p (no alpha).
  const Matrix z(1, 1, 0.4);
  const double p = 1.0 / (1.0 + std::exp(-0.4));
  const std::vector<double> one{1.0};
  auto out = eql::qfl(z, std::vector<std::size_t>{0}, one, cfg);
  CHECK(out.value == doctest::Approx(-std::pow(1 - p, 2.0) * std::log(p)).epsilon(1e-14));

  // y' = p: zero loss and zero gradient on that entry.
  const std::vector<double> same{p};
  out = eql::qfl(z, std::vector<std::size_t>{0}, same, cfg);
  CHECK(std::abs(out.value) <= 1e-30);
  CHECK(out.grad(0, 0) == 0.0);
}

TEST_CASE("compose_objectness") {
  const Matrix p(1, 2, {0.8, 0.4});
  const auto c = eql::compose_objectness(p, std::vector<double>{0.5});
  CHECK(c(0, 0) == doctest::Approx(0.4));
  CHECK(c(0, 1) == doctest::Approx(0.2));
  const Matrix q(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  CHECK(eql::compose_objectness(q, std::vector<double>{1.0, 1.0}) == q);
  CHECK(eql::compose_objectness(q, std::vector<double>{0.0, 0.0}) == Matrix(2, 3, 0.0));
  CHECK_THROWS_AS(eql::compose_objectness(q, std::vector<double>{1.0}), eql::DimensionError);
}

TEST_CASE("loss input errors") {
  const auto cfg = config(LossVariant::bce);
  CHECK_THROWS_AS(eql::bce(Matrix(2, 2, 0.0), std::vector<std::size_t>{0}, cfg), eql::DimensionError);
  CHECK_THROWS_AS(eql::bce(Matrix(1, 2, 0.0), std::vector<std::size_t>{2}, cfg), eql::DimensionError);
  CHECK_THROWS_AS(eql::sigmoid_eql(Matrix(1, 2, 0.0), std::vector<std::size_t>{0}, GradStats(3),
                                   config(LossVariant::sigmoid_eql)),
                  eql::DimensionError);
  CHECK_THROWS_AS(eql::qfl(Matrix(2, 2, 0.0), std::vector<std::size_t>{0, 1}, std::vector<double>{1.0},
                           config(LossVariant::qfl)),
                  eql::DimensionError);
  CHECK_THROWS_AS(eql::bce(Matrix(1, 2, {0.0, std::nan("")}), std::vector<std::size_t>{0}, cfg),
                  eql::NumericError);
}

TEST_CASE("config validation") {
  auto cfg = config(LossVariant::focal);
  cfg.alpha_t = 0.0;
  CHECK_THROWS_AS(cfg.validate(), eql::ParameterError);
  cfg = config(LossVariant::efl);
  cfg.gamma_b = 0.0;
  CHECK_THROWS_AS(cfg.validate(), eql::ParameterError);
  cfg = config(LossVariant::softmax_eql);
  cfg.pi = -1.0;
  CHECK_THROWS_AS(cfg.validate(), eql::ParameterError);
  cfg = config(LossVariant::efl);
  cfg.s = -0.5;
  CHECK_THROWS_AS(cfg.validate(), eql::ParameterError);
  cfg = config(LossVariant::focal);
  cfg.gamma_b = 0.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("variant names round trip") {
  for (auto v : eql::kAllLossVariants) CHECK(eql::parse_loss_variant(eql::to_string(v)) == v);
  CHECK(eql::parse_loss_variant("softmax_eql") == LossVariant::softmax_eql);
  CHECK_THROWS_AS(eql::parse_loss_variant("nonsense"), eql::ParameterError);
  CHECK(eql::parse_reduction("sum") == Reduction::sum);
}

TEST_CASE("values and gradients agree with the reference implementation") {
  for (auto v : eql::kAllLossVariants) {
    CAPTURE(eql::to_string(v));
    ref::for_cases(150, 31 + static_cast<std::uint64_t>(v), [v](ref::Gen& g, std::size_t) {
      const std::size_t rows = g.between(1, 8), cols = g.between(2, 10);
      const Matrix z = g.matrix(rows, cols, -5.0, 5.0);
      const auto labels = g.labels(rows, cols);
      std::vector<double> quality(rows);
      for (auto& q : quality) q = g.uniform(0.0, 1.0);
      const auto stats = g.stats(cols);
      LossConfig cfg;
      cfg.variant = v;
      cfg.alpha = g.uniform(0.0, 8.0);
      cfg.mapping = g.mapping();
      cfg.pi = g.uniform(0.0, 2.0);
      cfg.alpha_t = g.uniform(0.05, 1.0);
      cfg.alpha_weighting = g.chance(0.8);
      cfg.gamma_b = g.uniform(1.0, 3.0);
      cfg.s = g.uniform(0.0, 10.0);
      cfg.reduction = g.chance(0.5) ? Reduction::mean : Reduction::sum;

      const auto out = eql::compute_loss(z, labels, quality, stats, cfg);
      const double expected = static_cast<double>(ref::loss(z, labels, quality, stats, cfg));
      REQUIRE(out.value == doctest::Approx(expected).epsilon(1e-10));
      REQUIRE(out.value >= 0.0);

      const auto numeric = ref::numeric_grad(z, labels, quality, stats, cfg);
      for (std::size_t k = 0; k < numeric.size(); ++k) {
        const std::size_t i = k / cols, j = k % cols;
        if (eql::uses_quality_targets(v)) {
          const double t = labels[i] == j ? quality[i] : 0.0;
          if (std::abs(t - 1.0 / (1.0 + std::exp(-z(i, j)))) < 1e-3) continue;
        }
        const double a = out.grad.values()[k];
        const double n = static_cast<double>(numeric[k]);
        // The absolute slack covers long-double roundoff of rows whose loss is large.
        REQUIRE(std::abs(a - n) <= 1e-6 * std::abs(a) + 1e-11);
      }
    });
  }
}

TEST_CASE("stats are constants: perturbing them changes the value, never the gradient contract") {
  ref::for_cases(200, 41, [](ref::Gen& g, std::size_t c) {
    const LossVariant v = c % 3 == 0   ? LossVariant::sigmoid_eql
                          : c % 3 == 1 ? LossVariant::softmax_eql
                                       : LossVariant::efl;
    const std::size_t rows = g.between(1, 6), cols = g.between(2, 8);
    const Matrix z = g.matrix(rows, cols, -4.0, 4.0);
    const auto labels = g.labels(rows, cols);
    const auto a = g.stats(cols);
    const auto b = g.stats(cols);
    auto cfg = config(v);
    cfg.mapping = {eql::MappingKind::linear};
    for (const auto* stats : {&a, &b}) {
      const auto out = eql::compute_loss(z, labels, kNoQuality, *stats, cfg);
      const auto numeric = ref::numeric_grad(z, labels, kNoQuality, *stats, cfg);
      for (std::size_t k = 0; k < numeric.size(); ++k) {
        const double x = out.grad.values()[k], n = static_cast<double>(numeric[k]);
        REQUIRE(std::abs(x - n) <= 1e-6 * std::max(std::abs(x), 1e-3));
      }
    }
  });
}
