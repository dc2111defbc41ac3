#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "eql/error.hpp"
#include "eql/grad_stats.hpp"
#include "support.hpp"

using eql::GradStats;
using eql::Matrix;

TEST_CASE("accumulate examples") {
  GradStats fresh(3);
  fresh.accumulate(Matrix(2, 3, 0.0), std::vector<std::size_t>{0, 2});
  CHECK(fresh.iteration() == 1);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(fresh.g_pos()[j] == 0.0);
    CHECK(fresh.g_neg()[j] == 0.0);
  }

  GradStats s(2);
  const Matrix grad(1, 2, {-0.5, 0.5});
  const std::vector<std::size_t> label{0};
  s.accumulate(grad, label);
  CHECK(s.g_pos()[0] == 0.5);
  CHECK(s.g_pos()[1] == 0.0);
  CHECK(s.g_neg()[0] == 0.0);
  CHECK(s.g_neg()[1] == 0.5);

  s.accumulate(grad, label);
  CHECK(s.g_pos()[0] == 1.0);
  CHECK(s.g_neg()[1] == 1.0);
  CHECK(s.iteration() == 2);
}

TEST_CASE("accumulate rejects bad input and leaves the accumulators alone") {
  GradStats s(2);
  s.accumulate(Matrix(1, 2, {0.25, -0.5}), std::vector<std::size_t>{1});
  const std::vector<double> gp(s.g_pos().begin(), s.g_pos().end());

  CHECK_THROWS_AS(s.accumulate(Matrix(1, 3, 0.1), std::vector<std::size_t>{0}), eql::DimensionError);
  CHECK_THROWS_AS(s.accumulate(Matrix(2, 2, 0.1), std::vector<std::size_t>{0}), eql::DimensionError);
  CHECK_THROWS_AS(s.accumulate(Matrix(1, 2, 0.1), std::vector<std::size_t>{2}), eql::DimensionError);
  CHECK_THROWS_AS(s.accumulate(Matrix(2, 2, {0.1, 0.2, std::numeric_limits<double>::infinity(), 0.0}),
                               std::vector<std::size_t>{0, 1}),
                  eql::NumericError);
  CHECK(std::vector<double>(s.g_pos().begin(), s.g_pos().end()) == gp);
  CHECK(s.iteration() == 1);
}

TEST_CASE("ratio examples") {
  auto s = GradStats::from_accumulators({2.0, 0.0, 10.0}, {4.0, 0.0, 1.0});
  CHECK(s.ratio(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.ratio(1) == 1.0);
  CHECK(s.ratio(2) == 1.0);
  CHECK_THROWS_AS(s.ratio(3), eql::DimensionError);

  auto cold = GradStats::from_accumulators({0.0}, {0.0}, 0, 0.3);
  CHECK(cold.ratio(0) == 0.3);
}

TEST_CASE("mapping examples") {
  eql::MappingFn sl{eql::MappingKind::sigmoid_like, 12.0, 0.8};
  CHECK(eql::map_ratio(sl, 0.8) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eql::map_ratio(sl, 1.0) == doctest::Approx(static_cast<double>(ref::sig(2.4L))).epsilon(1e-14));
  CHECK(eql::map_ratio({eql::MappingKind::exp}, 0.3) == doctest::Approx(0.09).epsilon(1e-15));
  CHECK(eql::map_ratio({eql::MappingKind::sqrt}, 0.25) == 0.5);
  CHECK(eql::map_ratio({eql::MappingKind::linear}, 0.7) == 0.7);
}

TEST_CASE("mapping endpoints and monotonicity") {
  for (auto kind : {eql::MappingKind::linear, eql::MappingKind::sqrt, eql::MappingKind::exp}) {
    CHECK(eql::map_ratio({kind}, 0.0) == 0.0);
    CHECK(eql::map_ratio({kind}, 1.0) == 1.0);
  }
  ref::for_cases(1000, 21, [](ref::Gen& g, std::size_t) {
    const auto f = g.mapping();
    double a = g.uniform(0.0, 1.0), b = g.uniform(0.0, 1.0);
    if (a > b) std::swap(a, b);
    const double f0 = eql::map_ratio(f, 0.0), f1 = eql::map_ratio(f, 1.0);
    const double fa = eql::map_ratio(f, a), fb = eql::map_ratio(f, b);
    REQUIRE(f0 <= fa);
    REQUIRE(fa <= fb);
    REQUIRE(fb <= f1);
    REQUIRE(fa >= 0.0);
    REQUIRE(fb <= 1.0);
    REQUIRE(fa == doctest::Approx(static_cast<double>(ref::map(f, a))).epsilon(1e-14));
  });
}

TEST_CASE("mapping names") {
  CHECK(eql::parse_mapping_kind("sigmoid-like") == eql::MappingKind::sigmoid_like);
  CHECK(eql::parse_mapping_kind("exp") == eql::MappingKind::exp);
  CHECK(eql::to_string(eql::MappingKind::sqrt) == "sqrt");
  CHECK_THROWS_AS(eql::parse_mapping_kind("cubic"), eql::ParameterError);
}

TEST_CASE("ratio is scale covariant") {
  ref::for_cases(1000, 22, [](ref::Gen& g, std::size_t) {
    const double gp = g.uniform(0.0, 5.0), gn = g.uniform(1e-3, 5.0);
    const double c = std::exp(g.uniform(-10.0, 10.0));
    const auto a = GradStats::from_accumulators({gp}, {gn}, 0, 1.0, 0.0);
    const auto b = GradStats::from_accumulators({gp * c}, {gn * c}, 0, 1.0, 0.0);
    REQUIRE(a.ratio(0) == doctest::Approx(b.ratio(0)).epsilon(1e-14));
  });
}

TEST_CASE("sample counts") {
  auto c = eql::count_pos_neg(std::vector<std::size_t>(10, 0), 2);
  CHECK(c.positives == std::vector<std::size_t>{10, 0});
  CHECK(c.negatives == std::vector<std::size_t>{0, 10});
  c = eql::count_pos_neg(std::vector<std::size_t>{0, 1, 1}, 2);
  CHECK(c.positives == std::vector<std::size_t>{1, 2});
  CHECK(c.negatives == std::vector<std::size_t>{2, 1});

  ref::for_cases(1000, 23, [](ref::Gen& g, std::size_t) {
    const std::size_t n = g.between(0, 50), cats = g.between(1, 10);
    const auto labels = g.labels(n, cats);
    const auto counts = eql::count_pos_neg(labels, cats);
    std::size_t total = 0;
    for (std::size_t j = 0; j < cats; ++j) {
      std::size_t brute = 0;
      for (auto l : labels) brute += l == j;
      REQUIRE(counts.positives[j] == brute);
      REQUIRE(counts.negatives[j] == n - brute);
      total += counts.positives[j];
    }
    REQUIRE(total == n);
  });
}
