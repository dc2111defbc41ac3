#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "eql/error.hpp"
#include "eql/trainer.hpp"
#include "support.hpp"

using eql::LossVariant;
using eql::TrainConfig;

namespace {

eql::Dataset small_data(double decay = 0.5, std::uint64_t seed = 3) {
  eql::SynthParams p;
  p.classes = 6;
  p.dim = 4;
  p.base_count = 40;
  p.decay = decay;
  return eql::synth_longtail(p, seed);
}

TrainConfig small_config(LossVariant v) {
  TrainConfig cfg;
  cfg.loss.variant = v;
  cfg.iterations = 60;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.5;
  cfg.telemetry_every = 10;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  const auto data = small_data();
  auto cfg = small_config(LossVariant::bce);
  cfg.iterations = 0;
  CHECK_THROWS_AS(eql::train(data, cfg), eql::ParameterError);
  cfg = small_config(LossVariant::bce);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(eql::train(data, cfg), eql::ParameterError);
  cfg = small_config(LossVariant::bce);
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(eql::train(data, cfg), eql::ParameterError);
  cfg = small_config(LossVariant::bce);
  cfg.learning_rate = -0.1;
  CHECK_THROWS_AS(eql::train(data, cfg), eql::ParameterError);
}

TEST_CASE("one iteration is one update and one accumulation") {
  auto cfg = small_config(LossVariant::sigmoid_eql);
  cfg.iterations = 1;
  const auto r = eql::train(small_data(), cfg);
  CHECK(r.stats.iteration() == 1);
  CHECK(r.loss_history.size() == 1);
  CHECK_FALSE(r.model == r.initial_model);
  CHECK(r.telemetry.size() == 6);
  CHECK(r.telemetry.front().iteration == 1);
}

TEST_CASE("zero learning rate leaves parameters bit-exact") {
  for (auto v : {LossVariant::bce, LossVariant::softmax_eql, LossVariant::efl}) {
    auto cfg = small_config(v);
    cfg.learning_rate = 0.0;
    cfg.hidden_units = 5;
    cfg.objectness_head = true;
    const auto r = eql::train(small_data(), cfg);
    CHECK(r.model == r.initial_model);
    CHECK(r.stats.iteration() == cfg.iterations);
    CHECK(r.stats.g_pos()[0] > 0.0);
  }
}

TEST_CASE("training is deterministic") {
  for (auto v : eql::kAllLossVariants) {
    auto cfg = small_config(v);
    cfg.hidden_units = v == LossVariant::efl ? 4 : 0;
    const auto a = eql::train(small_data(), cfg);
    const auto b = eql::train(small_data(), cfg);
    CHECK(a.telemetry == b.telemetry);
    CHECK(a.model == b.model);
    cfg.seed = 2;
    const auto c = eql::train(small_data(), cfg);
    CHECK_FALSE(c.telemetry == a.telemetry);
  }
}

TEST_CASE("telemetry cadence includes the final iteration") {
  auto cfg = small_config(LossVariant::bce);
  cfg.iterations = 25;
  const auto r = eql::train(small_data(), cfg);
  std::vector<std::size_t> its;
  for (const auto& rec : r.telemetry) {
    if (rec.category == 0) its.push_back(rec.iteration);
  }
  CHECK(its == std::vector<std::size_t>{10, 20, 25});
  cfg.telemetry_every = 0;
  CHECK(eql::train(small_data(), cfg).telemetry.empty());
}

TEST_CASE("the loss at iteration T is weighted by statistics through T-1") {
  auto cfg = small_config(LossVariant::sigmoid_eql);
  cfg.iterations = 2;
  std::vector<std::vector<double>> before, after;
  std::vector<std::size_t> snapshot_iterations;
  eql::train(small_data(), cfg, [&](const eql::IterationView& view) {
    snapshot_iterations.push_back(view.snapshot.iteration());
    before.emplace_back(view.snapshot.g_pos().begin(), view.snapshot.g_pos().end());
    after.emplace_back(view.stats.g_pos().begin(), view.stats.g_pos().end());

    // Re-evaluating against the snapshot reproduces the loss that was optimized.
    const eql::Matrix& g = view.loss.grad;
    CHECK(g.rows() == view.labels.size());
  });
  REQUIRE(snapshot_iterations == std::vector<std::size_t>{0, 1});
  CHECK(before[1] == after[0]);
  for (double x : before[0]) CHECK(x == 0.0);
  CHECK_FALSE(before[1] == after[1]);
}

TEST_CASE("accumulated gradients are those of the optimized loss") {
  auto cfg = small_config(LossVariant::sigmoid_eql);
  cfg.iterations = 3;
  std::vector<double> manual_pos(6, 0.0);
  eql::train(small_data(), cfg, [&](const eql::IterationView& view) {
    for (std::size_t i = 0; i < view.labels.size(); ++i) {
      manual_pos[view.labels[i]] += std::abs(view.loss.grad(i, view.labels[i]));
    }
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(view.stats.g_pos()[j] == doctest::Approx(manual_pos[j]).epsilon(1e-12));
    }
  });
}

TEST_CASE("bias initialization") {
  auto cfg = small_config(LossVariant::sigmoid_eql);
  CHECK(cfg.resolved_bias_init() == 0.001);
  cfg.loss.variant = LossVariant::bce;
  CHECK(cfg.resolved_bias_init() == 0.0);
  cfg.bias_init = 0.25;
  CHECK(cfg.resolved_bias_init() == 0.25);
  const auto m = eql::init_model(4, 3, 0, false, 0.001, 1);
  for (double b : m.bias) CHECK(b == 0.001);
  for (double w : m.weights.values()) CHECK(std::abs(w) <= 0.5);
}

TEST_CASE("non-finite training aborts naming the iteration") {
  auto data = small_data();
  data.features(3, 1) = 1e300;
  auto cfg = small_config(LossVariant::bce);
  cfg.learning_rate = 1e10;
  try {
    eql::train(data, cfg);
    FAIL("expected a numeric error");
  } catch (const eql::NumericError& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("objectness head trains with plain bce") {
  auto cfg = small_config(LossVariant::sigmoid_eql);
  cfg.objectness_head = true;
  cfg.iterations = 200;
  const auto data = small_data();
  const auto r = eql::train(data, cfg);
  REQUIRE(r.model.has_objectness());
  const auto p_obj = r.model.objectness(data.features);
  // Every instance is foreground, so the head drifts toward 1.
  for (double p : p_obj) CHECK(p > 0.5);
  const auto composed = r.model.probabilities(data.features, true);
  const auto plain = r.model.probabilities(data.features, false);
  CHECK(composed(0, 0) == doctest::Approx(plain(0, 0) * p_obj[0]));
}

TEST_CASE("balanced bce data gives ratios near one") {
  eql::SynthParams p;
  p.classes = 2;
  p.dim = 4;
  p.base_count = 300;
  const auto data = eql::synth_longtail(p, 1);
  auto cfg = small_config(LossVariant::bce);
  cfg.iterations = 1000;
  cfg.learning_rate = 1.0;
  cfg.batch_size = 32;
  const auto r = eql::train(data, cfg);
  for (double x : r.stats.ratios()) {
    CHECK(x >= 0.8);
    CHECK(x <= 1.2);
  }
}

TEST_CASE("telemetry weights") {
  auto stats = eql::GradStats::from_accumulators({0.0, 2.0}, {1.0, 2.0});
  eql::LossConfig cfg;
  cfg.variant = LossVariant::efl;
  auto recs = eql::telemetry_snapshot(stats, cfg, 7, 0.5);
  CHECK(recs[0].gamma_eff == cfg.gamma_b + cfg.s);
  CHECK(recs[0].weight_pos == (cfg.gamma_b + cfg.s) / cfg.gamma_b);
  CHECK(recs[1].gamma_eff == doctest::Approx(cfg.gamma_b).epsilon(1e-10));
  CHECK(recs[1].weight_pos == doctest::Approx(1.0).epsilon(1e-10));
  cfg.variant = LossVariant::bce;
  recs = eql::telemetry_snapshot(stats, cfg, 7, 0.5);
  CHECK(recs[0].weight_pos == 1.0);
  CHECK(recs[0].weight_neg == 1.0);
  CHECK(recs[0].gamma_eff == 0.0);
  cfg.variant = LossVariant::sigmoid_eql;
  cfg.mapping = {eql::MappingKind::linear};
  recs = eql::telemetry_snapshot(stats, cfg, 7, 0.5);
  CHECK(recs[0].weight_neg == 0.0);
  CHECK(recs[0].weight_pos == 1.0 + cfg.alpha);
  CHECK(recs[1].iteration == 7);
}

TEST_CASE("argmax and grouped accuracy") {
  CHECK(eql::argmax(std::vector<double>{0.0, 0.0, 0.0}) == 0);
  CHECK(eql::argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  CHECK(eql::default_group_bounds(20) == std::vector<std::size_t>{5, 15});

  const std::vector<std::size_t> labels{0, 0, 1, 2, 3, 3, 3};
  eql::Matrix onehot(labels.size(), 4, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) onehot(i, labels[i]) = 10.0;
  const std::vector<std::size_t> bounds{1, 3};
  auto rep = eql::grouped_accuracy(onehot, labels, bounds);
  CHECK(rep.overall == 1.0);
  for (const auto& g : rep.groups) CHECK(*g.accuracy == 1.0);

  rep = eql::grouped_accuracy(eql::Matrix(labels.size(), 4, 0.0), labels, bounds);
  CHECK(*rep.groups[0].accuracy == 1.0);
  CHECK(*rep.groups[1].accuracy == 0.0);
  CHECK(*rep.groups[2].accuracy == 0.0);
  CHECK(rep.overall == doctest::Approx(2.0 / 7.0));

  const std::vector<std::size_t> no_tail{0, 1};
  rep = eql::grouped_accuracy(eql::Matrix(2, 4, 0.0), no_tail, bounds);
  CHECK_FALSE(rep.groups[2].accuracy.has_value());
  CHECK_FALSE(rep.per_category[3].has_value());
}

TEST_CASE("tail ratio mean uses the rarest quarter") {
  const auto stats = eql::GradStats::from_accumulators({1, 1, 1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1, 2, 4});
  CHECK(eql::tail_ratio_mean(stats) == doctest::Approx((0.5 + 0.25) / 2.0));
  const auto tiny = eql::GradStats::from_accumulators({1, 1}, {1, 2});
  CHECK(eql::tail_ratio_mean(tiny) == doctest::Approx(0.5));
}

TEST_CASE("gradient checker") {
  eql::GradCheckOptions opt;
  opt.trials = 100;
  for (auto v : {LossVariant::bce, LossVariant::efl}) {
    const auto rep = eql::grad_check(v, opt);
    CHECK(rep.passed);
    CHECK(rep.max_relative_error <= 1e-5);
  }
  opt.trials = 0;
  CHECK_THROWS_AS(eql::grad_check(LossVariant::bce, opt), eql::ParameterError);

  opt.trials = 5;
  opt.tamper = [](eql::Matrix& g) { g(0, 0) += 0.01; };
  const auto bad = eql::grad_check(LossVariant::bce, opt);
  CHECK_FALSE(bad.passed);
  REQUIRE(bad.worst.has_value());
  CHECK(bad.worst->row == 0);
  CHECK(bad.worst->col == 0);
  CHECK(std::abs(bad.worst->analytic - bad.worst->numeric) == doctest::Approx(0.01).epsilon(1e-6));
}
