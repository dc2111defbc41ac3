#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "eql/data.hpp"
#include "eql/grad_stats.hpp"
#include "eql/losses.hpp"
#include "eql/numerics.hpp"
#include "eql/telemetry.hpp"

namespace eql {

enum class Activation { relu, tanh };

/// Linear classifier, optionally behind one hidden layer, with an optional
/// objectness head reading the same features as the classifier.
struct Model {
  Matrix weights;             // F x C, F = input dim or hidden units
  std::vector<double> bias;   // C
  Matrix hidden_weights;      // D x H; empty when there is no hidden layer
  std::vector<double> hidden_bias;
  Activation activation = Activation::relu;
  std::vector<double> objectness_weights;  // F; empty when there is no objectness head
  double objectness_bias = 0.0;
  bool softmax_scores = false;  // softmax-family losses score with softmax, else sigmoid

  std::size_t input_dim() const noexcept;
  std::size_t num_categories() const noexcept { return bias.size(); }
  bool has_hidden() const noexcept { return hidden_weights.size() != 0; }
  bool has_objectness() const noexcept { return !objectness_weights.empty(); }

  Matrix features(const Matrix& x) const;  // hidden activations, or x itself
  Matrix logits(const Matrix& x) const;
  std::vector<double> objectness(const Matrix& x) const;
  /// Per-category probabilities (sigmoid or softmax), optionally times p_obj.
  Matrix probabilities(const Matrix& x, bool compose_with_objectness = false) const;

  bool all_finite() const noexcept;
  friend bool operator==(const Model&, const Model&) = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from `seed`; classifier bias `bias_init`.
Model init_model(std::size_t input_dim, std::size_t classes, std::size_t hidden_units,
                 bool objectness_head, double bias_init, std::uint64_t seed);

struct TrainConfig {
  LossConfig loss{};
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t iterations = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  std::size_t telemetry_every = 50;  // plus the final iteration; 0 disables
  bool objectness_head = false;
  std::size_t hidden_units = 0;
  Activation activation = Activation::relu;
  std::optional<double> bias_init;  // default: 0.001 for equalized losses, 0 otherwise
  double quality_target = 1.0;      // y' of the labelled category for qfl/eqfl
  double initial_ratio = 1.0;
  bool accumulate_base_gradients = false;  // accumulate the un-equalized loss gradient
  bool force_balanced_stats = false;       // evaluate every loss with all ratios = 1

  void validate() const;
  double resolved_bias_init() const noexcept;
};

/// Everything visible to an observer after one iteration's accumulation.
struct IterationView {
  std::size_t iteration;              // 1-based
  const GradStats& snapshot;          // statistics the loss was weighted with
  const GradStats& stats;             // statistics after accumulating this batch
  const LossOutput& loss;
  std::span<const std::size_t> labels;
};
using IterationObserver = std::function<void(const IterationView&)>;

struct TrainResult {
  Model initial_model;
  Model model;
  std::vector<TelemetryRecord> telemetry;
  GradStats stats{1};
  std::vector<double> loss_history;
};

/// SGD with momentum. Per iteration: sample a batch with replacement, forward,
/// evaluate the loss against the statistics of iterations < T, update the
/// parameters, accumulate the batch gradient, emit telemetry.
/// Throws NumericError naming the iteration when anything becomes non-finite.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const IterationObserver& observer = {});

/// Telemetry weights (weight_pos, weight_neg, gamma_eff) per category for `cfg`.
std::vector<TelemetryRecord> telemetry_snapshot(const GradStats& stats, const LossConfig& cfg,
                                                std::size_t iteration, double loss_value);

struct GroupAccuracy {
  std::size_t begin = 0;  // first category of the group
  std::size_t end = 0;    // one past the last category
  std::size_t count = 0;  // evaluated instances
  std::optional<double> accuracy;  // absent when count == 0
};

struct AccuracyReport {
  double overall = 0.0;
  std::vector<GroupAccuracy> groups;
  std::vector<std::optional<double>> per_category;
};

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores) noexcept;

/// Cuts {C/4, C - C/4}: head quartile, middle, tail quartile.
std::vector<std::size_t> default_group_bounds(std::size_t classes);

/// `bounds` are increasing cut points inside (0, C); k cuts give k + 1 groups.
AccuracyReport grouped_accuracy(const Matrix& scores, std::span<const std::size_t> labels,
                                std::span<const std::size_t> bounds);
AccuracyReport evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> bounds,
                        bool compose_with_objectness = false);

/// Mean of the final ratio over the rarest quarter of categories (at least one).
double tail_ratio_mean(const GradStats& stats);

struct GradCheckOptions {
  std::size_t trials = 100;
  double tolerance = 1e-5;         // max relative error
  double absolute_floor = 1e-8;    // |analytic| below this is compared absolutely
  double absolute_tolerance = 1e-9;
  double step = 1e-6;              // central-difference step
  double kink_margin = 1e-3;       // qfl/eqfl entries with |y' - p| below this are skipped
  std::uint64_t seed = 20240501;
  std::function<void(Matrix&)> tamper;  // fault injection on the analytic gradient
};

struct GradCheckEntry {
  std::size_t trial = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;  // relative, or absolute for tiny entries
  bool absolute = false;
  Matrix logits;
  LabelBatch labels;
};

struct GradCheckReport {
  LossVariant variant = LossVariant::bce;
  std::size_t trials = 0;
  double tolerance = 0.0;
  bool passed = true;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::optional<GradCheckEntry> worst;  // entry furthest beyond (or closest to) its tolerance
};

/// Central differences, evaluated in quad precision, against the closed-form
/// gradient on randomized batches, configurations and statistics.
GradCheckReport grad_check(LossVariant variant, const GradCheckOptions& options = {});

}  // namespace eql
