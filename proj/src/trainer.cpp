#include "eql/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eql/error.hpp"

namespace eql {

namespace {

// out = a (n x k) * b (k x m) + bias (m)
Matrix affine(const Matrix& a, const Matrix& b, std::span<const double> bias) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    std::copy(bias.begin(), bias.end(), o.begin());
    const auto x = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double xk = x[k];
      if (xk == 0.0) continue;
      const auto w = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += xk * w[j];
    }
  }
  return out;
}

// a^T (k x n) * g (n x m)
Matrix transpose_times(const Matrix& a, const Matrix& g) {
  Matrix out(a.cols(), g.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto x = a.row(i);
    const auto gi = g.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      auto o = out.row(k);
      for (std::size_t j = 0; j < g.cols(); ++j) o[j] += x[k] * gi[j];
    }
  }
  return out;
}

// g (n x m) * b^T (m x k)
Matrix times_transpose(const Matrix& g, const Matrix& b) {
  Matrix out(g.rows(), b.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto gi = g.row(i);
    auto o = out.row(i);
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const auto w = b.row(k);
      double acc = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) acc += gi[j] * w[j];
      o[k] = acc;
    }
  }
  return out;
}

std::vector<double> column_sums(const Matrix& g) {
  std::vector<double> out(g.cols(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto gi = g.row(i);
    for (std::size_t j = 0; j < g.cols(); ++j) out[j] += gi[j];
  }
  return out;
}

double activate(Activation a, double x) { return a == Activation::relu ? std::max(0.0, x) : std::tanh(x); }

double activate_grad(Activation a, double pre, double post) {
  return a == Activation::relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

void fill_uniform(std::span<double> values, double bound, Rng& rng) {
  for (double& v : values) v = rng.uniform(-bound, bound);
}

struct Velocity {
  Matrix weights;
  std::vector<double> bias;
  Matrix hidden_weights;
  std::vector<double> hidden_bias;
  std::vector<double> objectness_weights;
  double objectness_bias = 0.0;
};

void momentum_step(std::span<double> param, std::span<double> velocity,
                   std::span<const double> grad, double lr, double momentum) {
  for (std::size_t k = 0; k < param.size(); ++k) {
    velocity[k] = momentum * velocity[k] + grad[k];
    param[k] -= lr * velocity[k];
  }
}

LossVariant base_variant(LossVariant v) {
  switch (v) {
    case LossVariant::sigmoid_eql:
      return LossVariant::bce;
    case LossVariant::softmax_eql:
      return LossVariant::ce;
    case LossVariant::efl:
      return LossVariant::focal;
    case LossVariant::eqfl:
      return LossVariant::qfl;
    default:
      return v;
  }
}

}  // namespace

std::size_t Model::input_dim() const noexcept {
  return has_hidden() ? hidden_weights.rows() : weights.rows();
}

Matrix Model::features(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(input_dim()));
  }
  if (!has_hidden()) return x;
  Matrix h = affine(x, hidden_weights, hidden_bias);
  for (double& v : h.values()) v = activate(activation, v);
  return h;
}

Matrix Model::logits(const Matrix& x) const { return affine(features(x), weights, bias); }

std::vector<double> Model::objectness(const Matrix& x) const {
  if (!has_objectness()) {
    return std::vector<double>(x.rows(), 1.0);
  }
  const Matrix f = features(x);
  std::vector<double> out(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    double z = objectness_bias;
    const auto row = f.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) z += row[k] * objectness_weights[k];
    out[i] = sigmoid(z);
  }
  return out;
}

Matrix Model::probabilities(const Matrix& x, bool compose_with_objectness) const {
  Matrix p = logits(x);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    if (softmax_scores) {
      const auto s = stable_softmax(row);
      std::copy(s.begin(), s.end(), row.begin());
    } else {
      for (double& v : row) v = sigmoid(v);
    }
  }
  if (compose_with_objectness && has_objectness()) {
    return compose_objectness(p, objectness(x));
  }
  return p;
}

bool Model::all_finite() const noexcept {
  auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return weights.all_finite() && finite(bias) && hidden_weights.all_finite() &&
         finite(hidden_bias) && finite(objectness_weights) && std::isfinite(objectness_bias);
}

Model init_model(std::size_t input_dim, std::size_t classes, std::size_t hidden_units,
                 bool objectness_head, double bias_init, std::uint64_t seed) {
  if (input_dim == 0 || classes == 0) throw ParameterError("model needs non-zero dimensions");
  Rng rng = Rng::stream(seed, 0x1417);
  Model m;
  std::size_t fan_in = input_dim;
  if (hidden_units > 0) {
    m.hidden_weights = Matrix(input_dim, hidden_units);
    m.hidden_bias.assign(hidden_units, 0.0);
    fill_uniform(m.hidden_weights.values(), 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
    fan_in = hidden_units;
  }
  m.weights = Matrix(fan_in, classes);
  fill_uniform(m.weights.values(), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  m.bias.assign(classes, bias_init);
  if (objectness_head) {
    m.objectness_weights.resize(fan_in);
    fill_uniform(m.objectness_weights, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  }
  return m;
}

void TrainConfig::validate() const {
  loss.validate();
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (iterations < 1) throw ParameterError("iterations must be >= 1");
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (!(quality_target >= 0.0 && quality_target <= 1.0)) {
    throw ParameterError("quality target must lie in [0, 1]");
  }
  if (!(initial_ratio >= 0.0 && initial_ratio <= 1.0)) {
    throw ParameterError("initial ratio must lie in [0, 1]");
  }
  if (bias_init && !std::isfinite(*bias_init)) throw ParameterError("bias init must be finite");
}

double TrainConfig::resolved_bias_init() const noexcept {
  if (bias_init) return *bias_init;
  return is_equalized(loss.variant) ? 0.001 : 0.0;
}

std::vector<TelemetryRecord> telemetry_snapshot(const GradStats& stats, const LossConfig& cfg,
                                                std::size_t iteration, double loss_value) {
  const auto weights = category_weights(stats, cfg);
  std::vector<TelemetryRecord> out(stats.num_categories());
  for (std::size_t j = 0; j < out.size(); ++j) {
    TelemetryRecord& r = out[j];
    r.iteration = iteration;
    r.category = j;
    r.g_pos = stats.g_pos()[j];
    r.g_neg = stats.g_neg()[j];
    r.ratio = stats.ratio(j);
    r.loss_value = loss_value;
    switch (cfg.variant) {
      case LossVariant::sigmoid_eql:
        r.weight_pos = weights[j].weight_pos;
        r.weight_neg = weights[j].weight_neg;
        break;
      case LossVariant::efl:
      case LossVariant::eqfl:
        r.weight_pos = r.weight_neg = weights[j].gamma / cfg.gamma_b;
        r.gamma_eff = weights[j].gamma;
        break;
      case LossVariant::focal:
      case LossVariant::qfl:
        r.gamma_eff = cfg.gamma_b;
        break;
      default:
        break;
    }
  }
  return out;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw ParameterError("cannot train on an empty dataset");

  const std::size_t classes = data.num_categories;
  const std::size_t batch = cfg.batch_size;
  const bool quality = uses_quality_targets(cfg.loss.variant);

  TrainResult result{
      init_model(data.dim(), classes, cfg.hidden_units, cfg.objectness_head,
                 cfg.resolved_bias_init(), cfg.seed),
      {}, {}, GradStats(classes, cfg.initial_ratio), {}};
  result.initial_model.activation = cfg.activation;
  result.initial_model.softmax_scores = is_softmax_family(cfg.loss.variant);
  result.model = result.initial_model;
  result.loss_history.reserve(cfg.iterations);

  Model& model = result.model;
  GradStats& stats = result.stats;
  const GradStats balanced(classes, 1.0);
  LossConfig base_cfg = cfg.loss;
  base_cfg.variant = base_variant(cfg.loss.variant);

  Velocity vel{Matrix(model.weights.rows(), model.weights.cols()),
               std::vector<double>(model.bias.size(), 0.0),
               Matrix(model.hidden_weights.rows(), model.hidden_weights.cols()),
               std::vector<double>(model.hidden_bias.size(), 0.0),
               std::vector<double>(model.objectness_weights.size(), 0.0),
               0.0};

  Rng rng = Rng::stream(cfg.seed, 0xBA7C4);
  Matrix x(batch, data.dim());
  LabelBatch labels(batch);
  const std::vector<double> quality_targets(quality ? batch : 0, cfg.quality_target);

  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    for (std::size_t i = 0; i < batch; ++i) {
      const auto idx = static_cast<std::size_t>(rng.next_below(data.size()));
      std::copy_n(data.features.row(idx).begin(), data.dim(), x.row(i).begin());
      labels[i] = data.labels[idx];
    }

    Matrix pre;
    Matrix feats = x;
    if (model.has_hidden()) {
      pre = affine(x, model.hidden_weights, model.hidden_bias);
      feats = pre;
      for (double& v : feats.values()) v = activate(model.activation, v);
    }
    const Matrix logits = affine(feats, model.weights, model.bias);

    // Statistics up to iteration t-1 weight this batch.
    const GradStats& snapshot = cfg.force_balanced_stats ? balanced : stats;
    LossOutput loss;
    try {
      loss = compute_loss(logits, labels, quality_targets, snapshot, cfg.loss);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(t) + ": " + e.what());
    }
    result.loss_history.push_back(loss.value);

    const Matrix grad_w = transpose_times(feats, loss.grad);
    const std::vector<double> grad_b = column_sums(loss.grad);
    Matrix grad_feats;
    if (model.has_hidden()) grad_feats = times_transpose(loss.grad, model.weights);

    if (model.has_objectness()) {
      // Plain BCE, every instance is foreground.
      std::vector<double> grad_ow(model.objectness_weights.size(), 0.0);
      double grad_ob = 0.0;
      const double scale = 1.0 / static_cast<double>(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const auto f = feats.row(i);
        double z = model.objectness_bias;
        for (std::size_t k = 0; k < f.size(); ++k) z += f[k] * model.objectness_weights[k];
        const double g = scale * (sigmoid(z) - 1.0);
        grad_ob += g;
        for (std::size_t k = 0; k < f.size(); ++k) grad_ow[k] += g * f[k];
        if (model.has_hidden()) {
          auto gf = grad_feats.row(i);
          for (std::size_t k = 0; k < f.size(); ++k) gf[k] += g * model.objectness_weights[k];
        }
      }
      momentum_step(model.objectness_weights, vel.objectness_weights, grad_ow, cfg.learning_rate,
                    cfg.momentum);
      vel.objectness_bias = cfg.momentum * vel.objectness_bias + grad_ob;
      model.objectness_bias -= cfg.learning_rate * vel.objectness_bias;
    }

    if (model.has_hidden()) {
      for (std::size_t k = 0; k < grad_feats.size(); ++k) {
        grad_feats.values()[k] *= activate_grad(model.activation, pre.values()[k], feats.values()[k]);
      }
      const Matrix grad_hw = transpose_times(x, grad_feats);
      const std::vector<double> grad_hb = column_sums(grad_feats);
      momentum_step(model.hidden_weights.values(), vel.hidden_weights.values(), grad_hw.values(),
                    cfg.learning_rate, cfg.momentum);
      momentum_step(model.hidden_bias, vel.hidden_bias, grad_hb, cfg.learning_rate, cfg.momentum);
    }
    momentum_step(model.weights.values(), vel.weights.values(), grad_w.values(), cfg.learning_rate,
                  cfg.momentum);
    momentum_step(model.bias, vel.bias, grad_b, cfg.learning_rate, cfg.momentum);
    if (!model.all_finite()) {
      throw NumericError("iteration " + std::to_string(t) + ": parameters became non-finite");
    }

    const GradStats previous = observer ? stats : GradStats(1);
    if (cfg.accumulate_base_gradients && base_cfg.variant != cfg.loss.variant) {
      const LossOutput base = compute_loss(logits, labels, quality_targets, balanced, base_cfg);
      stats.accumulate(base.grad, labels);
    } else {
      stats.accumulate(loss.grad, labels);
    }

    if (observer) {
      observer(IterationView{t, cfg.force_balanced_stats ? balanced : previous, stats, loss, labels});
    }

    const bool emit = cfg.telemetry_every > 0 &&
                      (t % cfg.telemetry_every == 0 || t == cfg.iterations);
    if (emit) {
      // Weights are the ones applied this iteration; accumulators include this batch.
      auto records = telemetry_snapshot(snapshot, cfg.loss, t, loss.value);
      for (std::size_t j = 0; j < classes; ++j) {
        records[j].g_pos = stats.g_pos()[j];
        records[j].g_neg = stats.g_neg()[j];
        records[j].ratio = stats.ratio(j);
      }
      result.telemetry.insert(result.telemetry.end(), records.begin(), records.end());
    }
  }
  return result;
}

std::size_t argmax(std::span<const double> scores) noexcept {
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

std::vector<std::size_t> default_group_bounds(std::size_t classes) {
  if (classes < 3) return {};
  const std::size_t quarter = std::max<std::size_t>(1, classes / 4);
  return {quarter, classes - quarter};
}

AccuracyReport grouped_accuracy(const Matrix& scores, std::span<const std::size_t> labels,
                                std::span<const std::size_t> bounds) {
  if (scores.rows() != labels.size()) {
    throw DimensionError("scores have " + std::to_string(scores.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = scores.cols();
  std::size_t prev = 0;
  for (std::size_t b : bounds) {
    if (b <= prev || b >= classes) throw ParameterError("group bounds must increase inside (0, C)");
    prev = b;
  }

  std::vector<std::size_t> seen(classes, 0);
  std::vector<std::size_t> hit(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DimensionError("label out of range");
    const bool ok = argmax(scores.row(i)) == labels[i];
    ++seen[labels[i]];
    hit[labels[i]] += ok ? 1 : 0;
    correct += ok ? 1 : 0;
  }

  AccuracyReport report;
  report.overall = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  report.per_category.resize(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    if (seen[j] > 0) report.per_category[j] = static_cast<double>(hit[j]) / static_cast<double>(seen[j]);
  }
  std::vector<std::size_t> cuts(bounds.begin(), bounds.end());
  cuts.push_back(classes);
  std::size_t begin = 0;
  for (std::size_t end : cuts) {
    GroupAccuracy g{begin, end, 0, std::nullopt};
    std::size_t group_hit = 0;
    for (std::size_t j = begin; j < end; ++j) {
      g.count += seen[j];
      group_hit += hit[j];
    }
    if (g.count > 0) g.accuracy = static_cast<double>(group_hit) / static_cast<double>(g.count);
    report.groups.push_back(g);
    begin = end;
  }
  return report;
}

AccuracyReport evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> bounds,
                        bool compose_with_objectness) {
  if (data.num_categories != model.num_categories()) {
    throw DimensionError("dataset has " + std::to_string(data.num_categories) +
                         " categories, model has " + std::to_string(model.num_categories()));
  }
  return grouped_accuracy(model.probabilities(data.features, compose_with_objectness), data.labels,
                          bounds);
}

double tail_ratio_mean(const GradStats& stats) {
  const std::size_t classes = stats.num_categories();
  const std::size_t quarter = std::max<std::size_t>(1, classes / 4);
  double sum = 0.0;
  for (std::size_t j = classes - quarter; j < classes; ++j) sum += stats.ratio(j);
  return sum / static_cast<double>(quarter);
}

}  // namespace eql
