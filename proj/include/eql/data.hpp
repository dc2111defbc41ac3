#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eql/grad_stats.hpp"
#include "eql/numerics.hpp"

namespace eql {

/// N instances with D features each and a single category label per instance.
struct Dataset {
  Matrix features;  // N x D
  LabelBatch labels;
  std::size_t num_categories = 0;
  std::vector<std::size_t> per_category_counts;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  /// Throws DimensionError/ParameterError when the invariants do not hold.
  void validate() const;
};

/// Builds a dataset and derives num_categories (max label + 1 unless given) and counts.
Dataset make_dataset(Matrix features, LabelBatch labels, std::size_t num_categories = 0);

struct SynthParams {
  std::size_t classes = 20;
  std::size_t dim = 16;
  std::size_t base_count = 500;
  double decay = 0.0;
  double cluster_spread = 1.2;
};

/// decay such that base_count / tail_count == imbalance over `classes` categories.
double decay_for_imbalance(double imbalance, std::size_t classes);

/// Category j gets max(1, round(base_count * e^{-decay j})) instances drawn from an
/// isotropic Gaussian (std = cluster_spread) around a center in [-1, 1]^D.
/// Centers depend only on (seed, classes, dim, cluster_spread); `stream` selects an
/// independent draw of instances, so stream 1 can serve as a held-out set for stream 0.
Dataset synth_longtail(const SynthParams& params, std::uint64_t seed, std::uint64_t stream = 0);

/// Per-category instance counts produced by synth_longtail.
std::vector<std::size_t> longtail_counts(std::size_t classes, std::size_t base_count, double decay);

struct CsvSchema {
  std::vector<std::string> feature_columns;  // empty: every column except the label
  std::string label_column = "label";
};

/// Reads `f0,...,f{D-1},label` style CSV. Errors name the offending line.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void save_csv(const Dataset& data, const std::filesystem::path& path);

struct Split {
  Dataset train;
  Dataset test;
};

/// Stratified split: each category with >= 2 instances sends
/// clamp(round(n * test_fraction), 1, n - 1) to test; singletons stay in train.
Split split(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace eql
