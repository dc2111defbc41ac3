#include "eql/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eql/error.hpp"

namespace eql {

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw DimensionError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (per_category_counts.size() != num_categories) {
    throw DimensionError("per-category counts do not match the category count");
  }
  std::size_t total = 0;
  for (std::size_t c : per_category_counts) total += c;
  if (total != labels.size()) {
    throw ParameterError("per-category counts sum to " + std::to_string(total) + ", expected " +
                         std::to_string(labels.size()));
  }
  for (std::size_t label : labels) {
    if (label >= num_categories) {
      throw ParameterError("label " + std::to_string(label) + " out of range");
    }
  }
}

Dataset make_dataset(Matrix features, LabelBatch labels, std::size_t num_categories) {
  if (num_categories == 0) {
    for (std::size_t label : labels) num_categories = std::max(num_categories, label + 1);
  }
  Dataset data;
  data.features = std::move(features);
  data.labels = std::move(labels);
  data.num_categories = num_categories;
  data.per_category_counts = count_pos_neg(data.labels, num_categories).positives;
  data.validate();
  return data;
}

double decay_for_imbalance(double imbalance, std::size_t classes) {
  if (!(imbalance >= 1.0) || classes < 2) {
    throw ParameterError("imbalance must be >= 1 with at least two classes");
  }
  return std::log(imbalance) / static_cast<double>(classes - 1);
}

std::vector<std::size_t> longtail_counts(std::size_t classes, std::size_t base_count, double decay) {
  std::vector<std::size_t> counts(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    const double n = std::round(static_cast<double>(base_count) * std::exp(-decay * static_cast<double>(j)));
    counts[j] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
  }
  return counts;
}

namespace {

std::vector<std::vector<double>> place_centers(const SynthParams& p, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0xC3);
  const double min_sq = 4.0 * p.cluster_spread * p.cluster_spread;
  std::vector<std::vector<double>> centers;
  centers.reserve(p.classes);
  for (std::size_t j = 0; j < p.classes; ++j) {
    std::vector<double> c(p.dim);
    for (int attempt = 0; attempt <= 1000; ++attempt) {
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      const bool separated = std::all_of(centers.begin(), centers.end(), [&](const auto& other) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < p.dim; ++k) d2 += (c[k] - other[k]) * (c[k] - other[k]);
        return d2 >= min_sq;
      });
      if (separated) break;
    }
    centers.push_back(std::move(c));
  }
  return centers;
}

}  // namespace

Dataset synth_longtail(const SynthParams& params, std::uint64_t seed, std::uint64_t stream) {
  if (params.classes < 2) throw ParameterError("synth_longtail needs at least 2 classes");
  if (params.dim < 1) throw ParameterError("synth_longtail needs dim >= 1");
  if (params.base_count < 1) throw ParameterError("synth_longtail needs base_count >= 1");
  if (!(params.decay >= 0.0) || !std::isfinite(params.decay)) {
    throw ParameterError("decay must be finite and >= 0");
  }
  if (!(params.cluster_spread > 0.0) || !std::isfinite(params.cluster_spread)) {
    throw ParameterError("cluster_spread must be finite and > 0");
  }

  const auto centers = place_centers(params, seed);
  const auto counts = longtail_counts(params.classes, params.base_count, params.decay);
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;

  Rng rng = Rng::stream(seed, 0x100 + stream);
  Matrix features(total, params.dim);
  LabelBatch labels;
  labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t j = 0; j < params.classes; ++j) {
    for (std::size_t n = 0; n < counts[j]; ++n, ++row) {
      auto x = features.row(row);
      for (std::size_t k = 0; k < params.dim; ++k) {
        x[k] = centers[j][k] + params.cluster_spread * rng.normal();
      }
      labels.push_back(j);
    }
  }
  return make_dataset(std::move(features), std::move(labels), params.classes);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw ParameterError(path.string() + " is empty");
  }
  std::vector<std::string> header = split_fields(line);
  for (auto& h : header) h = trim(h);

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestionError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != label_col) feature_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(column_of(name));
  }

  std::vector<double> values;
  LabelBatch labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    for (std::size_t c : feature_cols) {
      const std::string cell = trim(fields[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": column '" +
                             header[c] + "' is not a finite number: '" + cell + "'");
      }
      values.push_back(v);
    }
    const std::string cell = trim(fields[label_col]);
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) +
                           ": label is not a non-negative integer: '" + cell + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw ParameterError(path.string() + " has no data rows");
  Matrix features(labels.size(), feature_cols.size(), std::move(values));
  return make_dataset(std::move(features), std::move(labels));
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (std::size_t k = 0; k < data.dim(); ++k) out << 'f' << k << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << data.labels[i] << '\n';
  }
  if (!out) throw IngestionError("failed writing " + path.string());
}

Split split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ParameterError("test_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_category(data.num_categories);
  for (std::size_t i = 0; i < data.size(); ++i) by_category[data.labels[i]].push_back(i);

  Rng rng = Rng::stream(seed, 0x5A);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (auto& members : by_category) {
    const std::size_t n = members.size();
    std::size_t n_test = 0;
    if (n >= 2) {
      const auto want = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
      n_test = std::clamp<std::size_t>(want, 1, n - 1);
    }
    shuffle(members, rng);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto gather = [&](const std::vector<std::size_t>& idx) {
    Matrix features(idx.size(), data.dim());
    LabelBatch labels(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy_n(data.features.row(idx[r]).begin(), data.dim(), features.row(r).begin());
      labels[r] = data.labels[idx[r]];
    }
    return make_dataset(std::move(features), std::move(labels), data.num_categories);
  };
  return {gather(train_idx), gather(test_idx)};
}

}  // namespace eql
