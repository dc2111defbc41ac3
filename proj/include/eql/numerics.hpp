#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace eql {

/// Dense row-major matrix of doubles. Row i, column j lives at data[i * cols + j];
/// for logits and gradients rows are instances and columns are categories.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Numerically stable logistic function (two-branch form, never overflows).
double sigmoid(double x) noexcept;

/// log(sigmoid(x)) without cancellation for large |x|.
double log_sigmoid(double x) noexcept;

/// Softmax of (logits + offsets) computed with max-subtraction in the shifted space.
/// Throws DimensionError when the lengths differ or are zero.
std::vector<double> stable_softmax(std::span<const double> logits, std::span<const double> offsets);
std::vector<double> stable_softmax(std::span<const double> logits);

/// Kahan-compensated sum.
double stable_sum(std::span<const double> values) noexcept;

/// xoshiro256** seeded through splitmix64. The sequence for a given seed is
/// fixed by the algorithm alone, so runs reproduce bit-for-bit on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() noexcept;
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller (the spare value is cached).
  double normal() noexcept;

  /// Independent generator derived from this one's seed and a stream id.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by Rng (std::shuffle is not portable bit-for-bit).
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace eql
