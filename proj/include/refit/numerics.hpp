#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace refit {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// SplitMix64. Every random draw in the project flows through this type, so
// a seed fully determines an experiment on any platform.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Value-passing form of Rng::next.
std::pair<Rng, std::uint64_t> prng_next(Rng rng) noexcept;

// Mixes a base seed with a role tag and an index into an independent stream
// seed: seed ^ role ^ golden-ratio-scaled index, then one SplitMix64 round.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role, std::uint64_t index) noexcept;

// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

// Numerically stable softmax (max subtraction). Throws on empty or non-finite
// input.
std::vector<double> softmax(std::span<const double> logits);

// Index of the maximum entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

inline constexpr double kDefaultGradCheckStep = 1e-5;

// Max over coordinates of |analytic - central difference| /
// max(1, |central difference|).
double grad_check(const ScalarFn& loss, const GradientFn& grad,
                  std::span<const double> point, double h = kDefaultGradCheckStep);

struct PcaResult {
  Matrix coords;                  // N x 2
  double variances[2] = {0, 0};   // descending
  Matrix components;              // 2 x D, unit rows or zero rows
};

// Projects mean-centred rows onto the two leading covariance eigenvectors,
// found by power iteration with deflation. Components with no remaining
// variance are reported as zero vectors. Sign: each component's
// largest-magnitude entry is positive.
PcaResult top2_pca(const Matrix& points);

}  // namespace refit
