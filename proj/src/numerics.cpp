#include "refit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "refit/error.hpp"

namespace refit {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw_invalid("matrix data length does not match shape");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Rng::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection on the biased tail keeps every outcome equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

std::pair<Rng, std::uint64_t> prng_next(Rng rng) noexcept {
  const std::uint64_t out = rng.next();
  return {rng, out};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role,
                          std::uint64_t index) noexcept {
  Rng mixer(seed ^ role ^ (index * 0x9E3779B97F4A7C15ULL));
  return mixer.next();
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw_invalid("empty logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw_invalid("non-finite input");
    mx = std::max(mx, v);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw_invalid("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double grad_check(const ScalarFn& loss, const GradientFn& grad,
                  std::span<const double> point, double h) {
  if (!(h > 0.0)) throw_invalid("grad_check step must be positive");
  const std::vector<double> analytic = grad(point);
  if (analytic.size() != point.size()) throw_invalid("gradient length mismatch");

  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss(x);
    x[i] = saved - h;
    const double down = loss(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw_invalid("non-differentiable point");
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

constexpr double kPowerTolerance = 1e-10;
constexpr int kPowerMaxIterations = 10'000;

// Covariance of mean-centred rows applied to a vector without forming the
// D x D matrix: cov * v = X^T (X v) / (n - 1).
class CovarianceOperator {
 public:
  CovarianceOperator(const Matrix& centred, double denom)
      : centred_(centred), denom_(denom) {}

  std::size_t dim() const noexcept { return centred_.cols(); }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(centred_.cols(), 0.0);
    for (std::size_t r = 0; r < centred_.rows(); ++r) {
      const auto row = centred_.row(r);
      const double s = dot(row, v) / denom_;
      if (s == 0.0) continue;
      for (std::size_t c = 0; c < row.size(); ++c) out[c] += s * row[c];
    }
    return out;
  }

 private:
  const Matrix& centred_;
  double denom_;
};

void remove_component(std::vector<double>& v, std::span<const double> unit) {
  const double proj = dot(v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * unit[i];
}

// Leading eigenpair of the covariance deflated by (lambda, unit) when
// `exclude` is non-empty. Returns a zero vector when no variance above
// 1e-12 * scale remains.
std::pair<std::vector<double>, double> leading_eigenpair(const CovarianceOperator& cov,
                                                         std::span<const double> exclude,
                                                         double excluded_lambda,
                                                         double scale) {
  const std::size_t d = cov.dim();
  auto apply = [&](std::span<const double> v) {
    std::vector<double> w = cov.apply(v);
    if (!exclude.empty()) {
      const double proj = dot(exclude, v);
      for (std::size_t i = 0; i < d; ++i) w[i] -= excluded_lambda * proj * exclude[i];
      remove_component(w, exclude);
    }
    return w;
  };

  Rng rng(0x7d3a1f6b9e2c4580ULL);
  std::vector<double> v(d);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  if (!exclude.empty()) remove_component(v, exclude);
  double norm = l2_norm(v);
  std::vector<double> zero(d, 0.0);
  if (norm == 0.0) return {zero, 0.0};
  for (double& x : v) x /= norm;

  const double floor = 1e-12 * scale;
  for (int iter = 0; iter < kPowerMaxIterations; ++iter) {
    std::vector<double> w = apply(v);
    norm = l2_norm(w);
    if (norm <= floor) return {zero, 0.0};
    double change = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      w[i] /= norm;
      change += (w[i] - v[i]) * (w[i] - v[i]);
    }
    v = std::move(w);
    if (std::sqrt(change) < kPowerTolerance) break;
  }
  const double lambda = dot(v, apply(v));
  if (lambda <= floor) return {zero, 0.0};

  std::size_t big = 0;
  for (std::size_t i = 1; i < d; ++i) {
    if (std::abs(v[i]) > std::abs(v[big])) big = i;
  }
  if (v[big] < 0) {
    for (double& x : v) x = -x;
  }
  return {v, lambda};
}

}  // namespace

PcaResult top2_pca(const Matrix& points) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (n == 0 || d < 2) throw_invalid("top2_pca needs at least 1 row and 2 columns");

  Matrix centred = points;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += points(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centred(r, c) -= mean;
  }

  double trace = 0.0;
  for (double v : centred.data()) trace += v * v;
  if (n > 1) trace /= static_cast<double>(n - 1);

  PcaResult result;
  result.components = Matrix(2, d);
  result.coords = Matrix(n, 2);
  if (n < 2 || trace <= 0.0) return result;

  const CovarianceOperator cov(centred, static_cast<double>(n - 1));
  auto [first, var1] = leading_eigenpair(cov, {}, 0.0, trace);
  std::vector<double> second(d, 0.0);
  double var2 = 0.0;
  if (var1 > 0.0) std::tie(second, var2) = leading_eigenpair(cov, first, var1, trace);

  result.variances[0] = var1;
  result.variances[1] = var2;
  std::copy(first.begin(), first.end(), result.components.row(0).begin());
  std::copy(second.begin(), second.end(), result.components.row(1).begin());
  for (std::size_t r = 0; r < n; ++r) {
    result.coords(r, 0) = dot(centred.row(r), first);
    result.coords(r, 1) = dot(centred.row(r), second);
  }
  return result;
}

}  // namespace refit
