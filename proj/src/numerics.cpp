#include "drive/numerics.hpp"

#include <cmath>

namespace drive {

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape_string() + " by " +
                     b.shape_string() + " into " + out.shape_string());
  }
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* br = b.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      double* o = out.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
  require_finite(out, "matmul_tn");
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_accumulate(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: cannot multiply " + a.shape_string() + " by transpose of " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  require_finite(out, "matmul_nt");
  return out;
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be >= 1");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t state = a;
  state = splitmix64(state) ^ b;
  return splitmix64(state);
}

std::vector<double> rng_uniform(Rng& rng, std::size_t n, double lo, double hi) {
  if (!(lo < hi)) {
    throw std::invalid_argument("rng_uniform: lo must be < hi (got lo=" + std::to_string(lo) +
                                ", hi=" + std::to_string(hi) + ")");
  }
  std::vector<double> out(n);
  const double width = hi - lo;
  for (auto& v : out) {
    v = lo + width * rng.next_double();
    // Rounding can land exactly on hi for extreme ranges.
    if (v >= hi) v = std::nextafter(hi, lo);
  }
  return out;
}

Matrix init_weights(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) {
    throw std::invalid_argument("init_weights: fan_in and fan_out must be >= 1");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Matrix(fan_in, fan_out, rng_uniform(rng, fan_in * fan_out, -bound, bound));
}

}  // namespace drive
