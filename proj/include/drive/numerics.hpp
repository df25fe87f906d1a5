#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drive {

/// Raised when operand dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  /// "3x4" style description used in error messages.
  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Products. Zero entries of the left operand are skipped, which makes
// the binary spike inputs of the first layer cheap to multiply.

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// out += a^T * b
void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out);

/// xoshiro256** seeded through splitmix64. Single owner, never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_double();
  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// n draws uniform in [lo, hi). Throws std::invalid_argument if lo >= hi.
std::vector<double> rng_uniform(Rng& rng, std::size_t n, double lo, double hi);

/// fan_in x fan_out matrix with entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix init_weights(Rng& rng, std::size_t fan_in, std::size_t fan_out);

}  // namespace drive
