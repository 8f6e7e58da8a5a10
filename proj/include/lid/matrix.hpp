#pragma once

// Dense row-major matrices of doubles plus seeded sampling. Batches are rows
// and features/units are columns, so a forward pass is a chain of matmuls.
// Everything is 64-bit: the finite-difference gradient checks need the
// precision headroom and the networks are small.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lid/error.hpp"

namespace lid {

// Epsilon added under every square root that forms a stddev.
inline constexpr double kBnEpsilon = 1e-6;
// Floor for log() in cost functions, keeps confident-wrong outputs finite.
inline constexpr double kLogFloor = 1e-30;

class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    size_t i = 0;
    for (const auto& r : rows) {
      if (r.size() != m.cols_) throw std::invalid_argument("ragged initializer");
      size_t j = 0;
      for (double v : r) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape_str() +
                                " * " + b.shape_str());
  Matrix out(a.rows(), b.cols());
  for (size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.data() + i * b.cols();
    for (size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.data() + k * b.cols();
      for (size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// Numerically stable row-wise softmax (per-row max subtraction).
inline Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (size_t i = 0; i < z.rows(); ++i) {
    double mx = z(i, 0);
    for (size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
    double sum = 0;
    for (size_t j = 0; j < z.cols(); ++j) {
      out(i, j) = std::exp(z(i, j) - mx);
      sum += out(i, j);
    }
    for (size_t j = 0; j < z.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

// Per-column population mean and variance (divide by rows), as 1 x cols rows.
inline std::pair<Matrix, Matrix> batch_moments(const Matrix& z) {
  if (z.rows() == 0) throw std::invalid_argument("batch_moments: zero rows");
  const double n = static_cast<double>(z.rows());
  Matrix mean(1, z.cols()), var(1, z.cols());
  for (size_t i = 0; i < z.rows(); ++i)
    for (size_t j = 0; j < z.cols(); ++j) mean(0, j) += z(i, j);
  for (size_t j = 0; j < z.cols(); ++j) mean(0, j) /= n;
  for (size_t i = 0; i < z.rows(); ++i)
    for (size_t j = 0; j < z.cols(); ++j) {
      double d = z(i, j) - mean(0, j);
      var(0, j) += d * d;
    }
  for (size_t j = 0; j < z.cols(); ++j) var(0, j) /= n;
  return {std::move(mean), std::move(var)};
}

// Seeded random source. Same seed, same stream; derived streams are keyed by
// a splitmix64 hash so substreams never overlap by construction.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double gaussian(double sigma) {
    if (sigma < 0) throw std::invalid_argument("gaussian: negative sigma");
    if (sigma == 0) return 0.0;
    return sigma * normal_(engine_);
  }

  size_t below(size_t n) {
    std::uniform_int_distribution<size_t> d(0, n - 1);
    return d(engine_);
  }

  double uniform01() {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(engine_);
  }

  // Fisher-Yates with an explicit draw order, stable across epochs.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  Rng derive(uint64_t stream) const { return Rng(mix(seed_, stream)); }

  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Matrix sample_gaussian(Rng& rng, size_t rows, size_t cols, double sigma) {
  if (sigma < 0) throw std::invalid_argument("sample_gaussian: negative sigma");
  Matrix m(rows, cols);
  if (sigma == 0) return m;
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian(sigma);
  return m;
}

}  // namespace lid
