#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ddic {

// Fixed 64-byte alignment keeps vectorized reductions summing in the same
// order no matter where the allocator happens to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

// Dense row-major matrix of doubles. Value type; every operation below
// returns a fresh matrix and leaves its inputs untouched.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Element-wise equality; NaN compares unequal, as with double.
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedVector values_;
};

std::string shape_string(const Matrix& m);

// Throws ShapeError naming `what` when shapes differ.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

// Bit-level equality, treating two NaNs with the same payload as equal.
bool bitwise_equal(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix& operator+=(Matrix& a, const Matrix& b);

double sum(const Matrix& m);
// n x 1
Matrix row_sums(const Matrix& m);
// 1 x m
Matrix col_sums(const Matrix& m);
// Mean of every column, 1 x cols.
Matrix col_means(const Matrix& m);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices);

// Squared Euclidean distances between rows of x and rows of y, computed
// coordinate by coordinate (no norm expansion) and clamped at zero.
Matrix pairwise_sq_dists(const Matrix& x, const Matrix& y);

// Max-shifted log(sum(exp(row))) for every row.
std::vector<double> logsumexp_rows(const Matrix& m);

}  // namespace ddic
