#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nexus/rng.hpp"

namespace nexus {

/// Dense row-major matrix of doubles. The value type for inputs, weights,
/// activations and gradients throughout the library.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Copy of the block [r0, r0+nr) x [c0, c0+nc).
  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
  void set_block(std::size_t r0, std::size_t c0, const Matrix& src);

  std::string shape_string() const;

  // Exact element-wise equality (bitwise for non-NaN values).
  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- products: each output element is summed over k in ascending order ----
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_at_b(const Matrix& a, const Matrix& b);  // aᵀ b
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);  // a bᵀ
Matrix transpose(const Matrix& a);

/// Counts multiply-adds done by the matmul family on the current thread
/// while alive. Nested counters each see their own share.
class MultiplyAddCounter {
 public:
  MultiplyAddCounter();
  ~MultiplyAddCounter();
  MultiplyAddCounter(const MultiplyAddCounter&) = delete;
  MultiplyAddCounter& operator=(const MultiplyAddCounter&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  MultiplyAddCounter* outer_;
  friend void record_multiply_adds(std::uint64_t n);
};
void record_multiply_adds(std::uint64_t n);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);
void axpy_in_place(Matrix& a, double s, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

// ---- activations ----
/// Exact GeLU x·Φ(x) using the Gaussian CDF. gelu(0) is exactly 0.
double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& x);
Matrix gelu_derivative(const Matrix& x);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& x);
/// Masked variant: entries where keep(r, c) == 0 are excluded and set to 0.
/// A row with no kept entries is an error.
Matrix softmax_rows(const Matrix& x, const Matrix& keep);
/// Lower-triangular keep-mask (1 on and below the diagonal).
Matrix causal_mask(std::size_t n);

// ---- small factorizations ----
struct QrResult {
  Matrix q;  // rows x cols, orthonormal columns
  Matrix r;  // cols x cols, upper triangular with non-negative diagonal
};
/// Householder thin QR. Throws NumericError when a pivot falls below
/// 1e-10 times the largest column norm.
QrResult qr_thin(const Matrix& m);

struct SvdResult {
  std::vector<double> singular_values;  // descending, >= 0
  Matrix u;                             // rows x k
  Matrix v;                             // cols x k, with m = u diag(s) vᵀ
};
/// One-sided Jacobi SVD for matrices with min(rows, cols) <= 3.
SvdResult svd_small(const Matrix& m);

struct EigResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // columns are eigenvectors
};
/// Cyclic Jacobi eigensolver for a symmetric matrix of any (small) order.
/// Eigenvector sign: the largest-magnitude component is positive.
EigResult eig_sym(const Matrix& c);
/// 3x3 specialisation with the symmetry precondition checked (1e-12).
EigResult eig_sym3(const Matrix& c);

// ---- gradient checking ----
using ScalarFn = std::function<double(const Matrix&)>;
/// Central differences (f(x+εe) - f(x-εe)) / 2ε for every entry.
Matrix finite_diff_grad(const ScalarFn& f, const Matrix& x, double eps = 1e-5);

// ---- sampling ----
Matrix seeded_gaussian(CounterRng& rng, std::size_t rows, std::size_t cols, double mean,
                       double stddev);

double mean_of(std::span<const double> v);
/// Population standard deviation.
double stddev_of(std::span<const double> v);

}  // namespace nexus
