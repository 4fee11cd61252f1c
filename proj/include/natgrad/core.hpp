#pragma once

// Dense vectors, row-major matrices and the symmetric linear-operator
// interface consumed by the Krylov solver.

#include <cstddef>
#include <span>
#include <vector>

#include "natgrad/error.hpp"

namespace natgrad {

/// Maps a contiguous range of a flat parameter vector back to a layer tensor.
struct Segment {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Segment&) const = default;
};

/// Flat real vector (parameters, directions, gradients) with an optional
/// segment map. A vector built from a bare length carries one segment
/// covering everything.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n);
  explicit ParamVector(std::vector<double> data);
  ParamVector(std::vector<double> data, std::vector<Segment> segments);

  static ParamVector zeros_like(const ParamVector& other);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  const std::vector<Segment>& segments() const { return segments_; }
  std::span<const double> segment(std::size_t k) const;

  bool all_finite() const;
  bool is_zero() const;

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  /// Value equality; segment maps are ignored.
  bool operator==(const ParamVector& other) const { return data_ == other.data_; }

 private:
  std::vector<double> data_;
  std::vector<Segment> segments_;
};

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  DenseMatrix transposed() const;
  /// Rows `indices` in the given order.
  DenseMatrix select_rows(std::span<const std::size_t> indices) const;
  bool all_finite() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Vector algebra. All reductions accumulate in a fixed order.
double dot(std::span<const double> u, std::span<const double> v);
double dot(const ParamVector& u, const ParamVector& v);
double norm2(const ParamVector& v);
/// Returns a*x + y.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
/// y += a*x.
void axpy_inplace(double a, const ParamVector& x, ParamVector& y);
ParamVector scaled(double a, const ParamVector& x);
/// Returns a - b.
ParamVector subtract(const ParamVector& a, const ParamVector& b);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
ParamVector matvec(const DenseMatrix& a, const ParamVector& x);
/// sum_ij A_ij B_ij
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);

/// A symmetric linear map of a fixed dimension. Implementations must be
/// deterministic and must map zero to zero.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t dim() const = 0;
  /// out = A * in. `out` has dim() entries and does not alias `in`.
  virtual void apply(std::span<const double> in, std::span<double> out) const = 0;

  ParamVector operator()(const ParamVector& v) const;
};

/// Wraps an explicit square matrix.
class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(DenseMatrix a);
  std::size_t dim() const override { return a_.rows(); }
  void apply(std::span<const double> in, std::span<double> out) const override;
  const DenseMatrix& matrix() const { return a_; }

 private:
  DenseMatrix a_;
};

/// x -> scale * x.
class ScaledIdentity final : public LinearOperator {
 public:
  ScaledIdentity(std::size_t dim, double scale = 1.0) : dim_(dim), scale_(scale) {}
  std::size_t dim() const override { return dim_; }
  void apply(std::span<const double> in, std::span<double> out) const override;

 private:
  std::size_t dim_;
  double scale_;
};

void require_same_size(std::size_t a, std::size_t b, const char* what);

}  // namespace natgrad
