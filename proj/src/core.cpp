#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "natgrad/core.hpp"
#include "natgrad/kernels.hpp"

namespace natgrad {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  }
}

ParamVector::ParamVector(std::size_t n) : data_(n, 0.0), segments_{{0, n, 1}} {}

ParamVector::ParamVector(std::vector<double> data)
    : data_(std::move(data)), segments_{{0, data_.size(), 1}} {}

ParamVector::ParamVector(std::vector<double> data, std::vector<Segment> segments)
    : data_(std::move(data)), segments_(std::move(segments)) {
  std::size_t expected = 0;
  for (const Segment& s : segments_) {
    if (s.offset != expected) throw DimensionError("ParamVector: segments are not contiguous");
    expected += s.size();
  }
  if (expected != data_.size()) {
    throw DimensionError("ParamVector: segment sizes sum to " + std::to_string(expected) +
                         " but vector has " + std::to_string(data_.size()) + " entries");
  }
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  return ParamVector(std::vector<double>(other.size(), 0.0), other.segments_);
}

std::span<const double> ParamVector::segment(std::size_t k) const {
  const Segment& s = segments_.at(k);
  return {data_.data() + s.offset, s.size()};
}

bool ParamVector::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

bool ParamVector::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return x == 0.0; });
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("DenseMatrix: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

DenseMatrix DenseMatrix::select_rows(std::span<const std::size_t> indices) const {
  DenseMatrix out(indices.size(), cols_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows_) throw DimensionError("select_rows: row index out of range");
    std::copy_n(data_.data() + indices[r] * cols_, cols_, out.data() + r * cols_);
  }
  return out;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> u, std::span<const double> v) {
  require_same_size(u.size(), v.size(), "dot");
  return kernels::active().dot(u.size(), u.data(), v.data());
}

double dot(const ParamVector& u, const ParamVector& v) { return dot(u.span(), v.span()); }

double norm2(const ParamVector& v) { return std::sqrt(dot(v, v)); }

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_same_size(x.size(), y.size(), "axpy");
  ParamVector out = y;
  kernels::active().axpy(x.size(), a, x.data(), out.data());
  return out;
}

void axpy_inplace(double a, const ParamVector& x, ParamVector& y) {
  require_same_size(x.size(), y.size(), "axpy");
  kernels::active().axpy(x.size(), a, x.data(), y.data());
}

ParamVector scaled(double a, const ParamVector& x) {
  ParamVector out = x;
  kernels::active().scale(out.size(), a, out.data());
  return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) { return axpy(-1.0, b, a); }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

ParamVector matvec(const DenseMatrix& a, const ParamVector& x) {
  require_same_size(a.cols(), x.size(), "matvec");
  ParamVector y(a.rows());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = k.dot(a.cols(), a.row(i).data(), x.data());
  return y;
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("frobenius_inner: shape mismatch");
  return kernels::active().dot(a.size(), a.data(), b.data());
}

double frobenius_norm(const DenseMatrix& a) { return std::sqrt(frobenius_inner(a, a)); }

ParamVector LinearOperator::operator()(const ParamVector& v) const {
  require_same_size(v.size(), dim(), "LinearOperator");
  ParamVector out = ParamVector::zeros_like(v);
  apply(v.span(), out.span());
  return out;
}

DenseOperator::DenseOperator(DenseMatrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols()) throw DimensionError("DenseOperator: matrix must be square");
}

void DenseOperator::apply(std::span<const double> in, std::span<double> out) const {
  require_same_size(in.size(), dim(), "DenseOperator");
  require_same_size(out.size(), dim(), "DenseOperator");
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a_.rows(); ++i) out[i] = k.dot(a_.cols(), a_.row(i).data(), in.data());
}

void ScaledIdentity::apply(std::span<const double> in, std::span<double> out) const {
  require_same_size(in.size(), dim_, "ScaledIdentity");
  require_same_size(out.size(), dim_, "ScaledIdentity");
  for (std::size_t i = 0; i < dim_; ++i) out[i] = scale_ * in[i];
}

}  // namespace natgrad
