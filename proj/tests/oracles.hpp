#pragma once

// Test-only reference computations, written without the library's kernels.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "natgrad/core.hpp"

namespace oracle {

/// Neumaier-compensated dot product.
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] * b[i];
    const double t = s + p;
    c += std::abs(s) >= std::abs(p) ? (s - t) + p : (p - t) + s;
    s = t;
  }
  return s + c;
}

inline Eigen::MatrixXd to_eigen(const natgrad::DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline Eigen::VectorXd to_eigen(const natgrad::ParamVector& v) {
  Eigen::VectorXd e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e(i) = v[i];
  return e;
}

inline natgrad::ParamVector from_eigen(const Eigen::VectorXd& e) {
  natgrad::ParamVector v(static_cast<std::size_t>(e.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = e(static_cast<Eigen::Index>(i));
  return v;
}

inline double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Central-difference gradient of f at x.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace oracle
