#pragma once

// Small dense kernels over row-major matrices, shared by the cell and head
// implementations. Internal to the library.

#include <vector>

#include "ttlm/tensor.hpp"

namespace ttlm::kernels {

using Vec = std::vector<double>;

// M x, M is rows x cols.
inline Vec mat_vec(const Tensor& m, const double* x) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Vec out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* mi = &m[i * cols];
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += mi[j] * x[j];
    out[i] = acc;
  }
  return out;
}

// M^T x.
inline Vec mat_t_vec(const Tensor& m, const double* x) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Vec out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* mi = &m[i * cols];
    for (std::size_t j = 0; j < cols; ++j) out[j] += mi[j] * xi;
  }
  return out;
}

// M += a b^T.
inline void add_outer(Tensor& m, const double* a, const double* b) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* mi = &m[i * cols];
    for (std::size_t j = 0; j < cols; ++j) mi[j] += ai * b[j];
  }
}

}  // namespace ttlm::kernels
