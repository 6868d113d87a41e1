#include "ttlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor must have at least one mode");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got " + shape_to_string(shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

Shape tail(const Shape& s, std::size_t from) { return Shape(s.begin() + static_cast<std::ptrdiff_t>(from), s.end()); }

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::one_hot(std::size_t dim, std::size_t index) {
  if (index >= dim) throw IndexError("one-hot index " + std::to_string(index) + " out of range " + std::to_string(dim));
  Tensor t({dim});
  t.data_[index] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t mode) const {
  if (mode >= shape_.size()) throw IndexError("mode " + std::to_string(mode) + " out of range for order " + std::to_string(shape_.size()));
  return shape_[mode];
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index arity does not match tensor order");
  std::size_t flat = 0;
  for (std::size_t m = 0; m < shape_.size(); ++m) {
    if (index[m] >= shape_[m]) throw IndexError("index out of range in mode " + std::to_string(m));
    flat = flat * shape_[m] + index[m];
  }
  return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor tensor_product(const Tensor& a, const Tensor& b) {
  Shape shape = a.shape();
  shape.insert(shape.end(), b.shape().begin(), b.shape().end());
  Tensor out(std::move(shape));
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < nb; ++j) out[i * nb + j] = a[i] * b[j];
  }
  return out;
}

double inner_product(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "inner_product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Tensor generalized_inner_product(const Tensor& a, const Tensor& b, std::size_t shared) {
  if (shared > a.order() || shared > b.order()) {
    throw ShapeError("generalized_inner_product: cannot share " + std::to_string(shared) + " modes");
  }
  for (std::size_t m = 0; m < shared; ++m) {
    if (a.dim(m) != b.dim(m)) {
      throw ShapeError("generalized_inner_product: shared mode " + std::to_string(m) + " mismatch " +
                       shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
  }
  const Shape a_free = tail(a.shape(), shared);
  const Shape b_free = tail(b.shape(), shared);
  const std::size_t nx = shape_size(a_free);
  const std::size_t ny = shape_size(b_free);
  const std::size_t ns = a.size() / nx;

  Shape out_shape = a_free;
  out_shape.insert(out_shape.end(), b_free.begin(), b_free.end());
  if (out_shape.empty()) out_shape = {1};
  Tensor out(std::move(out_shape));
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t x = 0; x < nx; ++x) {
      const double av = a[s * nx + x];
      if (av == 0.0) continue;
      for (std::size_t y = 0; y < ny; ++y) out[x * ny + y] += av * b[s * ny + y];
    }
  }
  return out;
}

Tensor contract_mode(const Tensor& a, const Tensor& b, std::size_t mode_a, std::size_t mode_b) {
  if (mode_a >= a.order() || mode_b >= b.order()) throw ShapeError("contract_mode: mode out of range");
  const std::size_t k = a.dim(mode_a);
  if (k != b.dim(mode_b)) {
    throw ShapeError("contract_mode: dimension mismatch " + shape_to_string(a.shape()) + " mode " +
                     std::to_string(mode_a) + " vs " + shape_to_string(b.shape()) + " mode " + std::to_string(mode_b));
  }
  // View a as (outer_a, k, inner_a) and b as (outer_b, k, inner_b).
  auto split = [](const Shape& s, std::size_t mode) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t m = 0; m < mode; ++m) outer *= s[m];
    for (std::size_t m = mode + 1; m < s.size(); ++m) inner *= s[m];
    return std::pair{outer, inner};
  };
  const auto [ao, ai] = split(a.shape(), mode_a);
  const auto [bo, bi] = split(b.shape(), mode_b);

  Shape out_shape;
  for (std::size_t m = 0; m < a.order(); ++m) if (m != mode_a) out_shape.push_back(a.dim(m));
  for (std::size_t m = 0; m < b.order(); ++m) if (m != mode_b) out_shape.push_back(b.dim(m));
  if (out_shape.empty()) out_shape = {1};
  Tensor out(std::move(out_shape));

  const std::size_t nb = bo * bi;
  for (std::size_t x = 0; x < ao; ++x) {
    for (std::size_t z = 0; z < ai; ++z) {
      double* row = &out[(x * ai + z) * nb];
      for (std::size_t c = 0; c < k; ++c) {
        const double av = a[(x * k + c) * ai + z];
        if (av == 0.0) continue;
        for (std::size_t y = 0; y < bo; ++y) {
          const double* bp = &b[(y * k + c) * bi];
          for (std::size_t w = 0; w < bi; ++w) row[y * bi + w] += av * bp[w];
        }
      }
    }
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_size(new_shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(new_shape));
  }
  return Tensor(std::move(new_shape), a.values());
}

Tensor permute(const Tensor& a, std::span<const std::size_t> axes) {
  const std::size_t n = a.order();
  if (axes.size() != n) throw ShapeError("permute: axis count does not match order");
  std::vector<bool> seen(n, false);
  Shape out_shape(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (axes[i] >= n || seen[axes[i]]) throw ShapeError("permute: axes are not a permutation");
    seen[axes[i]] = true;
    out_shape[i] = a.dim(axes[i]);
  }
  std::vector<std::size_t> in_strides(n, 1);
  for (std::size_t m = n - 1; m > 0; --m) in_strides[m - 1] = in_strides[m] * a.dim(m);

  Tensor out(out_shape);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) src += idx[i] * in_strides[axes[i]];
    out[flat] = a[src];
    for (std::size_t i = n; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.order() != 2 || b.order() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const double av = a[i * k + c];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * b[c * m + j];
    }
  }
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& v) {
  if (a.order() != 2 || v.order() != 1 || a.dim(1) != v.dim(0)) {
    throw ShapeError("matvec: incompatible " + shape_to_string(a.shape()) + " x " + shape_to_string(v.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) acc += a[i * k + c] * v[c];
    out[i] = acc;
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.order() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_to_string(a.shape()));
  const std::size_t axes[2] = {1, 0};
  return permute(a, axes);
}

Tensor softmax(const Tensor& v) {
  if (v.order() != 1) throw ShapeError("softmax: expected order-1 tensor, got " + shape_to_string(v.shape()));
  if (!v.all_finite()) throw NumericError("softmax: non-finite input");
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  Tensor out(v.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= z;
  return out;
}

Tensor tanh_elementwise(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ttlm
