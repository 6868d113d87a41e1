#pragma once

// Dense fp64 tensors and the contraction primitives used throughout the
// library. Storage is row-major: for a shape (I1, ..., IN) the last index
// varies fastest.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ttlm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor {
 public:
  // A single zero; keeps default-constructed tensors valid (order 1, dim 1).
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor identity(std::size_t n);
  static Tensor one_hot(std::size_t dim, std::size_t index);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t mode) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  const double& operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  // Multi-index access; the number of indices must equal order().
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  std::size_t flat_index(std::span<const std::size_t> index) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// a ⊗ b: order(a) + order(b) modes, shapes concatenated.
Tensor tensor_product(const Tensor& a, const Tensor& b);

// Full contraction of two same-shaped tensors.
double inner_product(const Tensor& a, const Tensor& b);

// Contracts the first `shared` modes of a and b. The remaining modes of a
// come first in the result, then those of b; if nothing remains the result
// is the scalar-shaped tensor {1}.
Tensor generalized_inner_product(const Tensor& a, const Tensor& b, std::size_t shared);

// Sums over one paired mode. Result modes: a's remaining, then b's remaining.
Tensor contract_mode(const Tensor& a, const Tensor& b, std::size_t mode_a, std::size_t mode_b);

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor permute(const Tensor& a, std::span<const std::size_t> axes);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& a, const Tensor& v);
Tensor transpose(const Tensor& a);

// Max-subtracted softmax of an order-1 tensor. Throws NumericError on
// non-finite input.
Tensor softmax(const Tensor& v);
Tensor tanh_elementwise(const Tensor& a);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ttlm
