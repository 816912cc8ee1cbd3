#include "alttrack/tensor.hpp"

#include <cmath>
#include <sstream>

namespace alttrack {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ContractError("tensor: shape " + shape_string(shape_) + " does not hold " +
                        std::to_string(data_.size()) + " values");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NonFiniteError("tensor: non-finite entry at flat index " + std::to_string(i));
    }
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw ContractError("tensor: rows() needs rank 1 or 2, got " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw ContractError("tensor: cols() needs rank 1 or 2, got " + shape_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("tensor: item() on " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::row(std::size_t r) const {
  const auto c = cols();
  if (r >= rows()) throw ContractError("tensor: row index out of range");
  return Tensor({c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                         data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

}  // namespace alttrack
