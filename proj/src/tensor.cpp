#include "tcape/tensor.hpp"

#include <cmath>
#include <sstream>

#include "tcape/error.hpp"

namespace tcape {

std::size_t shape_size(const Tensor::Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_string(const Tensor::Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape dims, double fill) : dims_(std::move(dims)), data_(shape_size(dims_), fill) {}

Tensor::Tensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (shape_size(dims_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + tcape::shape_string(dims_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (dims_.empty()) return 0;
  if (dims_.size() == 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) r *= dims_[i];
  return r;
}

std::size_t Tensor::cols() const { return dims_.empty() ? 0 : dims_.back(); }

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_size(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string() + " to " + tcape::shape_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const { return tcape::shape_string(dims_); }

}  // namespace tcape
