#include "xprospect/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "xprospect/error.hpp"

namespace xprospect {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw InvalidInput("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw InvalidInput("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::ranges::all_of(data_, [](float f) { return std::isfinite(f); });
}

}  // namespace xprospect
