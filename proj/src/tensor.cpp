#include "mfpn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "mfpn/common.hpp"

namespace mfpn {

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (values.size() != shape_numel(shape_))
    fail("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

Tensor Tensor::of(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double* Tensor::mutable_data() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return data_->data();
}

double Tensor::item() const {
  if (size() != 1) fail("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size())
    fail("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + ": element count differs");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  t.tape_id = 0;
  t.node_id = -1;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::equals(const Tensor& o) const {
  if (shape_ != o.shape_) return false;
  return std::memcmp(data_->data(), o.data_->data(), size() * sizeof(double)) == 0;
}

}  // namespace mfpn
