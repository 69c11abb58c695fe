#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace mfpn {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor. Copies share the underlying buffer and
// writes detach (copy-on-write), so Tensor behaves as a value and is cheap
// to pass around. A rank-0 shape is a scalar with one element.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);
  static Tensor of(std::initializer_list<double> values);  // 1-d

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_->size(); }
  size_t dim(size_t i) const { return shape_[i]; }

  const double* data() const { return data_->data(); }
  double* mutable_data();

  double operator[](size_t i) const { return (*data_)[i]; }
  double item() const;  // requires size() == 1

  // metadata-only view with the same buffer
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  bool equals(const Tensor& o) const;  // shape + bitwise values

  // tape participation (see tape.hpp)
  bool requires_grad = false;
  uint64_t tape_id = 0;
  int node_id = -1;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace mfpn
