#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace eebt {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense row-major float32 array of rank 1..3. Channel-major (c, h, w) for
// feature maps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor from(Shape shape, std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Throws NumericError naming `what` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

// out[k,h,w] = sum_c kernels[k,c] * featmap[c,h,w]
Tensor conv1d_channels(const Tensor& featmap, const Tensor& kernels);

Tensor square(const Tensor& t);
Tensor scale(const Tensor& t, float factor);
Tensor add_scalar(const Tensor& t, float offset);

// (K,H,W) -> (K), summing every spatial position of each channel.
Tensor spatial_sum(const Tensor& t);

// (N,K) x (K) -> (N)
Tensor matvec(const Tensor& matrix, const Tensor& vec);

// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

// Elementwise logistic, evaluated in the overflow-free two-branch form.
Tensor sigmoid(const Tensor& t);

float stable_sigmoid(float x);
double stable_sigmoid(double x);

std::size_t argmax(std::span<const float> values);

}  // namespace eebt
