#include "eebt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "eebt/error.hpp"

namespace eebt {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t v = 1;
  for (auto d : shape) v *= d;
  return v;
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got shape " +
                         shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (shape_volume(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) +
                         " does not match buffer length " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::from(Shape shape, std::initializer_list<float> values) {
  return Tensor(std::move(shape), std::vector<float>(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

Tensor conv1d_channels(const Tensor& featmap, const Tensor& kernels) {
  if (featmap.rank() != 3 || kernels.rank() != 2 ||
      kernels.dim(1) != featmap.dim(0)) {
    throw DimensionError("conv1d_channels: featmap " +
                         shape_to_string(featmap.shape()) +
                         " incompatible with kernels " +
                         shape_to_string(kernels.shape()));
  }
  const std::size_t k_count = kernels.dim(0);
  const std::size_t depth = featmap.dim(0);
  const std::size_t hw = featmap.dim(1) * featmap.dim(2);
  Tensor out({k_count, featmap.dim(1), featmap.dim(2)});
  for (std::size_t k = 0; k < k_count; ++k) {
    float* row = out.data() + k * hw;
    for (std::size_t c = 0; c < depth; ++c) {
      const float w = kernels.at(k, c);
      const float* plane = featmap.data() + c * hw;
      for (std::size_t p = 0; p < hw; ++p) row[p] += w * plane[p];
    }
  }
  require_finite(out, "conv1d_channels");
  return out;
}

Tensor square(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.values()) v = v * v;
  require_finite(out, "square");
  return out;
}

Tensor scale(const Tensor& t, float factor) {
  Tensor out = t;
  for (auto& v : out.values()) v *= factor;
  require_finite(out, "scale");
  return out;
}

Tensor add_scalar(const Tensor& t, float offset) {
  Tensor out = t;
  for (auto& v : out.values()) v += offset;
  require_finite(out, "add_scalar");
  return out;
}

Tensor spatial_sum(const Tensor& t) {
  if (t.rank() != 3) {
    throw DimensionError("spatial_sum expects (K,H,W), got " +
                         shape_to_string(t.shape()));
  }
  const std::size_t hw = t.dim(1) * t.dim(2);
  Tensor out({t.dim(0)});
  for (std::size_t k = 0; k < t.dim(0); ++k) {
    float acc = 0.0f;
    for (std::size_t p = 0; p < hw; ++p) acc += t[k * hw + p];
    out[k] = acc;
  }
  require_finite(out, "spatial_sum");
  return out;
}

Tensor matvec(const Tensor& matrix, const Tensor& vec) {
  if (matrix.rank() != 2 || vec.rank() != 1 || matrix.dim(1) != vec.dim(0)) {
    throw DimensionError("matvec: matrix " + shape_to_string(matrix.shape()) +
                         " incompatible with vector " +
                         shape_to_string(vec.shape()));
  }
  Tensor out({matrix.dim(0)});
  for (std::size_t n = 0; n < matrix.dim(0); ++n) {
    float acc = 0.0f;
    for (std::size_t k = 0; k < matrix.dim(1); ++k) {
      acc += matrix.at(n, k) * vec[k];
    }
    out[n] = acc;
  }
  require_finite(out, "matvec");
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() == 0) {
    throw DimensionError("softmax expects a nonempty vector, got " +
                         shape_to_string(logits.shape()));
  }
  require_finite(logits, "softmax input");
  const float mx = *std::max_element(logits.values().begin(),
                                     logits.values().end());
  Tensor out = logits;
  double total = 0.0;
  for (auto& v : out.values()) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : out.values()) v = static_cast<float>(v / total);
  return out;
}

namespace {

// Logistic in the two-branch form, kept strictly inside (0, 1) so a rounded
// 0 or 1 never reaches the exit comparisons.
template <class T>
T logistic(T x) {
  T s;
  if (x >= T(0)) {
    s = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T(1) + e);
  }
  constexpr T lo = std::numeric_limits<T>::denorm_min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(s, lo, hi);
}

}  // namespace

float stable_sigmoid(float x) { return logistic(x); }
double stable_sigmoid(double x) { return logistic(x); }

Tensor sigmoid(const Tensor& t) {
  require_finite(t, "sigmoid input");
  Tensor out = t;
  for (auto& v : out.values()) v = stable_sigmoid(v);
  return out;
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace eebt
