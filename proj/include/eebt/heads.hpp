#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "eebt/rng.hpp"
#include "eebt/tensor.hpp"

namespace eebt {

// Cluster masses are clamped here; a clamped mass passes no gradient.
inline constexpr double kMassLimit = 1e20;

struct HeadDims {
  std::size_t kernels = 0;    // K
  std::size_t depth = 0;      // d
  std::size_t positions = 0;  // H * W
  std::size_t classes = 0;    // N
};

// Scalar-generic head arithmetic. The float instantiation backs the public
// API; the double instantiation is what the gradient-check harness uses.
namespace head_math {

// responses[k,p] = sum_c kernels[k,c] x[c,p]
// mass[k]        = min(sum_p responses[k,p]^2, kMassLimit)
// logits[n]      = sum_k linear[n,k] mass[k]
// Returns the number of clamped masses.
template <class T>
std::size_t forward(const HeadDims& dims, std::span<const T> kernels,
                    std::span<const T> linear, std::span<const T> x,
                    std::span<T> responses, std::span<T> mass,
                    std::span<T> logits) {
  const std::size_t K = dims.kernels, D = dims.depth, P = dims.positions,
                    N = dims.classes;
  std::size_t saturated = 0;
  for (std::size_t k = 0; k < K; ++k) {
    T* r = responses.data() + k * P;
    for (std::size_t p = 0; p < P; ++p) r[p] = T(0);
    for (std::size_t c = 0; c < D; ++c) {
      const T w = kernels[k * D + c];
      const T* plane = x.data() + c * P;
      for (std::size_t p = 0; p < P; ++p) r[p] += w * plane[p];
    }
    T acc = T(0);
    for (std::size_t p = 0; p < P; ++p) acc += r[p] * r[p];
    if (acc > T(kMassLimit)) {
      acc = T(kMassLimit);
      ++saturated;
    }
    mass[k] = acc;
  }
  for (std::size_t n = 0; n < N; ++n) {
    T acc = T(0);
    for (std::size_t k = 0; k < K; ++k) acc += linear[n * K + k] * mass[k];
    logits[n] = acc;
  }
  return saturated;
}

// Writes (not accumulates) dkernels and dlinear.
template <class T>
void backward(const HeadDims& dims, std::span<const T> linear,
              std::span<const T> x, std::span<const T> responses,
              std::span<const T> mass, std::span<const T> dlogits,
              std::span<T> dkernels, std::span<T> dlinear) {
  const std::size_t K = dims.kernels, D = dims.depth, P = dims.positions,
                    N = dims.classes;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      dlinear[n * K + k] = dlogits[n] * mass[k];
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    T dmass = T(0);
    for (std::size_t n = 0; n < N; ++n) dmass += linear[n * K + k] * dlogits[n];
    if (mass[k] >= T(kMassLimit)) {
      for (std::size_t c = 0; c < D; ++c) dkernels[k * D + c] = T(0);
      continue;
    }
    const T* r = responses.data() + k * P;
    for (std::size_t c = 0; c < D; ++c) {
      const T* plane = x.data() + c * P;
      T acc = T(0);
      for (std::size_t p = 0; p < P; ++p) acc += r[p] * plane[p];
      dkernels[k * D + c] = T(2) * dmass * acc;
    }
  }
}

// -log softmax(logits)[target]; dlogits = softmax - onehot.
template <class T>
T cross_entropy(std::span<const T> logits, std::size_t target,
                std::span<T> dlogits) {
  T mx = logits[0];
  for (T v : logits) mx = v > mx ? v : mx;
  T total = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = std::exp(logits[i] - mx);
    total += dlogits[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) dlogits[i] /= total;
  dlogits[target] -= T(1);
  return std::log(total) + mx - logits[target];
}

// Binary cross-entropy on sigmoid(logits[unit]) against `correct`; only
// `unit` receives gradient.
template <class T>
T predicted_bce(std::span<const T> logits, std::size_t unit, bool correct,
                std::span<T> dlogits) {
  for (auto& g : dlogits) g = T(0);
  const T z = logits[unit];
  const T y = correct ? T(1) : T(0);
  // softplus(z) - y z, with softplus(z) = max(z,0) + log1p(exp(-|z|))
  const T softplus = (z > T(0) ? z : T(0)) + std::log1p(std::exp(-std::abs(z)));
  const T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                        : std::exp(z) / (T(1) + std::exp(z));
  dlogits[unit] = s - y;
  return softplus - y * z;
}

}  // namespace head_math

struct HeadParams {
  Tensor kernels;  // (K, d)
  Tensor linear;   // (N, K), no bias

  std::size_t num_kernels() const { return kernels.dim(0); }
  std::size_t depth() const { return kernels.dim(1); }
  std::size_t num_classes() const { return linear.dim(0); }
  std::size_t parameter_count() const { return kernels.size() + linear.size(); }

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

// Kernels ~ N(0, 1/d), linear ~ N(0, 1/K).
HeadParams init_head(std::size_t num_kernels, std::size_t depth,
                     std::size_t num_classes, Rng& rng);

struct ForwardCache {
  Tensor responses;  // (K, H, W), before squaring
  Tensor mass;       // (K)
  Tensor logits;     // (N)
  std::size_t saturated = 0;
};

struct HeadForward {
  Tensor logits;
  ForwardCache cache;
};

HeadForward head_logits(const HeadParams& params, const Tensor& featmap);

// Softmax of the head logits; argmax is the branch prediction.
Tensor classify(const HeadParams& params, const Tensor& featmap);

// Per-class sigmoid of the head logits.
Tensor confidence_scores(const HeadParams& params, const Tensor& featmap);

struct LossGrad {
  double loss = 0.0;
  Tensor dlogits;
};

LossGrad ce_loss_and_grad(const Tensor& logits, std::size_t target);
LossGrad bce_predicted_loss_and_grad(const Tensor& conf_logits,
                                     std::size_t predicted, bool correct);

struct HeadGradients {
  Tensor kernels;
  Tensor linear;
};

HeadGradients head_backward(const HeadParams& params, const Tensor& featmap,
                            const ForwardCache& cache, const Tensor& dlogits);

std::uint64_t head_param_count(std::uint64_t kernels, std::uint64_t depth,
                               std::uint64_t classes);

// 2*K*d*H*W (conv MACs) + K*H*W (square) + K*(H*W-1) (spatial sum)
// + 2*K*N (linear). Activations are not counted.
std::uint64_t head_flops(std::uint64_t kernels, std::uint64_t depth,
                         std::uint64_t height, std::uint64_t width,
                         std::uint64_t classes);

// Classification and confidence heads attached to one backbone level.
struct BranchHeads {
  std::size_t level = 0;
  HeadParams classification;
  HeadParams confidence;

  friend bool operator==(const BranchHeads&, const BranchHeads&) = default;
};

}  // namespace eebt
