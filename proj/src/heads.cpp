#include "eebt/heads.hpp"

#include <cmath>

#include "eebt/error.hpp"

namespace eebt {

HeadParams init_head(std::size_t num_kernels, std::size_t depth,
                     std::size_t num_classes, Rng& rng) {
  if (num_kernels == 0 || depth == 0 || num_classes == 0) {
    throw ValidationError("head dimensions must be positive");
  }
  HeadParams p;
  p.kernels = rng_normal(rng, {num_kernels, depth},
                         static_cast<float>(1.0 / std::sqrt(double(depth))));
  p.linear = rng_normal(rng, {num_classes, num_kernels},
                        static_cast<float>(1.0 / std::sqrt(double(num_kernels))));
  return p;
}

namespace {

HeadDims dims_for(const HeadParams& params, const Tensor& featmap) {
  if (params.kernels.rank() != 2 || params.linear.rank() != 2 ||
      params.linear.dim(1) != params.kernels.dim(0)) {
    throw DimensionError("head parameters inconsistent: kernels " +
                         shape_to_string(params.kernels.shape()) + ", linear " +
                         shape_to_string(params.linear.shape()));
  }
  if (featmap.rank() != 3 || featmap.dim(0) != params.kernels.dim(1)) {
    throw DimensionError("feature map " + shape_to_string(featmap.shape()) +
                         " incompatible with kernels " +
                         shape_to_string(params.kernels.shape()));
  }
  return {params.kernels.dim(0), featmap.dim(0), featmap.dim(1) * featmap.dim(2),
          params.linear.dim(0)};
}

}  // namespace

HeadForward head_logits(const HeadParams& params, const Tensor& featmap) {
  const HeadDims dims = dims_for(params, featmap);
  ForwardCache cache;
  cache.responses = Tensor({dims.kernels, featmap.dim(1), featmap.dim(2)});
  cache.mass = Tensor({dims.kernels});
  cache.logits = Tensor({dims.classes});
  cache.saturated = head_math::forward<float>(
      dims, params.kernels.values(), params.linear.values(), featmap.values(),
      cache.responses.values(), cache.mass.values(), cache.logits.values());
  require_finite(cache.logits, "head logits");
  Tensor logits = cache.logits;
  return {std::move(logits), std::move(cache)};
}

Tensor classify(const HeadParams& params, const Tensor& featmap) {
  return softmax(head_logits(params, featmap).logits);
}

Tensor confidence_scores(const HeadParams& params, const Tensor& featmap) {
  return sigmoid(head_logits(params, featmap).logits);
}

LossGrad ce_loss_and_grad(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1 || target >= logits.size()) {
    throw ValidationError("cross-entropy target " + std::to_string(target) +
                          " out of range for logits " +
                          shape_to_string(logits.shape()));
  }
  require_finite(logits, "cross-entropy logits");
  LossGrad out{0.0, Tensor(logits.shape())};
  out.loss = head_math::cross_entropy<float>(logits.values(), target,
                                             out.dlogits.values());
  return out;
}

LossGrad bce_predicted_loss_and_grad(const Tensor& conf_logits,
                                     std::size_t predicted, bool correct) {
  if (conf_logits.rank() != 1 || predicted >= conf_logits.size()) {
    throw ValidationError("predicted class " + std::to_string(predicted) +
                          " out of range for logits " +
                          shape_to_string(conf_logits.shape()));
  }
  require_finite(conf_logits, "confidence logits");
  LossGrad out{0.0, Tensor(conf_logits.shape())};
  out.loss = head_math::predicted_bce<float>(conf_logits.values(), predicted,
                                             correct, out.dlogits.values());
  return out;
}

HeadGradients head_backward(const HeadParams& params, const Tensor& featmap,
                            const ForwardCache& cache, const Tensor& dlogits) {
  const HeadDims dims = dims_for(params, featmap);
  if (cache.responses.shape() != Shape{dims.kernels, featmap.dim(1), featmap.dim(2)} ||
      cache.mass.shape() != Shape{dims.kernels} ||
      dlogits.shape() != Shape{dims.classes}) {
    throw DimensionError("forward cache or dlogits " +
                         shape_to_string(dlogits.shape()) +
                         " does not match head dimensions");
  }
  HeadGradients g{Tensor(params.kernels.shape()), Tensor(params.linear.shape())};
  head_math::backward<float>(dims, params.linear.values(), featmap.values(),
                             cache.responses.values(), cache.mass.values(),
                             dlogits.values(), g.kernels.values(),
                             g.linear.values());
  return g;
}

std::uint64_t head_param_count(std::uint64_t kernels, std::uint64_t depth,
                               std::uint64_t classes) {
  return kernels * (depth + classes);
}

std::uint64_t head_flops(std::uint64_t kernels, std::uint64_t depth,
                         std::uint64_t height, std::uint64_t width,
                         std::uint64_t classes) {
  const std::uint64_t hw = height * width;
  if (kernels == 0 || hw == 0) return 0;
  return 2 * kernels * depth * hw + kernels * hw + kernels * (hw - 1) +
         2 * kernels * classes;
}

}  // namespace eebt
