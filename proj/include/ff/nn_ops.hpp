#pragma once

#include <span>

#include "ff/tensor.hpp"

namespace ff {

// Single-image CHW float ops, inference mode only. All stateless and
// deterministic; safe to run concurrently on distinct images.

// weight: [out, in, kh, kw], no bias (all three graphs fold bias into BN).
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride_h, int stride_w,
              int pad_h, int pad_w);

// y = gamma * (x - mean) / sqrt(var + eps) + beta, per channel, running stats.
void batchnorm_infer(Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                     std::span<const float> mean, std::span<const float> var, float eps);

void relu_inplace(Tensor& x);

Tensor maxpool2d(const Tensor& input, int kernel, int stride, int pad);

// include_pad selects whether padded zeros count in the divisor.
Tensor avgpool2d(const Tensor& input, int kernel, int stride, int pad, bool include_pad);

// Mean over each channel plane -> feature vector of length C.
std::vector<float> global_avg_pool(const Tensor& input);

Tensor concat_channels(std::span<const Tensor* const> parts);

void add_inplace(Tensor& x, const Tensor& y);

}  // namespace ff
