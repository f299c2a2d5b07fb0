#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ff/errors.hpp"

namespace ff {

// Dense float32 tensor, row-major. Activations on the image path are CHW;
// convolution weights are [out, in, kh, kw]; vectors are 1-D.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0f);
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  // CHW helpers for activations.
  std::int64_t channels() const { return shape.size() == 3 ? shape[0] : 0; }
  std::int64_t height() const { return shape.size() == 3 ? shape[1] : 0; }
  std::int64_t width() const { return shape.size() == 3 ? shape[2] : 0; }

  float* plane(std::int64_t c) { return data.data() + c * height() * width(); }
  const float* plane(std::int64_t c) const {
    return data.data() + c * height() * width();
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace ff
