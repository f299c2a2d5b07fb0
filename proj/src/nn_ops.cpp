#include "ff/nn_ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ff {

namespace {

using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

void check_conv_input(const Tensor& input, const Tensor& weight, int out_h, int out_w) {
  if (input.shape.size() != 3 || weight.shape.size() != 4) {
    throw DimensionError("conv2d: expected CHW input and OIHW weight");
  }
  if (input.shape[0] != weight.shape[1]) {
    throw DimensionError("conv2d: input has " + std::to_string(input.shape[0]) +
                         " channels, weight expects " + std::to_string(weight.shape[1]));
  }
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("conv2d: non-positive output extent for input " +
                         shape_str(input.shape));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride_h, int stride_w,
              int pad_h, int pad_w) {
  const int in_c = static_cast<int>(input.shape[0]);
  const int in_h = static_cast<int>(input.shape[1]);
  const int in_w = static_cast<int>(input.shape[2]);
  const int out_c = static_cast<int>(weight.shape[0]);
  const int kh = static_cast<int>(weight.shape[2]);
  const int kw = static_cast<int>(weight.shape[3]);
  const int out_h = out_extent(in_h, kh, stride_h, pad_h);
  const int out_w = out_extent(in_w, kw, stride_w, pad_w);
  check_conv_input(input, weight, out_h, out_w);

  Tensor out({out_c, out_h, out_w});
  const std::int64_t spatial = static_cast<std::int64_t>(out_h) * out_w;

  Eigen::Map<const RowMatrixXf> w_mat(weight.data.data(), out_c,
                                      static_cast<std::int64_t>(in_c) * kh * kw);
  Eigen::Map<RowMatrixXf> out_mat(out.data.data(), out_c, spatial);

  if (kh == 1 && kw == 1 && stride_h == 1 && stride_w == 1 && pad_h == 0 && pad_w == 0) {
    // Pointwise conv is a plain GEMM over the existing layout.
    Eigen::Map<const RowMatrixXf> in_mat(input.data.data(), in_c, spatial);
    out_mat.noalias() = w_mat * in_mat;
    return out;
  }

  // im2col: one column per output pixel, rows ordered (c, ky, kx) to match
  // the OIHW weight layout.
  RowMatrixXf cols(static_cast<std::int64_t>(in_c) * kh * kw, spatial);
  for (int c = 0; c < in_c; ++c) {
    const float* plane = input.plane(c);
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const std::int64_t row = (static_cast<std::int64_t>(c) * kh + ky) * kw + kx;
        float* dst = cols.data() + row * spatial;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_h - pad_h + ky;
          if (iy < 0 || iy >= in_h) {
            std::fill(dst, dst + out_w, 0.0f);
            dst += out_w;
            continue;
          }
          const float* src_row = plane + static_cast<std::int64_t>(iy) * in_w;
          int ix = -pad_w + kx;
          for (int ox = 0; ox < out_w; ++ox, ix += stride_w) {
            *dst++ = (ix >= 0 && ix < in_w) ? src_row[ix] : 0.0f;
          }
        }
      }
    }
  }
  out_mat.noalias() = w_mat * cols;
  return out;
}

void batchnorm_infer(Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                     std::span<const float> mean, std::span<const float> var, float eps) {
  const std::int64_t c = x.channels();
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != gamma.size() ||
      mean.size() != gamma.size() || var.size() != gamma.size()) {
    throw DimensionError("batchnorm_infer: stat length != channel count");
  }
  const std::int64_t plane = x.height() * x.width();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float scale = gamma[ch] / std::sqrt(var[ch] + eps);
    const float shift = beta[ch] - mean[ch] * scale;
    float* p = x.plane(ch);
    for (std::int64_t i = 0; i < plane; ++i) p[i] = p[i] * scale + shift;
  }
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data) v = v > 0.0f ? v : 0.0f;
}

Tensor maxpool2d(const Tensor& input, int kernel, int stride, int pad) {
  const int c = static_cast<int>(input.shape[0]);
  const int in_h = static_cast<int>(input.shape[1]);
  const int in_w = static_cast<int>(input.shape[2]);
  const int out_h = out_extent(in_h, kernel, stride, pad);
  const int out_w = out_extent(in_w, kernel, stride, pad);
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("maxpool2d: non-positive output extent");
  }

  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    const float* src = input.plane(ch);
    float* dst = out.plane(ch);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        const int y0 = oy * stride - pad;
        const int x0 = ox * stride - pad;
        for (int ky = std::max(0, -y0); ky < kernel && y0 + ky < in_h; ++ky) {
          const float* row = src + static_cast<std::int64_t>(y0 + ky) * in_w;
          for (int kx = std::max(0, -x0); kx < kernel && x0 + kx < in_w; ++kx) {
            best = std::max(best, row[x0 + kx]);
          }
        }
        dst[static_cast<std::int64_t>(oy) * out_w + ox] = best;
      }
    }
  }
  return out;
}

Tensor avgpool2d(const Tensor& input, int kernel, int stride, int pad, bool include_pad) {
  const int c = static_cast<int>(input.shape[0]);
  const int in_h = static_cast<int>(input.shape[1]);
  const int in_w = static_cast<int>(input.shape[2]);
  const int out_h = out_extent(in_h, kernel, stride, pad);
  const int out_w = out_extent(in_w, kernel, stride, pad);
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("avgpool2d: non-positive output extent");
  }

  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    const float* src = input.plane(ch);
    float* dst = out.plane(ch);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const int y0 = oy * stride - pad;
        const int x0 = ox * stride - pad;
        float sum = 0.0f;
        int count = 0;
        for (int ky = std::max(0, -y0); ky < kernel && y0 + ky < in_h; ++ky) {
          const float* row = src + static_cast<std::int64_t>(y0 + ky) * in_w;
          for (int kx = std::max(0, -x0); kx < kernel && x0 + kx < in_w; ++kx) {
            sum += row[x0 + kx];
            ++count;
          }
        }
        const int divisor = include_pad ? kernel * kernel : count;
        dst[static_cast<std::int64_t>(oy) * out_w + ox] =
            divisor > 0 ? sum / static_cast<float>(divisor) : 0.0f;
      }
    }
  }
  return out;
}

std::vector<float> global_avg_pool(const Tensor& input) {
  const std::int64_t c = input.channels();
  const std::int64_t plane = input.height() * input.width();
  std::vector<float> out(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* p = input.plane(ch);
    // Accumulate in double so the pooled value does not depend on plane size.
    double sum = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) sum += p[i];
    out[static_cast<std::size_t>(ch)] =
        static_cast<float>(sum / static_cast<double>(plane));
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: empty input");
  const std::int64_t h = parts[0]->height();
  const std::int64_t w = parts[0]->width();
  std::int64_t c = 0;
  for (const Tensor* t : parts) {
    if (t->height() != h || t->width() != w) {
      throw DimensionError("concat_channels: spatial dims differ");
    }
    c += t->channels();
  }
  Tensor out({c, h, w});
  float* dst = out.data.data();
  for (const Tensor* t : parts) {
    std::copy(t->data.begin(), t->data.end(), dst);
    dst += t->data.size();
  }
  return out;
}

void add_inplace(Tensor& x, const Tensor& y) {
  if (!x.same_shape(y)) throw DimensionError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

}  // namespace ff
