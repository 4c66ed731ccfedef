#pragma once

#include <array>
#include <cstddef>

#include "xprospect/tensor.hpp"

// Raw forward/backward kernels behind the autodiff ops. Spatial tensors are
// channel-last; 2-D inputs are treated as 3-D with a unit trailing axis.
namespace xprospect::kernels {

struct ConvGeometry {
  std::array<std::size_t, 3> kernel{3, 3, 3};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{1, 1, 1};
};

/// (batch, s1, s2, s3, channels) view of a rank-4 or rank-5 tensor.
struct Dims5 {
  std::size_t b, s1, s2, s3, c;
  static Dims5 of(const Tensor& t);
  std::size_t spatial() const { return s1 * s2 * s3; }
};

/// Output spatial size for a strided convolution with the given geometry.
std::array<std::size_t, 3> conv_out_dims(const Dims5& in, const ConvGeometry& g);

// w is (k1, k2, k3, cin, cout) stored flat; bias has cout entries.
void conv_forward(const float* x, const Dims5& in, const float* w, const float* bias,
                  float* y, const Dims5& out, const ConvGeometry& g);
void conv_backward(const float* x, const Dims5& in, const float* w, const float* gy,
                   const Dims5& out, const ConvGeometry& g, float* gx, float* gw, float* gb);

// Transposed convolution: y[i*stride - pad + k] += x[i] * w[k].
void conv_transpose_forward(const float* x, const Dims5& in, const float* w, const float* bias,
                            float* y, const Dims5& out, const ConvGeometry& g);
void conv_transpose_backward(const float* x, const Dims5& in, const float* w, const float* gy,
                             const Dims5& out, const ConvGeometry& g, float* gx, float* gw,
                             float* gb);

}  // namespace xprospect::kernels
