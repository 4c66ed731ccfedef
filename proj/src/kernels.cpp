#include "xprospect/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "xprospect/error.hpp"
#include "xprospect/parallel.hpp"

namespace xprospect::kernels {

Dims5 Dims5::of(const Tensor& t) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), 1, t.dim(3)};
  if (t.rank() == 5) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.dim(4)};
  throw InvalidInput("expected a rank-4 or rank-5 feature tensor, got " + shape_str(t.shape()));
}

std::array<std::size_t, 3> conv_out_dims(const Dims5& in, const ConvGeometry& g) {
  const std::array<std::size_t, 3> sz{in.s1, in.s2, in.s3};
  std::array<std::size_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const std::size_t padded = sz[a] + 2 * g.pad[a];
    if (padded < g.kernel[a]) throw InvalidInput("convolution kernel larger than padded input");
    out[a] = (padded - g.kernel[a]) / g.stride[a] + 1;
  }
  return out;
}

namespace {

// Visits each (kernel offset, input position) pair feeding output position
// (o1, o2, o3) of a forward convolution.
template <typename F>
inline void for_each_tap(const Dims5& in, const ConvGeometry& g, std::size_t o1, std::size_t o2,
                         std::size_t o3, F&& f) {
  for (std::size_t k1 = 0; k1 < g.kernel[0]; ++k1) {
    const std::ptrdiff_t i1 = static_cast<std::ptrdiff_t>(o1 * g.stride[0] + k1) - static_cast<std::ptrdiff_t>(g.pad[0]);
    if (i1 < 0 || i1 >= static_cast<std::ptrdiff_t>(in.s1)) continue;
    for (std::size_t k2 = 0; k2 < g.kernel[1]; ++k2) {
      const std::ptrdiff_t i2 = static_cast<std::ptrdiff_t>(o2 * g.stride[1] + k2) - static_cast<std::ptrdiff_t>(g.pad[1]);
      if (i2 < 0 || i2 >= static_cast<std::ptrdiff_t>(in.s2)) continue;
      for (std::size_t k3 = 0; k3 < g.kernel[2]; ++k3) {
        const std::ptrdiff_t i3 = static_cast<std::ptrdiff_t>(o3 * g.stride[2] + k3) - static_cast<std::ptrdiff_t>(g.pad[2]);
        if (i3 < 0 || i3 >= static_cast<std::ptrdiff_t>(in.s3)) continue;
        const std::size_t k = (k1 * g.kernel[1] + k2) * g.kernel[2] + k3;
        const std::size_t i = (static_cast<std::size_t>(i1) * in.s2 + static_cast<std::size_t>(i2)) * in.s3 +
                              static_cast<std::size_t>(i3);
        f(k, i);
      }
    }
  }
}

inline void axpy(float a, const float* __restrict x, float* __restrict y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

inline float dot(const float* __restrict a, const float* __restrict b, std::size_t n) {
  float s = 0.0f;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

std::size_t taps(const ConvGeometry& g) { return g.kernel[0] * g.kernel[1] * g.kernel[2]; }

// Weight-gradient accumulation. Every gw entry receives its contributions in
// output-position order whether run as one pass or split per kernel tap, so
// the two paths give identical bits.
template <typename F>
void for_taps(const ConvGeometry& g, std::size_t work, F&& accumulate) {
  if (worker_count() <= 1) {
    accumulate(-1);
    return;
  }
  parallel_for(
      taps(g), [&](std::size_t tap) { accumulate(static_cast<std::ptrdiff_t>(tap)); }, work);
}

}  // namespace

void conv_forward(const float* x, const Dims5& in, const float* w, const float* bias, float* y,
                  const Dims5& out, const ConvGeometry& g) {
  const std::size_t ci = in.c, co = out.c;
  const std::size_t rows = out.b * out.s1;
  parallel_for(
      rows,
      [&](std::size_t row) {
        const std::size_t b = row / out.s1, o1 = row % out.s1;
        const float* xb = x + b * in.spatial() * ci;
        for (std::size_t o2 = 0; o2 < out.s2; ++o2) {
          for (std::size_t o3 = 0; o3 < out.s3; ++o3) {
            float* yo = y + (((b * out.s1 + o1) * out.s2 + o2) * out.s3 + o3) * co;
            std::memcpy(yo, bias, co * sizeof(float));
            for_each_tap(in, g, o1, o2, o3, [&](std::size_t k, std::size_t i) {
              const float* xi = xb + i * ci;
              const float* wk = w + k * ci * co;
              for (std::size_t c = 0; c < ci; ++c) axpy(xi[c], wk + c * co, yo, co);
            });
          }
        }
      },
      out.s2 * out.s3 * taps(g) * ci * co);
}

void conv_backward(const float* x, const Dims5& in, const float* w, const float* gy, const Dims5& out,
                   const ConvGeometry& g, float* gx, float* gw, float* gb) {
  const std::size_t ci = in.c, co = out.c;
  if (gb) {
    for (std::size_t p = 0; p < out.b * out.spatial(); ++p) axpy(1.0f, gy + p * co, gb, co);
  }
  if (gx) {
    // Input rows are written by several output rows when strided, so walk
    // per batch serially and parallelize nothing here unless stride is 1.
    for (std::size_t b = 0; b < out.b; ++b) {
      float* gxb = gx + b * in.spatial() * ci;
      for (std::size_t o1 = 0; o1 < out.s1; ++o1)
        for (std::size_t o2 = 0; o2 < out.s2; ++o2)
          for (std::size_t o3 = 0; o3 < out.s3; ++o3) {
            const float* go = gy + (((b * out.s1 + o1) * out.s2 + o2) * out.s3 + o3) * co;
            for_each_tap(in, g, o1, o2, o3, [&](std::size_t k, std::size_t i) {
              float* gxi = gxb + i * ci;
              const float* wk = w + k * ci * co;
              for (std::size_t c = 0; c < ci; ++c) gxi[c] += dot(wk + c * co, go, co);
            });
          }
    }
  }
  if (gw) {
    auto accumulate = [&](std::ptrdiff_t only_tap) {
      for (std::size_t b = 0; b < out.b; ++b) {
        const float* xb = x + b * in.spatial() * ci;
        for (std::size_t o1 = 0; o1 < out.s1; ++o1)
          for (std::size_t o2 = 0; o2 < out.s2; ++o2)
            for (std::size_t o3 = 0; o3 < out.s3; ++o3) {
              const float* go = gy + (((b * out.s1 + o1) * out.s2 + o2) * out.s3 + o3) * co;
              for_each_tap(in, g, o1, o2, o3, [&](std::size_t k, std::size_t i) {
                if (only_tap >= 0 && k != static_cast<std::size_t>(only_tap)) return;
                const float* xi = xb + i * ci;
                float* gwk = gw + k * ci * co;
                for (std::size_t c = 0; c < ci; ++c) axpy(xi[c], go, gwk + c * co, co);
              });
            }
      }
    };
    for_taps(g, out.b * out.spatial() * ci * co, accumulate);
  }
}

void conv_transpose_forward(const float* x, const Dims5& in, const float* w, const float* bias,
                            float* y, const Dims5& out, const ConvGeometry& g) {
  const std::size_t ci = in.c, co = out.c;
  for (std::size_t p = 0; p < out.b * out.spatial(); ++p) std::memcpy(y + p * co, bias, co * sizeof(float));
  // Scatter form: the "input" of the equivalent forward conv is our output.
  for (std::size_t b = 0; b < in.b; ++b) {
    float* yb = y + b * out.spatial() * co;
    for (std::size_t i1 = 0; i1 < in.s1; ++i1)
      for (std::size_t i2 = 0; i2 < in.s2; ++i2)
        for (std::size_t i3 = 0; i3 < in.s3; ++i3) {
          const float* xi = x + (((b * in.s1 + i1) * in.s2 + i2) * in.s3 + i3) * ci;
          for_each_tap(out, g, i1, i2, i3, [&](std::size_t k, std::size_t o) {
            float* yo = yb + o * co;
            const float* wk = w + k * ci * co;
            for (std::size_t c = 0; c < ci; ++c) axpy(xi[c], wk + c * co, yo, co);
          });
        }
  }
}

void conv_transpose_backward(const float* x, const Dims5& in, const float* w, const float* gy,
                             const Dims5& out, const ConvGeometry& g, float* gx, float* gw,
                             float* gb) {
  const std::size_t ci = in.c, co = out.c;
  if (gb) {
    for (std::size_t p = 0; p < out.b * out.spatial(); ++p) axpy(1.0f, gy + p * co, gb, co);
  }
  if (gx) {
    parallel_for(
        in.b * in.s1,
        [&](std::size_t row) {
          const std::size_t b = row / in.s1, i1 = row % in.s1;
          const float* gyb = gy + b * out.spatial() * co;
          for (std::size_t i2 = 0; i2 < in.s2; ++i2)
            for (std::size_t i3 = 0; i3 < in.s3; ++i3) {
              float* gxi = gx + (((b * in.s1 + i1) * in.s2 + i2) * in.s3 + i3) * ci;
              for_each_tap(out, g, i1, i2, i3, [&](std::size_t k, std::size_t o) {
                const float* go = gyb + o * co;
                const float* wk = w + k * ci * co;
                for (std::size_t c = 0; c < ci; ++c) gxi[c] += dot(wk + c * co, go, co);
              });
            }
        },
        in.s2 * in.s3 * taps(g) * ci * co);
  }
  if (gw) {
    auto accumulate = [&](std::ptrdiff_t only_tap) {
      for (std::size_t b = 0; b < in.b; ++b) {
        const float* gyb = gy + b * out.spatial() * co;
        for (std::size_t i1 = 0; i1 < in.s1; ++i1)
          for (std::size_t i2 = 0; i2 < in.s2; ++i2)
            for (std::size_t i3 = 0; i3 < in.s3; ++i3) {
              const float* xi = x + (((b * in.s1 + i1) * in.s2 + i2) * in.s3 + i3) * ci;
              for_each_tap(out, g, i1, i2, i3, [&](std::size_t k, std::size_t o) {
                if (only_tap >= 0 && k != static_cast<std::size_t>(only_tap)) return;
                const float* go = gyb + o * co;
                float* gwk = gw + k * ci * co;
                for (std::size_t c = 0; c < ci; ++c) axpy(xi[c], go, gwk + c * co, co);
              });
            }
      }
    };
    for_taps(g, in.b * in.spatial() * ci * co, accumulate);
  }
}

}  // namespace xprospect::kernels
