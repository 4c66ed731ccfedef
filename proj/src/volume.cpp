#include "xprospect/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xprospect/error.hpp"

namespace xprospect {

Volume3D::Volume3D(std::size_t dz, std::size_t dy, std::size_t dx, std::vector<float> data,
                   Domain domain)
    : dz_(dz), dy_(dy), dx_(dx), data_(std::move(data)), domain_(domain) {
  if (dz == 0 || dy == 0 || dx == 0) throw InvalidInput("volume dims must be positive");
  if (data_.size() != dz * dy * dx) {
    throw InvalidInput("volume payload has " + std::to_string(data_.size()) +
                       " voxels, dims need " + std::to_string(dz * dy * dx));
  }
  for (float f : data_) {
    if (!std::isfinite(f)) throw InvalidInput("volume contains a non-finite voxel");
    if (domain == Domain::Unit && (f < 0.0f || f > 1.0f)) {
      throw InvalidInput("unit-domain volume has voxel outside [0, 1]");
    }
  }
}

Volume3D Volume3D::filled(std::size_t d, float value, Domain domain) {
  return Volume3D(d, d, d, std::vector<float>(d * d * d, value), domain);
}

Image2D::Image2D(std::size_t rows, std::size_t cols, std::vector<float> data, View view)
    : rows_(rows), cols_(cols), data_(std::move(data)), view_(view) {
  if (rows == 0 || cols == 0) throw InvalidInput("image dims must be positive");
  if (data_.size() != rows * cols) throw InvalidInput("image payload does not match dims");
  for (float f : data_) {
    if (!std::isfinite(f)) throw InvalidInput("image contains a non-finite pixel");
  }
}

Volume3D normalize_hu(const Volume3D& v, const NormalizationSpec& spec) {
  if (v.domain() != Domain::HU) throw InvalidInput("normalize_hu needs an HU-domain volume");
  if (!(spec.hu_min < spec.hu_max)) throw ConfigError("hu_min must be below hu_max");
  const float span = spec.hu_max - spec.hu_min;
  std::vector<float> out(v.size());
  std::ranges::transform(v.data(), out.begin(), [&](float hu) {
    return std::clamp((hu - spec.hu_min) / span, 0.0f, 1.0f);
  });
  return Volume3D(v.dz(), v.dy(), v.dx(), std::move(out), Domain::Unit);
}

namespace {

struct AxisSample {
  std::size_t lo, hi;
  double frac;
};

std::vector<AxisSample> axis_samples(std::size_t n, std::size_t target) {
  std::vector<AxisSample> s(target);
  for (std::size_t i = 0; i < target; ++i) {
    if (n == 1) {
      s[i] = {0, 0, 0.0};
      continue;
    }
    const double pos = static_cast<double>(i) * static_cast<double>(n - 1) /
                       static_cast<double>(target - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= n - 1) lo = n - 1;
    const std::size_t hi = std::min(lo + 1, n - 1);
    s[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return s;
}

}  // namespace

Volume3D resize_volume(const Volume3D& v, std::size_t target) {
  if (target < 2) throw InvalidInput("resize target must be at least 2");
  if (v.dz() == target && v.dy() == target && v.dx() == target) return v;

  const auto zs = axis_samples(v.dz(), target);
  const auto ys = axis_samples(v.dy(), target);
  const auto xs = axis_samples(v.dx(), target);
  std::vector<float> out(target * target * target);
  std::size_t o = 0;
  for (const auto& z : zs) {
    for (const auto& y : ys) {
      for (const auto& x : xs) {
        auto lerp_x = [&](std::size_t zi, std::size_t yi) {
          const double a = v.at(zi, yi, x.lo), b = v.at(zi, yi, x.hi);
          return a + (b - a) * x.frac;
        };
        auto lerp_y = [&](std::size_t zi) {
          const double a = lerp_x(zi, y.lo), b = lerp_x(zi, y.hi);
          return a + (b - a) * y.frac;
        };
        const double a = lerp_y(z.lo), b = lerp_y(z.hi);
        double val = a + (b - a) * z.frac;
        if (v.domain() == Domain::Unit) val = std::clamp(val, 0.0, 1.0);
        out[o++] = static_cast<float>(val);
      }
    }
  }
  return Volume3D(target, target, target, std::move(out), v.domain());
}

Image2D export_slice(const Volume3D& v, SliceAxis axis, std::size_t index) {
  std::size_t limit = 0;
  switch (axis) {
    case SliceAxis::Axial: limit = v.dz(); break;
    case SliceAxis::Coronal: limit = v.dy(); break;
    case SliceAxis::Sagittal: limit = v.dx(); break;
  }
  if (index >= limit) {
    throw InvalidInput("slice index " + std::to_string(index) + " out of range [0, " +
                       std::to_string(limit) + ")");
  }
  std::vector<float> out;
  switch (axis) {
    case SliceAxis::Axial:
      out.reserve(v.dy() * v.dx());
      for (std::size_t y = 0; y < v.dy(); ++y)
        for (std::size_t x = 0; x < v.dx(); ++x) out.push_back(v.at(index, y, x));
      return Image2D(v.dy(), v.dx(), std::move(out), View::Slice);
    case SliceAxis::Coronal:
      out.reserve(v.dz() * v.dx());
      for (std::size_t z = 0; z < v.dz(); ++z)
        for (std::size_t x = 0; x < v.dx(); ++x) out.push_back(v.at(z, index, x));
      return Image2D(v.dz(), v.dx(), std::move(out), View::Slice);
    case SliceAxis::Sagittal:
      out.reserve(v.dz() * v.dy());
      for (std::size_t z = 0; z < v.dz(); ++z)
        for (std::size_t y = 0; y < v.dy(); ++y) out.push_back(v.at(z, y, index));
      return Image2D(v.dz(), v.dy(), std::move(out), View::Slice);
  }
  return {};
}

}  // namespace xprospect
