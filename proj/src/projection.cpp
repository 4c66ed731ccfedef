#include "xprospect/projection.hpp"

#include <algorithm>
#include <vector>

#include "xprospect/error.hpp"

namespace xprospect {

namespace {

Domain domain_for(std::span<const float> data) {
  const bool unit = std::ranges::all_of(data, [](float f) { return f >= 0.0f && f <= 1.0f; });
  return unit ? Domain::Unit : Domain::HU;
}

}  // namespace

Image2D mean_project(const Volume3D& v, View view) {
  if (v.domain() != Domain::Unit) throw InvalidInput("mean_project needs a unit-domain volume");
  const std::size_t dz = v.dz(), dy = v.dy(), dx = v.dx();
  if (view == View::Frontal) {
    std::vector<double> acc(dz * dx, 0.0);
    for (std::size_t z = 0; z < dz; ++z)
      for (std::size_t y = 0; y < dy; ++y)
        for (std::size_t x = 0; x < dx; ++x) acc[z * dx + x] += v.at(z, y, x);
    std::vector<float> out(acc.size());
    std::ranges::transform(acc, out.begin(),
                           [&](double s) { return static_cast<float>(s / static_cast<double>(dy)); });
    return Image2D(dz, dx, std::move(out), View::Frontal);
  }
  if (view == View::Lateral) {
    std::vector<float> out(dz * dy);
    for (std::size_t z = 0; z < dz; ++z) {
      for (std::size_t y = 0; y < dy; ++y) {
        double s = 0.0;
        for (std::size_t x = 0; x < dx; ++x) s += v.at(z, y, x);
        out[z * dy + y] = static_cast<float>(s / static_cast<double>(dx));
      }
    }
    return Image2D(dz, dy, std::move(out), View::Lateral);
  }
  throw InvalidInput("mean_project view must be Frontal or Lateral");
}

Volume3D back_project(const Image2D& img, View view) {
  if (!img.square()) throw InvalidInput("back_project needs a square image");
  if (view != View::Frontal && view != View::Lateral) {
    throw InvalidInput("back_project view must be Frontal or Lateral");
  }
  const std::size_t d = img.rows();
  std::vector<float> out(d * d * d);
  std::size_t o = 0;
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t y = 0; y < d; ++y)
      for (std::size_t x = 0; x < d; ++x)
        out[o++] = view == View::Frontal ? img.at(z, x) : img.at(z, y);
  const Domain domain = domain_for(img.data());
  return Volume3D(d, d, d, std::move(out), domain);
}

Volume3D fuse_backprojections(const Image2D& frontal, const Image2D& lateral) {
  if (!frontal.square() || !lateral.square() || frontal.rows() != lateral.rows()) {
    throw InvalidInput("fuse_backprojections needs two square images of equal size");
  }
  const std::size_t d = frontal.rows();
  std::vector<float> out(d * d * d);
  std::size_t o = 0;
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t y = 0; y < d; ++y)
      for (std::size_t x = 0; x < d; ++x)
        out[o++] = 0.5f * (frontal.at(z, x) + lateral.at(z, y));
  const Domain domain = domain_for(out);
  return Volume3D(d, d, d, std::move(out), domain);
}

Volume3D downsample_volume_mean(const Volume3D& v, std::size_t factor) {
  if (factor == 0 || (factor & (factor - 1)) != 0) {
    throw InvalidInput("downsample factor must be a power of two");
  }
  if (v.dz() % factor || v.dy() % factor || v.dx() % factor) {
    throw InvalidInput("downsample factor must divide every volume dimension");
  }
  if (factor == 1) return v;
  const std::size_t oz = v.dz() / factor, oy = v.dy() / factor, ox = v.dx() / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor * factor);
  std::vector<float> out(oz * oy * ox);
  std::size_t o = 0;
  for (std::size_t z = 0; z < oz; ++z) {
    for (std::size_t y = 0; y < oy; ++y) {
      for (std::size_t x = 0; x < ox; ++x) {
        double s = 0.0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b)
            for (std::size_t c = 0; c < factor; ++c)
              s += v.at(z * factor + a, y * factor + b, x * factor + c);
        out[o++] = static_cast<float>(s * inv);
      }
    }
  }
  return Volume3D(oz, oy, ox, std::move(out), v.domain());
}

}  // namespace xprospect
