#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace xprospect {

/// Value domain of a volume: raw Hounsfield units or normalized to [0, 1].
enum class Domain : unsigned char { HU = 0, Unit = 1 };

/// Which view a 2-D image came from. `Slice` marks exported planes.
enum class View : unsigned char { Frontal = 0, Lateral = 1, Slice = 2 };

enum class SliceAxis { Axial, Coronal, Sagittal };

/// Voxel grid stored row-major in (z, y, x) order, x fastest.
///
/// z runs superior to inferior, y anterior to posterior and x from patient
/// left to right. Unit-domain volumes hold values in [0, 1]; the constructor
/// rejects anything else. Instances are immutable.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(std::size_t dz, std::size_t dy, std::size_t dx, std::vector<float> data,
           Domain domain);

  static Volume3D filled(std::size_t d, float value, Domain domain);

  std::size_t dz() const { return dz_; }
  std::size_t dy() const { return dy_; }
  std::size_t dx() const { return dx_; }
  std::size_t size() const { return data_.size(); }
  bool cubic() const { return dz_ == dy_ && dy_ == dx_; }
  Domain domain() const { return domain_; }

  float at(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[(z * dy_ + y) * dx_ + x];
  }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  std::size_t dz_ = 0, dy_ = 0, dx_ = 0;
  std::vector<float> data_;
  Domain domain_ = Domain::Unit;
};

/// Single-channel image, row-major (rows, cols). Pixels must be finite.
class Image2D {
 public:
  Image2D() = default;
  Image2D(std::size_t rows, std::size_t cols, std::vector<float> data, View view);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool square() const { return rows_ == cols_; }
  View view() const { return view_; }

  float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<float> data_;
  View view_ = View::Frontal;
};

struct NormalizationSpec {
  float hu_min = -1000.0f;
  float hu_max = 1000.0f;
};

/// Linear map [hu_min, hu_max] -> [0, 1], clamped. Requires an HU volume.
Volume3D normalize_hu(const Volume3D& v, const NormalizationSpec& spec = {});

/// Trilinear resample to a target^3 cube using the align-corners convention
/// src = dst * (n - 1) / (target - 1). Works on non-cubic input too.
Volume3D resize_volume(const Volume3D& v, std::size_t target);

/// Axial: fixed z, indexed (y, x). Coronal: fixed y, indexed (z, x).
/// Sagittal: fixed x, indexed (z, y).
Image2D export_slice(const Volume3D& v, SliceAxis axis, std::size_t index);

}  // namespace xprospect
