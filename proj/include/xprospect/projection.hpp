#pragma once

#include <cstddef>

#include "xprospect/volume.hpp"

namespace xprospect {

/// Parallel-axis mean projection of a unit-domain volume.
/// Frontal averages over y giving an image indexed (z, x); Lateral averages
/// over x giving (z, y).
Image2D mean_project(const Volume3D& v, View view);

/// Smears a square projection back along its projection axis:
/// Frontal sets V[z][y][x] = F[z][x] for every y, Lateral sets V[z][y][x] = L[z][y].
/// The result is unit-domain when every pixel lies in [0, 1], HU otherwise.
Volume3D back_project(const Image2D& img, View view);

/// Voxelwise mean of the frontal and lateral back projections.
Volume3D fuse_backprojections(const Image2D& frontal, const Image2D& lateral);

/// Block-mean downsampling by `factor` (a power of two dividing the side).
Volume3D downsample_volume_mean(const Volume3D& v, std::size_t factor);

}  // namespace xprospect
