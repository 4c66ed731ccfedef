#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "xprospect/params.hpp"
#include "xprospect/tape.hpp"
#include "xprospect/volume.hpp"

namespace xprospect {

/// Architecture of the biplanar reconstruction network.
///
/// Each view runs a 2-D encoder with `stages()` downsampling stages, lifts its
/// bottleneck to a cube of side cbrt(dense_units) (Connection-A) and decodes it
/// in 3-D with skip expansions (Connection-B). A fusion decoder merges the two
/// views (Connections C and D) and a 1x1x1 logistic head emits the volume.
struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t dense_units = 64;
  std::size_t base_channels = 16;
  bool use_backprojection = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless dense_units is a cube whose side is a power of
  /// two no larger than input_size, and input_size is a power of two >= 8.
  void validate() const;
  /// Side length of the Connection-A cube.
  std::size_t cube_side() const;
  /// log2(input_size / cube_side()).
  std::size_t stages() const;
  /// Encoder output channels at stage i.
  std::size_t encoder_channels(std::size_t stage) const;
  /// 3-D feature channels at decoder level j (resolution input_size / 2^j).
  std::size_t decoder_channels(std::size_t level) const;
};

/// Deterministic init from cfg.seed: weights ~ N(0, 1/fan_in), biases zero.
ParamStore init_params(const ModelConfig& cfg);

// The named connections, on already-recorded feature tensors. Parameters are
// looked up under `prefix`.
namespace connection {

/// (b, h, w, c) -> dense(N) + SELU -> (b, n, n, n, 1) -> 3x3x3 conv + SELU.
Var a(BoundParams& params, const std::string& prefix, const Var& bottleneck, const ModelConfig& cfg);
/// (b, h, w, c) -> 1x1 conv + SELU -> replicate `depth` times -> 3x3x3 conv + SELU.
Var b(BoundParams& params, const std::string& prefix, const Var& skip, std::size_t depth);
/// Average of coronal (b, z, x, y, c) with sagittal (b, z, y, x, c) transposed.
Var c(const Var& coronal, const Var& sagittal);
/// c(coronal, sagittal) concatenated with prev_fusion on the channel axis.
Var d(const Var& coronal, const Var& sagittal, const Var& prev_fusion);

}  // namespace connection

// Tensor-level entry points for the connections (no gradients recorded).
Tensor connection_a(const Tensor& bottleneck, const ParamStore& params, const std::string& prefix,
                    const ModelConfig& cfg);
Tensor connection_b(const Tensor& skip, const ParamStore& params, const std::string& prefix,
                    std::size_t depth);
Tensor connection_c(const Tensor& coronal, const Tensor& sagittal);
Tensor connection_d(const Tensor& coronal, const Tensor& sagittal, const Tensor& prev_fusion);

/// Registers every parameter on the tape and records the full network.
/// Returns the head output shaped (1, z, x, y, 1).
Var forward_on_tape(Tape& tape, const ParamStore& params, const ModelConfig& cfg, const Image2D& frontal,
                    const Image2D& lateral);

/// Predicted unit-domain volume for one frontal/lateral pair.
Volume3D forward(const ParamStore& params, const ModelConfig& cfg, const Image2D& frontal,
                 const Image2D& lateral);

/// Volume (z, y, x) <-> fusion feature layout (1, z, x, y, 1).
Tensor volume_to_features(const Volume3D& v);
Volume3D features_to_volume(const Tensor& t);

}  // namespace xprospect
