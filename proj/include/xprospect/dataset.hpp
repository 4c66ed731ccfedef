#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xprospect/volume.hpp"

namespace xprospect {

enum class InputSource { Mean, Stylized };
enum class Split { Train, Val, Test };

std::string to_string(InputSource s);
std::string to_string(Split s);
InputSource parse_input_source(const std::string& s);
Split parse_split(const std::string& s);

struct ManifestRow {
  std::string id;
  std::string ct_path;
  std::string frontal_path;  // empty until projected
  std::string lateral_path;
  InputSource input_source = InputSource::Mean;
  Split split = Split::Train;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// Rows pairing CT volumes with their two projections. Relative paths
/// resolve against `base_dir`, the directory holding the manifest file.
struct DatasetManifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
  std::vector<ManifestRow> rows_in(Split split) const;

  /// Rejects duplicate ids and any non-empty path that does not exist.
  void validate() const;
};

/// TSV with header: id, ct_path, frontal_path, lateral_path, input_source, split.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string encode_manifest(const DatasetManifest& manifest);

/// Seeded permutation of [0, n) (Fisher-Yates on a splitmix64 stream).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Deterministic shuffle, then the first floor(ratio * n) rows become train.
std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>> split_dataset(const std::vector<ManifestRow>& rows,
                                                                          double ratio, std::uint64_t seed);

/// Synthetic chest-like phantom: 3-8 ellipsoids with distinct intensities in
/// [0.1, 0.9] over a zero background, plus a 0.9 rod along z standing in for
/// the spine.
Volume3D make_phantom(std::uint64_t seed, std::size_t size);

/// (y, x) centre and radius of the phantom rod at a given size.
struct RodGeometry {
  std::size_t y, x, radius;
};
RodGeometry phantom_rod(std::size_t size);

}  // namespace xprospect
