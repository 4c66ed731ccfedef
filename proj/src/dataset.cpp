#include "xprospect/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "xprospect/error.hpp"
#include "xprospect/seed.hpp"

namespace xprospect {

std::string to_string(InputSource s) { return s == InputSource::Mean ? "mean" : "stylized"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

InputSource parse_input_source(const std::string& s) {
  if (s == "mean") return InputSource::Mean;
  if (s == "stylized") return InputSource::Stylized;
  throw InvalidInput("unknown input_source '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidInput("unknown split '" + s + "'");
}

std::vector<ManifestRow> DatasetManifest::rows_in(Split split) const {
  std::vector<ManifestRow> out;
  std::ranges::copy_if(rows, std::back_inserter(out), [&](const ManifestRow& r) { return r.split == split; });
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (r.id.empty()) throw InvalidInput("manifest row with empty id");
    if (!ids.insert(r.id).second) throw InvalidInput("duplicate manifest id '" + r.id + "'");
    for (const std::string* p : {&r.ct_path, &r.frontal_path, &r.lateral_path}) {
      if (!p->empty() && !std::filesystem::exists(resolve(*p))) {
        throw InvalidInput("manifest row '" + r.id + "' references missing file " + *p);
      }
    }
  }
}

namespace {

const char* const kHeader = "id\tct_path\tfrontal_path\tlateral_path\tinput_source\tsplit";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::string encode_manifest(const DatasetManifest& manifest) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : manifest.rows) {
    out += r.id + "\t" + r.ct_path + "\t" + r.frontal_path + "\t" + r.lateral_path + "\t" +
           to_string(r.input_source) + "\t" + to_string(r.split) + "\n";
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << encode_manifest(manifest);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw InvalidInput("manifest " + path.string() + " lacks the expected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 6) {
      throw InvalidInput("manifest line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                         " fields, expected 6");
    }
    m.rows.push_back({cells[0], cells[1], cells[2], cells[3], parse_input_source(cells[4]), parse_split(cells[5])});
  }
  return m;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::uint64_t state = seed;
  for (std::size_t i = n; i > 1; --i) {
    state = splitmix64(state);
    std::swap(idx[i - 1], idx[state % i]);
  }
  return idx;
}

std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>> split_dataset(const std::vector<ManifestRow>& rows,
                                                                          double ratio, std::uint64_t seed) {
  if (rows.empty()) throw InvalidInput("cannot split an empty manifest");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  const auto order = seeded_permutation(rows.size(), derive_seed(seed, "shuffle"));
  // Guard the floor against 0.8 * 10 landing on 7.999...
  const auto n_train =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(rows.size()) + 1e-9));
  std::pair<std::vector<ManifestRow>, std::vector<ManifestRow>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ManifestRow r = rows[order[i]];
    if (i < n_train) {
      r.split = Split::Train;
      out.first.push_back(std::move(r));
    } else {
      r.split = Split::Val;
      out.second.push_back(std::move(r));
    }
  }
  return out;
}

RodGeometry phantom_rod(std::size_t size) {
  return {size * 3 / 4, size / 2, std::max<std::size_t>(1, size / 16)};
}

Volume3D make_phantom(std::uint64_t seed, std::size_t size) {
  if (size < 8) throw InvalidInput("phantom size must be at least 8");
  std::mt19937_64 rng(derive_seed(seed, "phantom"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t count = 3 + static_cast<std::size_t>(rng() % 6);

  // Distinct intensities: a shuffled subset of an evenly spaced ladder.
  std::vector<float> ladder;
  for (int k = 0; k <= 16; ++k) ladder.push_back(0.1f + 0.05f * static_cast<float>(k));
  const auto pick = seeded_permutation(ladder.size(), rng());

  const double d = static_cast<double>(size);
  std::vector<float> data(size * size * size, 0.0f);
  for (std::size_t e = 0; e < count; ++e) {
    const double cz = d * (0.25 + 0.5 * unit(rng)), cy = d * (0.25 + 0.5 * unit(rng)),
                 cx = d * (0.25 + 0.5 * unit(rng));
    const double rz = d * (0.12 + 0.25 * unit(rng)), ry = d * (0.12 + 0.25 * unit(rng)),
                 rx = d * (0.12 + 0.25 * unit(rng));
    const float value = ladder[pick[e]];
    for (std::size_t z = 0; z < size; ++z)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double a = (static_cast<double>(z) + 0.5 - cz) / rz, b = (static_cast<double>(y) + 0.5 - cy) / ry,
                       c = (static_cast<double>(x) + 0.5 - cx) / rx;
          if (a * a + b * b + c * c <= 1.0) data[(z * size + y) * size + x] = value;
        }
  }
  const auto rod = phantom_rod(size);
  const auto r2 = static_cast<std::ptrdiff_t>(rod.radius * rod.radius);
  for (std::size_t z = 0; z < size; ++z)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const auto dy = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(rod.y);
        const auto dx = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(rod.x);
        if (dy * dy + dx * dx <= r2) data[(z * size + y) * size + x] = 0.9f;
      }
  return Volume3D(size, size, size, std::move(data), Domain::Unit);
}

}  // namespace xprospect
