#include "xprospect/io.hpp"

#include <fstream>
#include <iterator>

#include "xprospect/binio.hpp"
#include "xprospect/error.hpp"

namespace xprospect {

namespace binio {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace binio

namespace {

constexpr std::string_view kVolMagic = "XVOL1";
constexpr std::string_view kImgMagic = "XIMG1";
// Largest voxel count accepted from a header (4 GiB of float32).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

}  // namespace

std::string encode_volume(const Volume3D& v) {
  binio::Writer w;
  w.bytes(kVolMagic);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(v.dz()));
  w.u32(static_cast<std::uint32_t>(v.dy()));
  w.u32(static_cast<std::uint32_t>(v.dx()));
  w.u8(static_cast<std::uint8_t>(v.domain()));
  for (float f : v.data()) w.f32(f);
  return w.buffer();
}

Volume3D decode_volume(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.bytes(kVolMagic.size(), "magic") != kVolMagic) throw FormatError("bad XVOL1 magic", 0);
  const auto dtype_at = r.offset();
  if (r.u8("dtype") != 0) throw FormatError("unsupported XVOL1 dtype", dtype_at);
  const auto dims_at = r.offset();
  const std::uint64_t dz = r.u32("dims"), dy = r.u32("dims"), dx = r.u32("dims");
  if (dz == 0 || dy == 0 || dx == 0) throw FormatError("zero volume dimension", dims_at);
  if (dz > kMaxElements / dy || dz * dy > kMaxElements / dx) {
    throw FormatError("volume dims overflow", dims_at);
  }
  const auto domain_at = r.offset();
  const auto domain = r.u8("domain");
  if (domain > 1) throw FormatError("unknown XVOL1 domain code", domain_at);
  const auto payload_at = r.offset();
  auto data = r.f32_array(dz * dy * dx, "XVOL1 payload");
  if (!r.at_end()) throw FormatError("trailing bytes after XVOL1 payload", r.offset());
  try {
    return Volume3D(dz, dy, dx, std::move(data), static_cast<Domain>(domain));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid XVOL1 payload: ") + e.what(), payload_at);
  }
}

void save_volume(const Volume3D& v, const std::string& path) {
  binio::write_file(path, encode_volume(v));
}

Volume3D load_volume(const std::string& path) { return decode_volume(binio::read_file(path)); }

std::string encode_image(const Image2D& img) {
  binio::Writer w;
  w.bytes(kImgMagic);
  w.u8(static_cast<std::uint8_t>(img.view()));
  w.u32(static_cast<std::uint32_t>(img.rows()));
  w.u32(static_cast<std::uint32_t>(img.cols()));
  for (float f : img.data()) w.f32(f);
  return w.buffer();
}

Image2D decode_image(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.bytes(kImgMagic.size(), "magic") != kImgMagic) throw FormatError("bad XIMG1 magic", 0);
  const auto view_at = r.offset();
  const auto view = r.u8("view");
  if (view > 2) throw FormatError("unknown XIMG1 view code", view_at);
  const auto dims_at = r.offset();
  const std::uint64_t h = r.u32("dims"), w = r.u32("dims");
  if (h == 0 || w == 0) throw FormatError("zero image dimension", dims_at);
  if (h > kMaxElements / w) throw FormatError("image dims overflow", dims_at);
  const auto payload_at = r.offset();
  auto data = r.f32_array(h * w, "XIMG1 payload");
  if (!r.at_end()) throw FormatError("trailing bytes after XIMG1 payload", r.offset());
  try {
    return Image2D(h, w, std::move(data), static_cast<View>(view));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid XIMG1 payload: ") + e.what(), payload_at);
  }
}

void save_image(const Image2D& img, const std::string& path) {
  binio::write_file(path, encode_image(img));
}

Image2D load_image(const std::string& path) { return decode_image(binio::read_file(path)); }

}  // namespace xprospect
