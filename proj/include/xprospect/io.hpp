#pragma once

#include <string>

#include "xprospect/volume.hpp"

namespace xprospect {

// XVOL1: "XVOL1", u8 dtype (0 = f32 LE), u32 dz, dy, dx, u8 domain, payload (z, y, x).
void save_volume(const Volume3D& v, const std::string& path);
Volume3D load_volume(const std::string& path);
std::string encode_volume(const Volume3D& v);
Volume3D decode_volume(const std::string& bytes);

// XIMG1: "XIMG1", u8 view, u32 h, w, f32 LE payload.
void save_image(const Image2D& img, const std::string& path);
Image2D load_image(const std::string& path);
std::string encode_image(const Image2D& img);
Image2D decode_image(const std::string& bytes);

}  // namespace xprospect
