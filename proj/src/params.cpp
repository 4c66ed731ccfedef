#include "xprospect/params.hpp"

#include "xprospect/binio.hpp"
#include "xprospect/error.hpp"

namespace xprospect {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

std::size_t count_params(const ParamStore& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

namespace {

constexpr std::string_view kMagic = "XCKPT1";
constexpr std::string_view kEmaMagic = "EMA1";

void encode_entries(binio::Writer& w, const ParamStore& store) {
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    if (name.size() > 0xFFFF) throw InvalidInput("parameter name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float f : t.values()) w.f32(f);
  }
}

ParamStore decode_entries(binio::Reader& r) {
  ParamStore store;
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.u16("name length");
    const auto name_at = r.offset();
    std::string name(r.bytes(len, "parameter name"));
    const auto rank = r.u8("rank");
    Shape shape(rank);
    const auto dims_at = r.offset();
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.u32("dims");
      numel *= d;
      if (numel > (std::uint64_t{1} << 32)) throw FormatError("tensor dims overflow", dims_at);
    }
    auto data = r.f32_array(numel, "tensor payload");
    if (store.contains(name)) throw FormatError("duplicate parameter name '" + name + "'", name_at);
    store.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  binio::Writer w;
  w.bytes(kMagic);
  encode_entries(w, ckpt.params);
  if (ckpt.ema) {
    w.bytes(kEmaMagic);
    encode_entries(w, *ckpt.ema);
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.bytes(kMagic.size(), "magic") != kMagic) throw FormatError("bad XCKPT1 magic", 0);
  Checkpoint out;
  out.params = decode_entries(r);
  if (!r.at_end()) {
    const auto at = r.offset();
    if (r.bytes(kEmaMagic.size(), "EMA magic") != kEmaMagic) throw FormatError("bad EMA1 section magic", at);
    out.ema = decode_entries(r);
    if (!r.at_end()) throw FormatError("trailing bytes after EMA1 section", r.offset());
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  binio::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace xprospect
