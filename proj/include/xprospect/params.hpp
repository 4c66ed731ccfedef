#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xprospect/tensor.hpp"

namespace xprospect {

/// Named parameter tensors kept in insertion order.
class ParamStore {
 public:
  /// Adds a new entry; throws on a duplicate name.
  Tensor& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// True when both stores hold the same names in the same order with equal shapes.
  bool same_layout(const ParamStore& other) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Total scalar count across all entries.
std::size_t count_params(const ParamStore& params);

// XCKPT1: "XCKPT1", u32 count, then per entry u16 name length, UTF-8 name,
// u8 rank, u32 dims[rank], f32 LE payload. An optional "EMA1" section with
// the same layout follows.
struct Checkpoint {
  ParamStore params;
  std::optional<ParamStore> ema;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace xprospect
