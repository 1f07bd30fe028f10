#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rac/diff/tensor.hpp"

namespace rac::diff {

// Named parameter tensors in insertion order. Copies of a ParamSet share the
// underlying tensors; use snapshot() for an independent copy.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t element_count() const;
  std::vector<std::string> names() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  // Entries whose name starts with the prefix, sharing tensors with this set.
  ParamSet with_prefix(std::string_view prefix) const;
  // Appends every entry of other; names must not collide.
  void extend(const ParamSet& other);

  ParamSet snapshot() const;
  // Copies values from a set with identical names and shapes.
  void copy_values_from(const ParamSet& other);
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Versioned little-endian binary format:
//   magic "RACP", u32 version, u32 entry count, then per entry
//   u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 values.
inline constexpr char kParamMagic[4] = {'R', 'A', 'C', 'P'};
inline constexpr std::uint32_t kParamFormatVersion = 1;

std::string serialize_params(const ParamSet& params);
ParamSet deserialize_params(std::string_view bytes);
void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace rac::diff
