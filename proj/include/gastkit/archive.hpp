#pragma once

// Weight archive format (all integers and values little-endian):
//
//   magic    8 bytes  "GASTKIT\0"
//   version  u32      kArchiveVersion
//   count    u32      number of entries
//   entry*:
//     name_len u32, name bytes (UTF-8, no terminator)
//     dtype    u8     0 = f32, 1 = f64
//     rank     u32, dims u64[rank]
//     values   product(dims) elements of dtype

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "gastkit/nn.hpp"

namespace gastkit {

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::array<char, 8> kArchiveMagic = {'G', 'A', 'S', 'T', 'K', 'I', 'T', '\0'};

enum class ScalarType : std::uint8_t { f32 = 0, f64 = 1 };

struct ArchiveEntry {
  std::string name;
  Shape shape;
  ScalarType dtype = ScalarType::f32;
  std::vector<double> values;  // widened; f32 entries round-trip exactly
};

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw DataError("truncated archive '" + path + "'");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_archive(const std::string& path, const std::vector<ArchiveEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kArchiveMagic.data(), kArchiveMagic.size());
  detail::write_le<std::uint32_t>(os, kArchiveVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (static_cast<std::int64_t>(e.values.size()) != shape_numel(e.shape)) {
      throw ContractError("archive entry '" + e.name + "' has shape " + shape_str(e.shape) + " but " +
                          std::to_string(e.values.size()) + " values");
    }
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (double v : e.values) {
      if (e.dtype == ScalarType::f32) {
        detail::write_le<float>(os, static_cast<float>(v));
      } else {
        detail::write_le<double>(os, v);
      }
    }
  }
  if (!os) throw DataError("failed writing archive '" + path + "'");
}

inline std::vector<ArchiveEntry> read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open archive '" + path + "'");
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kArchiveMagic) {
    throw DataError("'" + path + "' is not a gastkit archive");
  }
  const auto version = detail::read_le<std::uint32_t>(is, path);
  if (version != kArchiveVersion) {
    throw DataError("archive '" + path + "' has unsupported version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint32_t>(is, path);
  std::vector<ArchiveEntry> entries(count);
  for (auto& e : entries) {
    const auto len = detail::read_le<std::uint32_t>(is, path);
    e.name.resize(len);
    if (!is.read(e.name.data(), len)) throw DataError("truncated archive '" + path + "'");
    const auto dtype = detail::read_le<std::uint8_t>(is, path);
    if (dtype > 1) throw DataError("archive '" + path + "': unknown dtype in entry '" + e.name + "'");
    e.dtype = static_cast<ScalarType>(dtype);
    const auto rank = detail::read_le<std::uint32_t>(is, path);
    e.shape.resize(rank);
    for (auto& d : e.shape) d = static_cast<std::int64_t>(detail::read_le<std::uint64_t>(is, path));
    e.values.resize(static_cast<std::size_t>(shape_numel(e.shape)));
    for (auto& v : e.values) {
      v = e.dtype == ScalarType::f32 ? static_cast<double>(detail::read_le<float>(is, path))
                                     : detail::read_le<double>(is, path);
    }
  }
  return entries;
}

template <typename Real>
constexpr ScalarType scalar_type_of() {
  return std::is_same_v<Real, float> ? ScalarType::f32 : ScalarType::f64;
}

template <typename Real>
ArchiveEntry to_entry(const std::string& name, const Tensor<Real>& t) {
  return {name, t.shape(), scalar_type_of<Real>(), std::vector<double>(t.data().begin(), t.data().end())};
}

template <typename Real>
void save_checkpoint(const ParameterStore<Real>& store, const std::string& path) {
  std::vector<ArchiveEntry> entries;
  for (const auto& p : store.all()) entries.push_back(to_entry(p.name, p.tensor));
  write_archive(path, entries);
}

// Restores every parameter and buffer of `store`; names and shapes must match exactly.
template <typename Real>
void load_checkpoint(ParameterStore<Real>& store, const std::string& path) {
  auto entries = read_archive(path);
  std::unordered_map<std::string, const ArchiveEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& p : store.all()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint '" + path + "' lacks entry '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw DataError("checkpoint entry '" + p.name + "' has shape " + shape_str(it->second->shape) +
                      ", model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(it->second->values[i]);
  }
}

}  // namespace gastkit
