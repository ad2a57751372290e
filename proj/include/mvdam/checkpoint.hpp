#pragma once

// MVDM1 tensor container.
//
//   "MVDM1"                      5 bytes magic
//   u64 count
//   count x { u64 name_len, name bytes, u64 rank, rank x u64 dim,
//             numel x f64 }
//
// Integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "mvdam/error.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/tensor.hpp"

namespace mvdam {

inline constexpr char kCheckpointMagic[] = "MVDM1";

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFF) << (8 * (7 - i));
    return r;
  }
  return v;
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw Error("checkpoint: truncated file");
  return to_le(v);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const TensorMap& tensors) {
  os.write(kCheckpointMagic, 5);
  detail::put_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u64(os, t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) detail::put_u64(os, t.dim(i));
    for (double x : t.data()) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
  }
  if (!os) throw Error("checkpoint: write failed");
}

inline TensorMap read_checkpoint(std::istream& is) {
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0)
    throw Error("checkpoint: bad magic (expected MVDM1)");
  const std::uint64_t count = detail::get_u64(is);
  TensorMap out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t len = detail::get_u64(is);
    if (len > (1u << 20)) throw Error("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw Error("checkpoint: truncated name");
    const std::uint64_t rank = detail::get_u64(is);
    if (rank > Shape::kMaxRank) throw Error("checkpoint: rank too large for " + name);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = detail::get_u64(is);
    Shape shape{std::span<const std::size_t>(dims)};
    std::vector<double> data(shape.numel());
    for (double& x : data) x = std::bit_cast<double>(detail::get_u64(is));
    if (!out.emplace(name, Tensor(shape, std::move(data))).second)
      throw Error("checkpoint: duplicate tensor " + name);
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_checkpoint(os, tensors);
}

inline TensorMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace mvdam
