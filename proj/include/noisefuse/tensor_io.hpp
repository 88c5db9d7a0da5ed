#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "noisefuse/tensor.hpp"

namespace noisefuse {

// `.nbt` layout, all integers little-endian:
//
//   "NBT1" | dtype u8 (0 = f32, 1 = f64) | rank u8 | rank x u64 extents |
//   row-major payload
//
// Writing is byte-for-byte deterministic. Reading rejects bad magic, unknown
// dtype, truncation and non-finite payload values with distinct codes.

inline constexpr char kNbtMagic[4] = {'N', 'B', 'T', '1'};

void write_tensor(const AnyTensor& t, std::ostream& out);
AnyTensor read_tensor(std::istream& in);

template <class T>
void write_tensor(const Tensor<T>& t, std::ostream& out) {
  write_tensor(AnyTensor(t), out);
}

std::string encode_tensor(const AnyTensor& t);
AnyTensor decode_tensor(const std::string& bytes);

void save_tensor(const std::filesystem::path& path, const AnyTensor& t);
AnyTensor load_tensor(const std::filesystem::path& path);

template <class T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  save_tensor(path, AnyTensor(t));
}

/// Loads and converts to the requested precision.
template <class T>
Tensor<T> load_tensor_as(const std::filesystem::path& path) {
  return as_tensor<T>(load_tensor(path));
}

}  // namespace noisefuse
