#include "noisefuse/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace noisefuse {
namespace {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(const unsigned char* bytes) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return value;
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(Errc::truncated, std::string("nbt: truncated ") + what);
  }
}

template <class T>
void write_payload(const Tensor<T>& t, std::ostream& out) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) put_le(out, std::bit_cast<Bits>(v));
}

template <class T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t count = element_count(shape);
  // Grow in bounded chunks so a corrupt header cannot force a huge allocation
  // before the truncation is noticed.
  constexpr std::size_t kChunk = 1 << 16;
  std::vector<T> values;
  std::vector<unsigned char> buf;
  std::size_t done = 0;
  while (done < count) {
    const std::size_t n = std::min(kChunk, count - done);
    buf.resize(n * sizeof(T));
    read_exact(in, buf.data(), buf.size(), "payload");
    for (std::size_t i = 0; i < n; ++i) {
      const T v = std::bit_cast<T>(get_le<Bits>(buf.data() + i * sizeof(T)));
      if (!std::isfinite(v)) {
        throw Error(Errc::non_finite, "nbt: non-finite value at element " +
                                          std::to_string(done + i));
      }
      values.push_back(v);
    }
    done += n;
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace

void write_tensor(const AnyTensor& any, std::ostream& out) {
  std::visit(
      [&](const auto& t) {
        if (!t.all_finite()) {
          throw Error(Errc::non_finite, "nbt: refusing to write non-finite tensor");
        }
        if (t.rank() > 255) {
          throw Error(Errc::out_of_range, "nbt: rank exceeds 255");
        }
        out.write(kNbtMagic, sizeof(kNbtMagic));
        put_le(out, static_cast<std::uint8_t>(t.dtype()));
        put_le(out, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t e : t.shape()) put_le(out, static_cast<std::uint64_t>(e));
        write_payload(t, out);
      },
      any);
  if (!out) throw Error(Errc::io, "nbt: write failed");
}

AnyTensor read_tensor(std::istream& in) {
  std::array<unsigned char, 6> head{};
  read_exact(in, head.data(), 4, "magic");
  if (!std::equal(head.begin(), head.begin() + 4, kNbtMagic)) {
    throw Error(Errc::bad_magic, "nbt: bad magic");
  }
  read_exact(in, head.data() + 4, 2, "header");
  const unsigned dtype = head[4];
  const unsigned rank = head[5];
  if (dtype > 1) {
    throw Error(Errc::unknown_dtype, "nbt: unknown dtype " + std::to_string(dtype));
  }
  Shape shape(rank);
  for (auto& e : shape) {
    std::array<unsigned char, 8> ext{};
    read_exact(in, ext.data(), ext.size(), "extents");
    const auto v = get_le<std::uint64_t>(ext.data());
    if (v > std::numeric_limits<std::size_t>::max()) {
      throw Error(Errc::out_of_range, "nbt: extent too large");
    }
    e = static_cast<std::size_t>(v);
  }
  if (dtype == 0) return read_payload<float>(in, std::move(shape));
  return read_payload<double>(in, std::move(shape));
}

std::string encode_tensor(const AnyTensor& t) {
  std::ostringstream out(std::ios::binary);
  write_tensor(t, out);
  return std::move(out).str();
}

AnyTensor decode_tensor(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_tensor(in);
}

void save_tensor(const std::filesystem::path& path, const AnyTensor& t) {
  // Encode first so a failed write never leaves a partial header behind.
  const std::string bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

AnyTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  try {
    return read_tensor(in);
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

}  // namespace noisefuse
