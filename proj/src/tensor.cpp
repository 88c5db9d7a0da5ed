#include "noisefuse/tensor.hpp"

#include <limits>

namespace noisefuse {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad-magic";
    case Errc::unknown_dtype: return "unknown-dtype";
    case Errc::truncated: return "truncated";
    case Errc::non_finite: return "non-finite";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::out_of_range: return "out-of-range";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::unknown_key: return "unknown-key";
    case Errc::type_mismatch: return "type-mismatch";
    case Errc::constraint_violation: return "constraint-violation";
    case Errc::zero_norm: return "zero-norm";
    case Errc::singular: return "singular";
    case Errc::duplicate_key: return "duplicate-key";
    case Errc::missing_key: return "missing-key";
    case Errc::unknown_condition: return "unknown-condition";
  }
  return "unknown";
}

std::size_t element_count(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e != 0 && n > std::numeric_limits<std::size_t>::max() / e) {
      throw Error(Errc::out_of_range, "tensor element count overflows");
    }
    n *= e;
  }
  return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool bitwise_equal(const AnyTensor& a, const AnyTensor& b) noexcept {
  if (a.index() != b.index()) return false;
  if (const auto* fa = std::get_if<Tensor32>(&a)) {
    return bitwise_equal(*fa, std::get<Tensor32>(b));
  }
  return bitwise_equal(std::get<Tensor64>(a), std::get<Tensor64>(b));
}

}  // namespace noisefuse
