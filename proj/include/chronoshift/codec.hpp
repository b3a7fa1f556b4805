#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "chronoshift/heap.hpp"

namespace chronoshift {

inline constexpr std::uint8_t kBlobFormatVersion = 0x01;

// Canonical byte encoding of one component.
//
//   u8  version (0x01)
//   u32 root count, then per root (sorted by name): str name, u32 node index
//   u32 node count, then per node in depth-first order from the sorted roots:
//     u8 kind, payload:
//       int    i64        float  f64 bits     bool  u8
//       str    str        none   -
//       list   u32 n, n x u32 node index
//       map/record  u32 n, n x (str key, u32 node index), keys sorted
//
// Integers are little-endian; str is u32 length + bytes. A shared object is
// written once and referenced by index, which preserves aliasing.
struct SerializedComponent {
  std::vector<std::uint8_t> bytes;
  bool operator==(const SerializedComponent&) const = default;
};

struct Unserializable {
  std::string reason;
};

using EncodeResult = std::variant<SerializedComponent, Unserializable>;

// Encodes the closure of `names`. Opaque objects, and objects whose class is
// listed in `misbehaving`, make the component unserializable.
// Throws UnboundVariable.
EncodeResult encode(const State& state, const std::vector<std::string>& names,
                    const std::set<std::string>& misbehaving = {});

// Decodes into a standalone fragment with fresh ids. Throws CorruptBlob on
// malformed input.
State decode(const SerializedComponent& blob);

}  // namespace chronoshift
