#include "chronoshift/codec.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

#include "byte_io.hpp"
#include "chronoshift/errors.hpp"

namespace chronoshift {
namespace {

using Writer = detail::ByteWriter;
using Reader = detail::ByteReader<CorruptBlob>;

}  // namespace

EncodeResult encode(const State& state, const std::vector<std::string>& names,
                    const std::set<std::string>& misbehaving) {
  std::vector<std::pair<std::string, ObjectId>> roots;
  for (const auto& name : names) {
    auto id = state.ns.lookup(name);
    if (!id) throw UnboundVariable(name);
    roots.emplace_back(name, *id);
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

  // Canonical pre-order over the sorted roots.
  std::unordered_map<ObjectId, std::uint32_t, ObjectIdHash> index;
  std::vector<const HeapObject*> order;
  for (const auto& [name, root] : roots) {
    std::vector<ObjectId> stack{root};
    while (!stack.empty()) {
      ObjectId id = stack.back();
      stack.pop_back();
      if (index.count(id)) continue;
      const HeapObject& o = state.heap.at(id);
      if (o.kind == Kind::kOpaque) {
        return Unserializable{"opaque object '" + o.opaque.tag + "' reachable from " + name};
      }
      if (misbehaving.count(o.class_name())) {
        return Unserializable{"class '" + o.class_name() + "' is marked misbehaving"};
      }
      index.emplace(id, static_cast<std::uint32_t>(order.size()));
      order.push_back(&o);
      for (auto it = o.fields.rbegin(); it != o.fields.rend(); ++it) stack.push_back(it->second);
      for (auto it = o.items.rbegin(); it != o.items.rend(); ++it) stack.push_back(*it);
    }
  }

  SerializedComponent out;
  Writer w(out.bytes);
  w.u8(kBlobFormatVersion);
  w.u32(static_cast<std::uint32_t>(roots.size()));
  for (const auto& [name, root] : roots) {
    w.str(name);
    w.u32(index.at(root));
  }
  w.u32(static_cast<std::uint32_t>(order.size()));
  for (const HeapObject* o : order) {
    w.u8(static_cast<std::uint8_t>(o->kind));
    switch (o->kind) {
      case Kind::kInt: w.u64(static_cast<std::uint64_t>(std::get<std::int64_t>(o->value))); break;
      case Kind::kFloat: {
        std::uint64_t bits;
        double d = std::get<double>(o->value);
        std::memcpy(&bits, &d, sizeof bits);
        w.u64(bits);
        break;
      }
      case Kind::kBool: w.u8(std::get<bool>(o->value) ? 1 : 0); break;
      case Kind::kStr: w.str(std::get<std::string>(o->value)); break;
      case Kind::kNone: break;
      case Kind::kList:
        w.u32(static_cast<std::uint32_t>(o->items.size()));
        for (ObjectId c : o->items) w.u32(index.at(c));
        break;
      case Kind::kMap:
      case Kind::kRecord:
        w.u32(static_cast<std::uint32_t>(o->fields.size()));
        for (const auto& [key, c] : o->fields) {
          w.str(key);
          w.u32(index.at(c));
        }
        break;
      case Kind::kOpaque: break;  // rejected above
    }
  }
  return out;
}

State decode(const SerializedComponent& blob) {
  Reader r(blob.bytes);
  if (r.u8() != kBlobFormatVersion) throw CorruptBlob("unsupported blob format version");
  std::uint32_t root_count = r.u32();
  std::vector<std::pair<std::string, std::uint32_t>> roots;
  for (std::uint32_t i = 0; i < root_count; ++i) {
    std::string name = r.str();
    roots.emplace_back(std::move(name), r.u32());
  }
  std::uint32_t node_count = r.u32();
  // Each node takes at least one byte; guards against absurd counts.
  r.need(node_count);

  State out;
  std::vector<HeapObject> nodes(node_count);
  for (std::uint32_t i = 0; i < node_count; ++i) {
    HeapObject& o = nodes[i];
    o.id = ObjectId{i + 1};
    std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(Kind::kRecord)) throw CorruptBlob("bad node kind");
    o.kind = static_cast<Kind>(kind);
    auto child = [&]() {
      std::uint32_t c = r.u32();
      if (c >= node_count) throw CorruptBlob("child index out of range");
      return ObjectId{c + 1};
    };
    switch (o.kind) {
      case Kind::kInt: o.value = static_cast<std::int64_t>(r.u64()); break;
      case Kind::kFloat: {
        std::uint64_t bits = r.u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        o.value = d;
        break;
      }
      case Kind::kBool: {
        std::uint8_t b = r.u8();
        if (b > 1) throw CorruptBlob("bad bool payload");
        o.value = b == 1;
        break;
      }
      case Kind::kStr: o.value = r.str(); break;
      case Kind::kNone: break;
      case Kind::kList: {
        std::uint32_t n = r.u32();
        r.need(static_cast<std::size_t>(n) * 4);
        o.items.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) o.items.push_back(child());
        break;
      }
      case Kind::kMap:
      case Kind::kRecord: {
        std::uint32_t n = r.u32();
        for (std::uint32_t k = 0; k < n; ++k) {
          std::string key = r.str();
          if (!o.fields.empty() && !(o.fields.back().first < key)) {
            throw CorruptBlob("map keys not in canonical order");
          }
          o.fields.emplace_back(std::move(key), child());
        }
        break;
      }
      case Kind::kOpaque: throw CorruptBlob("opaque node in blob");
    }
  }
  if (!r.done()) throw CorruptBlob("trailing bytes after blob");
  for (auto& o : nodes) out.heap.insert_with_id(std::move(o));
  for (const auto& [name, index] : roots) {
    if (index >= node_count) throw CorruptBlob("root index out of range");
    out.ns.bind(name, ObjectId{index + 1});
  }
  return out;
}

}  // namespace chronoshift
