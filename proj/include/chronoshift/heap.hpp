#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace chronoshift {

// Identity of a heap object. Assigned once at creation, never reused within a
// heap. Two bindings alias iff they reach the same ObjectId.
struct ObjectId {
  std::uint64_t value = 0;
  auto operator<=>(const ObjectId&) const = default;
};

struct ObjectIdHash {
  std::size_t operator()(ObjectId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

enum class Kind : std::uint8_t {
  kInt = 0,
  kFloat = 1,
  kBool = 2,
  kStr = 3,
  kNone = 4,
  kList = 5,
  kMap = 6,
  kRecord = 7,
  kOpaque = 8,
};

std::string_view kind_name(Kind kind);
bool is_primitive(Kind kind);
bool is_container(Kind kind);

struct NoneValue {
  bool operator==(const NoneValue&) const = default;
};

// Payload of a primitive object. Containers and opaques hold NoneValue here.
using Primitive = std::variant<NoneValue, std::int64_t, double, bool, std::string>;

// Stand-in for objects that cannot be serialized (generators, hashes, ...).
struct OpaqueInfo {
  std::string tag;
  bool deterministic = true;
  bool operator==(const OpaqueInfo&) const = default;
};

using Field = std::pair<std::string, ObjectId>;

struct HeapObject {
  ObjectId id;
  Kind kind = Kind::kNone;
  Primitive value;
  std::vector<ObjectId> items;  // List only, positional.
  std::vector<Field> fields;    // Map/Record only, sorted by key.
  OpaqueInfo opaque;            // Opaque only.

  // Visits outgoing edges in canonical order (positional, then key order).
  template <typename Fn>
  void for_each_child(Fn&& fn) const {
    for (ObjectId child : items) fn(child);
    for (const auto& [key, child] : fields) fn(child);
  }

  std::optional<ObjectId> field(std::string_view key) const;
  void set_field(std::string key, ObjectId child);
  bool erase_field(std::string_view key);

  // Serialization class used by misbehaving-class lists: the lowercase kind
  // name, or "opaque:<tag>".
  std::string class_name() const;
};

class Heap {
 public:
  ObjectId make_int(std::int64_t v);
  ObjectId make_float(double v);
  ObjectId make_bool(bool v);
  ObjectId make_str(std::string v);
  ObjectId make_none();
  ObjectId make_list(std::vector<ObjectId> items);
  ObjectId make_map(Kind kind, std::vector<Field> fields);
  ObjectId make_opaque(std::string tag, bool deterministic);

  // Inserts a copy of `object` under a fresh id and returns that id.
  ObjectId adopt(HeapObject object);

  // Inserts `object` keeping its id. The id must be unused; the allocator is
  // advanced past it.
  void insert_with_id(HeapObject object);

  const HeapObject& at(ObjectId id) const;
  HeapObject& at(ObjectId id);
  bool contains(ObjectId id) const { return objects_.count(id) != 0; }
  std::size_t size() const { return objects_.size(); }
  void erase(ObjectId id) { objects_.erase(id); }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [id, object] : objects_) fn(object);
  }

 private:
  ObjectId allocate(HeapObject object);

  std::unordered_map<ObjectId, HeapObject, ObjectIdHash> objects_;
  std::uint64_t next_id_ = 1;
};

class Namespace {
 public:
  void bind(const std::string& name, ObjectId id) { bindings_[name] = id; }
  // Throws UnboundVariable.
  void unbind(const std::string& name);
  std::optional<ObjectId> lookup(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return bindings_.size(); }
  const std::map<std::string, ObjectId, std::less<>>& bindings() const {
    return bindings_;
  }

 private:
  std::map<std::string, ObjectId, std::less<>> bindings_;
};

// Session state: named roots over a heap.
struct State {
  Heap heap;
  Namespace ns;
};

using ObjectIdSet = std::vector<ObjectId>;  // sorted, unique

// Transitive closure over child edges from the binding of `name`.
// Throws UnboundVariable.
ObjectIdSet reachable(const State& state, std::string_view name);

// Closure from several roots at once. Unbound names are ignored.
ObjectIdSet reachable_from(const State& state,
                           const std::vector<std::string>& names);

// Structural equality of two states up to renaming of object ids: kinds,
// primitive values, edge labels/order and the aliasing pattern must agree
// and the bound names must match exactly.
bool deep_equal(const State& a, const State& b);

// Throws UnboundVariable. Objects are not freed until collect_garbage().
void delete_binding(State& state, const std::string& name);

// Mark-and-sweep from all bindings. Returns the number of freed objects.
std::size_t collect_garbage(State& state);

// Copies the closure of `names` into a standalone state. Object ids are
// preserved so the copy can be compared by identity with its source.
// Throws UnboundVariable.
State extract_component(const State& state,
                        const std::vector<std::string>& names);

// Copies every binding and object of `fragment` into `into` under fresh ids,
// overwriting bindings of the same names.
void transplant(const State& fragment, State& into);

// Short human-readable rendering of the value bound at `id`.
std::string render(const Heap& heap, ObjectId id, std::size_t max_items = 8);

}  // namespace chronoshift
