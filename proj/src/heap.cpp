#include "chronoshift/heap.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <sstream>
#include <unordered_set>

#include "chronoshift/errors.hpp"

namespace chronoshift {

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::kInt: return "int";
    case Kind::kFloat: return "float";
    case Kind::kBool: return "bool";
    case Kind::kStr: return "str";
    case Kind::kNone: return "none";
    case Kind::kList: return "list";
    case Kind::kMap: return "map";
    case Kind::kRecord: return "record";
    case Kind::kOpaque: return "opaque";
  }
  return "?";
}

bool is_primitive(Kind kind) {
  return kind == Kind::kInt || kind == Kind::kFloat || kind == Kind::kBool ||
         kind == Kind::kStr || kind == Kind::kNone;
}

bool is_container(Kind kind) {
  return kind == Kind::kList || kind == Kind::kMap || kind == Kind::kRecord;
}

std::optional<ObjectId> HeapObject::field(std::string_view key) const {
  auto it = std::lower_bound(
      fields.begin(), fields.end(), key,
      [](const Field& f, std::string_view k) { return f.first < k; });
  if (it == fields.end() || it->first != key) return std::nullopt;
  return it->second;
}

void HeapObject::set_field(std::string key, ObjectId child) {
  auto it = std::lower_bound(
      fields.begin(), fields.end(), key,
      [](const Field& f, const std::string& k) { return f.first < k; });
  if (it != fields.end() && it->first == key) {
    it->second = child;
  } else {
    fields.insert(it, Field{std::move(key), child});
  }
}

bool HeapObject::erase_field(std::string_view key) {
  auto it = std::lower_bound(
      fields.begin(), fields.end(), key,
      [](const Field& f, std::string_view k) { return f.first < k; });
  if (it == fields.end() || it->first != key) return false;
  fields.erase(it);
  return true;
}

std::string HeapObject::class_name() const {
  if (kind == Kind::kOpaque) return "opaque:" + opaque.tag;
  return std::string(kind_name(kind));
}

ObjectId Heap::allocate(HeapObject object) {
  object.id = ObjectId{next_id_++};
  ObjectId id = object.id;
  objects_.emplace(id, std::move(object));
  return id;
}

ObjectId Heap::make_int(std::int64_t v) {
  HeapObject o;
  o.kind = Kind::kInt;
  o.value = v;
  return allocate(std::move(o));
}

ObjectId Heap::make_float(double v) {
  HeapObject o;
  o.kind = Kind::kFloat;
  o.value = v;
  return allocate(std::move(o));
}

ObjectId Heap::make_bool(bool v) {
  HeapObject o;
  o.kind = Kind::kBool;
  o.value = v;
  return allocate(std::move(o));
}

ObjectId Heap::make_str(std::string v) {
  HeapObject o;
  o.kind = Kind::kStr;
  o.value = std::move(v);
  return allocate(std::move(o));
}

ObjectId Heap::make_none() {
  HeapObject o;
  o.kind = Kind::kNone;
  return allocate(std::move(o));
}

ObjectId Heap::make_list(std::vector<ObjectId> items) {
  HeapObject o;
  o.kind = Kind::kList;
  o.items = std::move(items);
  return allocate(std::move(o));
}

ObjectId Heap::make_map(Kind kind, std::vector<Field> fields) {
  HeapObject o;
  o.kind = kind;
  std::stable_sort(fields.begin(), fields.end(),
                   [](const Field& a, const Field& b) { return a.first < b.first; });
  // Later duplicates win, as with repeated assignment.
  std::vector<Field> unique;
  for (auto& f : fields) {
    if (!unique.empty() && unique.back().first == f.first) {
      unique.back().second = f.second;
    } else {
      unique.push_back(std::move(f));
    }
  }
  o.fields = std::move(unique);
  return allocate(std::move(o));
}

ObjectId Heap::make_opaque(std::string tag, bool deterministic) {
  HeapObject o;
  o.kind = Kind::kOpaque;
  o.opaque = OpaqueInfo{std::move(tag), deterministic};
  return allocate(std::move(o));
}

ObjectId Heap::adopt(HeapObject object) { return allocate(std::move(object)); }

void Heap::insert_with_id(HeapObject object) {
  next_id_ = std::max(next_id_, object.id.value + 1);
  ObjectId id = object.id;
  objects_.emplace(id, std::move(object));
}

const HeapObject& Heap::at(ObjectId id) const {
  auto it = objects_.find(id);
  if (it == objects_.end()) {
    throw std::out_of_range("dangling object id " + std::to_string(id.value));
  }
  return it->second;
}

HeapObject& Heap::at(ObjectId id) {
  auto it = objects_.find(id);
  if (it == objects_.end()) {
    throw std::out_of_range("dangling object id " + std::to_string(id.value));
  }
  return it->second;
}

void Namespace::unbind(const std::string& name) {
  if (bindings_.erase(name) == 0) throw UnboundVariable(name);
}

std::optional<ObjectId> Namespace::lookup(std::string_view name) const {
  auto it = bindings_.find(name);
  if (it == bindings_.end()) return std::nullopt;
  return it->second;
}

bool Namespace::contains(std::string_view name) const {
  return bindings_.find(name) != bindings_.end();
}

std::vector<std::string> Namespace::names() const {
  std::vector<std::string> out;
  out.reserve(bindings_.size());
  for (const auto& [name, id] : bindings_) out.push_back(name);
  return out;
}

namespace {

template <typename Visit>
void walk(const Heap& heap, std::vector<ObjectId> stack, Visit&& visit) {
  std::unordered_set<ObjectId, ObjectIdHash> seen;
  while (!stack.empty()) {
    ObjectId id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    const HeapObject& object = heap.at(id);
    visit(object);
    object.for_each_child([&](ObjectId child) {
      if (!seen.count(child)) stack.push_back(child);
    });
  }
}

ObjectIdSet closure(const Heap& heap, std::vector<ObjectId> roots) {
  ObjectIdSet out;
  walk(heap, std::move(roots), [&](const HeapObject& o) { out.push_back(o.id); });
  std::sort(out.begin(), out.end());
  return out;
}

bool same_primitive(const Primitive& a, const Primitive& b) {
  if (a.index() != b.index()) return false;
  // Floats compare bitwise so NaN payloads and signed zeros round-trip.
  if (const double* x = std::get_if<double>(&a)) {
    const double y = std::get<double>(b);
    return std::memcmp(x, &y, sizeof(double)) == 0;
  }
  return a == b;
}

}  // namespace

ObjectIdSet reachable(const State& state, std::string_view name) {
  auto root = state.ns.lookup(name);
  if (!root) throw UnboundVariable(std::string(name));
  return closure(state.heap, {*root});
}

ObjectIdSet reachable_from(const State& state,
                           const std::vector<std::string>& names) {
  std::vector<ObjectId> roots;
  for (const auto& name : names) {
    if (auto id = state.ns.lookup(name)) roots.push_back(*id);
  }
  return closure(state.heap, std::move(roots));
}

bool deep_equal(const State& a, const State& b) {
  if (a.ns.size() != b.ns.size()) return false;
  std::unordered_map<ObjectId, ObjectId, ObjectIdHash> forward;
  std::unordered_map<ObjectId, ObjectId, ObjectIdHash> backward;
  std::deque<std::pair<ObjectId, ObjectId>> pending;

  auto pair_up = [&](ObjectId x, ObjectId y) {
    auto f = forward.find(x);
    auto g = backward.find(y);
    if (f != forward.end() || g != backward.end()) {
      return f != forward.end() && g != backward.end() && f->second == y &&
             g->second == x;
    }
    forward.emplace(x, y);
    backward.emplace(y, x);
    pending.emplace_back(x, y);
    return true;
  };

  auto ia = a.ns.bindings().begin();
  auto ib = b.ns.bindings().begin();
  for (; ia != a.ns.bindings().end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (!pair_up(ia->second, ib->second)) return false;
  }

  while (!pending.empty()) {
    auto [x, y] = pending.front();
    pending.pop_front();
    const HeapObject& ox = a.heap.at(x);
    const HeapObject& oy = b.heap.at(y);
    if (ox.kind != oy.kind) return false;
    if (!same_primitive(ox.value, oy.value)) return false;
    if (ox.opaque != oy.opaque) return false;
    if (ox.items.size() != oy.items.size()) return false;
    if (ox.fields.size() != oy.fields.size()) return false;
    for (std::size_t i = 0; i < ox.items.size(); ++i) {
      if (!pair_up(ox.items[i], oy.items[i])) return false;
    }
    for (std::size_t i = 0; i < ox.fields.size(); ++i) {
      if (ox.fields[i].first != oy.fields[i].first) return false;
      if (!pair_up(ox.fields[i].second, oy.fields[i].second)) return false;
    }
  }
  return true;
}

void delete_binding(State& state, const std::string& name) {
  state.ns.unbind(name);
}

std::size_t collect_garbage(State& state) {
  std::vector<ObjectId> roots;
  for (const auto& [name, id] : state.ns.bindings()) roots.push_back(id);
  std::unordered_set<ObjectId, ObjectIdHash> live;
  walk(state.heap, std::move(roots),
       [&](const HeapObject& o) { live.insert(o.id); });
  std::vector<ObjectId> dead;
  state.heap.for_each([&](const HeapObject& o) {
    if (!live.count(o.id)) dead.push_back(o.id);
  });
  for (ObjectId id : dead) state.heap.erase(id);
  return dead.size();
}

State extract_component(const State& state,
                        const std::vector<std::string>& names) {
  State out;
  std::vector<ObjectId> roots;
  for (const auto& name : names) {
    auto id = state.ns.lookup(name);
    if (!id) throw UnboundVariable(name);
    out.ns.bind(name, *id);
    roots.push_back(*id);
  }
  walk(state.heap, std::move(roots),
       [&](const HeapObject& o) { out.heap.insert_with_id(o); });
  return out;
}

void transplant(const State& fragment, State& into) {
  std::unordered_map<ObjectId, ObjectId, ObjectIdHash> remap;
  // Allocate ids first so cyclic edges can be rewritten in a second pass.
  std::vector<ObjectId> order;
  fragment.heap.for_each([&](const HeapObject& o) { order.push_back(o.id); });
  std::sort(order.begin(), order.end());
  for (ObjectId old_id : order) {
    HeapObject copy = fragment.heap.at(old_id);
    copy.items.clear();
    copy.fields.clear();
    remap.emplace(old_id, into.heap.adopt(std::move(copy)));
  }
  for (ObjectId old_id : order) {
    const HeapObject& src = fragment.heap.at(old_id);
    HeapObject& dst = into.heap.at(remap.at(old_id));
    dst.items.reserve(src.items.size());
    for (ObjectId child : src.items) dst.items.push_back(remap.at(child));
    dst.fields.reserve(src.fields.size());
    for (const auto& [key, child] : src.fields) {
      dst.fields.emplace_back(key, remap.at(child));
    }
  }
  for (const auto& [name, id] : fragment.ns.bindings()) {
    into.ns.bind(name, remap.at(id));
  }
}

namespace {

void render_into(const Heap& heap, ObjectId id, std::size_t max_items,
                 std::size_t depth, std::ostringstream& out) {
  const HeapObject& o = heap.at(id);
  switch (o.kind) {
    case Kind::kInt: out << std::get<std::int64_t>(o.value); return;
    case Kind::kFloat: out << std::get<double>(o.value); return;
    case Kind::kBool: out << (std::get<bool>(o.value) ? "true" : "false"); return;
    case Kind::kNone: out << "none"; return;
    case Kind::kStr: {
      const auto& s = std::get<std::string>(o.value);
      out << '"' << (s.size() > 40 ? s.substr(0, 40) + "..." : s) << '"';
      return;
    }
    case Kind::kOpaque: out << "<opaque " << o.opaque.tag << ">"; return;
    default: break;
  }
  if (depth >= 3) {
    out << "<" << kind_name(o.kind) << ">";
    return;
  }
  if (o.kind == Kind::kList) {
    out << '[';
    for (std::size_t i = 0; i < o.items.size(); ++i) {
      if (i) out << ", ";
      if (i == max_items) {
        out << "... (" << o.items.size() << " items)";
        break;
      }
      render_into(heap, o.items[i], max_items, depth + 1, out);
    }
    out << ']';
    return;
  }
  out << (o.kind == Kind::kMap ? "map{" : "record{");
  for (std::size_t i = 0; i < o.fields.size(); ++i) {
    if (i) out << ", ";
    if (i == max_items) {
      out << "...";
      break;
    }
    out << o.fields[i].first << ": ";
    render_into(heap, o.fields[i].second, max_items, depth + 1, out);
  }
  out << '}';
}

}  // namespace

std::string render(const Heap& heap, ObjectId id, std::size_t max_items) {
  std::ostringstream out;
  render_into(heap, id, max_items, 0, out);
  return out.str();
}

}  // namespace chronoshift
