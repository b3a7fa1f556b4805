#include "chronoshift/detector.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "chronoshift/errors.hpp"
#include "chronoshift/hash.hpp"

namespace chronoshift {

CoVarKey::CoVarKey(std::vector<std::string> members) : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

bool CoVarKey::contains(const std::string& name) const {
  return std::binary_search(members_.begin(), members_.end(), name);
}

bool CoVarKey::intersects(const CoVarKey& other) const {
  auto a = members_.begin();
  auto b = other.members_.begin();
  while (a != members_.end() && b != other.members_.end()) {
    if (*a == *b) return true;
    if (*a < *b) {
      ++a;
    } else {
      ++b;
    }
  }
  return false;
}

bool CoVarKey::intersects(const std::set<std::string>& names) const {
  for (const auto& m : members_) {
    if (names.count(m)) return true;
  }
  return false;
}

std::string CoVarKey::str() const {
  std::string out = "{";
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (i) out += ',';
    out += members_[i];
  }
  return out + "}";
}

ObjectIdSet VarGraph::ids() const {
  ObjectIdSet out;
  out.reserve(nodes.size());
  for (const auto& n : nodes) out.push_back(n.id);
  std::sort(out.begin(), out.end());
  return out;
}

bool VarGraph::has_opaque() const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [](const Node& n) { return n.kind == Kind::kOpaque; });
}

VarGraph build_vargraph(const State& state, const std::string& name) {
  auto root = state.ns.lookup(name);
  if (!root) throw UnboundVariable(name);
  VarGraph graph;
  graph.root_name = name;

  // Pre-order DFS; indices assigned on first visit, edges patched afterwards.
  std::unordered_map<ObjectId, std::uint32_t, ObjectIdHash> index;
  std::vector<ObjectId> stack{*root};
  std::vector<ObjectId> order;
  while (!stack.empty()) {
    ObjectId id = stack.back();
    stack.pop_back();
    if (index.count(id)) continue;
    index.emplace(id, static_cast<std::uint32_t>(order.size()));
    order.push_back(id);
    const HeapObject& o = state.heap.at(id);
    for (auto it = o.fields.rbegin(); it != o.fields.rend(); ++it) stack.push_back(it->second);
    for (auto it = o.items.rbegin(); it != o.items.rend(); ++it) stack.push_back(*it);
  }
  graph.nodes.reserve(order.size());
  for (ObjectId id : order) {
    const HeapObject& o = state.heap.at(id);
    VarGraph::Node node;
    node.id = id;
    node.kind = o.kind;
    node.value = o.kind == Kind::kOpaque ? Primitive(o.class_name()) : o.value;
    for (ObjectId child : o.items) node.children.push_back(index.at(child));
    for (const auto& [key, child] : o.fields) {
      node.children.push_back(index.at(child));
      node.labels.push_back(key);
    }
    graph.nodes.push_back(std::move(node));
  }
  return graph;
}

namespace {

void mix_primitive(Fnv1a& h, Kind kind, const Primitive& value) {
  h.add_u8(static_cast<std::uint8_t>(kind));
  switch (kind) {
    case Kind::kInt: h.add_u64(static_cast<std::uint64_t>(std::get<std::int64_t>(value))); break;
    case Kind::kFloat: {
      std::uint64_t bits;
      double d = std::get<double>(value);
      std::memcpy(&bits, &d, sizeof bits);
      h.add_u64(bits);
      break;
    }
    case Kind::kBool: h.add_u8(std::get<bool>(value) ? 1 : 0); break;
    case Kind::kStr: h.add_string(std::get<std::string>(value)); break;
    default: break;
  }
}

// Shared core of both hash_fastpath overloads. `element(i)` yields
// (first-occurrence position, kind, value) of the i-th element.
template <typename Element>
std::uint64_t flat_digest(std::size_t size, Element&& element) {
  Fnv1a h;
  h.add_u64(size);
  for (std::size_t i = 0; i < size; ++i) {
    auto [first, kind, value] = element(i);
    h.add_u64(first);
    mix_primitive(h, kind, *value);
  }
  return h.digest();
}

}  // namespace

std::uint64_t hash_fastpath(const VarGraph& graph) {
  if (graph.nodes.empty() || graph.nodes[0].kind != Kind::kList) {
    throw NotFlat("root of '" + graph.root_name + "' is not a list");
  }
  const auto& root = graph.nodes[0];
  for (std::uint32_t c : root.children) {
    if (c == 0 || !is_primitive(graph.nodes[c].kind)) {
      throw NotFlat("'" + graph.root_name + "' holds non-primitive elements");
    }
  }
  // Position of first occurrence of each node index.
  std::unordered_map<std::uint32_t, std::uint64_t> first;
  return flat_digest(root.children.size(), [&](std::size_t i) {
    std::uint32_t c = root.children[i];
    auto pos = first.emplace(c, i).first->second;
    const auto& n = graph.nodes[c];
    return std::tuple{pos, n.kind, &n.value};
  });
}

std::uint64_t hash_fastpath(const State& state, const std::string& name) {
  auto root = state.ns.lookup(name);
  if (!root) throw UnboundVariable(name);
  const HeapObject& list = state.heap.at(*root);
  if (list.kind != Kind::kList) throw NotFlat("root of '" + name + "' is not a list");
  std::unordered_map<ObjectId, std::uint64_t, ObjectIdHash> first;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    ObjectId c = list.items[i];
    if (c == *root || !is_primitive(state.heap.at(c).kind)) {
      throw NotFlat("'" + name + "' holds non-primitive elements");
    }
  }
  return flat_digest(list.items.size(), [&](std::size_t i) {
    ObjectId c = list.items[i];
    auto pos = first.emplace(c, i).first->second;
    const HeapObject& o = state.heap.at(c);
    return std::tuple{pos, o.kind, &o.value};
  });
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

// Groups names whose id sets intersect.
template <typename IdsOf>
std::vector<std::vector<std::size_t>> components(std::size_t n, IdsOf&& ids_of) {
  UnionFind uf(n);
  std::unordered_map<ObjectId, std::size_t, ObjectIdHash> owner;
  for (std::size_t i = 0; i < n; ++i) {
    for (ObjectId id : ids_of(i)) {
      auto [it, fresh] = owner.emplace(id, i);
      if (!fresh) uf.unite(it->second, i);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

}  // namespace

std::vector<CoVariable> partition(const State& state) {
  std::vector<std::string> names = state.ns.names();
  std::vector<ObjectIdSet> sets;
  sets.reserve(names.size());
  for (const auto& n : names) sets.push_back(reachable(state, n));
  std::vector<CoVariable> out;
  for (const auto& group : components(names.size(), [&](std::size_t i) -> const ObjectIdSet& {
         return sets[i];
       })) {
    CoVariable cv;
    std::vector<std::string> members;
    ObjectIdSet ids;
    for (std::size_t i : group) {
      members.push_back(names[i]);
      ids.insert(ids.end(), sets[i].begin(), sets[i].end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    cv.key = CoVarKey(std::move(members));
    cv.component = std::move(ids);
    out.push_back(std::move(cv));
  }
  std::sort(out.begin(), out.end(),
            [](const CoVariable& a, const CoVariable& b) { return a.key < b.key; });
  return out;
}

std::vector<CoVarKey> candidates(const std::vector<CoVarKey>& prev, const AccessLog& log) {
  std::set<std::string> accessed = log.accessed();
  std::vector<CoVarKey> out;
  for (const auto& cv : prev) {
    if (cv.intersects(accessed)) out.push_back(cv);
  }
  return out;
}

bool Detector::Fingerprint::same_as(const Fingerprint& other) const {
  if (has_opaque || other.has_opaque) return false;
  if (ids != other.ids) return false;
  if (flat_digest && other.flat_digest) return *flat_digest == *other.flat_digest;
  if (graph && other.graph) return *graph == *other.graph;
  return false;
}

Detector::Fingerprint Detector::fingerprint(const State& state,
                                            const std::string& name) const {
  Fingerprint fp;
  if (options_.hash_fastpath) {
    try {
      fp.flat_digest = hash_fastpath(state, name);
      // Digests skip ids; the id set still carries identity.
      fp.ids = reachable(state, name);
      return fp;
    } catch (const NotFlat&) {
    }
  }
  fp.graph = build_vargraph(state, name);
  fp.ids = fp.graph->ids();
  fp.has_opaque = fp.graph->has_opaque();
  return fp;
}

std::vector<CoVarKey> Detector::group(const std::vector<std::string>& names) const {
  std::vector<CoVarKey> out;
  for (const auto& g : components(names.size(), [&](std::size_t i) -> const ObjectIdSet& {
         return cache_.at(names[i]).ids;
       })) {
    std::vector<std::string> members;
    for (std::size_t i : g) members.push_back(names[i]);
    out.emplace_back(std::move(members));
  }
  return out;
}

void Detector::reset(const State& state) {
  cache_.clear();
  for (const auto& name : state.ns.names()) cache_.emplace(name, fingerprint(state, name));
  partition_ = group(state.ns.names());
  std::sort(partition_.begin(), partition_.end());
  last_ = {};
  last_.vargraph_creates = cache_.size();
  last_.covariables_total = partition_.size();
  totals_.vargraph_creates += last_.vargraph_creates;
  totals_.covariables_total = partition_.size();
}

std::optional<CoVarKey> Detector::covariable_of(const std::string& name) const {
  for (const auto& cv : partition_) {
    if (cv.contains(name)) return cv;
  }
  return std::nullopt;
}

bool Detector::serializable(const State& state, const CoVarKey& key) const {
  for (ObjectId id : reachable_from(state, key.members())) {
    const HeapObject& o = state.heap.at(id);
    if (o.kind == Kind::kOpaque || options_.misbehaving_classes.count(o.class_name())) {
      return false;
    }
  }
  return true;
}

StateDelta Detector::detect(const State& after, const AccessLog& log) {
  last_ = {};
  StateDelta delta;

  AccessLog effective = log;
  if (options_.mutant_ignore_writes) {
    for (const auto& w : log.written_names) effective.read_names.erase(w);
    effective.written_names.clear();
  }
  const std::set<std::string> accessed = effective.accessed();

  std::vector<CoVarKey> cands =
      options_.check_all ? partition_ : candidates(partition_, effective);
  for (const auto& cv : partition_) {
    if (cv.intersects(log.accessed())) delta.accessed_covariables.push_back(cv);
  }
  last_.candidates_checked = cands.size();

  // Names whose fingerprints must be refreshed: candidate members plus any
  // newly written names.
  std::set<std::string> touched;
  for (const auto& cv : cands) touched.insert(cv.members().begin(), cv.members().end());
  // Newly bound names are always fingerprinted, whatever the access set says.
  for (const auto& w : log.written_names) {
    if (!cache_.count(w)) touched.insert(w);
  }

  std::map<std::string, Fingerprint> before;
  std::vector<std::string> live;
  for (const auto& name : touched) {
    auto old = cache_.find(name);
    bool tracked = old != cache_.end();
    if (tracked) {
      before.emplace(name, std::move(old->second));
      cache_.erase(old);
    }
    if (!after.ns.contains(name)) {
      if (tracked) delta.deleted_names.insert(name);
      continue;
    }
    cache_.emplace(name, fingerprint(after, name));
    live.push_back(name);
    if (tracked) {
      ++last_.vargraph_rebuilds;
    } else {
      ++last_.vargraph_creates;
    }
  }

  std::set<CoVarKey> previous(cands.begin(), cands.end());
  std::vector<CoVarKey> regrouped = group(live);
  for (const auto& key : regrouped) {
    bool changed = !previous.count(key);
    if (!changed) {
      for (const auto& m : key.members()) {
        const Fingerprint& now = cache_.at(m);
        auto was = before.find(m);
        if (was == before.end() || !now.same_as(was->second)) {
          changed = true;
          break;
        }
      }
    }
    if (!changed) continue;
    UpdatedCoVariable u;
    u.covar.key = key;
    u.covar.component = reachable_from(after, key.members());
    u.serializable = serializable(after, key);
    delta.updated.push_back(std::move(u));
  }

  // Untouched Co-variables keep their membership.
  std::vector<CoVarKey> next;
  for (const auto& cv : partition_) {
    if (!previous.count(cv)) next.push_back(cv);
  }
  next.insert(next.end(), regrouped.begin(), regrouped.end());
  std::sort(next.begin(), next.end());
  partition_ = std::move(next);

  last_.covariables_total = partition_.size();
  totals_.vargraph_rebuilds += last_.vargraph_rebuilds;
  totals_.vargraph_creates += last_.vargraph_creates;
  totals_.candidates_checked += last_.candidates_checked;
  totals_.covariables_total = partition_.size();
  return delta;
}

void Detector::apply_replacement(const State& state, const std::vector<CoVarKey>& removed,
                                 const std::vector<CoVarKey>& added) {
  std::set<CoVarKey> gone(removed.begin(), removed.end());
  std::vector<CoVarKey> next;
  for (const auto& cv : partition_) {
    if (gone.count(cv)) {
      for (const auto& m : cv.members()) cache_.erase(m);
    } else {
      next.push_back(cv);
    }
  }
  last_ = {};
  for (const auto& cv : added) {
    for (const auto& m : cv.members()) {
      cache_.insert_or_assign(m, fingerprint(state, m));
      ++last_.vargraph_rebuilds;
    }
    next.push_back(cv);
  }
  std::sort(next.begin(), next.end());
  partition_ = std::move(next);
  last_.covariables_total = partition_.size();
  totals_.vargraph_rebuilds += last_.vargraph_rebuilds;
  totals_.covariables_total = partition_.size();
}

}  // namespace chronoshift
