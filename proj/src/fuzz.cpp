#include "chronoshift/fuzz.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "chronoshift/errors.hpp"
#include "chronoshift/interpreter.hpp"
#include "chronoshift/script.hpp"
#include "chronoshift/session.hpp"

namespace chronoshift {

std::string_view invariant_name(Invariant invariant) {
  switch (invariant) {
    case Invariant::kExactness: return "exactness";
    case Invariant::kNonIntrusive: return "non-intrusive";
    case Invariant::kNoFalseNegatives: return "no-false-negatives";
    case Invariant::kDeletedNames: return "deleted-names";
    case Invariant::kPruning: return "pruning-soundness";
    case Invariant::kPartition: return "partition";
    case Invariant::kDiffSoundness: return "diff-soundness";
    case Invariant::kSnapshot: return "snapshot-definition";
    case Invariant::kAtomicity: return "atomicity";
    case Invariant::kUnexpectedFailure: return "unexpected-restore-failure";
  }
  return "unknown";
}

FuzzCounters& FuzzCounters::operator+=(const FuzzCounters& o) {
  traces += o.traces;
  cells += o.cells;
  cells_failed += o.cells_failed;
  checkouts += o.checkouts;
  restore_failures += o.restore_failures;
  cells_replayed += o.cells_replayed;
  poisoned += o.poisoned;
  partition_checks += o.partition_checks;
  covariables_changed += o.covariables_changed;
  covariables_reported += o.covariables_reported;
  false_positives += o.false_positives;
  pruned_checked += o.pruned_checked;
  diff_pairs += o.diff_pairs;
  identical_checked += o.identical_checked;
  diverged_checked += o.diverged_checked;
  false_diverged += o.false_diverged;
  return *this;
}

namespace oracle {

namespace {

std::set<ObjectId> closure(const State& state, ObjectId root) {
  std::set<ObjectId> seen{root};
  std::vector<ObjectId> frontier{root};
  while (!frontier.empty()) {
    std::vector<ObjectId> next;
    for (ObjectId id : frontier) {
      const HeapObject& o = state.heap.at(id);
      for (ObjectId c : o.items) {
        if (seen.insert(c).second) next.push_back(c);
      }
      for (const auto& [k, c] : o.fields) {
        if (seen.insert(c).second) next.push_back(c);
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

bool same_object(const HeapObject& a, const HeapObject& b) {
  return a.kind == b.kind && a.value == b.value && a.items == b.items && a.fields == b.fields &&
         a.opaque == b.opaque;
}

}  // namespace

std::vector<std::vector<std::string>> components(const State& state) {
  std::vector<std::string> names;
  std::vector<std::set<ObjectId>> sets;
  for (const auto& [name, id] : state.ns.bindings()) {
    names.push_back(name);
    sets.push_back(closure(state, id));
  }
  const std::size_t n = names.size();
  std::vector<int> group(n, -1);
  int groups = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (group[i] >= 0) continue;
    group[i] = groups;
    // Flood fill over the "shares an object" relation.
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < n; ++b) {
        if (group[b] >= 0) continue;
        bool shares = std::any_of(sets[a].begin(), sets[a].end(),
                                  [&](ObjectId id) { return sets[b].count(id) != 0; });
        if (shares) {
          group[b] = groups;
          stack.push_back(b);
        }
      }
    }
    ++groups;
  }
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(groups));
  for (std::size_t i = 0; i < n; ++i) out[static_cast<std::size_t>(group[i])].push_back(names[i]);
  std::sort(out.begin(), out.end());
  return out;
}

bool same_objects(const State& a, const State& b, const std::vector<std::string>& names) {
  std::set<ObjectId> ids;
  for (const auto& name : names) {
    auto ia = a.ns.lookup(name);
    auto ib = b.ns.lookup(name);
    if (!ia || !ib || *ia != *ib) return false;
    auto c = closure(a, *ia);
    ids.insert(c.begin(), c.end());
  }
  for (ObjectId id : ids) {
    if (!b.heap.contains(id) || !same_object(a.heap.at(id), b.heap.at(id))) return false;
  }
  // The closure in b must not reach anything new either.
  for (const auto& name : names) {
    for (ObjectId id : closure(b, *b.ns.lookup(name))) {
      if (!ids.count(id)) return false;
    }
  }
  return true;
}

}  // namespace oracle

namespace {

// ---------------------------------------------------------------- generator

Config engine_config(const FuzzOptions& options) {
  Config c;
  c.snapshot_mode = options.snapshot_mode;
  c.hash_fastpath = options.hash_fastpath;
  c.fsync = false;
  return c;
}

// Damages one stored blob of the cell at `t`: a poison mark, or truncated
// bytes when the backend allows it. Returns false if the cell stored none.
bool apply_poison(Engine& engine, Timestamp t, const TraceAction& a) {
  std::vector<BlobKey> keys;
  for (const auto& v : engine.graph().node(t).delta) {
    if (v.blob) keys.push_back(*v.blob);
  }
  if (keys.empty()) return false;
  const BlobKey& key = keys[a.slot % keys.size()];
  auto* memory = dynamic_cast<MemoryBackend*>(&engine.store().backend());
  if (a.truncate && memory) {
    if (auto bytes = memory->read(key.digest_hex())) {
      bytes->resize(bytes->size() / 2);
      memory->overwrite(key.digest_hex(), std::move(*bytes));
      return true;
    }
  }
  engine.store().poison(key);
  return true;
}

// Produces random traces. A shadow engine runs the trace as it is generated,
// so every cell starts from exact type knowledge of the live names; within a
// cell the guesses are tracked approximately. A fraction of statements are
// generated blind to keep error paths covered.
class Generator {
 public:
  Generator(std::uint64_t seed, const FuzzOptions& options)
      : rng_(seed), options_(options), shadow_(engine_config(options)) {
    std::size_t hi = std::max<std::size_t>(3, options.max_names);
    names_ = static_cast<std::size_t>(pick(3, static_cast<int>(hi)));
    labels_[0] = kRootTimestamp;
  }

  Trace trace() {
    Trace t;
    std::size_t lo = std::max<std::size_t>(1, options_.min_cells);
    std::size_t hi = std::max(lo, options_.max_cells);
    std::size_t cells = static_cast<std::size_t>(pick(static_cast<int>(lo), static_cast<int>(hi)));
    std::size_t label = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      if (label > 0 && chance(options_.checkout_rate)) {
        TraceAction a;
        a.kind = TraceAction::Kind::kCheckout;
        a.label = static_cast<std::size_t>(pick(0, static_cast<int>(label)));
        try {
          shadow_.checkout(labels_.at(a.label));
        } catch (const RestoreFailed&) {
        }
        t.actions.push_back(a);
      }
      if (label > 0 && chance(options_.poison_rate)) {
        TraceAction a;
        a.kind = TraceAction::Kind::kPoison;
        a.label = static_cast<std::size_t>(pick(1, static_cast<int>(label)));
        a.slot = static_cast<std::size_t>(pick(0, 7));
        a.truncate = chance(0.5);
        apply_poison(shadow_, labels_.at(a.label), a);
        t.actions.push_back(a);
      }
      TraceAction a;
      a.kind = TraceAction::Kind::kCell;
      a.label = ++label;
      observe();
      a.source = cell();
      labels_[a.label] = shadow_.run_cell(a.source).t;
      t.actions.push_back(a);
    }
    if (label > 0 && chance(0.5)) {
      TraceAction a;
      a.kind = TraceAction::Kind::kCheckout;
      a.label = static_cast<std::size_t>(pick(0, static_cast<int>(label)));
      t.actions.push_back(a);
    }
    return t;
  }

 private:
  enum class Ty { kInt, kFloat, kStr, kBool, kNone, kList, kRecord, kMap, kOpaque, kUnknown };
  struct Guess {
    Ty ty = Ty::kUnknown;
    int len = 0;                // lists: known minimum length
    std::set<std::string> keys;  // records/maps: keys believed present
  };
  using Typed = std::pair<std::string, Guess>;

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }

  // Resets the guesses to the shadow session's actual bindings.
  void observe() {
    guesses_.clear();
    const State& state = shadow_.state();
    for (const auto& [name, id] : state.ns.bindings()) {
      const HeapObject& o = state.heap.at(id);
      Guess g;
      switch (o.kind) {
        case Kind::kInt: g.ty = Ty::kInt; break;
        case Kind::kFloat: g.ty = Ty::kFloat; break;
        case Kind::kStr: g.ty = Ty::kStr; break;
        case Kind::kBool: g.ty = Ty::kBool; break;
        case Kind::kNone: g.ty = Ty::kNone; break;
        case Kind::kList: g.ty = Ty::kList; break;
        case Kind::kRecord: g.ty = Ty::kRecord; break;
        case Kind::kMap: g.ty = Ty::kMap; break;
        case Kind::kOpaque: g.ty = Ty::kOpaque; break;
      }
      g.len = static_cast<int>(o.items.size());
      for (const auto& [key, child] : o.fields) g.keys.insert(key);
      guesses_.emplace(name, std::move(g));
    }
  }

  std::string any_name() { return "v" + std::to_string(pick(0, static_cast<int>(names_) - 1)); }
  std::string field() {
    static const char* kFields[] = {"f", "g", "h"};
    return kFields[pick(0, 2)];
  }
  static Guess of(Ty ty, int len = 0) {
    Guess g;
    g.ty = ty;
    g.len = len;
    return g;
  }

  // A bound name whose guessed type satisfies `want`, if any.
  template <typename Pred>
  std::optional<std::string> bound(Pred&& want) {
    std::vector<std::string> fits;
    for (const auto& [name, g] : guesses_) {
      if (want(g)) fits.push_back(name);
    }
    if (fits.empty()) return std::nullopt;
    return fits[static_cast<std::size_t>(pick(0, static_cast<int>(fits.size()) - 1))];
  }
  std::string used() {
    if (guesses_.empty() || chance(0.05)) return any_name();
    return *bound([](const Guess&) { return true; });
  }
  std::string target(const Guess& g) {
    std::string n = any_name();
    guesses_[n] = g;
    return n;
  }

  Typed literal() {
    switch (pick(0, 4)) {
      case 0: return {std::to_string(pick(-3, 20)), of(Ty::kInt)};
      case 1: return {std::to_string(pick(0, 9)) + ".5", of(Ty::kFloat)};
      case 2: return {"\"s" + std::to_string(pick(0, 5)) + "\"", of(Ty::kStr)};
      case 3: return {chance(0.5) ? "true" : "false", of(Ty::kBool)};
      default: return {"none", of(Ty::kNone)};
    }
  }

  Typed expr(int depth) {
    switch (pick(0, depth < 2 ? 11 : 7)) {
      case 0:
      case 1: return literal();
      case 2:
      case 3: {
        std::string n = used();
        auto it = guesses_.find(n);
        return {n, it == guesses_.end() ? Guess{} : it->second};
      }
      case 4:
        if (auto r = bound([](const Guess& g) {
              return (g.ty == Ty::kRecord || g.ty == Ty::kMap) && !g.keys.empty();
            })) {
          const auto& keys = guesses_[*r].keys;
          auto k = keys.begin();
          std::advance(k, pick(0, static_cast<int>(keys.size()) - 1));
          return {*r + "." + *k, Guess{}};
        }
        return literal();
      case 5:
        if (auto l = bound([](const Guess& g) { return g.ty == Ty::kList && g.len > 0; })) {
          return {*l + "[" + std::to_string(pick(0, guesses_[*l].len - 1)) + "]", Guess{}};
        }
        return literal();
      case 6:
        if (auto n = bound([](const Guess& g) { return g.ty == Ty::kInt; })) {
          return {*n + " + " + std::to_string(pick(1, 3)), of(Ty::kInt)};
        }
        if (auto c = bound([](const Guess& g) {
              return g.ty == Ty::kList || g.ty == Ty::kStr || g.ty == Ty::kMap;
            })) {
          return {"len(" + *c + ")", of(Ty::kInt)};
        }
        return literal();
      case 7: return {"range_list(" + std::to_string(pick(0, 3)) + ")", of(Ty::kList)};
      default: return container(depth + 1);
    }
  }

  Typed container(int depth) {
    switch (pick(0, 2)) {
      case 0: {
        std::string s = "list(";
        int n = pick(0, 3);
        for (int i = 0; i < n; ++i) s += (i ? ", " : "") + expr(depth).first;
        return {s + ")", of(Ty::kList, n)};
      }
      case 1: {
        static const char* kFields[] = {"f", "g", "h"};
        Guess g = of(Ty::kRecord);
        std::string s = "record{";
        int n = pick(1, 3);
        for (int i = 0; i < n; ++i) {
          s += std::string(i ? ", " : "") + kFields[i] + ": " + expr(depth).first;
          g.keys.insert(kFields[i]);
        }
        return {s + "}", g};
      }
      default: {
        Guess g = of(Ty::kMap);
        std::string s = "map{";
        int n = pick(0, 2);
        for (int i = 0; i < n; ++i) {
          std::string key = "k" + std::to_string(i);
          s += std::string(i ? ", " : "") + "\"" + key + "\": " + expr(depth).first;
          g.keys.insert(key);
        }
        return {s + "}", g};
      }
    }
  }

  std::string assign(Typed value) {
    std::string t = target(value.second);
    return t + " = " + value.first;
  }

  // Statements chosen without regard to types; often fail at runtime.
  std::string blind() {
    switch (pick(0, 5)) {
      case 0: return any_name() + "." + field() + " = " + expr(1).first;
      case 1: return any_name() + "[" + std::to_string(pick(0, 2)) + "] = " + expr(1).first;
      case 2: return "append(" + any_name() + ", " + expr(1).first + ")";
      case 3: return "remove_key(" + any_name() + ", \"" + field() + "\")";
      case 4: return "del " + any_name();
      default: return any_name() + " = " + any_name() + "." + field();
    }
  }

  std::string statement(int depth) {
    if (options_.nondet_rate > 0 && chance(options_.nondet_rate)) {
      return chance(0.5) ? target(of(Ty::kOpaque)) + " = opaque_nondet(\"gen\")"
                         : target(of(Ty::kFloat)) + " = rand()";
    }
    if (chance(0.04)) return blind();
    switch (pick(0, depth == 0 ? 15 : 12)) {
      case 0:
      case 1: return assign(expr(0));
      case 2:
      case 3: return assign(container(0));
      case 4: {
        std::string src = used();
        auto it = guesses_.find(src);
        Guess g = it == guesses_.end() ? Guess{} : it->second;
        return target(g) + " = " + src;
      }
      case 5:
      case 6:
        if (auto r = bound([](const Guess& g) { return g.ty == Ty::kRecord || g.ty == Ty::kMap; })) {
          std::string key = guesses_[*r].ty == Ty::kRecord ? field() : "k" + std::to_string(pick(0, 2));
          guesses_[*r].keys.insert(key);
          return *r + "." + key + " = " + expr(1).first;
        }
        return assign(container(0));
      case 7:
        if (auto l = bound([](const Guess& g) { return g.ty == Ty::kList && g.len > 0; })) {
          return *l + "[" + std::to_string(pick(0, guesses_[*l].len - 1)) + "] = " + expr(1).first;
        }
        if (auto m = bound([](const Guess& g) { return g.ty == Ty::kMap; })) {
          std::string key = "k" + std::to_string(pick(0, 2));
          guesses_[*m].keys.insert(key);
          return *m + "[\"" + key + "\"] = " + expr(1).first;
        }
        return assign(container(0));
      case 8:
        if (auto l = bound([](const Guess& g) { return g.ty == Ty::kList; })) {
          ++guesses_[*l].len;
          return "append(" + *l + ", " + expr(1).first + ")";
        }
        return assign(container(0));
      case 9:
        if (auto r = bound([](const Guess& g) {
              return (g.ty == Ty::kRecord || g.ty == Ty::kMap) && !g.keys.empty();
            })) {
          auto& keys = guesses_[*r].keys;
          auto k = keys.begin();
          std::advance(k, pick(0, static_cast<int>(keys.size()) - 1));
          std::string key = *k;
          keys.erase(k);
          return "remove_key(" + *r + ", \"" + key + "\")";
        }
        return assign(literal());
      case 10: {
        if (guesses_.empty()) return assign(literal());
        std::string n = used();
        guesses_.erase(n);
        return "del " + n;
      }
      case 11: return expr(1).first;
      case 12: return target(of(Ty::kOpaque)) + " = opaque(\"gen\")";
      case 13:
      case 14: {
        std::string var = target(of(Ty::kInt));
        return "for " + var + " in 0.." + std::to_string(pick(0, 2)) + " { " + statement(1) +
               "; " + statement(1) + " }";
      }
      default: {
        std::string cond = used() + " == " + expr(1).first;
        return "if " + cond + " { " + statement(1) + " } else { " + statement(1) + " }";
      }
    }
  }

  std::string cell() {
    int n = pick(1, 4);
    std::string s;
    for (int i = 0; i < n; ++i) s += (i ? "\n" : "") + statement(0);
    return s;
  }

  std::mt19937_64 rng_;
  const FuzzOptions& options_;
  std::size_t names_ = 3;
  std::map<std::string, Guess> guesses_;
  Engine shadow_;
  std::map<std::size_t, Timestamp> labels_;
};

// ---------------------------------------------------------------- checker

std::set<CoVarKey> keys_of(const std::vector<std::vector<std::string>>& components) {
  std::set<CoVarKey> out;
  for (const auto& c : components) out.emplace(c);
  return out;
}

class TraceChecker {
 public:
  TraceChecker(const FuzzOptions& options, FuzzCounters& counters)
      : options_(options), counters_(counters), engine_(engine_config(options)) {
    engine_.detector().options().mutant_ignore_writes = options.mutant_ignore_writes;
    replays_.emplace(kRootTimestamp, State{});
  }

  std::optional<FuzzViolation> run(const Trace& trace) {
    ++counters_.traces;
    labels_[0] = kRootTimestamp;
    for (const auto& a : trace.actions) {
      std::optional<FuzzViolation> v;
      switch (a.kind) {
        case TraceAction::Kind::kCell: v = cell(a); break;
        case TraceAction::Kind::kCheckout: v = checkout(a); break;
        case TraceAction::Kind::kPoison: poison(a); break;
      }
      if (v) return v;
    }
    if (auto v = final_checks(); v) return v;
    return std::nullopt;
  }

 private:
  static FuzzViolation fail(Invariant invariant, std::string detail) {
    FuzzViolation v;
    v.invariant = invariant;
    v.detail = std::move(detail);
    return v;
  }

  // From-scratch replay of the root path of `t`, cached per node.
  const State& replay(Timestamp t) {
    if (auto it = replays_.find(t); it != replays_.end()) return it->second;
    const CheckpointNode& node = engine_.graph().node(t);
    State state = replay(node.parent);
    try {
      CellProgram program = parse(node.code);
      Rng rng(0);
      execute(program, state, rng);
    } catch (const SyntaxError&) {
    }
    collect_garbage(state);
    return replays_.emplace(t, std::move(state)).first->second;
  }

  bool tainted(Timestamp t) const {
    for (Timestamp s : engine_.graph().path_from_root(t)) {
      if (engine_.graph().node(s).nondeterministic) return true;
    }
    return false;
  }

  bool any_nondeterministic() const {
    for (Timestamp s = 0; s < engine_.graph().size(); ++s) {
      if (engine_.graph().node(s).nondeterministic) return true;
    }
    return false;
  }

  std::optional<FuzzViolation> check_partition(
      const std::string& where, const std::vector<std::vector<std::string>>& components) {
    ++counters_.partition_checks;
    auto expected = keys_of(components);
    const auto& actual = engine_.detector().current_partition();
    std::set<CoVarKey> got(actual.begin(), actual.end());
    if (got != expected || got.size() != actual.size()) {
      std::string detail = where + ": detector partition differs from connected components; got";
      for (const auto& k : got) detail += " " + k.str();
      detail += ", expected";
      for (const auto& k : expected) detail += " " + k.str();
      return fail(Invariant::kPartition, detail);
    }
    return std::nullopt;
  }

  std::optional<FuzzViolation> cell(const TraceAction& a) {
    const State pre = engine_.state();
    const auto pre_components = oracle::components(pre);
    CellResult r = engine_.run_cell(a.source);
    labels_[a.label] = r.t;
    ++counters_.cells;
    if (r.error) ++counters_.cells_failed;
    const State& post = engine_.state();
    const std::string where = "cell @" + std::to_string(a.label) + " (t" + std::to_string(r.t) + ")";

    const auto post_components = oracle::components(post);
    const std::set<CoVarKey> post_keys = keys_of(post_components);

    std::map<CoVarKey, std::vector<std::string>> pre_by_key;
    for (const auto& c : pre_components) pre_by_key.emplace(CoVarKey(c), c);
    std::set<CoVarKey> reported;
    for (const auto& u : r.delta.updated) reported.insert(u.covar.key);
    counters_.covariables_reported += reported.size();

    std::set<CoVarKey> changed;
    for (const auto& c : post_components) {
      CoVarKey key(c);
      bool unchanged = pre_by_key.count(key) && oracle::same_objects(pre, post, c);
      if (unchanged) continue;
      changed.insert(key);
      if (!reported.count(key)) {
        return fail(Invariant::kNoFalseNegatives,
                    where + ": " + key.str() + " changed but is missing from the delta");
      }
    }
    counters_.covariables_changed += changed.size();
    for (const auto& key : reported) {
      if (!changed.count(key)) ++counters_.false_positives;
    }

    for (const auto& [name, id] : pre.ns.bindings()) {
      if (!post.ns.contains(name) && !r.delta.deleted_names.count(name)) {
        return fail(Invariant::kDeletedNames, where + ": '" + name + "' unbound but not reported");
      }
    }

    const std::set<std::string> accessed = r.log.accessed();
    for (const auto& c : pre_components) {
      CoVarKey key(c);
      if (key.intersects(accessed)) continue;
      ++counters_.pruned_checked;
      if (!post_keys.count(key) || !oracle::same_objects(pre, post, c)) {
        return fail(Invariant::kPruning,
                    where + ": " + key.str() + " was not accessed yet changed");
      }
    }
    return check_partition(where, post_components);
  }

  std::optional<FuzzViolation> check_diff(Timestamp a, Timestamp b, const std::string& where) {
    if (tainted(a) || tainted(b)) return std::nullopt;
    ++counters_.diff_pairs;
    StateDiff d = engine_.graph().diff(a, b);
    const State& sa = replay(a);
    const State& sb = replay(b);
    for (const auto& key : d.identical) {
      ++counters_.identical_checked;
      State ca = extract_component(sa, key.members());
      State cb = extract_component(sb, key.members());
      if (!deep_equal(ca, cb)) {
        return fail(Invariant::kDiffSoundness,
                    where + ": " + key.str() + " marked identical between t" + std::to_string(a) +
                        " and t" + std::to_string(b) + " but differs");
      }
    }
    const SessionState ssa = engine_.graph().session_state(a);
    const SessionState ssb = engine_.graph().session_state(b);
    auto has = [](const SessionState& s, const CoVarKey& k) {
      return std::any_of(s.begin(), s.end(), [&](const VersionRef& v) { return v.covar == k; });
    };
    for (const auto& key : d.diverged) {
      if (!has(ssa, key) || !has(ssb, key)) continue;
      ++counters_.diverged_checked;
      if (deep_equal(extract_component(sa, key.members()), extract_component(sb, key.members()))) {
        ++counters_.false_diverged;
      }
    }
    return std::nullopt;
  }

  std::optional<FuzzViolation> checkout(const TraceAction& a) {
    auto it = labels_.find(a.label);
    if (it == labels_.end()) return std::nullopt;
    const Timestamp target = it->second;
    const Timestamp current = engine_.head();
    const std::string where = "checkout @" + std::to_string(a.label) + " (t" +
                              std::to_string(current) + " -> t" + std::to_string(target) + ")";
    if (auto v = check_diff(current, target, where); v) return v;

    const State pre = engine_.state();
    const StateDiff d = engine_.graph().diff(current, target);
    ++counters_.checkouts;
    try {
      CheckoutReport report = engine_.checkout(target);
      counters_.cells_replayed += report.cells_replayed;
    } catch (const RestoreFailed& e) {
      ++counters_.restore_failures;
      std::vector<std::string> all = pre.ns.names();
      if (engine_.head() != current || engine_.state().ns.names() != all ||
          !oracle::same_objects(pre, engine_.state(), all)) {
        return fail(Invariant::kAtomicity, where + ": failed checkout modified the session");
      }
      if (!any_nondeterministic()) {
        return fail(Invariant::kUnexpectedFailure, where + ": " + e.what());
      }
      return std::nullopt;
    }
    for (const auto& key : d.identical) {
      if (!oracle::same_objects(pre, engine_.state(), key.members())) {
        return fail(Invariant::kNonIntrusive,
                    where + ": identical " + key.str() + " was replaced or modified");
      }
    }
    if (!tainted(target) && !deep_equal(engine_.state(), replay(target))) {
      return fail(Invariant::kExactness, where + ": restored state differs from replay");
    }
    return check_partition(where, oracle::components(engine_.state()));
  }

  void poison(const TraceAction& a) {
    auto it = labels_.find(a.label);
    if (it != labels_.end() && apply_poison(engine_, it->second, a)) ++counters_.poisoned;
  }

  std::optional<FuzzViolation> final_checks() {
    const Timestamp head = engine_.head();
    if (!tainted(head) && !deep_equal(engine_.state(), replay(head))) {
      return fail(Invariant::kExactness, "end of trace: live state differs from replay of t" +
                                             std::to_string(head));
    }
    // Stored session states against their definition: a version survives
    // until a later ancestor outputs an overlapping Co-variable or deletes
    // one of its names.
    const CheckpointGraph& g = engine_.graph();
    for (Timestamp t = 0; t < g.size(); ++t) {
      std::vector<Timestamp> path = g.path_from_root(t);
      SessionState expected;
      for (std::size_t i = 0; i < path.size(); ++i) {
        for (const auto& v : g.node(path[i]).delta) {
          bool survives = true;
          for (std::size_t j = i + 1; j < path.size() && survives; ++j) {
            const CheckpointNode& later = g.node(path[j]);
            if (v.covar.intersects(later.deleted_names)) survives = false;
            for (const auto& w : later.delta) survives = survives && !v.covar.intersects(w.covar);
          }
          if (survives) expected.push_back({v.covar, v.t});
        }
      }
      std::sort(expected.begin(), expected.end());
      if (g.session_state(t) != expected) {
        return fail(Invariant::kSnapshot, "session state of t" + std::to_string(t) +
                                              " does not match its definition");
      }
    }
    std::mt19937_64 rng(g.size() * 7919 + counters_.cells);
    for (std::size_t i = 0; i < options_.diff_pairs_per_trace && g.size() > 1; ++i) {
      auto a = static_cast<Timestamp>(rng() % g.size());
      auto b = static_cast<Timestamp>(rng() % g.size());
      if (auto v = check_diff(a, b, "pair"); v) return v;
    }
    return std::nullopt;
  }

  const FuzzOptions& options_;
  FuzzCounters& counters_;
  Engine engine_;
  std::map<std::size_t, Timestamp> labels_;
  std::map<Timestamp, State> replays_;
};

std::uint64_t trace_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

Trace generate_trace(std::uint64_t seed, const FuzzOptions& options) {
  return Generator(seed, options).trace();
}

std::optional<FuzzViolation> check_trace(const Trace& trace, const FuzzOptions& options,
                                         FuzzCounters& counters) {
  TraceChecker checker(options, counters);
  auto v = checker.run(trace);
  if (v) v->trace = trace;
  return v;
}

Trace minimize_trace(const Trace& trace, Invariant invariant, const FuzzOptions& options) {
  auto still_fails = [&](const Trace& t) {
    FuzzCounters scratch;
    auto v = check_trace(t, options, scratch);
    return v && v->invariant == invariant;
  };
  Trace best = trace;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = best.actions.size(); i-- > 0;) {
      Trace candidate = best;
      candidate.actions.erase(candidate.actions.begin() + static_cast<std::ptrdiff_t>(i));
      if (still_fails(candidate)) {
        best = std::move(candidate);
        progress = true;
      }
    }
    for (std::size_t i = 0; i < best.actions.size(); ++i) {
      if (best.actions[i].kind != TraceAction::Kind::kCell) continue;
      std::vector<std::string> lines = split_lines(best.actions[i].source);
      for (std::size_t l = lines.size(); l-- > 0 && lines.size() > 1;) {
        std::vector<std::string> fewer = lines;
        fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(l));
        std::string source;
        for (const auto& line : fewer) source += (source.empty() ? "" : "\n") + line;
        Trace candidate = best;
        candidate.actions[i].source = source;
        if (still_fails(candidate)) {
          best = std::move(candidate);
          lines = std::move(fewer);
          progress = true;
        }
      }
    }
  }
  return best;
}

FuzzReport run_fuzz(const FuzzOptions& options) {
  FuzzReport report;
  for (std::size_t i = 0; i < options.traces; ++i) {
    const std::uint64_t seed = trace_seed(options.seed, i);
    Trace trace = generate_trace(seed, options);
    auto v = check_trace(trace, options, report.counters);
    if (v) {
      v->trace_seed = seed;
      if (options.minimize) {
        v->trace = minimize_trace(trace, v->invariant, options);
        FuzzCounters scratch;
        if (auto again = check_trace(v->trace, options, scratch)) v->detail = again->detail;
      }
      report.violation = std::move(v);
      break;
    }
  }
  return report;
}

std::string FuzzReport::summary() const {
  std::ostringstream out;
  const auto& c = counters;
  auto rate = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  out << "traces=" << c.traces << " cells=" << c.cells << " cells_failed=" << c.cells_failed
      << " checkouts=" << c.checkouts
      << " restore_failures=" << c.restore_failures << " cells_replayed=" << c.cells_replayed
      << " poisoned=" << c.poisoned << '\n';
  out << "changed=" << c.covariables_changed << " reported=" << c.covariables_reported
      << " false_positive_rate=" << rate(c.false_positives, c.covariables_reported)
      << " pruned_checked=" << c.pruned_checked << " partition_checks=" << c.partition_checks
      << '\n';
  out << "diff_pairs=" << c.diff_pairs << " identical_checked=" << c.identical_checked
      << " false_diverged_rate=" << rate(c.false_diverged, c.diverged_checked) << '\n';
  if (violation) {
    out << "VIOLATION " << invariant_name(violation->invariant) << " (trace seed "
        << violation->trace_seed << "): " << violation->detail << '\n';
  } else {
    out << "PASS\n";
  }
  return out.str();
}

std::string format_trace(const Trace& trace) {
  std::ostringstream out;
  for (const auto& a : trace.actions) {
    switch (a.kind) {
      case TraceAction::Kind::kCell: out << "# %% @" << a.label << '\n' << a.source << '\n'; break;
      case TraceAction::Kind::kCheckout: out << "#! checkout @" << a.label << '\n'; break;
      case TraceAction::Kind::kPoison:
        out << "#! poison @" << a.label << ' ' << a.slot << (a.truncate ? " truncate" : "")
            << '\n';
        break;
    }
  }
  return out.str();
}

Trace parse_trace(const std::string& text) {
  Trace trace;
  TraceAction* open_cell = nullptr;
  std::size_t lineno = 0;
  auto label_of = [&](const std::string& token) -> std::size_t {
    if (token.size() < 2 || token[0] != '@') {
      throw SpecError("repro line " + std::to_string(lineno) + ": expected @<label>");
    }
    try {
      return std::stoul(token.substr(1));
    } catch (const std::exception&) {
      throw SpecError("repro line " + std::to_string(lineno) + ": bad label '" + token + "'");
    }
  };
  for (const auto& line : split_lines(text)) {
    ++lineno;
    std::istringstream words(line);
    std::string first;
    words >> first;
    if (first == "#" && line.rfind("# %%", 0) == 0) {
      std::string marker, token;
      words >> marker >> token;
      TraceAction a;
      a.kind = TraceAction::Kind::kCell;
      a.label = label_of(token);
      trace.actions.push_back(a);
      open_cell = &trace.actions.back();
    } else if (first == "#!") {
      std::string verb, token;
      words >> verb >> token;
      TraceAction a;
      a.label = label_of(token);
      if (verb == "checkout") {
        a.kind = TraceAction::Kind::kCheckout;
      } else if (verb == "poison") {
        a.kind = TraceAction::Kind::kPoison;
        std::string flag;
        if (!(words >> a.slot)) {
          throw SpecError("repro line " + std::to_string(lineno) + ": poison needs a slot number");
        }
        words >> flag;
        if (!flag.empty() && flag != "truncate") {
          throw SpecError("repro line " + std::to_string(lineno) + ": unknown poison flag " + flag);
        }
        a.truncate = flag == "truncate";
      } else {
        throw SpecError("repro line " + std::to_string(lineno) + ": unknown directive " + verb);
      }
      trace.actions.push_back(a);
      open_cell = nullptr;
    } else if (open_cell) {
      open_cell->source += (open_cell->source.empty() ? "" : "\n") + line;
    } else if (!line.empty()) {
      throw SpecError("repro line " + std::to_string(lineno) + ": text outside a cell");
    }
  }
  return trace;
}

}  // namespace chronoshift
