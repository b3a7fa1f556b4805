#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronoshift/heap.hpp"
#include "chronoshift/interpreter.hpp"

namespace chronoshift {

// Identity of a Co-variable across time: its sorted member names. Splits and
// merges therefore yield new identities.
class CoVarKey {
 public:
  CoVarKey() = default;
  explicit CoVarKey(std::vector<std::string> members);
  CoVarKey(std::initializer_list<std::string> members)
      : CoVarKey(std::vector<std::string>(members)) {}

  const std::vector<std::string>& members() const { return members_; }
  bool contains(const std::string& name) const;
  bool intersects(const CoVarKey& other) const;
  bool intersects(const std::set<std::string>& names) const;
  std::string str() const;  // "{a,b}"

  auto operator<=>(const CoVarKey&) const = default;

 private:
  std::vector<std::string> members_;
};

// Fingerprint of everything reachable from one variable.
struct VarGraph {
  struct Node {
    ObjectId id;
    Kind kind = Kind::kNone;
    Primitive value;        // primitives; "opaque:<tag>" as a Str for opaques
    std::vector<std::uint32_t> children;  // indices into nodes
    std::vector<std::string> labels;      // map/record keys, parallel to children
    bool operator==(const Node&) const = default;
  };

  std::string root_name;
  std::vector<Node> nodes;  // depth-first, children in canonical order

  bool operator==(const VarGraph& other) const { return nodes == other.nodes; }
  ObjectIdSet ids() const;
  bool has_opaque() const;
};

struct CoVariable {
  CoVarKey key;
  ObjectIdSet component;  // sorted
};

struct UpdatedCoVariable {
  CoVariable covar;
  bool serializable = true;
};

struct StateDelta {
  std::vector<UpdatedCoVariable> updated;
  std::set<std::string> deleted_names;
  // Pre-cell Co-variables the cell touched (by member set).
  std::vector<CoVarKey> accessed_covariables;
};

// Throws UnboundVariable.
VarGraph build_vargraph(const State& state, const std::string& name);

// Order-sensitive digest of a flat list of primitives: element kinds, values
// and the aliasing pattern among elements. Object ids themselves are not
// hashed, so deep-equal lists digest equally. Throws NotFlat.
std::uint64_t hash_fastpath(const VarGraph& graph);
std::uint64_t hash_fastpath(const State& state, const std::string& name);

// Unique partition of bound names into maximally connected components.
std::vector<CoVariable> partition(const State& state);

// Co-variables of `prev` whose members were accessed by the cell.
std::vector<CoVarKey> candidates(const std::vector<CoVarKey>& prev, const AccessLog& log);

struct DetectorOptions {
  bool check_all = false;      // ablation: treat every Co-variable as a candidate
  bool hash_fastpath = true;   // digest flat lists instead of keeping full graphs
  // Test-only mutant: drop written names from the access set. Breaks the
  // no-false-negative guarantee on purpose so fuzzing can be shown to catch it.
  bool mutant_ignore_writes = false;
  std::set<std::string> misbehaving_classes;  // forced unserializable
};

struct DetectorCounters {
  std::uint64_t vargraph_rebuilds = 0;  // graphs rebuilt for already-tracked names
  std::uint64_t vargraph_creates = 0;   // graphs built for newly bound names
  std::uint64_t candidates_checked = 0;
  std::uint64_t covariables_total = 0;  // after the most recent detect/reset
};

// Tracks per-name fingerprints and the current partition between cells.
class Detector {
 public:
  explicit Detector(DetectorOptions options = {}) : options_(std::move(options)) {}

  // Rebuilds all fingerprints and the partition from scratch.
  void reset(const State& state);

  // Computes the delta of one cell from the cached pre-cell fingerprints and
  // updates the cache to the post-cell state.
  StateDelta detect(const State& after, const AccessLog& log);

  // After a checkout: forget `removed` Co-variables and fingerprint `added`.
  void apply_replacement(const State& state, const std::vector<CoVarKey>& removed,
                         const std::vector<CoVarKey>& added);

  const std::vector<CoVarKey>& current_partition() const { return partition_; }
  std::optional<CoVarKey> covariable_of(const std::string& name) const;

  const DetectorCounters& totals() const { return totals_; }
  const DetectorCounters& last() const { return last_; }
  const DetectorOptions& options() const { return options_; }
  DetectorOptions& options() { return options_; }

  // Whether the component of `key` can be written to a blob.
  bool serializable(const State& state, const CoVarKey& key) const;

 private:
  struct Fingerprint {
    ObjectIdSet ids;
    bool has_opaque = false;
    std::optional<VarGraph> graph;
    std::optional<std::uint64_t> flat_digest;
    bool same_as(const Fingerprint& other) const;
  };

  Fingerprint fingerprint(const State& state, const std::string& name) const;
  std::vector<CoVarKey> group(const std::vector<std::string>& names) const;

  DetectorOptions options_;
  std::map<std::string, Fingerprint> cache_;
  std::vector<CoVarKey> partition_;  // sorted
  DetectorCounters totals_;
  DetectorCounters last_;
};

}  // namespace chronoshift
