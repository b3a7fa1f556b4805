#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronoshift/blob_store.hpp"
#include "chronoshift/detector.hpp"

namespace chronoshift {

// A Co-variable as produced by one cell: (covar, t). `blob` is empty when
// storage was skipped (unserializable) or failed.
struct VersionedCoVariable {
  CoVarKey covar;
  Timestamp t = 0;
  std::optional<BlobKey> blob;
  auto operator<=>(const VersionedCoVariable&) const = default;
};

// Reference to a versioned Co-variable without its storage location.
struct VersionRef {
  CoVarKey covar;
  Timestamp t = 0;
  auto operator<=>(const VersionRef&) const = default;
};

// Session state metadata: versioned Co-variables, sorted by covar.
using SessionState = std::vector<VersionRef>;

struct CheckpointNode {
  Timestamp t = 0;
  Timestamp parent = 0;
  std::uint32_t depth = 0;
  std::string code;
  std::vector<VersionedCoVariable> delta;
  std::vector<VersionRef> reads;
  std::set<std::string> deleted_names;
  SessionState snapshot;  // empty in recompute mode
  bool nondeterministic = false;
  std::vector<Timestamp> children;

  const VersionedCoVariable* find_output(const CoVarKey& covar) const;
};

struct CommitRequest {
  std::string code;
  std::vector<VersionedCoVariable> delta;  // t fields are filled in by commit
  std::vector<VersionRef> reads;
  std::set<std::string> deleted_names;
  bool nondeterministic = false;
};

struct StateDiff {
  Timestamp lca = 0;
  std::vector<CoVarKey> identical;
  std::vector<CoVarKey> diverged;
  std::vector<VersionRef> to_load;   // diverged entries of the target state
  std::vector<CoVarKey> to_delete;   // diverged identities absent from the target
  SessionState current_only;         // diverged entries of the current state
};

enum class SnapshotMode { kMaterialized, kRecompute };

// Applies one node's delta and deletions to a parent snapshot. An incoming
// Co-variable evicts every entry whose members overlap its own.
SessionState apply_delta(const SessionState& parent, const std::vector<VersionRef>& delta,
                         const std::set<std::string>& deleted);

class CheckpointGraph {
 public:
  explicit CheckpointGraph(SnapshotMode mode = SnapshotMode::kMaterialized);
  ~CheckpointGraph();
  CheckpointGraph(const CheckpointGraph&) = delete;
  CheckpointGraph& operator=(const CheckpointGraph&) = delete;
  CheckpointGraph(CheckpointGraph&& other) noexcept;
  CheckpointGraph& operator=(CheckpointGraph&& other) noexcept;

  // Adds a node under the head and moves the head to it. Returns its timestamp.
  Timestamp commit(CommitRequest request);

  Timestamp head() const { return head_; }
  // Throws UnknownTimestamp.
  void move_head(Timestamp t);

  bool contains(Timestamp t) const { return t < nodes_.size(); }
  // Throws UnknownTimestamp.
  const CheckpointNode& node(Timestamp t) const;
  std::size_t size() const { return nodes_.size(); }  // including ROOT
  SnapshotMode mode() const { return mode_; }

  // Throws UnknownTimestamp.
  SessionState session_state(Timestamp t) const;
  Timestamp lca(Timestamp a, Timestamp b) const;
  StateDiff diff(Timestamp current, Timestamp target) const;
  std::vector<Timestamp> path_from_root(Timestamp t) const;

  // Graphviz rendering; the head is filled, deltas label the nodes.
  std::string export_dot() const;

  // Replays `path` if it exists (throws CorruptJournal, leaving the graph
  // untouched), otherwise creates it. Subsequent commits and head moves are
  // appended.
  void attach_journal(const std::filesystem::path& path, bool sync = true);
  // Size of the metadata log; tracked even without an attached journal.
  std::uint64_t metadata_bytes() const { return metadata_bytes_; }

 private:
  void append_record(std::uint8_t type, const std::vector<std::uint8_t>& payload);
  void insert_node(CheckpointNode node);

  SnapshotMode mode_;
  std::vector<CheckpointNode> nodes_;
  Timestamp head_ = kRootTimestamp;
  std::uint64_t metadata_bytes_ = 0;
  std::optional<std::filesystem::path> journal_path_;
  int journal_fd_ = -1;
  bool sync_ = true;
};

}  // namespace chronoshift
