#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "chronoshift/blob_store.hpp"
#include "chronoshift/checkpoint_graph.hpp"
#include "chronoshift/detector.hpp"
#include "chronoshift/heap.hpp"

namespace chronoshift {

// Where a versioned Co-variable will come from during a restore.
enum class RestoreSource {
  kLive,    // unchanged in the live session: copied from the current heap
  kBlob,    // decoded from its blob
  kReplay,  // recomputed by replaying the cell that produced it
};

struct CheckoutPlan {
  Timestamp current = 0;
  Timestamp target = 0;
  std::vector<VersionRef> loads;   // diverged target entries, by ascending t
  std::vector<CoVarKey> deletes;   // diverged identities absent from the target
  // For every load that cannot come from a blob: the cells to replay, in
  // execution order. Shared prefixes are replayed once.
  std::vector<std::vector<Timestamp>> fallbacks;
  // Distinct cells the plan replays; its size is the replay cost.
  std::vector<Timestamp> replayed_cells;
};

struct CheckoutOptions {
  // Rewrite recomputed components whose blobs were poisoned or damaged.
  bool self_heal = false;
  // Treat the live state as if it were at `assume_current` rather than the
  // graph head (used when reopening a session into an empty heap).
  std::optional<Timestamp> assume_current;
  // Journal the head move. Disabled when only rebuilding the live state.
  bool record_head_move = true;
};

struct CheckoutReport {
  Timestamp from = 0;
  Timestamp target = 0;
  bool noop = false;
  std::uint64_t loaded_bytes = 0;
  std::uint64_t blobs_loaded = 0;
  std::uint64_t cells_replayed = 0;
  std::uint64_t covariables_loaded = 0;
  std::uint64_t covariables_deleted = 0;
  std::uint64_t blobs_healed = 0;
  std::vector<Timestamp> replayed;  // cells replayed, in order
  double duration_ms = 0;
};

// Everything a checkout touches. The live state and detector are only
// modified in the final swap.
struct CheckoutContext {
  CheckpointGraph& graph;
  BlobStore& store;
  Detector& detector;
  State& state;
  std::set<std::string> misbehaving;  // for self-heal re-encoding
};

// Predicts the sources of every load using cheap blob probes. A blob that
// probes healthy but fails digest verification is only discovered by
// checkout itself, which then falls back dynamically.
CheckoutPlan plan_checkout(const CheckpointGraph& graph, const BlobStore& store,
                           Timestamp current, Timestamp target);

// Restores one versioned Co-variable into a standalone fragment, falling back
// to recursive recomputation when its blob is missing or unreadable.
// `live`/`live_at` optionally expose an unchanged live session as a source.
// Throws RestoreFailed.
State restore_covariable(const CheckpointGraph& graph, BlobStore& store, const VersionRef& vcv,
                         const State* live = nullptr, Timestamp live_at = kRootTimestamp);

// Moves the live session to `target`. All-or-nothing: every component is
// restored into staging before the live state is touched. Throws
// RestoreFailed or UnknownTimestamp; on throw the live state, detector and
// head are unchanged.
CheckoutReport checkout(CheckoutContext ctx, Timestamp target, const CheckoutOptions& options = {});

}  // namespace chronoshift
