#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chronoshift/checkpoint_graph.hpp"
#include "chronoshift/heap.hpp"

namespace chronoshift {

struct FuzzOptions {
  std::uint64_t seed = 1;
  std::size_t traces = 100;
  std::size_t min_cells = 1;
  std::size_t max_cells = 30;
  std::size_t max_names = 40;
  double checkout_rate = 0.15;
  double poison_rate = 0.1;
  // Probability that a generated statement is nondeterministic.
  double nondet_rate = 0.0;
  std::size_t diff_pairs_per_trace = 3;
  SnapshotMode snapshot_mode = SnapshotMode::kMaterialized;
  bool hash_fastpath = true;
  bool mutant_ignore_writes = false;
  bool minimize = true;
};

enum class Invariant {
  kExactness,          // checkout result equals from-scratch replay
  kNonIntrusive,       // identical Co-variables keep their objects
  kNoFalseNegatives,   // every changed Co-variable is in the delta
  kDeletedNames,       // every unbound name is reported deleted
  kPruning,            // no change outside the candidate set
  kPartition,          // detector partition equals connected components
  kDiffSoundness,      // identical implies equal in both states
  kSnapshot,           // stored session states match their definition
  kAtomicity,          // failed checkout leaves the session untouched
  kUnexpectedFailure,  // restore failure on a deterministic history
};

std::string_view invariant_name(Invariant invariant);

struct FuzzCounters {
  std::uint64_t traces = 0;
  std::uint64_t cells = 0;
  std::uint64_t cells_failed = 0;  // cells that stopped at an error
  std::uint64_t checkouts = 0;
  std::uint64_t restore_failures = 0;
  std::uint64_t cells_replayed = 0;
  std::uint64_t poisoned = 0;
  std::uint64_t partition_checks = 0;
  std::uint64_t covariables_changed = 0;   // per the deep-compare oracle
  std::uint64_t covariables_reported = 0;  // in detected deltas
  std::uint64_t false_positives = 0;       // reported but unchanged
  std::uint64_t pruned_checked = 0;        // non-candidates verified unchanged
  std::uint64_t diff_pairs = 0;
  std::uint64_t identical_checked = 0;
  std::uint64_t diverged_checked = 0;      // diverged and present on both sides
  std::uint64_t false_diverged = 0;        // ... but equal in both states

  FuzzCounters& operator+=(const FuzzCounters& other);
};

// One step of a trace. Cells carry a stable label so checkout/poison steps
// still resolve after minimization removes other steps.
struct TraceAction {
  enum class Kind { kCell, kCheckout, kPoison };
  Kind kind = Kind::kCell;
  std::string source;     // kCell
  std::size_t label = 0;  // kCell: own label; others: target cell label (0 = ROOT)
  std::size_t slot = 0;   // kPoison: delta entry, modulo the stored blobs
  bool truncate = false;  // kPoison: damage bytes instead of poisoning
};

struct Trace {
  std::vector<TraceAction> actions;
};

struct FuzzViolation {
  Invariant invariant = Invariant::kExactness;
  std::string detail;
  std::uint64_t trace_seed = 0;
  Trace trace;  // minimized when FuzzOptions::minimize
};

struct FuzzReport {
  FuzzCounters counters;
  std::optional<FuzzViolation> violation;

  bool ok() const { return !violation; }
  std::string summary() const;
};

// Generates `traces` traces and checks every invariant on each. Stops at the
// first violation.
FuzzReport run_fuzz(const FuzzOptions& options);

Trace generate_trace(std::uint64_t seed, const FuzzOptions& options);
// Runs one trace against every oracle; counters accumulate into `counters`.
std::optional<FuzzViolation> check_trace(const Trace& trace, const FuzzOptions& options,
                                         FuzzCounters& counters);
// Greedily drops steps and statements while the same invariant still fails.
Trace minimize_trace(const Trace& trace, Invariant invariant, const FuzzOptions& options);

// Repro script: cells separated by `# %% @<label>` lines, other steps as
// `#! checkout @<label>` / `#! poison @<label> <slot> [truncate]`.
std::string format_trace(const Trace& trace);
// Throws SpecError.
Trace parse_trace(const std::string& text);

// Oracles shared with the tests.
namespace oracle {

// Connected components of bound names, by an independent naive walk.
std::vector<std::vector<std::string>> components(const State& state);

// Same bindings, same object ids, and identical objects throughout the
// closure of `names` in both states.
bool same_objects(const State& a, const State& b, const std::vector<std::string>& names);

}  // namespace oracle

}  // namespace chronoshift
