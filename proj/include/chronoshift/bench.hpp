#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chronoshift/checkpoint_graph.hpp"

namespace chronoshift {

enum class WorkloadKind {
  kSynthetic,    // K list Co-variables, then cells each rewriting `touch` of them
  kScalability,  // many small commits; measures metadata growth and deep diffs
  kCells,        // user-supplied cell blocks
};

// Workload description: `key=value` lines, optionally followed by cell
// blocks separated by lines starting with `%%`. Keys:
//
//   kind           synthetic | scalability | cells   (cells if blocks given)
//   covariables    number of list Co-variables            (20)
//   elements       list length                            (1000)
//   element_bytes  bytes per string element               (1000)
//   cells          mutation / commit cells                (50)
//   touch          Co-variables rewritten per cell        (1)
//   seed           choice of touched Co-variables        (1)
//   undo           cells to roll back at the end          (1)
//   check_all      also run the check-all ablation        (true)
//   snapshot_mode  materialized | recompute              (materialized)
struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kSynthetic;
  std::size_t covariables = 20;
  std::size_t elements = 1000;
  std::size_t element_bytes = 1000;
  std::size_t cells = 50;
  std::size_t touch = 1;
  std::uint64_t seed = 1;
  std::size_t undo = 1;
  bool check_all = true;
  SnapshotMode snapshot_mode = SnapshotMode::kMaterialized;
  std::vector<std::string> cell_blocks;

  // Throws SpecError.
  static WorkloadSpec parse(const std::string& text);
};

struct BenchRow {
  std::size_t index = 0;
  Timestamp t = 0;
  std::string phase;  // setup | mutate | cell
  std::uint64_t incremental_bytes = 0;  // blob bytes written by this cell
  std::uint64_t full_dump_bytes = 0;    // bytes to serialize the whole state
  std::uint64_t metadata_bytes = 0;     // journal size after this cell
  std::uint64_t vargraph_rebuilds = 0;
  std::uint64_t vargraph_creates = 0;
  std::uint64_t candidates = 0;
  double detect_ms = 0;
  double commit_ms = 0;
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

// Ordinary least squares of ys on xs.
LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys);

struct BenchResult {
  std::vector<BenchRow> rows;
  std::uint64_t total_incremental_bytes = 0;
  std::uint64_t total_full_dump_bytes = 0;
  // Rolling back `undo` cells at the end.
  std::uint64_t undo_loaded_bytes = 0;
  std::uint64_t undo_full_dump_bytes = 0;  // the full-dump baseline reloads everything
  std::uint64_t undo_cells_replayed = 0;
  double undo_ms = 0;
  // Detection work over the mutation cells, with and without pruning.
  std::uint64_t rebuilds_pruned = 0;
  std::uint64_t rebuilds_check_all = 0;  // 0 when the ablation was not run
  // Scalability workloads.
  LinearFit metadata_fit;
  double deep_diff_ms = 0;
  std::size_t deep_diff_depth = 0;

  std::string csv() const;
};

BenchResult run_bench(const WorkloadSpec& spec);

// Cell sources for the synthetic workload, in order (setup cells first).
std::vector<std::string> synthetic_cells(const WorkloadSpec& spec);

}  // namespace chronoshift
