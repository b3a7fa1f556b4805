#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chronoshift/blob_store.hpp"
#include "chronoshift/checkout.hpp"
#include "chronoshift/checkpoint_graph.hpp"
#include "chronoshift/config.hpp"
#include "chronoshift/detector.hpp"
#include "chronoshift/heap.hpp"
#include "chronoshift/interpreter.hpp"

namespace chronoshift {

struct CellResult {
  Timestamp t = 0;
  std::optional<std::string> display;
  // Syntax or runtime failure. The checkpoint is committed regardless.
  std::optional<std::string> error;
  bool syntax_error = false;
  AccessLog log;
  StateDelta delta;
  std::vector<VersionRef> reads;
  std::vector<std::string> storage_warnings;
  std::uint64_t bytes_written = 0;
  std::map<CoVarKey, std::uint64_t> blob_bytes;  // encoded size per stored Co-variable
  double detect_ms = 0;  // change detection
  double commit_ms = 0;  // serialization, blob writes and journal
};

struct EngineStats {
  std::uint64_t cells = 0;
  std::uint64_t checkouts = 0;
  double detect_ms = 0;
  double commit_ms = 0;
  double checkout_ms = 0;
};

// One live session: heap, detector, checkpoint graph and blob store.
// Executes cells through the execute -> detect -> store -> commit pipeline.
class Engine {
 public:
  // In-memory session (tests, benchmarks, fuzzing).
  explicit Engine(Config config = {}, std::unique_ptr<BlobBackend> backend = nullptr);

  // Creates a fresh session directory, or reopens an existing one by
  // replaying its journal and restoring the live state at the head.
  // Co-variables at the head that cannot be restored (nondeterministic
  // outputs whose blobs are missing) are left unbound and reported through
  // open_warnings(). Throws CorruptJournal / IoError.
  static Engine open(const std::filesystem::path& dir, const Config& fresh_config = {});
  static bool is_session_dir(const std::filesystem::path& dir);

  CellResult run_cell(const std::string& source);
  // Throws RestoreFailed / UnknownTimestamp; state unchanged on throw.
  CheckoutReport checkout(Timestamp target);
  CheckoutPlan plan(Timestamp target) const;

  const State& state() const { return state_; }
  const CheckpointGraph& graph() const { return graph_; }
  BlobStore& store() { return *store_; }
  const BlobStore& store() const { return *store_; }
  const Detector& detector() const { return detector_; }
  Detector& detector() { return detector_; }
  const Config& config() const { return config_; }
  const EngineStats& stats() const { return stats_; }
  Timestamp head() const { return graph_.head(); }
  const std::vector<std::string>& open_warnings() const { return open_warnings_; }

 private:
  Engine(Config config, std::unique_ptr<BlobBackend> backend, CheckpointGraph graph);
  CheckoutContext context();
  void restore_partially();

  Config config_;
  State state_;
  Detector detector_;
  CheckpointGraph graph_;
  std::unique_ptr<BlobStore> store_;
  Rng rng_;
  EngineStats stats_;
  std::vector<std::string> open_warnings_;
};

// Advisory exclusive lock on `<dir>/lock`, held for the object's lifetime.
class SessionLock {
 public:
  // Throws Error if another process holds the lock.
  explicit SessionLock(const std::filesystem::path& dir);
  ~SessionLock();
  SessionLock(const SessionLock&) = delete;
  SessionLock& operator=(const SessionLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace chronoshift
