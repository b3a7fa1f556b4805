#include "chronoshift/session.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>

#include "chronoshift/codec.hpp"
#include "chronoshift/errors.hpp"
#include "chronoshift/script.hpp"

namespace chronoshift {
namespace {

DetectorOptions detector_options(const Config& config) {
  DetectorOptions o;
  o.check_all = config.check_all;
  o.hash_fastpath = config.hash_fastpath;
  o.misbehaving_classes = config.misbehaving;
  return o;
}

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

Engine::Engine(Config config, std::unique_ptr<BlobBackend> backend)
    : Engine(config, std::move(backend), CheckpointGraph(config.snapshot_mode)) {}

Engine::Engine(Config config, std::unique_ptr<BlobBackend> backend, CheckpointGraph graph)
    : config_(std::move(config)),
      detector_(detector_options(config_)),
      graph_(std::move(graph)),
      store_(std::make_unique<BlobStore>(backend ? std::move(backend)
                                                 : std::make_unique<MemoryBackend>())),
      rng_(config_.seed) {}

bool Engine::is_session_dir(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "graph.log") && std::filesystem::exists(dir / "config");
}

Engine Engine::open(const std::filesystem::path& dir, const Config& fresh_config) {
  Config config = fresh_config;
  if (is_session_dir(dir)) {
    config = Config::load(dir / "config");
  } else {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create session directory " + dir.string() + ": " + ec.message());
    if (std::filesystem::exists(dir / "graph.log")) {
      throw CorruptJournal("session directory " + dir.string() + " has a journal but no config");
    }
    config.save(dir / "config");
  }
  CheckpointGraph graph(config.snapshot_mode);
  graph.attach_journal(dir / "graph.log", config.fsync);
  Engine engine(config, std::make_unique<DirectoryBackend>(dir / "blobs", config.fsync),
                std::move(graph));
  if (engine.graph_.head() != kRootTimestamp) {
    CheckoutOptions options;
    options.assume_current = kRootTimestamp;
    options.record_head_move = false;
    try {
      chronoshift::checkout(engine.context(), engine.graph_.head(), options);
    } catch (const RestoreFailed&) {
      engine.restore_partially();
    }
  }
  engine.detector_.reset(engine.state_);
  engine.store_->reset_stats();
  return engine;
}

// Binds every head Co-variable that can be restored on its own and records
// a warning for each one that cannot; those names stay unbound.
void Engine::restore_partially() {
  state_ = State{};
  for (const auto& v : graph_.session_state(graph_.head())) {
    try {
      transplant(restore_covariable(graph_, *store_, v, nullptr, kRootTimestamp), state_);
    } catch (const RestoreFailed& e) {
      open_warnings_.push_back(e.what());
    }
  }
  collect_garbage(state_);
}

CheckoutContext Engine::context() {
  return CheckoutContext{graph_, *store_, detector_, state_, config_.misbehaving};
}

CellResult Engine::run_cell(const std::string& source) {
  CellResult result;
  const Timestamp t = graph_.size();
  const SessionState before = graph_.session_state(graph_.head());

  std::optional<CellProgram> program;
  try {
    program = parse(source);
    program->cell_id = t;
  } catch (const SyntaxError& e) {
    result.error = e.what();
    result.syntax_error = true;
  }

  if (program) {
    ExecResult exec = execute(*program, state_, rng_);
    result.log = std::move(exec.log);
    result.display = std::move(exec.display);
    result.error = std::move(exec.error);
    collect_garbage(state_);

    auto started = std::chrono::steady_clock::now();
    result.delta = detector_.detect(state_, result.log);
    result.detect_ms = ms_since(started);
  }

  auto started = std::chrono::steady_clock::now();
  for (const auto& key : result.delta.accessed_covariables) {
    auto it = std::find_if(before.begin(), before.end(),
                           [&](const VersionRef& v) { return v.covar == key; });
    if (it != before.end()) result.reads.push_back(*it);
  }

  CommitRequest request;
  request.code = source;
  request.reads = result.reads;
  request.deleted_names = result.delta.deleted_names;
  request.nondeterministic = result.log.nondeterministic;
  for (const auto& u : result.delta.updated) {
    VersionedCoVariable v{u.covar.key, t, std::nullopt};
    if (u.serializable) {
      EncodeResult encoded = encode(state_, u.covar.key.members(), config_.misbehaving);
      if (auto* payload = std::get_if<SerializedComponent>(&encoded)) {
        try {
          v.blob = store_->put(u.covar.key, t, *payload);
          result.bytes_written += payload->bytes.size();
          result.blob_bytes[u.covar.key] = payload->bytes.size();
        } catch (const StorageError& e) {
          result.storage_warnings.push_back(u.covar.key.str() + ": " + e.what());
        }
      }
    }
    request.delta.push_back(std::move(v));
  }
  result.t = graph_.commit(std::move(request));
  result.commit_ms = ms_since(started);

  ++stats_.cells;
  stats_.detect_ms += result.detect_ms;
  stats_.commit_ms += result.commit_ms;
  return result;
}

CheckoutReport Engine::checkout(Timestamp target) {
  CheckoutOptions options;
  options.self_heal = config_.self_heal;
  CheckoutReport report = chronoshift::checkout(context(), target, options);
  ++stats_.checkouts;
  stats_.checkout_ms += report.duration_ms;
  return report;
}

CheckoutPlan Engine::plan(Timestamp target) const {
  return plan_checkout(graph_, *store_, graph_.head(), target);
}

SessionLock::SessionLock(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::filesystem::path path = dir / "lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("session " + dir.string() + " is in use by another process");
  }
}

SessionLock::~SessionLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace chronoshift
