#include "chronoshift/checkout.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "chronoshift/codec.hpp"
#include "chronoshift/errors.hpp"
#include "chronoshift/interpreter.hpp"
#include "chronoshift/script.hpp"

namespace chronoshift {
namespace {

std::string describe(const VersionRef& v) {
  return "(" + v.covar.str() + ", t" + std::to_string(v.t) + ")";
}

bool in_state(const SessionState& state, const VersionRef& v) {
  return std::binary_search(state.begin(), state.end(), v);
}

std::set<std::string> members_of(const std::vector<VersionRef>& refs) {
  std::set<std::string> out;
  for (const auto& r : refs) out.insert(r.covar.members().begin(), r.covar.members().end());
  return out;
}

// A session reopened around an unrestorable Co-variable lacks its names.
bool all_bound(const State& s, const std::vector<std::string>& names) {
  return std::all_of(names.begin(), names.end(),
                     [&](const std::string& n) { return s.ns.contains(n); });
}

// Restores versioned Co-variables for one checkout, preferring the live heap,
// then blobs, then replay. Results are memoized per version and replayed
// cells per node, so each cell runs at most once.
class Restorer {
 public:
  Restorer(const CheckpointGraph& graph, BlobStore& store, const State* live, Timestamp live_at)
      : graph_(graph), store_(store), live_(live) {
    if (live_) live_state_ = graph_.session_state(live_at);
  }

  const State& restore(const VersionRef& v) {
    if (auto it = versions_.find(v); it != versions_.end()) return it->second;
    return versions_.emplace(v, compute(v)).first->second;
  }

  const std::vector<Timestamp>& replayed() const { return replayed_; }

  // Versions whose blobs were unreadable but which were recomputed.
  std::vector<std::pair<BlobKey, const State*>> healable() const {
    std::vector<std::pair<BlobKey, const State*>> out;
    for (const auto& [v, key] : damaged_) {
      if (auto it = versions_.find(v); it != versions_.end()) out.emplace_back(key, &it->second);
    }
    return out;
  }

 private:
  State compute(const VersionRef& v) {
    if (live_ && in_state(live_state_, v) && all_bound(*live_, v.covar.members())) {
      return extract_component(*live_, v.covar.members());
    }

    const CheckpointNode& node = graph_.node(v.t);
    const VersionedCoVariable* out = node.find_output(v.covar);
    if (!out) throw RestoreFailed("t" + std::to_string(v.t) + " did not produce " + v.covar.str());

    std::string why = "its blob was never written";
    if (out->blob) {
      try {
        return decode(store_.get(*out->blob));
      } catch (const CorruptBlob& e) {
        why = e.what();
        damaged_.emplace(v, *out->blob);
      } catch (const IoError& e) {
        why = e.what();
        damaged_.emplace(v, *out->blob);
      }
    }
    if (node.nondeterministic) {
      throw RestoreFailed("cannot restore " + describe(v) + ": " + why + ", and cell t" +
                          std::to_string(v.t) +
                          " is nondeterministic, so replaying it would not reproduce the value");
    }
    const State& scratch = replay(node);
    try {
      return extract_component(scratch, v.covar.members());
    } catch (const UnboundVariable& e) {
      throw RestoreFailed("replay of t" + std::to_string(v.t) + " did not rebuild " + describe(v) +
                          ": " + e.what());
    }
  }

  const State& replay(const CheckpointNode& node) {
    if (auto it = replays_.find(node.t); it != replays_.end()) return it->second;
    std::vector<const State*> inputs;
    for (const auto& r : node.reads) {
      try {
        inputs.push_back(&restore(r));
      } catch (const RestoreFailed& e) {
        throw RestoreFailed("cannot replay t" + std::to_string(node.t) + ": input " +
                            describe(r) + " is unrestorable: " + e.what());
      }
    }
    State result;
    try {
      CellProgram program = parse(node.code);
      Rng rng;
      result = replay_in_sandbox(program, inputs, members_of(node.reads), rng);
    } catch (const Error& e) {
      throw RestoreFailed("cannot replay t" + std::to_string(node.t) + ": " + e.what());
    }
    replayed_.push_back(node.t);
    return replays_.emplace(node.t, std::move(result)).first->second;
  }

  const CheckpointGraph& graph_;
  BlobStore& store_;
  const State* live_;
  SessionState live_state_;
  std::map<VersionRef, State> versions_;
  std::map<Timestamp, State> replays_;
  std::map<VersionRef, BlobKey> damaged_;
  std::vector<Timestamp> replayed_;
};

// Dry-run counterpart of Restorer: decides sources from blob probes.
class Planner {
 public:
  Planner(const CheckpointGraph& graph, const BlobStore& store, Timestamp current)
      : graph_(graph), store_(store), live_state_(graph.session_state(current)) {}

  // Appends newly required replays, in execution order, to `chain`.
  void require(const VersionRef& v, std::vector<Timestamp>& chain) {
    if (in_state(live_state_, v)) return;
    const CheckpointNode& node = graph_.node(v.t);
    const VersionedCoVariable* out = node.find_output(v.covar);
    if (out && out->blob && store_.probe(*out->blob)) return;
    require_replay(node, chain);
  }

  const std::vector<Timestamp>& replayed() const { return order_; }

 private:
  void require_replay(const CheckpointNode& node, std::vector<Timestamp>& chain) {
    if (planned_.count(node.t)) {
      chain.push_back(node.t);
      return;
    }
    for (const auto& r : node.reads) require(r, chain);
    planned_.insert(node.t);
    order_.push_back(node.t);
    chain.push_back(node.t);
  }

  const CheckpointGraph& graph_;
  const BlobStore& store_;
  SessionState live_state_;
  std::set<Timestamp> planned_;
  std::vector<Timestamp> order_;
};

}  // namespace

CheckoutPlan plan_checkout(const CheckpointGraph& graph, const BlobStore& store,
                           Timestamp current, Timestamp target) {
  CheckoutPlan plan;
  plan.current = current;
  plan.target = target;
  StateDiff d = graph.diff(current, target);
  plan.loads = d.to_load;
  std::stable_sort(plan.loads.begin(), plan.loads.end(),
                   [](const VersionRef& a, const VersionRef& b) { return a.t < b.t; });
  plan.deletes = d.to_delete;
  Planner planner(graph, store, current);
  for (const auto& v : plan.loads) {
    std::vector<Timestamp> chain;
    planner.require(v, chain);
    if (!chain.empty()) {
      std::sort(chain.begin(), chain.end());
      chain.erase(std::unique(chain.begin(), chain.end()), chain.end());
      plan.fallbacks.push_back(std::move(chain));
    }
  }
  plan.replayed_cells = planner.replayed();
  return plan;
}

State restore_covariable(const CheckpointGraph& graph, BlobStore& store, const VersionRef& vcv,
                         const State* live, Timestamp live_at) {
  Restorer restorer(graph, store, live, live_at);
  return restorer.restore(vcv);
}

CheckoutReport checkout(CheckoutContext ctx, Timestamp target, const CheckoutOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  CheckoutReport report;
  report.from = options.assume_current.value_or(ctx.graph.head());
  report.target = target;
  ctx.graph.node(target);
  auto finish = [&] {
    report.duration_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    return report;
  };
  if (report.from == target) {
    report.noop = true;
    if (options.record_head_move) ctx.graph.move_head(target);
    return finish();
  }

  const StateDiff d = ctx.graph.diff(report.from, target);
  std::vector<VersionRef> loads = d.to_load;
  std::stable_sort(loads.begin(), loads.end(),
                   [](const VersionRef& a, const VersionRef& b) { return a.t < b.t; });

  // Stage: restore everything before touching the live session.
  const BlobStats before = ctx.store.stats();
  Restorer restorer(ctx.graph, ctx.store, &ctx.state, report.from);
  std::vector<const State*> staged;
  for (const auto& v : loads) staged.push_back(&restorer.restore(v));
  const BlobStats after = ctx.store.stats();

  if (options.record_head_move) ctx.graph.move_head(target);

  // Swap: drop every diverged current name, then bind the staged components.
  std::set<std::string> unbind = members_of(d.current_only);
  for (const auto& v : loads) unbind.insert(v.covar.members().begin(), v.covar.members().end());
  for (const auto& name : unbind) {
    if (ctx.state.ns.contains(name)) ctx.state.ns.unbind(name);
  }
  for (const State* fragment : staged) transplant(*fragment, ctx.state);
  collect_garbage(ctx.state);

  std::vector<CoVarKey> removed;
  for (const auto& v : d.current_only) removed.push_back(v.covar);
  std::vector<CoVarKey> added;
  for (const auto& v : loads) added.push_back(v.covar);
  ctx.detector.apply_replacement(ctx.state, removed, added);

  if (options.self_heal) {
    for (const auto& [key, fragment] : restorer.healable()) {
      EncodeResult encoded = encode(*fragment, key.covar.members(), ctx.misbehaving);
      auto* payload = std::get_if<SerializedComponent>(&encoded);
      if (!payload || BlobStore::make_key(key.covar, key.t, *payload) != key) continue;
      try {
        ctx.store.put(key, *payload);
        ++report.blobs_healed;
      } catch (const StorageError&) {
        // Healing is best effort; the blob stays damaged.
      }
    }
  }

  report.loaded_bytes = after.bytes_read - before.bytes_read;
  report.blobs_loaded = after.gets - before.gets;
  report.replayed = restorer.replayed();
  report.cells_replayed = report.replayed.size();
  report.covariables_loaded = loads.size();
  report.covariables_deleted = d.to_delete.size();
  return finish();
}

}  // namespace chronoshift
