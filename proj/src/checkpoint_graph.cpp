#include "chronoshift/checkpoint_graph.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "byte_io.hpp"
#include "chronoshift/errors.hpp"
#include "chronoshift/hash.hpp"

namespace chronoshift {

const VersionedCoVariable* CheckpointNode::find_output(const CoVarKey& covar) const {
  for (const auto& v : delta) {
    if (v.covar == covar) return &v;
  }
  return nullptr;
}

SessionState apply_delta(const SessionState& parent, const std::vector<VersionRef>& delta,
                         const std::set<std::string>& deleted) {
  SessionState out;
  out.reserve(parent.size() + delta.size());
  for (const auto& entry : parent) {
    bool evicted = entry.covar.intersects(deleted);
    for (const auto& incoming : delta) {
      if (evicted) break;
      evicted = entry.covar.intersects(incoming.covar);
    }
    if (!evicted) out.push_back(entry);
  }
  out.insert(out.end(), delta.begin(), delta.end());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

constexpr char kJournalMagic[] = {'C', 'H', 'R', 'J', 0x01};
constexpr std::uint8_t kNodeRecord = 1;
constexpr std::uint8_t kHeadRecord = 2;

std::vector<VersionRef> refs_of(const std::vector<VersionedCoVariable>& delta) {
  std::vector<VersionRef> out;
  for (const auto& v : delta) out.push_back({v.covar, v.t});
  return out;
}

void write_covar(detail::ByteWriter& w, const CoVarKey& key) {
  w.u32(static_cast<std::uint32_t>(key.members().size()));
  for (const auto& m : key.members()) w.str(m);
}

template <typename R>
CoVarKey read_covar(R& r) {
  std::uint32_t n = r.u32();
  std::vector<std::string> members;
  for (std::uint32_t i = 0; i < n; ++i) members.push_back(r.str());
  return CoVarKey(std::move(members));
}

std::vector<std::uint8_t> encode_node(const CheckpointNode& node, bool with_snapshot) {
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.u64(node.t);
  w.u64(node.parent);
  w.u8(node.nondeterministic ? 1 : 0);
  w.str(node.code);
  w.u32(static_cast<std::uint32_t>(node.delta.size()));
  for (const auto& v : node.delta) {
    write_covar(w, v.covar);
    w.u8(v.blob ? 1 : 0);
    if (v.blob) w.u64(v.blob->digest);
  }
  w.u32(static_cast<std::uint32_t>(node.reads.size()));
  for (const auto& r : node.reads) {
    write_covar(w, r.covar);
    w.u64(r.t);
  }
  w.u32(static_cast<std::uint32_t>(node.deleted_names.size()));
  for (const auto& d : node.deleted_names) w.str(d);
  w.u8(with_snapshot ? 1 : 0);
  if (with_snapshot) {
    w.u32(static_cast<std::uint32_t>(node.snapshot.size()));
    for (const auto& s : node.snapshot) {
      write_covar(w, s.covar);
      w.u64(s.t);
    }
  }
  return out;
}

CheckpointNode decode_node(const std::vector<std::uint8_t>& payload) {
  detail::ByteReader<CorruptJournal> r(payload);
  CheckpointNode node;
  node.t = r.u64();
  node.parent = r.u64();
  node.nondeterministic = r.u8() != 0;
  node.code = r.str();
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    VersionedCoVariable v;
    v.covar = read_covar(r);
    v.t = node.t;
    if (r.u8()) v.blob = BlobKey{v.covar, node.t, r.u64()};
    node.delta.push_back(std::move(v));
  }
  n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    VersionRef ref;
    ref.covar = read_covar(r);
    ref.t = r.u64();
    node.reads.push_back(std::move(ref));
  }
  n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) node.deleted_names.insert(r.str());
  if (r.u8()) {
    n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      VersionRef ref;
      ref.covar = read_covar(r);
      ref.t = r.u64();
      node.snapshot.push_back(std::move(ref));
    }
  }
  if (!r.done()) throw CorruptJournal("trailing bytes in node record");
  return node;
}

std::vector<std::uint8_t> frame(std::uint8_t type, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u8(type);
  out.insert(out.end(), payload.begin(), payload.end());
  Fnv1a h;
  h.add_u8(type);
  h.add_bytes(payload.data(), payload.size());
  w.u64(h.digest());
  return out;
}

}  // namespace

CheckpointGraph::CheckpointGraph(SnapshotMode mode) : mode_(mode) {
  CheckpointNode root;
  root.t = kRootTimestamp;
  root.parent = kRootTimestamp;
  nodes_.push_back(std::move(root));
  metadata_bytes_ = sizeof kJournalMagic;
}

CheckpointGraph::~CheckpointGraph() {
  if (journal_fd_ >= 0) ::close(journal_fd_);
}

CheckpointGraph::CheckpointGraph(CheckpointGraph&& other) noexcept
    : mode_(other.mode_),
      nodes_(std::move(other.nodes_)),
      head_(other.head_),
      metadata_bytes_(other.metadata_bytes_),
      journal_path_(std::move(other.journal_path_)),
      journal_fd_(std::exchange(other.journal_fd_, -1)),
      sync_(other.sync_) {}

CheckpointGraph& CheckpointGraph::operator=(CheckpointGraph&& other) noexcept {
  if (this != &other) {
    if (journal_fd_ >= 0) ::close(journal_fd_);
    mode_ = other.mode_;
    nodes_ = std::move(other.nodes_);
    head_ = other.head_;
    metadata_bytes_ = other.metadata_bytes_;
    journal_path_ = std::move(other.journal_path_);
    journal_fd_ = std::exchange(other.journal_fd_, -1);
    sync_ = other.sync_;
  }
  return *this;
}

const CheckpointNode& CheckpointGraph::node(Timestamp t) const {
  if (!contains(t)) throw UnknownTimestamp(t);
  return nodes_[t];
}

void CheckpointGraph::move_head(Timestamp t) {
  if (!contains(t)) throw UnknownTimestamp(t);
  if (t == head_) return;
  std::vector<std::uint8_t> payload;
  detail::ByteWriter(payload).u64(t);
  append_record(kHeadRecord, payload);
  head_ = t;
}

void CheckpointGraph::insert_node(CheckpointNode node) {
  CheckpointNode& parent = nodes_[node.parent];
  node.depth = parent.depth + 1;
  parent.children.push_back(node.t);
  nodes_.push_back(std::move(node));
}

Timestamp CheckpointGraph::commit(CommitRequest request) {
  CheckpointNode node;
  node.t = nodes_.size();
  node.parent = head_;
  node.code = std::move(request.code);
  node.delta = std::move(request.delta);
  for (auto& v : node.delta) {
    v.t = node.t;
    if (v.blob && v.blob->t != node.t) {
      throw std::logic_error("blob key timestamp does not match its node");
    }
  }
  std::sort(node.delta.begin(), node.delta.end());
  node.reads = std::move(request.reads);
  std::sort(node.reads.begin(), node.reads.end());
  node.deleted_names = std::move(request.deleted_names);
  node.nondeterministic = request.nondeterministic;
  if (mode_ == SnapshotMode::kMaterialized) {
    node.snapshot = apply_delta(session_state(head_), refs_of(node.delta), node.deleted_names);
  }
  append_record(kNodeRecord, encode_node(node, mode_ == SnapshotMode::kMaterialized));
  Timestamp t = node.t;
  insert_node(std::move(node));
  head_ = t;
#ifndef NDEBUG
  if (mode_ == SnapshotMode::kMaterialized) {
    SessionState folded;
    for (Timestamp s : path_from_root(t)) {
      if (s == kRootTimestamp) continue;
      const auto& n = nodes_[s];
      folded = apply_delta(folded, refs_of(n.delta), n.deleted_names);
    }
    if (folded != nodes_[t].snapshot) throw std::logic_error("snapshot recurrence violated");
  }
#endif
  return t;
}

SessionState CheckpointGraph::session_state(Timestamp t) const {
  const CheckpointNode& target = node(t);
  if (t == kRootTimestamp) return {};
  if (mode_ == SnapshotMode::kMaterialized) return target.snapshot;
  SessionState state;
  for (Timestamp s : path_from_root(t)) {
    if (s == kRootTimestamp) continue;
    const auto& n = nodes_[s];
    state = apply_delta(state, refs_of(n.delta), n.deleted_names);
  }
  return state;
}

std::vector<Timestamp> CheckpointGraph::path_from_root(Timestamp t) const {
  node(t);
  std::vector<Timestamp> path;
  while (true) {
    path.push_back(t);
    if (t == kRootTimestamp) break;
    t = nodes_[t].parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Timestamp CheckpointGraph::lca(Timestamp a, Timestamp b) const {
  node(a);
  node(b);
  while (nodes_[a].depth > nodes_[b].depth) a = nodes_[a].parent;
  while (nodes_[b].depth > nodes_[a].depth) b = nodes_[b].parent;
  while (a != b) {
    a = nodes_[a].parent;
    b = nodes_[b].parent;
  }
  return a;
}

StateDiff CheckpointGraph::diff(Timestamp current, Timestamp target) const {
  StateDiff d;
  d.lca = lca(current, target);
  const SessionState cur = session_state(current);
  const SessionState tgt = session_state(target);
  const SessionState base = session_state(d.lca);
  auto in = [](const SessionState& s, const VersionRef& v) {
    return std::binary_search(s.begin(), s.end(), v);
  };
  std::set<CoVarKey> target_keys;
  for (const auto& v : tgt) target_keys.insert(v.covar);
  std::set<CoVarKey> identical;
  for (const auto& v : cur) {
    if (in(tgt, v) && in(base, v)) identical.insert(v.covar);
  }
  std::set<CoVarKey> diverged;
  for (const auto& v : cur) {
    if (identical.count(v.covar)) continue;
    diverged.insert(v.covar);
    d.current_only.push_back(v);
    if (!target_keys.count(v.covar)) d.to_delete.push_back(v.covar);
  }
  for (const auto& v : tgt) {
    if (identical.count(v.covar)) continue;
    diverged.insert(v.covar);
    d.to_load.push_back(v);
  }
  d.identical.assign(identical.begin(), identical.end());
  d.diverged.assign(diverged.begin(), diverged.end());
  return d;
}

std::string CheckpointGraph::export_dot() const {
  std::ostringstream out;
  out << "digraph checkpoints {\n";
  out << "  rankdir=LR;\n";
  out << "  node [shape=box, fontname=\"monospace\"];\n";
  for (const auto& n : nodes_) {
    std::string label;
    if (n.t == kRootTimestamp) {
      label = "ROOT";
    } else {
      label = "t" + std::to_string(n.t);
      for (const auto& v : n.delta) {
        label += "\\n" + v.covar.str() + (v.blob ? "" : " (missing)");
      }
    }
    out << "  \"t" << n.t << "\" [label=\"" << label << "\"";
    if (n.t == head_) out << ", style=filled, fillcolor=\"#ffd966\"";
    out << "];\n";
  }
  for (const auto& n : nodes_) {
    for (Timestamp c : n.children) out << "  \"t" << n.t << "\" -> \"t" << c << "\";\n";
  }
  out << "}\n";
  return out.str();
}

void CheckpointGraph::append_record(std::uint8_t type, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> record = frame(type, payload);
  metadata_bytes_ += record.size();
  if (journal_fd_ < 0) return;
  std::size_t done = 0;
  while (done < record.size()) {
    ssize_t n = ::write(journal_fd_, record.data() + done, record.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError(std::string("journal write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  if (sync_ && ::fsync(journal_fd_) != 0) {
    throw StorageError(std::string("journal fsync failed: ") + std::strerror(errno));
  }
}

void CheckpointGraph::attach_journal(const std::filesystem::path& path, bool sync) {
  if (journal_fd_ >= 0) throw std::logic_error("journal already attached");
  if (nodes_.size() != 1) throw std::logic_error("journal must be attached to an empty graph");
  sync_ = sync;

  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (data.size() < sizeof kJournalMagic ||
        std::memcmp(data.data(), kJournalMagic, sizeof kJournalMagic) != 0) {
      throw CorruptJournal("bad journal header in " + path.string());
    }
    // Rebuild into a scratch graph so a bad record leaves *this untouched.
    CheckpointGraph scratch(mode_);
    std::size_t pos = sizeof kJournalMagic;
    while (pos < data.size()) {
      detail::ByteReader<CorruptJournal> r(data.data() + pos, data.size() - pos);
      std::uint32_t len = r.u32();
      std::uint8_t type = r.u8();
      r.need(static_cast<std::size_t>(len) + 8);
      std::vector<std::uint8_t> payload(data.begin() + static_cast<std::ptrdiff_t>(pos + 5),
                                        data.begin() + static_cast<std::ptrdiff_t>(pos + 5 + len));
      detail::ByteReader<CorruptJournal> tail(data.data() + pos + 5 + len, 8);
      Fnv1a h;
      h.add_u8(type);
      h.add_bytes(payload.data(), payload.size());
      if (tail.u64() != h.digest()) {
        throw CorruptJournal("checksum mismatch at offset " + std::to_string(pos));
      }
      if (type == kNodeRecord) {
        CheckpointNode n = decode_node(payload);
        if (n.t != scratch.nodes_.size() || !scratch.contains(n.parent)) {
          throw CorruptJournal("out-of-order node record t" + std::to_string(n.t));
        }
        // Snapshots are derived state; recompute rather than trust the record.
        if (mode_ == SnapshotMode::kMaterialized) {
          n.snapshot = apply_delta(scratch.session_state(n.parent), refs_of(n.delta),
                                   n.deleted_names);
        } else {
          n.snapshot.clear();
        }
        Timestamp t = n.t;
        scratch.insert_node(std::move(n));
        scratch.head_ = t;
      } else if (type == kHeadRecord) {
        detail::ByteReader<CorruptJournal> hr(payload);
        Timestamp t = hr.u64();
        if (!scratch.contains(t)) throw CorruptJournal("head record names unknown node");
        scratch.head_ = t;
      } else {
        throw CorruptJournal("unknown record type " + std::to_string(type));
      }
      pos += 5 + len + 8;
    }
    nodes_ = std::move(scratch.nodes_);
    head_ = scratch.head_;
    metadata_bytes_ = data.size();
    journal_fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
    if (journal_fd_ < 0) throw IoError("cannot open journal " + path.string());
  } else {
    journal_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_APPEND | O_CLOEXEC, 0644);
    if (journal_fd_ < 0) {
      throw IoError("cannot create journal " + path.string() + ": " + std::strerror(errno));
    }
    if (::write(journal_fd_, kJournalMagic, sizeof kJournalMagic) !=
        static_cast<ssize_t>(sizeof kJournalMagic)) {
      throw IoError("cannot write journal header");
    }
    metadata_bytes_ = sizeof kJournalMagic;
  }
  journal_path_ = path;
}

}  // namespace chronoshift
