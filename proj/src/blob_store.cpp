#include "chronoshift/blob_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "chronoshift/errors.hpp"
#include "chronoshift/hash.hpp"

namespace chronoshift {

std::string BlobKey::digest_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

void MemoryBackend::write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  blobs_[name] = bytes;
}

std::optional<std::vector<std::uint8_t>> MemoryBackend::read(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) return std::nullopt;
  return it->second;
}

bool MemoryBackend::exists(const std::string& name) const { return blobs_.count(name) != 0; }

void MemoryBackend::overwrite(const std::string& name, std::vector<std::uint8_t> bytes) {
  blobs_[name] = std::move(bytes);
}

DirectoryBackend::DirectoryBackend(std::filesystem::path root, bool sync)
    : root_(std::move(root)), sync_(sync) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw IoError("cannot create blob directory " + root_.string() + ": " + ec.message());
}

std::filesystem::path DirectoryBackend::path_of(const std::string& name, std::size_t chunk) const {
  std::filesystem::path p = root_ / name.substr(0, 2) / name;
  if (chunk > 0) p += "." + std::to_string(chunk);
  return p;
}

namespace {

void write_file(const std::filesystem::path& path, const std::uint8_t* data, std::size_t size,
                bool sync) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError("open " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < size) {
    ssize_t n = ::write(fd, data + done, size - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw StorageError("write " + path.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (sync && ::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw StorageError("fsync " + path.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

}  // namespace

void DirectoryBackend::write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  std::error_code ec;
  std::filesystem::create_directories(path_of(name).parent_path(), ec);
  if (ec) throw StorageError("cannot create blob shard: " + ec.message());
  std::size_t chunks = std::max<std::size_t>(1, (bytes.size() + kChunkBytes - 1) / kChunkBytes);
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t begin = c * kChunkBytes;
    std::size_t size = std::min(kChunkBytes, bytes.size() - begin);
    write_file(path_of(name, c), bytes.data() + begin, size, sync_);
  }
  // Drop stale trailing chunks from an earlier, longer write.
  for (std::size_t c = chunks; std::filesystem::exists(path_of(name, c)); ++c) {
    std::filesystem::remove(path_of(name, c), ec);
  }
}

std::optional<std::vector<std::uint8_t>> DirectoryBackend::read(const std::string& name) const {
  std::vector<std::uint8_t> out;
  for (std::size_t c = 0;; ++c) {
    std::filesystem::path p = path_of(name, c);
    std::ifstream in(p, std::ios::binary);
    if (!in) {
      if (c == 0) return std::nullopt;
      break;
    }
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::size_t base = out.size();
    out.resize(base + size);
    in.read(reinterpret_cast<char*>(out.data() + base), static_cast<std::streamsize>(size));
    if (!in) throw IoError("short read on " + p.string());
  }
  return out;
}

bool DirectoryBackend::exists(const std::string& name) const {
  return std::filesystem::exists(path_of(name));
}

BlobStore::BlobStore(std::unique_ptr<BlobBackend> backend) : backend_(std::move(backend)) {}

namespace {

std::uint64_t digest_of(const CoVarKey& covar, Timestamp t, const std::vector<std::uint8_t>& bytes) {
  Fnv1a h;
  h.add_u64(covar.members().size());
  for (const auto& m : covar.members()) h.add_string(m);
  h.add_u64(t);
  h.add_u64(bytes.size());
  h.add_bytes(bytes.data(), bytes.size());
  return h.digest();
}

}  // namespace

BlobKey BlobStore::make_key(const CoVarKey& covar, Timestamp t,
                            const SerializedComponent& payload) {
  return BlobKey{covar, t, digest_of(covar, t, payload.bytes)};
}

BlobKey BlobStore::put(const CoVarKey& covar, Timestamp t, const SerializedComponent& payload) {
  BlobKey key = make_key(covar, t, payload);
  put(key, payload);
  return key;
}

bool BlobStore::healthy(const BlobKey& key) const {
  const std::string name = key.digest_hex();
  if (poisoned_.count(name)) return false;
  auto bytes = backend_->read(name);
  return bytes && digest_of(key.covar, key.t, *bytes) == key.digest;
}

void BlobStore::put(const BlobKey& key, const SerializedComponent& payload) {
  std::lock_guard lock(mu_);
  if (fail_puts_) throw StorageError("injected write failure for " + key.digest_hex());
  if (digest_of(key.covar, key.t, payload.bytes) != key.digest) {
    throw StorageError("payload does not match key digest " + key.digest_hex());
  }
  const std::string name = key.digest_hex();
  if (backend_->exists(name) && healthy(key)) {
    throw StorageError("blob " + name + " already committed");
  }
  backend_->write(name, payload.bytes);
  poisoned_.erase(name);
  ++stats_.puts;
  stats_.bytes_written += payload.bytes.size();
}

SerializedComponent BlobStore::get(const BlobKey& key) {
  std::lock_guard lock(mu_);
  const std::string name = key.digest_hex();
  if (poisoned_.count(name)) throw CorruptBlob("blob " + name + " is poisoned");
  auto bytes = backend_->read(name);
  if (!bytes) throw IoError("blob " + name + " is missing");
  ++stats_.gets;
  stats_.bytes_read += bytes->size();
  if (digest_of(key.covar, key.t, *bytes) != key.digest) {
    throw CorruptBlob("blob " + name + " failed digest verification");
  }
  return SerializedComponent{std::move(*bytes)};
}

void BlobStore::poison(const BlobKey& key) {
  std::lock_guard lock(mu_);
  const std::string name = key.digest_hex();
  if (!backend_->exists(name)) throw UnknownKey("no blob " + name);
  poisoned_.insert(name);
}

bool BlobStore::probe(const BlobKey& key) const {
  std::lock_guard lock(mu_);
  const std::string name = key.digest_hex();
  return !poisoned_.count(name) && backend_->exists(name);
}

BlobStats BlobStore::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void BlobStore::reset_stats() {
  std::lock_guard lock(mu_);
  stats_ = {};
}

}  // namespace chronoshift
