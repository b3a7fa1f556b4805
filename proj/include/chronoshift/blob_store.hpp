#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronoshift/codec.hpp"
#include "chronoshift/detector.hpp"

namespace chronoshift {

using Timestamp = std::uint64_t;
inline constexpr Timestamp kRootTimestamp = 0;

struct BlobKey {
  CoVarKey covar;
  Timestamp t = 0;
  std::uint64_t digest = 0;  // covers covar, t and payload

  std::string digest_hex() const;
  auto operator<=>(const BlobKey&) const = default;
};

// Raw byte storage addressed by blob name. Implementations need not be
// thread-safe; BlobStore serializes access.
class BlobBackend {
 public:
  virtual ~BlobBackend() = default;
  virtual void write(const std::string& name, const std::vector<std::uint8_t>& bytes) = 0;
  // nullopt when absent.
  virtual std::optional<std::vector<std::uint8_t>> read(const std::string& name) const = 0;
  virtual bool exists(const std::string& name) const = 0;
};

class MemoryBackend : public BlobBackend {
 public:
  void write(const std::string& name, const std::vector<std::uint8_t>& bytes) override;
  std::optional<std::vector<std::uint8_t>> read(const std::string& name) const override;
  bool exists(const std::string& name) const override;
  // Test hook: replace stored bytes without going through BlobStore.
  void overwrite(const std::string& name, std::vector<std::uint8_t> bytes);

 private:
  std::map<std::string, std::vector<std::uint8_t>> blobs_;
};

// `<root>/<2-hex>/<digest>`; payloads above kChunkBytes continue in
// `<digest>.1`, `<digest>.2`, ...
class DirectoryBackend : public BlobBackend {
 public:
  static constexpr std::size_t kChunkBytes = 4u << 20;

  explicit DirectoryBackend(std::filesystem::path root, bool sync = true);
  void write(const std::string& name, const std::vector<std::uint8_t>& bytes) override;
  std::optional<std::vector<std::uint8_t>> read(const std::string& name) const override;
  bool exists(const std::string& name) const override;
  std::filesystem::path path_of(const std::string& name, std::size_t chunk = 0) const;

 private:
  std::filesystem::path root_;
  bool sync_;
};

struct BlobStats {
  std::uint64_t puts = 0;
  std::uint64_t gets = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t bytes_read = 0;
};

class BlobStore {
 public:
  explicit BlobStore(std::unique_ptr<BlobBackend> backend);

  static BlobKey make_key(const CoVarKey& covar, Timestamp t,
                          const SerializedComponent& payload);

  // Computes the key and writes. Throws StorageError.
  BlobKey put(const CoVarKey& covar, Timestamp t, const SerializedComponent& payload);
  // Writes under a precomputed key. A key that already holds a healthy blob
  // cannot be rewritten; a poisoned or damaged one can. Throws StorageError.
  void put(const BlobKey& key, const SerializedComponent& payload);
  // Throws CorruptBlob (poisoned, damaged, digest mismatch) or IoError (absent).
  SerializedComponent get(const BlobKey& key);
  // Throws UnknownKey.
  void poison(const BlobKey& key);
  // Cheap health check: present and not poisoned. Does not verify digest.
  bool probe(const BlobKey& key) const;

  BlobStats stats() const;
  void reset_stats();
  // Fault injection: make every put fail with StorageError.
  void set_fail_puts(bool fail) { fail_puts_ = fail; }
  BlobBackend& backend() { return *backend_; }

 private:
  bool healthy(const BlobKey& key) const;

  std::unique_ptr<BlobBackend> backend_;
  std::set<std::string> poisoned_;
  BlobStats stats_;
  bool fail_puts_ = false;
  mutable std::mutex mu_;
};

}  // namespace chronoshift
