#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "chronoshift/blob_store.hpp"
#include "chronoshift/errors.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

namespace fs = std::filesystem;

SerializedComponent payload(std::size_t n, std::uint8_t seed = 1) {
  SerializedComponent p;
  p.bytes.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.bytes[i] = static_cast<std::uint8_t>(seed + i * 31);
  return p;
}

TEST(BlobStore, PutGetAndStats) {
  BlobStore store(std::make_unique<MemoryBackend>());
  BlobKey k = store.put(CoVarKey{"a"}, 3, payload(100));
  EXPECT_EQ(k.t, 3u);
  EXPECT_EQ(k.digest_hex().size(), 16u);
  EXPECT_EQ(store.get(k), payload(100));
  EXPECT_TRUE(store.probe(k));
  BlobStats st = store.stats();
  EXPECT_EQ(st.puts, 1u);
  EXPECT_EQ(st.gets, 1u);
  EXPECT_GE(st.bytes_written, 100u);
  EXPECT_GE(st.bytes_read, 100u);
  store.reset_stats();
  EXPECT_EQ(store.stats().gets, 0u);
}

TEST(BlobStore, KeysDependOnIdentityTimeAndPayload) {
  BlobKey a = BlobStore::make_key(CoVarKey{"a"}, 1, payload(10));
  EXPECT_EQ(a, BlobStore::make_key(CoVarKey{"a"}, 1, payload(10)));
  EXPECT_NE(a.digest, BlobStore::make_key(CoVarKey{"b"}, 1, payload(10)).digest);
  EXPECT_NE(a.digest, BlobStore::make_key(CoVarKey{"a"}, 2, payload(10)).digest);
  EXPECT_NE(a.digest, BlobStore::make_key(CoVarKey{"a"}, 1, payload(10, 2)).digest);
}

TEST(BlobStore, PoisonAndRewrite) {
  BlobStore store(std::make_unique<MemoryBackend>());
  BlobKey k = store.put(CoVarKey{"a"}, 1, payload(64));
  EXPECT_THROW(store.put(k, payload(64)), StorageError);  // immutable while healthy
  store.poison(k);
  EXPECT_FALSE(store.probe(k));
  EXPECT_THROW(store.get(k), CorruptBlob);
  store.put(k, payload(64));
  EXPECT_EQ(store.get(k), payload(64));
  BlobKey ghost = BlobStore::make_key(CoVarKey{"z"}, 9, payload(1));
  EXPECT_THROW(store.poison(ghost), UnknownKey);
  EXPECT_THROW(store.get(ghost), IoError);
  EXPECT_FALSE(store.probe(ghost));
}

TEST(BlobStore, DamagedBytesFailDigestCheck) {
  auto backend = std::make_unique<MemoryBackend>();
  MemoryBackend* raw = backend.get();
  BlobStore store(std::move(backend));
  BlobKey k = store.put(CoVarKey{"a"}, 1, payload(64));
  auto bytes = *raw->read(k.digest_hex());
  bytes[bytes.size() / 2] ^= 0xff;
  raw->overwrite(k.digest_hex(), bytes);
  EXPECT_TRUE(store.probe(k));  // probe is cheap and cannot tell
  EXPECT_THROW(store.get(k), CorruptBlob);
  bytes.resize(10);
  raw->overwrite(k.digest_hex(), bytes);
  EXPECT_THROW(store.get(k), CorruptBlob);
  store.put(k, payload(64));  // damaged blobs may be rewritten
  EXPECT_EQ(store.get(k), payload(64));
}

TEST(BlobStore, FailingPutsRaiseStorageError) {
  BlobStore store(std::make_unique<MemoryBackend>());
  store.set_fail_puts(true);
  EXPECT_THROW(store.put(CoVarKey{"a"}, 1, payload(8)), StorageError);
}

TEST(BlobStore, DirectoryBackendLayoutAndChunking) {
  fs::path root = testing::temp_dir("blobs");
  BlobStore store(std::make_unique<DirectoryBackend>(root, false));
  const std::size_t big = 2 * DirectoryBackend::kChunkBytes + 123;
  BlobKey k = store.put(CoVarKey{"big"}, 1, payload(big));
  DirectoryBackend probe(root, false);
  std::string hex = k.digest_hex();
  EXPECT_EQ(probe.path_of(hex), root / hex.substr(0, 2) / hex);
  EXPECT_TRUE(fs::exists(probe.path_of(hex, 0)));
  EXPECT_TRUE(fs::exists(probe.path_of(hex, 1)));
  EXPECT_TRUE(fs::exists(probe.path_of(hex, 2)));
  EXPECT_FALSE(fs::exists(probe.path_of(hex, 3)));
  EXPECT_EQ(store.get(k), payload(big));

  // A reopened store sees the same bytes.
  BlobStore again(std::make_unique<DirectoryBackend>(root, false));
  EXPECT_EQ(again.get(k), payload(big));

  // Truncating a chunk is detected.
  fs::resize_file(probe.path_of(hex, 1), 5);
  EXPECT_THROW(again.get(k), CorruptBlob);
  fs::remove(probe.path_of(hex, 0));
  EXPECT_THROW(again.get(k), IoError);
  fs::remove_all(root);
}

TEST(BlobStore, ConcurrentGets) {
  BlobStore store(std::make_unique<MemoryBackend>());
  std::vector<BlobKey> keys;
  for (int i = 0; i < 16; ++i) {
    keys.push_back(store.put(CoVarKey{"v" + std::to_string(i)}, 1, payload(1000, i)));
  }
  std::vector<std::thread> threads;
  std::atomic<int> bad = 0;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int r = 0; r < 200; ++r) {
        int i = (t + r) % 16;
        if (!(store.get(keys[i]) == payload(1000, i))) ++bad;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(bad, 0);
  EXPECT_EQ(store.stats().gets, 1600u);
}

}  // namespace
}  // namespace chronoshift
