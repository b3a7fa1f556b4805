#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "chronoshift/checkpoint_graph.hpp"

namespace chronoshift {

// Session settings, persisted as a plain-text `key=value` file.
//
//   snapshot_mode = materialized | recompute
//   check_all     = true | false   (ablation: disable candidate pruning)
//   hash_fastpath = true | false
//   seed          = <u64>          (rand() stream)
//   misbehaving   = comma-separated class names, e.g. list,opaque:gen
//   self_heal     = true | false   (rewrite recomputed damaged blobs)
//   fsync         = true | false
struct Config {
  SnapshotMode snapshot_mode = SnapshotMode::kMaterialized;
  bool check_all = false;
  bool hash_fastpath = true;
  std::uint64_t seed = 0;
  std::set<std::string> misbehaving;
  bool self_heal = false;
  bool fsync = true;

  // Throws SpecError on unknown keys or malformed values. Blank lines and
  // `#` comments are ignored; missing keys keep their defaults.
  static Config parse(const std::string& text);
  std::string to_string() const;

  // Throws IoError / SpecError.
  static Config load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const Config&) const = default;
};

}  // namespace chronoshift
