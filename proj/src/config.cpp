#include "chronoshift/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "chronoshift/errors.hpp"

namespace chronoshift {
namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw SpecError("config: '" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "snapshot_mode") {
      if (value == "materialized") {
        c.snapshot_mode = SnapshotMode::kMaterialized;
      } else if (value == "recompute") {
        c.snapshot_mode = SnapshotMode::kRecompute;
      } else {
        throw SpecError("config: unknown snapshot_mode '" + value + "'");
      }
    } else if (key == "check_all") {
      c.check_all = parse_bool(key, value);
    } else if (key == "hash_fastpath") {
      c.hash_fastpath = parse_bool(key, value);
    } else if (key == "seed") {
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), c.seed);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw SpecError("config: bad seed '" + value + "'");
      }
    } else if (key == "misbehaving") {
      c.misbehaving.clear();
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (!item.empty()) c.misbehaving.insert(item);
      }
    } else if (key == "self_heal") {
      c.self_heal = parse_bool(key, value);
    } else if (key == "fsync") {
      c.fsync = parse_bool(key, value);
    } else {
      throw SpecError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

std::string Config::to_string() const {
  std::ostringstream out;
  out << "snapshot_mode=" << (snapshot_mode == SnapshotMode::kMaterialized ? "materialized" : "recompute")
      << '\n';
  out << "check_all=" << (check_all ? "true" : "false") << '\n';
  out << "hash_fastpath=" << (hash_fastpath ? "true" : "false") << '\n';
  out << "seed=" << seed << '\n';
  out << "misbehaving=";
  bool first = true;
  for (const auto& m : misbehaving) {
    out << (first ? "" : ",") << m;
    first = false;
  }
  out << '\n';
  out << "self_heal=" << (self_heal ? "true" : "false") << '\n';
  out << "fsync=" << (fsync ? "true" : "false") << '\n';
  return out.str();
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << to_string();
  if (!out) throw IoError("cannot write config " + path.string());
}

}  // namespace chronoshift
