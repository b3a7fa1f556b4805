#include <gtest/gtest.h>

#include <filesystem>

#include "chronoshift/config.hpp"
#include "chronoshift/errors.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

TEST(Config, DefaultsAndParse) {
  Config d = Config::parse("");
  EXPECT_EQ(d, Config{});
  Config c = Config::parse(
      "# comment\n\nsnapshot_mode = recompute\ncheck_all=true\nhash_fastpath = false\n"
      "seed = 42\nmisbehaving = list, opaque:gen\nself_heal = true\nfsync = false\n");
  EXPECT_EQ(c.snapshot_mode, SnapshotMode::kRecompute);
  EXPECT_TRUE(c.check_all);
  EXPECT_FALSE(c.hash_fastpath);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.misbehaving, (std::set<std::string>{"list", "opaque:gen"}));
  EXPECT_TRUE(c.self_heal);
  EXPECT_FALSE(c.fsync);
  EXPECT_EQ(Config::parse(c.to_string()), c);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse("colour = blue"), SpecError);
  EXPECT_THROW(Config::parse("check_all = maybe"), SpecError);
  EXPECT_THROW(Config::parse("seed = -1"), SpecError);
  EXPECT_THROW(Config::parse("seed = 12abc"), SpecError);
  EXPECT_THROW(Config::parse("snapshot_mode = lazy"), SpecError);
  EXPECT_THROW(Config::parse("no equals sign"), SpecError);
}

TEST(Config, SaveAndLoad) {
  auto dir = testing::temp_dir("config");
  Config c;
  c.seed = 7;
  c.misbehaving = {"map"};
  c.save(dir / "config");
  EXPECT_EQ(Config::load(dir / "config"), c);
  EXPECT_THROW(Config::load(dir / "absent"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace chronoshift
