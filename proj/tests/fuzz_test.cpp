#include <gtest/gtest.h>

#include "chronoshift/errors.hpp"
#include "chronoshift/fuzz.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

using testing::make_state;

std::vector<std::vector<std::string>> sorted(std::vector<std::vector<std::string>> v) {
  std::sort(v.begin(), v.end());
  return v;
}

TEST(FuzzOracle, ComponentsByHand) {
  State s = make_state("a = list(1)\nb = a\nc = record{x: list(2)}\nd = c.x\ne = 5");
  EXPECT_EQ(sorted(oracle::components(s)),
            (std::vector<std::vector<std::string>>{{"a", "b"}, {"c", "d"}, {"e"}}));
}

TEST(FuzzOracle, SameObjectsComparesIdentity) {
  State s = make_state("a = list(1)\nb = list(2)");
  State copy = extract_component(s, {"a", "b"});
  EXPECT_TRUE(oracle::same_objects(s, copy, {"a", "b"}));
  State other = make_state("a = list(1)\nb = list(2)");
  transplant(extract_component(s, {"b"}), other);  // fresh ids for b
  EXPECT_FALSE(oracle::same_objects(s, other, {"b"}));
}

TEST(Fuzz, CleanEngineSurvivesACampaign) {
  FuzzOptions o;
  o.seed = 21;
  o.traces = 150;
  o.poison_rate = 0.3;
  FuzzReport r = run_fuzz(o);
  EXPECT_TRUE(r.ok()) << r.summary();
  EXPECT_EQ(r.counters.traces, 150u);
  EXPECT_GT(r.counters.cells, 1000u);
  EXPECT_GT(r.counters.checkouts, 100u);
  EXPECT_GT(r.counters.cells_replayed, 0u);
  EXPECT_LT(r.counters.cells_failed * 2, r.counters.cells);
}

TEST(Fuzz, AblationsAndRecomputeModeSurvive) {
  FuzzOptions o;
  o.seed = 99;
  o.traces = 80;
  o.hash_fastpath = false;
  o.snapshot_mode = SnapshotMode::kRecompute;
  FuzzReport r = run_fuzz(o);
  EXPECT_TRUE(r.ok()) << r.summary();
}

TEST(Fuzz, NondeterminismFailsCleanly) {
  FuzzOptions o;
  o.seed = 5;
  o.traces = 150;
  o.nondet_rate = 0.05;
  o.poison_rate = 0.4;
  FuzzReport r = run_fuzz(o);
  EXPECT_TRUE(r.ok()) << r.summary();
  EXPECT_GT(r.counters.restore_failures, 0u);
}

TEST(Fuzz, MutantIsCaughtAndMinimized) {
  FuzzOptions o;
  o.seed = 3;
  o.traces = 300;
  o.mutant_ignore_writes = true;
  FuzzReport r = run_fuzz(o);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.violation->invariant, Invariant::kNoFalseNegatives);
  EXPECT_LE(r.violation->trace.actions.size(), 3u);
  // The minimized repro still reproduces.
  FuzzCounters c;
  auto again = check_trace(r.violation->trace, o, c);
  ASSERT_TRUE(again);
  EXPECT_EQ(again->invariant, Invariant::kNoFalseNegatives);
  // And is clean without the mutant.
  o.mutant_ignore_writes = false;
  EXPECT_FALSE(check_trace(r.violation->trace, o, c));
}

TEST(Fuzz, GenerationIsReproducible) {
  FuzzOptions o;
  Trace a = generate_trace(17, o);
  Trace b = generate_trace(17, o);
  EXPECT_EQ(format_trace(a), format_trace(b));
  EXPECT_NE(format_trace(a), format_trace(generate_trace(18, o)));
}

TEST(Fuzz, ReproFormatRoundTrips) {
  FuzzOptions o;
  o.poison_rate = 0.5;
  o.checkout_rate = 0.5;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Trace t = generate_trace(seed, o);
    std::string text = format_trace(t);
    ASSERT_EQ(format_trace(parse_trace(text)), text);
  }
  Trace manual = parse_trace(
      "# %% @1\na = list(1)\n# %% @2\nappend(a, 2)\n#! poison @2 0 truncate\n#! checkout @1\n");
  ASSERT_EQ(manual.actions.size(), 4u);
  EXPECT_EQ(manual.actions[2].kind, TraceAction::Kind::kPoison);
  EXPECT_TRUE(manual.actions[2].truncate);
  EXPECT_EQ(manual.actions[3].label, 1u);
  EXPECT_THROW(parse_trace("#! teleport @1\n"), SpecError);
  EXPECT_THROW(parse_trace("#! poison @1 x\n"), SpecError);
}

TEST(Fuzz, InvariantNames) {
  EXPECT_EQ(invariant_name(Invariant::kNoFalseNegatives), "no-false-negatives");
  EXPECT_EQ(invariant_name(Invariant::kDiffSoundness), "diff-soundness");
}

}  // namespace
}  // namespace chronoshift
