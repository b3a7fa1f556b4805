#include <gtest/gtest.h>

#include <algorithm>

#include "chronoshift/checkout.hpp"
#include "chronoshift/errors.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

using testing::BranchScenario;
using testing::replay_path;

ObjectIdSet ids_of(const State& s, const std::vector<std::string>& names) {
  return reachable_from(s, names);
}

TEST(Checkout, HeadIsANoop) {
  BranchScenario s;
  State before = extract_component(s.engine.state(), s.engine.state().ns.names());
  CheckoutReport r = s.engine.checkout(s.t5);
  EXPECT_TRUE(r.noop);
  EXPECT_EQ(r.loaded_bytes, 0u);
  EXPECT_EQ(r.cells_replayed, 0u);
  EXPECT_TRUE(deep_equal(before, s.engine.state()));
}

TEST(Checkout, BranchSwitchLoadsOnlyDivergedCoVariables) {
  BranchScenario s;
  ObjectIdSet df_before = ids_of(s.engine.state(), {"df"});
  s.engine.store().reset_stats();
  CheckoutReport r = s.engine.checkout(s.t3);
  EXPECT_EQ(r.from, s.t5);
  EXPECT_EQ(r.covariables_loaded, 2u);
  EXPECT_EQ(r.blobs_loaded, 2u);
  EXPECT_EQ(r.cells_replayed, 0u);
  EXPECT_EQ(s.engine.store().stats().gets, 2u);
  EXPECT_EQ(ids_of(s.engine.state(), {"df"}), df_before);  // untouched objects
  EXPECT_EQ(s.engine.head(), s.t3);
  EXPECT_TRUE(deep_equal(s.engine.state(), replay_path(s.engine.graph(), s.t3)));
}

TEST(Checkout, PlanPredictsLoadsAndDeletes) {
  BranchScenario s;
  CheckoutPlan p = s.engine.plan(s.t3);
  EXPECT_EQ(p.loads, (std::vector<VersionRef>{{CoVarKey{"gmm"}, s.t2}, {CoVarKey{"plot"}, s.t3}}));
  EXPECT_TRUE(p.deletes.empty());
  EXPECT_TRUE(p.replayed_cells.empty());
  CheckoutPlan to_root = s.engine.plan(kRootTimestamp);
  EXPECT_TRUE(to_root.loads.empty());
  EXPECT_EQ(to_root.deletes.size(), 3u);
}

TEST(Checkout, PoisonedOutputIsRecomputedByOneReplay) {
  BranchScenario s;
  s.engine.store().poison(*s.output(s.t3, CoVarKey{"plot"}).blob);
  CheckoutPlan plan = s.engine.plan(s.t3);
  EXPECT_EQ(plan.replayed_cells, (std::vector<Timestamp>{s.t3}));
  CheckoutReport r = s.engine.checkout(s.t3);
  EXPECT_EQ(r.cells_replayed, 1u);
  EXPECT_EQ(r.replayed, (std::vector<Timestamp>{s.t3}));
  EXPECT_TRUE(deep_equal(s.engine.state(), replay_path(s.engine.graph(), s.t3)));
}

TEST(Checkout, FallbackRecursesThroughPoisonedInputs) {
  BranchScenario s;
  s.engine.store().poison(*s.output(s.t3, CoVarKey{"plot"}).blob);
  s.engine.store().poison(*s.output(s.t2, CoVarKey{"gmm"}).blob);
  CheckoutPlan plan = s.engine.plan(s.t3);
  EXPECT_EQ(plan.replayed_cells, (std::vector<Timestamp>{s.t2, s.t3}));
  CheckoutReport r = s.engine.checkout(s.t3);
  EXPECT_EQ(r.cells_replayed, 2u);
  EXPECT_EQ(r.replayed, (std::vector<Timestamp>{s.t2, s.t3}));
  EXPECT_TRUE(deep_equal(s.engine.state(), replay_path(s.engine.graph(), s.t3)));
}

TEST(Checkout, DamagedBytesFallBackDynamically) {
  BranchScenario s;
  auto* mem = dynamic_cast<MemoryBackend*>(&s.engine.store().backend());
  ASSERT_NE(mem, nullptr);
  const BlobKey& key = *s.output(s.t3, CoVarKey{"plot"}).blob;
  auto bytes = *mem->read(key.digest_hex());
  bytes.back() ^= 1;
  mem->overwrite(key.digest_hex(), bytes);
  EXPECT_TRUE(s.engine.plan(s.t3).replayed_cells.empty());  // probes cannot see it
  CheckoutReport r = s.engine.checkout(s.t3);
  EXPECT_EQ(r.cells_replayed, 1u);
  EXPECT_TRUE(deep_equal(s.engine.state(), replay_path(s.engine.graph(), s.t3)));
}

TEST(Checkout, SelfHealRewritesRecomputedBlobs) {
  Config c;
  c.self_heal = true;
  BranchScenario s(c);
  const BlobKey key = *s.output(s.t3, CoVarKey{"plot"}).blob;
  s.engine.store().poison(key);
  CheckoutReport r = s.engine.checkout(s.t3);
  EXPECT_EQ(r.blobs_healed, 1u);
  EXPECT_TRUE(s.engine.store().probe(key));
  s.engine.checkout(s.t5);
  EXPECT_EQ(s.engine.checkout(s.t3).cells_replayed, 0u);
}

TEST(Checkout, RestoreFailedLeavesEverythingUntouched) {
  Engine e;
  Timestamp t1 = e.run_cell("g = opaque_nondet(\"gen\")\nx = list(1)").t;
  e.run_cell("del g\nappend(x, 2)");
  Timestamp head = e.head();
  State before = extract_component(e.state(), e.state().ns.names());
  ObjectIdSet ids = ids_of(e.state(), e.state().ns.names());
  auto partition = e.detector().current_partition();
  std::uint64_t meta = e.graph().metadata_bytes();
  try {
    e.checkout(t1);
    FAIL() << "expected RestoreFailed";
  } catch (const RestoreFailed& err) {
    EXPECT_NE(std::string(err.what()).find("{g}"), std::string::npos) << err.what();
    EXPECT_EQ(err.exit_code(), ExitCode::kRestoreFailure);
  }
  EXPECT_EQ(e.head(), head);
  EXPECT_TRUE(deep_equal(before, e.state()));
  EXPECT_EQ(ids_of(e.state(), e.state().ns.names()), ids);
  EXPECT_EQ(e.detector().current_partition(), partition);
  EXPECT_EQ(e.graph().metadata_bytes(), meta);
}

TEST(Checkout, DeterministicOpaquesAreRecomputed) {
  Engine e;
  Timestamp t1 = e.run_cell("h = opaque(\"hash\")\nn = 1").t;
  e.run_cell("del h");
  CheckoutReport r = e.checkout(t1);
  EXPECT_EQ(r.cells_replayed, 1u);
  EXPECT_TRUE(deep_equal(e.state(), replay_path(e.graph(), t1)));
}

TEST(Checkout, UnknownTarget) {
  BranchScenario s;
  EXPECT_THROW(s.engine.checkout(99), UnknownTimestamp);
  EXPECT_EQ(s.engine.head(), s.t5);
}

TEST(Checkout, RoundTripsAreIdempotent) {
  BranchScenario s;
  s.engine.checkout(s.t3);
  State at3 = extract_component(s.engine.state(), s.engine.state().ns.names());
  s.engine.checkout(s.t5);
  EXPECT_TRUE(deep_equal(s.engine.state(), replay_path(s.engine.graph(), s.t5)));
  s.engine.checkout(s.t3);
  EXPECT_TRUE(deep_equal(s.engine.state(), at3));
  CheckoutReport again = s.engine.checkout(s.t3);
  EXPECT_TRUE(again.noop);
}

TEST(Checkout, DetectorIsConsistentAfterCheckout) {
  BranchScenario s;
  s.engine.checkout(s.t3);
  EXPECT_EQ(s.engine.detector().current_partition(),
            (std::vector<CoVarKey>{{"df"}, {"gmm"}, {"plot"}}));
  CellResult r = s.engine.run_cell("append(plot, 1)");
  ASSERT_EQ(r.delta.updated.size(), 1u);
  EXPECT_EQ(r.delta.updated[0].covar.key, CoVarKey{"plot"});
  EXPECT_EQ(s.engine.graph().node(r.t).parent, s.t3);
}

TEST(Checkout, RestoreCovariableDirectly) {
  BranchScenario s;
  State plot = restore_covariable(s.engine.graph(), s.engine.store(), {CoVarKey{"plot"}, s.t3});
  EXPECT_TRUE(deep_equal(plot, extract_component(replay_path(s.engine.graph(), s.t3), {"plot"})));
  s.engine.store().poison(*s.output(s.t3, CoVarKey{"plot"}).blob);
  State again = restore_covariable(s.engine.graph(), s.engine.store(), {CoVarKey{"plot"}, s.t3});
  EXPECT_TRUE(deep_equal(plot, again));
}

// Random walks over generated histories, compared against from-scratch replay
// after every checkout.
TEST(Checkout, RandomCheckoutsMatchReplay) {
  auto cells = testing::generated_cells(6, 555);
  Engine e;
  std::mt19937_64 rng(9);
  std::size_t checkouts = 0;
  for (const auto& src : cells) {
    e.run_cell(src);
    if (rng() % 3 == 0) {
      Timestamp target = rng() % e.graph().size();
      e.checkout(target);
      ++checkouts;
      ASSERT_TRUE(deep_equal(e.state(), replay_path(e.graph(), target))) << "t" << target;
    }
  }
  EXPECT_GT(checkouts, 10u);
}

}  // namespace
}  // namespace chronoshift
