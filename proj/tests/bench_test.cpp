#include <gtest/gtest.h>

#include "chronoshift/bench.hpp"
#include "chronoshift/codec.hpp"
#include "chronoshift/errors.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

TEST(Bench, LinearFitRecoversALine) {
  std::vector<double> xs, ys;
  for (int i = 0; i < 50; ++i) {
    xs.push_back(i);
    ys.push_back(3.5 * i + 10);
  }
  LinearFit f = linear_fit(xs, ys);
  EXPECT_NEAR(f.slope, 3.5, 1e-9);
  EXPECT_NEAR(f.intercept, 10, 1e-9);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  ys[25] += 400;
  EXPECT_LT(linear_fit(xs, ys).r_squared, 0.99);
  EXPECT_EQ(linear_fit({1}, {2}).slope, 0);
}

TEST(Bench, ParseWorkloadSpec) {
  WorkloadSpec s = WorkloadSpec::parse(
      "# comment\nkind = synthetic\ncovariables=4\nelements=10\nelement_bytes=8\ncells=6\n"
      "touch=2\nseed=3\nundo=2\ncheck_all=false\nsnapshot_mode=recompute\n");
  EXPECT_EQ(s.covariables, 4u);
  EXPECT_EQ(s.touch, 2u);
  EXPECT_FALSE(s.check_all);
  EXPECT_EQ(s.snapshot_mode, SnapshotMode::kRecompute);
  WorkloadSpec c = WorkloadSpec::parse("undo=0\n%% first\na = 1\n%%\nb = a\n");
  EXPECT_EQ(c.kind, WorkloadKind::kCells);
  ASSERT_EQ(c.cell_blocks.size(), 2u);
  EXPECT_THROW(WorkloadSpec::parse("touch=9\ncovariables=2"), SpecError);
  EXPECT_THROW(WorkloadSpec::parse("cells=-3"), SpecError);
  EXPECT_THROW(WorkloadSpec::parse("flavour=x"), SpecError);
  EXPECT_THROW(WorkloadSpec::parse("kind=cells"), SpecError);
}

TEST(Bench, SyntheticCellsShape) {
  WorkloadSpec s;
  s.covariables = 3;
  s.elements = 5;
  s.cells = 4;
  auto cells = synthetic_cells(s);
  ASSERT_EQ(cells.size(), 7u);
  State st;
  for (std::size_t i = 0; i < 3; ++i) testing::exec(st, cells[i]);
  EXPECT_EQ(st.ns.size(), 3u);
  EXPECT_EQ(st.heap.at(*st.ns.lookup("v0")).items.size(), 5u);
}

// The full-dump baseline is modelled from per-Co-variable sizes; check it
// against actually re-encoding every Co-variable after each cell.
TEST(Bench, FullDumpModelMatchesReencoding) {
  WorkloadSpec s;
  s.covariables = 5;
  s.elements = 20;
  s.element_bytes = 16;
  s.cells = 12;
  s.check_all = false;
  BenchResult r = run_bench(s);
  auto cells = synthetic_cells(s);
  ASSERT_EQ(r.rows.size(), cells.size());
  Engine e;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    e.run_cell(cells[i]);
    std::uint64_t full = 0;
    for (const auto& covar : partition(e.state())) {
      full += std::get<SerializedComponent>(encode(e.state(), covar.key.members())).bytes.size();
    }
    ASSERT_EQ(r.rows[i].full_dump_bytes, full) << "cell " << i;
  }
}

TEST(Bench, SmallSyntheticWorkloadRatios) {
  WorkloadSpec s;
  s.covariables = 10;
  s.elements = 50;
  s.element_bytes = 100;
  s.cells = 20;
  BenchResult r = run_bench(s);
  EXPECT_EQ(r.rows.size(), 30u);
  EXPECT_LT(r.total_incremental_bytes * 4, r.total_full_dump_bytes);
  EXPECT_GT(r.undo_loaded_bytes, 0u);
  EXPECT_LT(r.undo_loaded_bytes * 5, r.undo_full_dump_bytes);
  EXPECT_EQ(r.undo_cells_replayed, 0u);
  EXPECT_EQ(r.rebuilds_pruned, 20u);
  EXPECT_EQ(r.rebuilds_check_all, 200u);
  std::string csv = r.csv();
  EXPECT_EQ(csv.rfind("index,t,phase,", 0), 0u);
  EXPECT_NE(csv.find("# storage_ratio="), std::string::npos);
}

TEST(Bench, ScalabilityWorkloadIsLinear) {
  WorkloadSpec s;
  s.kind = WorkloadKind::kScalability;
  s.cells = 200;
  s.undo = 0;
  BenchResult r = run_bench(s);
  EXPECT_EQ(r.rows.size(), 200u);
  EXPECT_GT(r.metadata_fit.slope, 0);
  EXPECT_GE(r.metadata_fit.r_squared, 0.99);
  EXPECT_EQ(r.deep_diff_depth, 199u);
}

TEST(Bench, CellBlocksWorkload) {
  WorkloadSpec s = WorkloadSpec::parse("%%\na = list(1)\n%%\nappend(a, 2)\n%%\nappend(a, 3)\n");
  BenchResult r = run_bench(s);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].phase, "cell");
  EXPECT_GT(r.undo_loaded_bytes, 0u);
}

}  // namespace
}  // namespace chronoshift
