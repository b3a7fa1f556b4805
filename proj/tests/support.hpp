#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "chronoshift/checkpoint_graph.hpp"
#include "chronoshift/errors.hpp"
#include "chronoshift/fuzz.hpp"
#include "chronoshift/heap.hpp"
#include "chronoshift/interpreter.hpp"
#include "chronoshift/script.hpp"
#include "chronoshift/session.hpp"

namespace chronoshift::testing {

// Runs `source` against `state` and fails the test on any script error.
inline AccessLog exec(State& state, const std::string& source, std::uint64_t seed = 0) {
  Rng rng(seed);
  ExecResult r = execute(parse(source), state, rng);
  EXPECT_FALSE(r.error) << *r.error << "\n" << source;
  return r.log;
}

inline State make_state(const std::string& source) {
  State s;
  exec(s, source);
  return s;
}

// From-scratch replay of every cell on the root path of `t`.
inline State replay_path(const CheckpointGraph& graph, Timestamp t, std::uint64_t seed = 0) {
  State s;
  Rng rng(seed);
  for (Timestamp n : graph.path_from_root(t)) {
    if (n == kRootTimestamp) continue;
    CellProgram program;
    try {
      program = parse(graph.node(n).code);
    } catch (const SyntaxError&) {
      continue;  // committed with an empty delta
    }
    execute(program, s, rng);
    collect_garbage(s);
  }
  return s;
}

// The two-branch session used throughout the tests:
//
//   t1  df and gmm are created (independent)
//   t2  gmm is fitted on df
//   t3  plot is derived from gmm
//   (checkout t1)
//   t4  gmm is refitted differently
//   t5  plot is derived from the new gmm
struct BranchScenario {
  Engine engine;
  Timestamp t1 = 0, t2 = 0, t3 = 0, t4 = 0, t5 = 0;

  explicit BranchScenario(Config config = {}) : engine(config) {
    t1 = run("df = list(1, 2, 3)\ngmm = record{k: 0, fitted: false}");
    t2 = run("gmm.k = len(df)\ngmm.fitted = true");
    t3 = run("plot = list(gmm.k * 2)");
    engine.checkout(t1);
    t4 = run("gmm.k = 7");
    t5 = run("plot = list(gmm.k * 3, \"other\")");
  }

  Timestamp run(const std::string& source) {
    CellResult r = engine.run_cell(source);
    EXPECT_FALSE(r.error) << *r.error;
    return r.t;
  }

  const VersionedCoVariable& output(Timestamp t, const CoVarKey& key) const {
    const VersionedCoVariable* v = engine.graph().node(t).find_output(key);
    EXPECT_NE(v, nullptr) << key.str() << " @t" << t;
    return *v;
  }
};

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() /
           ("chronoshift-" + tag + "-" + std::to_string(rng()));
  std::filesystem::create_directories(p);
  return p;
}

// Cell sources from generated fuzz traces; a convenient corpus of realistic
// programs. Deterministic unless `nondet_rate` is set.
inline std::vector<std::string> generated_cells(std::size_t traces, std::uint64_t seed,
                                                double nondet_rate = 0.0) {
  FuzzOptions options;
  options.nondet_rate = nondet_rate;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < traces; ++i) {
    for (const auto& a : generate_trace(seed + i, options).actions) {
      if (a.kind == TraceAction::Kind::kCell) out.push_back(a.source);
    }
  }
  return out;
}

}  // namespace chronoshift::testing
