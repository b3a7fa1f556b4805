#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "chronoshift/heap.hpp"
#include "chronoshift/script.hpp"

namespace chronoshift {

// Root-name accesses observed while a cell ran. Only statements that actually
// executed contribute.
struct AccessLog {
  std::set<std::string> read_names;
  std::set<std::string> written_names;
  std::set<std::string> deleted_names;
  bool nondeterministic = false;

  // read ∪ written ∪ deleted
  std::set<std::string> accessed() const;
};

struct ExecResult {
  AccessLog log;
  // Rendering of the last bare-expression statement, if any.
  std::optional<std::string> display;
  // Set when a statement failed. Mutations made before it persist.
  std::optional<std::string> error;
};

// Per-session pseudo random source behind rand().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  double next_unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

 private:
  std::mt19937_64 engine_;
};

// Runs `program` against `state`. Never throws for script-level failures;
// those are reported in ExecResult::error.
ExecResult execute(const CellProgram& program, State& state, Rng& rng);

// Runs `program` in a scratch state seeded only with `inputs` (fragments as
// produced by extract_component/decode). Every name in `required` must be
// bound by some input, else MissingDependency. The caller's state is never
// touched. Runtime errors inside the cell are not failures: the scratch
// state reflects the same partial execution the original run produced.
State replay_in_sandbox(const CellProgram& program,
                        const std::vector<const State*>& inputs,
                        const std::set<std::string>& required, Rng& rng);

}  // namespace chronoshift
