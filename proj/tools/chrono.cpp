// chrono: git-style front end for a time-travel session.
//
//   chrono init | run [-e SRC | FILE] | repl | log [--dot] | status [--stats]
//          checkout <id> [--json] | bench <spec> | fuzz --seed S --n N
//
// The session directory defaults to ./.chrono and can be overridden with
// --session or the CHRONO_SESSION environment variable.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "chronoshift/bench.hpp"
#include "chronoshift/errors.hpp"
#include "chronoshift/fuzz.hpp"
#include "chronoshift/session.hpp"
#include "json.hpp"

namespace cs = chronoshift;

namespace {

constexpr int kFuzzViolation = 1;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cs::Error("cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

// Splits notebook-style scripts on `# %%` lines.
std::vector<std::string> split_cells(const std::string& text) {
  std::vector<std::string> cells;
  std::string current;
  std::istringstream in(text);
  std::string line;
  bool any_marker = false;
  while (std::getline(in, line)) {
    if (line.rfind("# %%", 0) == 0) {
      if (any_marker || current.find_first_not_of(" \t\r\n") != std::string::npos) {
        cells.push_back(current);
      }
      current.clear();
      any_marker = true;
      continue;
    }
    current += line + "\n";
  }
  if (current.find_first_not_of(" \t\r\n") != std::string::npos) cells.push_back(current);
  return cells;
}

cs::Timestamp parse_timestamp(const std::string& text) {
  std::string digits = text;
  if (!digits.empty() && (digits[0] == 't' || digits[0] == 'T')) digits.erase(0, 1);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    throw cs::Error("bad checkpoint id '" + text + "' (expected tN or N)");
  }
  return std::stoull(digits);
}

std::string first_line(const std::string& code, std::size_t width = 48) {
  std::string line = code.substr(0, code.find('\n'));
  if (line.size() > width) line = line.substr(0, width - 3) + "...";
  if (code.find('\n') != std::string::npos && code.find('\n') + 1 < code.size()) line += " ...";
  return line;
}

std::string delta_label(const cs::CheckpointNode& node) {
  std::string out;
  for (const auto& v : node.delta) {
    out += (out.empty() ? "" : ",") + v.covar.str();
    if (!v.blob) out += "!";
  }
  return out.empty() ? "-" : out;
}

void print_log(const cs::CheckpointGraph& graph, std::ostream& out) {
  std::function<void(cs::Timestamp, const std::string&, bool)> walk =
      [&](cs::Timestamp t, const std::string& prefix, bool last) {
        const auto& node = graph.node(t);
        std::string marker = t == graph.head() ? "* " : "  ";
        if (t == cs::kRootTimestamp) {
          out << marker << "t0 ROOT\n";
        } else {
          out << marker << prefix << (last ? "`-- " : "|-- ") << 't' << t << ' '
              << delta_label(node) << (node.nondeterministic ? " [nondet]" : "") << "  "
              << first_line(node.code) << '\n';
        }
        std::string child_prefix =
            t == cs::kRootTimestamp ? "" : prefix + (last ? "    " : "|   ");
        for (std::size_t i = 0; i < node.children.size(); ++i) {
          walk(node.children[i], child_prefix, i + 1 == node.children.size());
        }
      };
  walk(cs::kRootTimestamp, "", true);
}

void print_status(const cs::Engine& engine, bool stats, std::ostream& out) {
  out << "head: t" << engine.head() << '\n';
  out << "checkpoints: " << engine.graph().size() - 1 << '\n';
  const auto session = engine.graph().session_state(engine.head());
  out << "names:\n";
  for (const auto& [name, id] : engine.state().ns.bindings()) {
    std::string version = "?";
    for (const auto& v : session) {
      if (v.covar.contains(name)) version = v.covar.str() + "@t" + std::to_string(v.t);
    }
    out << "  " << name << " = " << cs::render(engine.state().heap, id) << "    " << version
        << '\n';
  }
  if (stats) {
    const auto& d = engine.detector().totals();
    const auto b = engine.store().stats();
    out << "stats:\n";
    out << "  covariables: " << engine.detector().current_partition().size() << '\n';
    out << "  metadata_bytes: " << engine.graph().metadata_bytes() << '\n';
    out << "  heap_objects: " << engine.state().heap.size() << '\n';
    out << "  vargraph_rebuilds: " << d.vargraph_rebuilds << '\n';
    out << "  vargraph_creates: " << d.vargraph_creates << '\n';
    out << "  blob_bytes_written: " << b.bytes_written << '\n';
    out << "  blob_bytes_read: " << b.bytes_read << '\n';
    out << "  cells_this_process: " << engine.stats().cells << '\n';
    out << "  detect_ms: " << engine.stats().detect_ms << '\n';
    out << "  commit_ms: " << engine.stats().commit_ms << '\n';
  }
}

// Returns false when the cell failed.
bool report_cell(const cs::CellResult& r, bool stats, std::ostream& out) {
  if (r.display) out << *r.display << '\n';
  if (r.error) std::cerr << "error: " << *r.error << '\n';
  for (const auto& w : r.storage_warnings) std::cerr << "warning: blob not stored: " << w << '\n';
  out << "committed t" << r.t << ", " << r.delta.updated.size() << " co-variable"
      << (r.delta.updated.size() == 1 ? "" : "s") << " updated";
  if (!r.delta.deleted_names.empty()) out << ", " << r.delta.deleted_names.size() << " deleted";
  out << '\n';
  if (stats) {
    out << "  detect_ms=" << r.detect_ms << " commit_ms=" << r.commit_ms
        << " total_ms=" << r.detect_ms + r.commit_ms << " bytes_written=" << r.bytes_written
        << '\n';
  }
  return !r.error;
}

void print_checkout(const cs::CheckoutReport& r, bool json, std::ostream& out) {
  if (json) {
    nlohmann::json j = {
        {"from", r.from},
        {"target", r.target},
        {"noop", r.noop},
        {"loaded_bytes", r.loaded_bytes},
        {"blobs_loaded", r.blobs_loaded},
        {"cells_replayed", r.cells_replayed},
        {"covariables_loaded", r.covariables_loaded},
        {"covariables_deleted", r.covariables_deleted},
        {"blobs_healed", r.blobs_healed},
        {"duration_ms", r.duration_ms},
    };
    out << j.dump() << '\n';
    return;
  }
  if (r.noop) {
    out << "already at t" << r.target << '\n';
    return;
  }
  out << "checked out t" << r.target << " (from t" << r.from << "): loaded " << r.blobs_loaded
      << " blob" << (r.blobs_loaded == 1 ? "" : "s") << " (" << r.loaded_bytes << " bytes), replayed "
      << r.cells_replayed << " cell" << (r.cells_replayed == 1 ? "" : "s") << ", deleted "
      << r.covariables_deleted << " co-variable" << (r.covariables_deleted == 1 ? "" : "s")
      << ", " << r.duration_ms << " ms\n";
}

int repl(cs::Engine& engine) {
  std::string cell, line;
  bool failed = false;
  auto flush = [&] {
    if (cell.find_first_not_of(" \t\r\n") != std::string::npos) {
      failed |= !report_cell(engine.run_cell(cell), false, std::cout);
    }
    cell.clear();
  };
  while (std::getline(std::cin, line)) {
    if (cell.empty() && !line.empty() && line[0] == ':') {
      std::istringstream words(line);
      std::string cmd, arg;
      words >> cmd >> arg;
      try {
        if (cmd == ":quit" || cmd == ":q") break;
        if (cmd == ":log") {
          print_log(engine.graph(), std::cout);
        } else if (cmd == ":status") {
          print_status(engine, false, std::cout);
        } else if (cmd == ":checkout") {
          print_checkout(engine.checkout(parse_timestamp(arg)), false, std::cout);
        } else {
          std::cerr << "unknown command " << cmd << " (:checkout N, :log, :status, :quit)\n";
        }
      } catch (const cs::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        failed = true;
      }
      continue;
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
    } else {
      cell += line + "\n";
    }
  }
  flush();
  return failed ? static_cast<int>(cs::ExitCode::kUserError) : 0;
}

std::string session_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CHRONO_SESSION"); env && *env) return env;
  return ".chrono";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chrono - incremental checkpointing and time travel for session state"};
  app.require_subcommand(1);
  std::string session_flag;
  app.add_option("--session", session_flag, "session directory (default $CHRONO_SESSION or .chrono)");

  cs::Config fresh;
  bool recompute = false, no_fastpath = false, no_fsync = false;
  std::string misbehaving;
  auto* init = app.add_subcommand("init", "create or reopen a session");
  init->add_flag("--recompute-snapshots", recompute, "store no snapshots; recompute from deltas");
  init->add_flag("--check-all", fresh.check_all, "ablation: disable candidate pruning");
  init->add_flag("--no-hash-fastpath", no_fastpath, "always build full VarGraphs");
  init->add_option("--seed", fresh.seed, "seed of the rand() stream");
  init->add_option("--misbehaving", misbehaving, "comma-separated classes never serialized");
  init->add_flag("--self-heal", fresh.self_heal, "rewrite recomputed damaged blobs on checkout");
  init->add_flag("--no-fsync", no_fsync, "skip fsync on blob and journal writes");

  std::string inline_source, file;
  bool run_stats = false;
  auto* run = app.add_subcommand("run", "execute cells and checkpoint each");
  run->add_option("-e", inline_source, "cell source");
  run->add_option("file", file, "script; `# %%` lines separate cells");
  run->add_flag("--stats", run_stats, "print per-cell timings");

  auto* repl_cmd = app.add_subcommand("repl", "interactive cells, ended by a blank line");

  bool dot = false;
  auto* log = app.add_subcommand("log", "show the checkpoint tree");
  log->add_flag("--dot", dot, "emit Graphviz");
  auto* export_dot = app.add_subcommand("export-dot", "emit the checkpoint tree as Graphviz");

  bool status_stats = false;
  auto* status = app.add_subcommand("status", "show head, names and statistics");
  status->add_flag("--stats", status_stats, "include counters");

  std::string target;
  bool json = false;
  auto* checkout = app.add_subcommand("checkout", "restore the session to a checkpoint");
  checkout->add_option("id", target, "checkpoint id (tN or N)")->required();
  checkout->add_flag("--json", json, "machine-readable report");

  std::string spec_path;
  auto* bench = app.add_subcommand("bench", "run a workload and print CSV metrics");
  bench->add_option("spec", spec_path, "workload spec file")->required();

  cs::FuzzOptions fuzz_options;
  std::string repro_in, repro_out;
  bool mutant = false, no_minimize = false, fuzz_no_fastpath = false, fuzz_recompute = false;
  auto* fuzz = app.add_subcommand("fuzz", "check invariants on random traces");
  fuzz->add_option("--seed", fuzz_options.seed, "base seed");
  fuzz->add_option("--n", fuzz_options.traces, "number of traces");
  fuzz->add_option("--max-cells", fuzz_options.max_cells, "cells per trace (max)");
  fuzz->add_option("--max-names", fuzz_options.max_names, "variable names per trace (max)");
  fuzz->add_option("--poison-rate", fuzz_options.poison_rate, "probability of a poison step");
  fuzz->add_option("--checkout-rate", fuzz_options.checkout_rate, "probability of a checkout step");
  fuzz->add_option("--nondet-rate", fuzz_options.nondet_rate, "probability of nondeterminism");
  fuzz->add_flag("--mutant", mutant, "enable the ignore-writes detector mutant");
  fuzz->add_flag("--no-hash-fastpath", fuzz_no_fastpath, "always build full VarGraphs");
  fuzz->add_flag("--recompute-snapshots", fuzz_recompute, "fold session states on demand");
  fuzz->add_flag("--no-minimize", no_minimize, "report the violating trace as generated");
  fuzz->add_option("--repro", repro_in, "re-check a repro script instead of generating");
  fuzz->add_option("--repro-out", repro_out, "write the minimized repro here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(cs::ExitCode::kUserError);
  }

  const std::string session = session_path(session_flag);
  try {
    if (*init) {
      fresh.snapshot_mode = recompute ? cs::SnapshotMode::kRecompute : cs::SnapshotMode::kMaterialized;
      fresh.hash_fastpath = !no_fastpath;
      fresh.fsync = !no_fsync;
      if (!misbehaving.empty()) fresh = cs::Config::parse(fresh.to_string() + "misbehaving=" + misbehaving + "\n");
      cs::SessionLock lock(session);
      bool existed = cs::Engine::is_session_dir(session);
      cs::Engine engine = cs::Engine::open(session, fresh);
      std::cout << (existed ? "reopened" : "initialized") << " session " << session << " at t"
                << engine.head() << " (" << engine.graph().size() - 1 << " checkpoints)\n";
      return 0;
    }
    if (*bench) {
      cs::BenchResult result = cs::run_bench(cs::WorkloadSpec::parse(read_file(spec_path)));
      std::cout << result.csv();
      return 0;
    }
    if (*fuzz) {
      fuzz_options.mutant_ignore_writes = mutant;
      fuzz_options.minimize = !no_minimize;
      fuzz_options.hash_fastpath = !fuzz_no_fastpath;
      if (fuzz_recompute) fuzz_options.snapshot_mode = cs::SnapshotMode::kRecompute;
      if (!repro_in.empty()) {
        cs::FuzzCounters counters;
        auto v = cs::check_trace(cs::parse_trace(read_file(repro_in)), fuzz_options, counters);
        if (!v) {
          std::cout << "PASS\n";
          return 0;
        }
        std::cout << "VIOLATION " << cs::invariant_name(v->invariant) << ": " << v->detail << '\n';
        return kFuzzViolation;
      }
      cs::FuzzReport report = cs::run_fuzz(fuzz_options);
      std::cout << report.summary();
      if (report.violation) {
        std::string script = cs::format_trace(report.violation->trace);
        if (!repro_out.empty()) {
          std::ofstream(repro_out) << script;
        } else {
          std::cout << "--- repro ---\n" << script;
        }
        return kFuzzViolation;
      }
      return 0;
    }
    if (!cs::Engine::is_session_dir(session)) {
      throw cs::Error("no session at " + session + " (run `chrono init` first)");
    }
    if (*log || *export_dot) {
      cs::CheckpointGraph graph;
      graph.attach_journal(std::filesystem::path(session) / "graph.log", false);
      if (dot || *export_dot) {
        std::cout << graph.export_dot();
      } else {
        print_log(graph, std::cout);
      }
      return 0;
    }
    cs::SessionLock lock(session);
    cs::Engine engine = cs::Engine::open(session);
    for (const auto& w : engine.open_warnings()) std::cerr << "warning: left unbound: " << w << '\n';
    if (*run) {
      std::vector<std::string> cells;
      if (!inline_source.empty()) {
        cells.push_back(inline_source);
      } else if (!file.empty()) {
        cells = split_cells(read_file(file));
      } else {
        throw cs::Error("run needs -e SRC or FILE");
      }
      bool ok = true;
      for (const auto& c : cells) ok &= report_cell(engine.run_cell(c), run_stats, std::cout);
      return ok ? 0 : static_cast<int>(cs::ExitCode::kUserError);
    }
    if (*repl_cmd) return repl(engine);
    if (*status) {
      print_status(engine, status_stats, std::cout);
      return 0;
    }
    if (*checkout) {
      print_checkout(engine.checkout(parse_timestamp(target)), json, std::cout);
      return 0;
    }
  } catch (const cs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
