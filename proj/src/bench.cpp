#include "chronoshift/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "chronoshift/errors.hpp"
#include "chronoshift/session.hpp"

namespace chronoshift {
namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw SpecError("workload: '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

// Full-dump baseline model: the encoded size of every live Co-variable.
// Unchanged Co-variables encode to the same bytes, so sizes are carried
// forward instead of re-encoding the whole state after every cell.
class FullDumpModel {
 public:
  void apply(const CellResult& r) {
    for (auto it = sizes_.begin(); it != sizes_.end();) {
      bool evicted = it->first.intersects(r.delta.deleted_names);
      for (const auto& u : r.delta.updated) evicted = evicted || it->first.intersects(u.covar.key);
      it = evicted ? sizes_.erase(it) : std::next(it);
    }
    for (const auto& u : r.delta.updated) {
      auto b = r.blob_bytes.find(u.covar.key);
      sizes_[u.covar.key] = b == r.blob_bytes.end() ? 0 : b->second;
    }
  }
  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (const auto& [key, size] : sizes_) sum += size;
    return sum;
  }

 private:
  std::map<CoVarKey, std::uint64_t> sizes_;
};

std::vector<std::string> scalability_cells(const WorkloadSpec& spec) {
  std::vector<std::string> out;
  const std::size_t k = std::max<std::size_t>(1, spec.covariables);
  for (std::size_t i = 0; i < spec.cells; ++i) {
    out.push_back("v" + std::to_string(i % k) + " = list(" + std::to_string(i) + ", \"c" +
                  std::to_string(i) + "\")");
  }
  return out;
}

std::string phase_of(const WorkloadSpec& spec, std::size_t index) {
  switch (spec.kind) {
    case WorkloadKind::kSynthetic: return index < spec.covariables ? "setup" : "mutate";
    case WorkloadKind::kScalability:
    case WorkloadKind::kCells: return "cell";
  }
  return "cell";
}

}  // namespace

WorkloadSpec WorkloadSpec::parse(const std::string& text) {
  WorkloadSpec spec;
  bool kind_given = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool in_cells = false;
  std::string block;
  auto flush = [&] {
    if (in_cells && !trim(block).empty()) spec.cell_blocks.push_back(block);
    block.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("%%", 0) == 0) {
      flush();
      in_cells = true;
      continue;
    }
    if (in_cells) {
      block += line + "\n";
      continue;
    }
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw SpecError("workload line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key == "kind") {
      kind_given = true;
      if (value == "synthetic") {
        spec.kind = WorkloadKind::kSynthetic;
      } else if (value == "scalability") {
        spec.kind = WorkloadKind::kScalability;
      } else if (value == "cells") {
        spec.kind = WorkloadKind::kCells;
      } else {
        throw SpecError("workload: unknown kind '" + value + "'");
      }
    } else if (key == "covariables") {
      spec.covariables = parse_u64(key, value);
    } else if (key == "elements") {
      spec.elements = parse_u64(key, value);
    } else if (key == "element_bytes") {
      spec.element_bytes = parse_u64(key, value);
    } else if (key == "cells") {
      spec.cells = parse_u64(key, value);
    } else if (key == "touch") {
      spec.touch = parse_u64(key, value);
    } else if (key == "seed") {
      spec.seed = parse_u64(key, value);
    } else if (key == "undo") {
      spec.undo = parse_u64(key, value);
    } else if (key == "check_all") {
      if (value != "true" && value != "false") throw SpecError("workload: check_all expects true or false");
      spec.check_all = value == "true";
    } else if (key == "snapshot_mode") {
      if (value == "materialized") {
        spec.snapshot_mode = SnapshotMode::kMaterialized;
      } else if (value == "recompute") {
        spec.snapshot_mode = SnapshotMode::kRecompute;
      } else {
        throw SpecError("workload: unknown snapshot_mode '" + value + "'");
      }
    } else {
      throw SpecError("workload: unknown key '" + key + "'");
    }
  }
  flush();
  if (!spec.cell_blocks.empty() && !kind_given) spec.kind = WorkloadKind::kCells;
  if (spec.kind == WorkloadKind::kCells && spec.cell_blocks.empty()) {
    throw SpecError("workload: kind=cells needs at least one %% cell block");
  }
  if (spec.kind == WorkloadKind::kSynthetic) {
    if (spec.covariables == 0) throw SpecError("workload: covariables must be positive");
    if (spec.touch == 0 || spec.touch > spec.covariables) {
      throw SpecError("workload: touch must be between 1 and covariables");
    }
    if (spec.elements == 0) throw SpecError("workload: elements must be positive");
  }
  return spec;
}

std::vector<std::string> synthetic_cells(const WorkloadSpec& spec) {
  std::vector<std::string> out;
  const std::string fill = std::to_string(spec.element_bytes);
  for (std::size_t k = 0; k < spec.covariables; ++k) {
    const std::string v = "v" + std::to_string(k);
    out.push_back(v + " = list()\nfor i in 0.." + std::to_string(spec.elements) + " { append(" +
                  v + ", \"x\" * " + fill + ") }\ndel i");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(spec.covariables);
  for (std::size_t c = 0; c < spec.cells; ++c) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    std::string src;
    for (std::size_t j = 0; j < spec.touch; ++j) {
      src += "v" + std::to_string(order[j]) + "[" + std::to_string(c % spec.elements) +
             "] = \"y\" * " + fill + "\n";
    }
    out.push_back(src);
  }
  return out;
}

LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  LinearFit fit;
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n < 2) return fit;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

BenchResult run_bench(const WorkloadSpec& spec) {
  std::vector<std::string> cells;
  switch (spec.kind) {
    case WorkloadKind::kSynthetic: cells = synthetic_cells(spec); break;
    case WorkloadKind::kScalability: cells = scalability_cells(spec); break;
    case WorkloadKind::kCells: cells = spec.cell_blocks; break;
  }

  Config config;
  config.snapshot_mode = spec.snapshot_mode;
  config.fsync = false;
  Engine engine(config);
  FullDumpModel dump;
  BenchResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CellResult r = engine.run_cell(cells[i]);
    dump.apply(r);
    BenchRow row;
    row.index = i;
    row.t = r.t;
    row.phase = phase_of(spec, i);
    row.incremental_bytes = r.bytes_written;
    row.full_dump_bytes = dump.total();
    row.metadata_bytes = engine.graph().metadata_bytes();
    row.vargraph_rebuilds = engine.detector().last().vargraph_rebuilds;
    row.vargraph_creates = engine.detector().last().vargraph_creates;
    row.candidates = engine.detector().last().candidates_checked;
    row.detect_ms = r.detect_ms;
    row.commit_ms = r.commit_ms;
    result.total_incremental_bytes += row.incremental_bytes;
    result.total_full_dump_bytes += row.full_dump_bytes;
    if (row.phase != "setup") result.rebuilds_pruned += row.vargraph_rebuilds;
    result.rows.push_back(std::move(row));
  }

  if (spec.check_all && spec.kind != WorkloadKind::kScalability) {
    Config ablation = config;
    ablation.check_all = true;
    Engine baseline(ablation);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      baseline.run_cell(cells[i]);
      if (phase_of(spec, i) != "setup") {
        result.rebuilds_check_all += baseline.detector().last().vargraph_rebuilds;
      }
    }
  }

  if (spec.kind == WorkloadKind::kScalability) {
    std::vector<double> xs, ys;
    for (const auto& row : result.rows) {
      xs.push_back(static_cast<double>(row.t));
      ys.push_back(static_cast<double>(row.metadata_bytes));
    }
    result.metadata_fit = linear_fit(xs, ys);
    if (engine.graph().size() > 2) {
      const Timestamp head = engine.head();
      const Timestamp first = 1;
      result.deep_diff_depth = engine.graph().node(head).depth - engine.graph().node(first).depth;
      double best = 0;
      for (int rep = 0; rep < 5; ++rep) {
        auto started = std::chrono::steady_clock::now();
        StateDiff d = engine.graph().diff(head, first);
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              started)
                        .count();
        if (rep == 0 || ms < best) best = ms;
        (void)d;
      }
      result.deep_diff_ms = best;
    }
  }

  if (spec.undo > 0 && engine.graph().size() > 1) {
    Timestamp target = engine.head();
    for (std::size_t i = 0; i < spec.undo && target != kRootTimestamp; ++i) {
      target = engine.graph().node(target).parent;
    }
    CheckoutReport report = engine.checkout(target);
    result.undo_loaded_bytes = report.loaded_bytes;
    result.undo_cells_replayed = report.cells_replayed;
    result.undo_ms = report.duration_ms;
    result.undo_full_dump_bytes = target == kRootTimestamp ? 0 : result.rows[target - 1].full_dump_bytes;
  }
  return result;
}

std::string BenchResult::csv() const {
  std::ostringstream out;
  out << "index,t,phase,incremental_bytes,full_dump_bytes,metadata_bytes,vargraph_rebuilds,"
         "vargraph_creates,candidates,detect_ms,commit_ms\n";
  for (const auto& r : rows) {
    out << r.index << ',' << r.t << ',' << r.phase << ',' << r.incremental_bytes << ','
        << r.full_dump_bytes << ',' << r.metadata_bytes << ',' << r.vargraph_rebuilds << ','
        << r.vargraph_creates << ',' << r.candidates << ',' << r.detect_ms << ',' << r.commit_ms
        << '\n';
  }
  out << "# total_incremental_bytes=" << total_incremental_bytes << '\n';
  out << "# total_full_dump_bytes=" << total_full_dump_bytes << '\n';
  if (total_full_dump_bytes > 0) {
    out << "# storage_ratio=" << static_cast<double>(total_incremental_bytes) /
                                     static_cast<double>(total_full_dump_bytes)
        << '\n';
  }
  out << "# undo_loaded_bytes=" << undo_loaded_bytes << '\n';
  out << "# undo_full_dump_bytes=" << undo_full_dump_bytes << '\n';
  out << "# undo_cells_replayed=" << undo_cells_replayed << '\n';
  out << "# undo_ms=" << undo_ms << '\n';
  out << "# rebuilds_pruned=" << rebuilds_pruned << '\n';
  out << "# rebuilds_check_all=" << rebuilds_check_all << '\n';
  if (deep_diff_depth > 0) {
    out << "# metadata_slope=" << metadata_fit.slope << '\n';
    out << "# metadata_r_squared=" << metadata_fit.r_squared << '\n';
    out << "# deep_diff_depth=" << deep_diff_depth << '\n';
    out << "# deep_diff_ms=" << deep_diff_ms << '\n';
  }
  return out.str();
}

}  // namespace chronoshift
