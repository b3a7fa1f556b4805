#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support.hpp"

namespace {

namespace fs = std::filesystem;

struct Output {
  int code = -1;
  std::string text;  // stdout and stderr interleaved
};

Output chrono(const fs::path& session, const std::string& args, const std::string& stdin_text = "") {
  std::string cmd = std::string(CHRONO_BIN) + " --session '" + session.string() + "' " + args;
  fs::path input;
  if (!stdin_text.empty()) {
    input = session.parent_path() / (session.filename().string() + ".stdin");
    std::ofstream(input) << stdin_text;
    cmd += " < '" + input.string() + "'";
  }
  cmd += " 2>&1";
  Output out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.text.append(buf, n);
  int status = pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (!input.empty()) fs::remove(input);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = chronoshift::testing::temp_dir("cli");
    session_ = root_ / "s";
  }
  void TearDown() override { fs::remove_all(root_); }
  Output run(const std::string& args, const std::string& in = "") { return chrono(session_, args, in); }

  fs::path root_;
  fs::path session_;
};

TEST_F(Cli, BranchAndSwitch) {
  ASSERT_EQ(run("init --no-fsync").code, 0);
  Output r1 = run("run -e 'df = list(1, 2, 3)\ngmm = record{k: 0}'");
  EXPECT_EQ(r1.code, 0) << r1.text;
  EXPECT_NE(r1.text.find("committed t1, 2 co-variables updated"), std::string::npos) << r1.text;
  EXPECT_EQ(run("run -e 'gmm.k = len(df)'").code, 0);
  EXPECT_EQ(run("run -e 'plot = list(gmm.k * 2)'").code, 0);
  Output co = run("checkout t1");
  EXPECT_EQ(co.code, 0) << co.text;
  EXPECT_NE(co.text.find("checked out t1 (from t3)"), std::string::npos) << co.text;
  EXPECT_EQ(run("run -e 'gmm.k = 7'").code, 0);

  Output log = run("log");
  EXPECT_EQ(log.code, 0);
  EXPECT_NE(log.text.find("* "), std::string::npos);
  EXPECT_NE(log.text.find("t4 {gmm}"), std::string::npos) << log.text;

  Output json = run("checkout 3 --json");
  EXPECT_EQ(json.code, 0) << json.text;
  EXPECT_NE(json.text.find("\"covariables_loaded\":2"), std::string::npos) << json.text;
  EXPECT_NE(json.text.find("\"cells_replayed\":0"), std::string::npos);

  Output st = run("status --stats");
  EXPECT_NE(st.text.find("head: t3"), std::string::npos) << st.text;
  EXPECT_NE(st.text.find("plot = [6]"), std::string::npos) << st.text;
  EXPECT_NE(st.text.find("covariables: 3"), std::string::npos);

  Output dot = run("export-dot");
  EXPECT_EQ(dot.text.rfind("digraph", 0), 0u) << dot.text;
}

TEST_F(Cli, ScriptFilesSplitIntoCells) {
  run("init --no-fsync");
  fs::path script = root_ / "nb.cs";
  std::ofstream(script) << "# %%\na = list(1)\n# %%\nappend(a, 2)\n# %%\nlen(a)\n";
  Output r = run("run --stats '" + script.string() + "'");
  EXPECT_EQ(r.code, 0) << r.text;
  EXPECT_NE(r.text.find("committed t3"), std::string::npos);
  EXPECT_NE(r.text.find("\n2\n"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("detect_ms="), std::string::npos);
}

TEST_F(Cli, Repl) {
  run("init --no-fsync");
  Output r = run("repl", "a = 1\n\nb = a + 1\nb\n\n:checkout 1\n:status\n:quit\n");
  EXPECT_EQ(r.code, 0) << r.text;
  EXPECT_NE(r.text.find("committed t2"), std::string::npos);
  EXPECT_NE(r.text.find("checked out t1"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("head: t1"), std::string::npos);
}

TEST_F(Cli, StatePersistsAcrossInvocations) {
  run("init --no-fsync --seed 3");
  run("run -e 'x = rand()\ny = list(x)'");
  Output a = run("status");
  Output b = run("status");
  EXPECT_EQ(a.text, b.text);
  EXPECT_NE(a.text.find("y = ["), std::string::npos) << a.text;
  Output log = run("log");
  EXPECT_NE(log.text.find("[nondet]"), std::string::npos) << log.text;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("status").code, 2);  // no session yet
  run("init --no-fsync");
  Output bad = run("run -e 'x = missing'");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.text.find("unbound variable 'missing'"), std::string::npos);
  EXPECT_NE(bad.text.find("committed t1"), std::string::npos);
  EXPECT_EQ(run("checkout t99").code, 2);
  EXPECT_EQ(run("checkout banana").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);

  // A nondeterministic, unserializable output cannot be restored.
  // A reopened session leaves it unbound; leaving and returning fails.
  EXPECT_EQ(run("run -e 'g = opaque_nondet(\"gen\")'").code, 0);
  Output later = run("run -e 'y = 2'");
  EXPECT_EQ(later.code, 0) << later.text;
  EXPECT_NE(later.text.find("warning: left unbound"), std::string::npos) << later.text;
  EXPECT_EQ(run("checkout t1").code, 0);
  Output fail = run("checkout t2");
  EXPECT_EQ(fail.code, 3) << fail.text;
  EXPECT_NE(fail.text.find("{g}"), std::string::npos);
  Output st = run("status");
  EXPECT_NE(st.text.find("head: t1"), std::string::npos) << st.text;

  // Journal corruption.
  fs::path log = session_ / "graph.log";
  fs::resize_file(log, fs::file_size(log) - 1);
  EXPECT_EQ(run("status").code, 4);
}

TEST_F(Cli, BenchAndFuzz) {
  fs::path spec = root_ / "w.txt";
  std::ofstream(spec) << "covariables=4\nelements=10\nelement_bytes=10\ncells=5\n";
  Output b = chrono(session_, "bench '" + spec.string() + "'");
  EXPECT_EQ(b.code, 0) << b.text;
  EXPECT_NE(b.text.find("# storage_ratio="), std::string::npos);

  Output f = chrono(session_, "fuzz --seed 1 --n 20");
  EXPECT_EQ(f.code, 0) << f.text;
  EXPECT_NE(f.text.find("PASS"), std::string::npos);

  fs::path repro = root_ / "repro.cs";
  Output m = chrono(session_, "fuzz --seed 3 --n 300 --mutant --repro-out '" + repro.string() + "'");
  EXPECT_EQ(m.code, 1) << m.text;
  EXPECT_NE(m.text.find("VIOLATION no-false-negatives"), std::string::npos);
  ASSERT_TRUE(fs::exists(repro));
  EXPECT_EQ(chrono(session_, "fuzz --mutant --repro '" + repro.string() + "'").code, 1);
  EXPECT_EQ(chrono(session_, "fuzz --repro '" + repro.string() + "'").code, 0);
}

}  // namespace
