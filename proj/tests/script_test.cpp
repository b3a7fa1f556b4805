#include <gtest/gtest.h>

#include "chronoshift/errors.hpp"
#include "chronoshift/script.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

std::string canon(const std::string& source) { return print(parse(source)); }

TEST(Script, ParsesEveryStatementKind) {
  CellProgram p = parse(
      "x = 1\n"
      "x.f[0] = 2\n"
      "del x\n"
      "append(l, 3)\n"
      "remove_key(m, \"k\")\n"
      "for i in 0..3 { y = i }\n"
      "if a { b = 1 } else if c { b = 2 } else { b = 3 }\n"
      "len(l) + 1\n");
  ASSERT_EQ(p.statements.size(), 8u);
  EXPECT_EQ(p.statements[0]->kind, StmtKind::kAssign);
  EXPECT_EQ(p.statements[1]->kind, StmtKind::kAssign);
  EXPECT_EQ(p.statements[2]->kind, StmtKind::kDel);
  EXPECT_EQ(p.statements[3]->kind, StmtKind::kAppend);
  EXPECT_EQ(p.statements[4]->kind, StmtKind::kRemoveKey);
  EXPECT_EQ(p.statements[5]->kind, StmtKind::kFor);
  EXPECT_EQ(p.statements[6]->kind, StmtKind::kIf);
  EXPECT_EQ(p.statements[6]->orelse.size(), 1u);
  EXPECT_EQ(p.statements[7]->kind, StmtKind::kExpr);
  EXPECT_EQ(p.statements[7]->line, 8u);
}

TEST(Script, SyntaxErrorsCarryPosition) {
  try {
    parse("x = 1\ny = (2 +\n");
    FAIL() << "expected a syntax error";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  try {
    parse("a = 1\n  b = $");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 7u);
  }
  EXPECT_THROW(parse("1 = x"), SyntaxError);
  EXPECT_THROW(parse("len(x) = 2"), SyntaxError);
  EXPECT_THROW(parse("s = \"open"), SyntaxError);
  EXPECT_THROW(parse("s = \"bad \\q\""), SyntaxError);
  EXPECT_THROW(parse("x = 1 y = 2"), SyntaxError);
  EXPECT_THROW(parse("for i in 0..2 y = 1"), SyntaxError);
  EXPECT_THROW(parse("del 3"), SyntaxError);
  EXPECT_THROW(parse("list = 3"), SyntaxError);
  EXPECT_THROW(parse("i = 99999999999999999999"), SyntaxError);
}

TEST(Script, PrintKeepsPrecedence) {
  EXPECT_EQ(canon("x = (1 + 2) * 3"), "x = (1 + 2) * 3\n");
  EXPECT_EQ(canon("x = 1 + 2 * 3"), "x = 1 + 2 * 3\n");
  EXPECT_EQ(canon("x = 1 - (2 - 3)"), "x = 1 - (2 - 3)\n");
  EXPECT_EQ(canon("x = not (a or b) and c"), "x = not (a or b) and c\n");
  EXPECT_EQ(canon("x = -y.f"), "x = -y.f\n");
  EXPECT_EQ(canon("x = -3"), "x = -3\n");
}

TEST(Script, LiteralsRoundTrip) {
  for (const char* src : {"x = \"a\\\"b\\n\\t\\\\\"", "x = 1.5", "x = 2e-05", "x = -0.25",
                          "x = -9223372036854775808", "x = map{\"k\": 1, \"j\": none}",
                          "x = record{a: true, b: false}", "x = list()",
                          "x = opaque_nondet(\"g\")", "x = rand()"}) {
    std::string once = canon(src);
    EXPECT_EQ(canon(once), once) << src;
  }
}

// parse(print(p)) == p, checked as a fixed point of print over a corpus of
// generated programs.
TEST(Script, PrintParseRoundTripOverGeneratedPrograms) {
  auto cells = testing::generated_cells(60, 100, 0.05);
  ASSERT_GE(cells.size(), 500u);
  for (const auto& source : cells) {
    CellProgram p = parse(source);
    std::string printed = print(p);
    CellProgram q = parse(printed);
    ASSERT_EQ(print(q), printed) << source;
    ASSERT_EQ(p.statements.size(), q.statements.size());
  }
}

TEST(Script, RootName) {
  CellProgram p = parse("a.b[0].c = 1\nlist(1)[0] + 2\nx = 3");
  EXPECT_EQ(root_name(*p.statements[0]->target), "a");
  EXPECT_EQ(root_name(*p.statements[1]->value), "");
  EXPECT_EQ(root_name(*p.statements[2]->target), "x");
}

TEST(Script, CommentsAndBlankLines) {
  CellProgram p = parse("# header\n\nx = 1  # trailing\n\n\n# only\n");
  EXPECT_EQ(p.statements.size(), 1u);
  EXPECT_TRUE(parse("").statements.empty());
}

}  // namespace
}  // namespace chronoshift
