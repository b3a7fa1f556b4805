#pragma once

// CellScript: the small imperative language cells are written in. See
// docs/cellscript.md for the grammar.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace chronoshift {

enum class ExprKind {
  kInt,
  kFloat,
  kStr,
  kBool,
  kNone,
  kName,
  kField,     // base.name
  kIndex,     // base[index]
  kUnary,     // op operand
  kBinary,    // lhs op rhs
  kList,      // list(args...)
  kMap,       // map{"k": v, ...}
  kRecord,    // record{k: v, ...}
  kRangeList, // range_list(n)
  kOpaque,    // opaque("tag") / opaque_nondet("tag")
  kRand,      // rand()
  kLen,       // len(x)
  kToStr,     // str(x)
};

struct Expr {
  ExprKind kind = ExprKind::kNone;
  std::size_t line = 0;
  std::int64_t int_value = 0;
  double float_value = 0.0;
  bool bool_value = false;
  bool deterministic = true;    // kOpaque
  std::string text;             // literal text, name, field name, operator, tag
  std::vector<std::string> keys;  // kMap / kRecord
  std::vector<std::unique_ptr<Expr>> args;  // operands / elements / base+index
};

using ExprPtr = std::unique_ptr<Expr>;

enum class StmtKind {
  kAssign,     // target = value   (target: name, field or index chain)
  kDel,        // del name
  kAppend,     // append(target, value)
  kRemoveKey,  // remove_key(target, key)
  kFor,        // for var in from..to { body }
  kIf,         // if cond { body } else { orelse }
  kExpr,       // bare expression (result is displayed)
};

struct Stmt {
  StmtKind kind = StmtKind::kExpr;
  std::size_t line = 0;
  std::string name;  // kDel, kFor loop variable
  ExprPtr target;    // kAssign, kAppend, kRemoveKey
  ExprPtr value;     // kAssign/kAppend value, kRemoveKey key, kIf/kExpr expr, kFor from
  ExprPtr bound;     // kFor upper bound (exclusive)
  std::vector<std::unique_ptr<Stmt>> body;
  std::vector<std::unique_ptr<Stmt>> orelse;
};

using StmtPtr = std::unique_ptr<Stmt>;

struct CellProgram {
  std::string source;
  std::vector<StmtPtr> statements;
  std::uint64_t cell_id = 0;
};

// Throws SyntaxError with line/column. Never touches session state.
CellProgram parse(const std::string& source);

// Canonical source text for a parsed program; parse(print(p)) reproduces p.
std::string print(const CellProgram& program);
std::string print(const Expr& expr);

// Name at the root of a field/index chain (`a` for `a.b[0]`), or empty if the
// chain does not start at a variable.
std::string root_name(const Expr& expr);

}  // namespace chronoshift
