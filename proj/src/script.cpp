#include "chronoshift/script.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "chronoshift/errors.hpp"

namespace chronoshift {
namespace {

enum class Tok {
  kEnd,
  kNewline,
  kName,
  kInt,
  kFloat,
  kStr,
  kPunct,
};

struct Token {
  Tok type = Tok::kEnd;
  std::string text;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_blanks();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        t.type = Tok::kEnd;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (c == '\n' || c == ';') {
        t.type = Tok::kNewline;
        t.text = std::string(1, c);
        advance();
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.type = Tok::kName;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_')) {
          t.text += src_[pos_];
          advance();
        }
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else {
        lex_punct(t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_blanks() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    t.type = Tok::kInt;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
      t.text += src_[pos_];
      advance();
    }
    // A '.' followed by a digit makes a float; ".." is the range operator.
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' &&
        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      t.type = Tok::kFloat;
      t.text += '.';
      advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        t.text += src_[pos_];
        advance();
      }
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      std::string exp = "e";
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) exp += src_[p++];
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        while (pos_ < p) advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          exp += src_[pos_];
          advance();
        }
        t.type = Tok::kFloat;
        t.text += exp;
      } else {
        pos_ = save;
      }
    }
  }

  void lex_string(Token& t) {
    t.type = Tok::kStr;
    advance();  // opening quote
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        throw SyntaxError("unterminated string literal", t.line, t.column);
      }
      char c = src_[pos_];
      if (c == '"') {
        advance();
        return;
      }
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size()) {
          throw SyntaxError("unterminated string literal", t.line, t.column);
        }
        char e = src_[pos_];
        switch (e) {
          case 'n': t.text += '\n'; break;
          case 't': t.text += '\t'; break;
          case '\\': t.text += '\\'; break;
          case '"': t.text += '"'; break;
          default:
            throw SyntaxError(std::string("unknown escape \\") + e, line_, column_);
        }
        advance();
        continue;
      }
      t.text += c;
      advance();
    }
  }

  void lex_punct(Token& t) {
    static const char* const kTwo[] = {"==", "!=", "<=", ">=", ".."};
    t.type = Tok::kPunct;
    for (const char* op : kTwo) {
      if (src_.compare(pos_, 2, op) == 0) {
        t.text = op;
        advance();
        advance();
        return;
      }
    }
    static const std::string kOne = "=<>+-*/%.,:()[]{}";
    char c = src_[pos_];
    if (kOne.find(c) == std::string::npos) {
      throw SyntaxError(std::string("unexpected character '") + c + "'", line_,
                        column_);
    }
    t.text = std::string(1, c);
    advance();
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

bool is_keyword(const std::string& s) {
  static const char* const kKeywords[] = {
      "del", "for", "in", "if", "else", "true", "false", "none", "not", "and",
      "or", "list", "map", "record", "range_list", "opaque", "opaque_nondet",
      "rand", "len", "str", "append", "remove_key"};
  for (const char* k : kKeywords) {
    if (s == k) return true;
  }
  return false;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  std::vector<StmtPtr> program() {
    std::vector<StmtPtr> out;
    skip_newlines();
    while (!at_end()) {
      out.push_back(statement());
      end_of_statement();
      skip_newlines();
    }
    return out;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  bool at_end() const { return peek().type == Tok::kEnd; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_punct(const char* p, std::size_t ahead = 0) const {
    return peek(ahead).type == Tok::kPunct && peek(ahead).text == p;
  }
  bool is_word(const char* w) const {
    return peek().type == Tok::kName && peek().text == w;
  }
  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    std::string found = t.type == Tok::kEnd       ? "end of input"
                        : t.type == Tok::kNewline ? "end of line"
                                                  : "'" + t.text + "'";
    throw SyntaxError(what + ", found " + found, t.line, t.column);
  }
  void expect_punct(const char* p) {
    if (!is_punct(p)) fail(std::string("expected '") + p + "'");
    next();
  }
  std::string expect_name() {
    if (peek().type != Tok::kName || is_keyword(peek().text)) fail("expected a name");
    return next().text;
  }
  void skip_newlines() {
    while (peek().type == Tok::kNewline) next();
  }
  void end_of_statement() {
    if (peek().type == Tok::kNewline || at_end() || is_punct("}")) return;
    fail("expected end of statement");
  }

  std::vector<StmtPtr> block() {
    expect_punct("{");
    std::vector<StmtPtr> out;
    skip_newlines();
    while (!is_punct("}")) {
      if (at_end()) fail("expected '}'");
      out.push_back(statement());
      end_of_statement();
      skip_newlines();
    }
    next();
    return out;
  }

  StmtPtr statement() {
    auto s = std::make_unique<Stmt>();
    s->line = peek().line;
    if (is_word("del")) {
      next();
      s->kind = StmtKind::kDel;
      s->name = expect_name();
      return s;
    }
    if (is_word("for")) {
      next();
      s->kind = StmtKind::kFor;
      s->name = expect_name();
      if (!is_word("in")) fail("expected 'in'");
      next();
      s->value = additive();
      expect_punct("..");
      s->bound = additive();
      s->body = block();
      return s;
    }
    if (is_word("if")) {
      next();
      s->kind = StmtKind::kIf;
      s->value = expression();
      s->body = block();
      if (is_word("else")) {
        next();
        if (is_word("if")) {
          s->orelse.push_back(statement());
        } else {
          s->orelse = block();
        }
      }
      return s;
    }
    if ((is_word("append") || is_word("remove_key")) && is_punct("(", 1)) {
      s->kind = is_word("append") ? StmtKind::kAppend : StmtKind::kRemoveKey;
      next();
      next();
      skip_newlines();
      s->target = expression();
      skip_newlines();
      expect_punct(",");
      skip_newlines();
      s->value = expression();
      skip_newlines();
      expect_punct(")");
      return s;
    }
    ExprPtr e = expression();
    if (is_punct("=")) {
      const Token& eq = peek();
      if (!is_assignable(*e)) {
        throw SyntaxError("cannot assign to this expression", eq.line, eq.column);
      }
      next();
      s->kind = StmtKind::kAssign;
      s->target = std::move(e);
      s->value = expression();
      return s;
    }
    s->kind = StmtKind::kExpr;
    s->value = std::move(e);
    return s;
  }

  static bool is_assignable(const Expr& e) {
    if (e.kind == ExprKind::kName) return true;
    if (e.kind == ExprKind::kField || e.kind == ExprKind::kIndex) {
      return !root_name(e).empty();
    }
    return false;
  }

  ExprPtr make(ExprKind kind, std::size_t line) {
    auto e = std::make_unique<Expr>();
    e->kind = kind;
    e->line = line;
    return e;
  }

  ExprPtr binary(std::string op, ExprPtr lhs, ExprPtr rhs) {
    auto e = make(ExprKind::kBinary, lhs->line);
    e->text = std::move(op);
    e->args.push_back(std::move(lhs));
    e->args.push_back(std::move(rhs));
    return e;
  }

  ExprPtr expression() { return disjunction(); }

  ExprPtr disjunction() {
    ExprPtr lhs = conjunction();
    while (is_word("or")) {
      next();
      lhs = binary("or", std::move(lhs), conjunction());
    }
    return lhs;
  }

  ExprPtr conjunction() {
    ExprPtr lhs = negation();
    while (is_word("and")) {
      next();
      lhs = binary("and", std::move(lhs), negation());
    }
    return lhs;
  }

  ExprPtr negation() {
    if (is_word("not")) {
      std::size_t line = next().line;
      auto e = make(ExprKind::kUnary, line);
      e->text = "not";
      e->args.push_back(negation());
      return e;
    }
    return comparison();
  }

  ExprPtr comparison() {
    ExprPtr lhs = additive();
    static const char* const kOps[] = {"==", "!=", "<", "<=", ">", ">="};
    for (const char* op : kOps) {
      if (is_punct(op)) {
        next();
        return binary(op, std::move(lhs), additive());
      }
    }
    return lhs;
  }

  ExprPtr additive() {
    ExprPtr lhs = multiplicative();
    while (is_punct("+") || is_punct("-")) {
      std::string op = next().text;
      lhs = binary(op, std::move(lhs), multiplicative());
    }
    return lhs;
  }

  ExprPtr multiplicative() {
    ExprPtr lhs = unary();
    while (is_punct("*") || is_punct("/") || is_punct("%")) {
      std::string op = next().text;
      lhs = binary(op, std::move(lhs), unary());
    }
    return lhs;
  }

  ExprPtr unary() {
    if (is_punct("-")) {
      std::size_t line = next().line;
      // Fold negative numeric literals so printing round-trips exactly.
      if (peek().type == Tok::kInt || peek().type == Tok::kFloat) {
        ExprPtr lit = number(true);
        lit->line = line;
        return postfix(std::move(lit));
      }
      auto e = make(ExprKind::kUnary, line);
      e->text = "-";
      e->args.push_back(unary());
      return e;
    }
    return postfix(primary());
  }

  ExprPtr postfix(ExprPtr base) {
    while (true) {
      if (is_punct(".")) {
        next();
        auto e = make(ExprKind::kField, base->line);
        e->text = expect_name();
        e->args.push_back(std::move(base));
        base = std::move(e);
      } else if (is_punct("[")) {
        next();
        skip_newlines();
        auto e = make(ExprKind::kIndex, base->line);
        e->args.push_back(std::move(base));
        e->args.push_back(expression());
        skip_newlines();
        expect_punct("]");
        base = std::move(e);
      } else {
        return base;
      }
    }
  }

  ExprPtr number(bool negative) {
    const Token& t = next();
    if (t.type == Tok::kInt) {
      auto e = make(ExprKind::kInt, t.line);
      std::uint64_t magnitude = 0;
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(),
                                       magnitude);
      const std::uint64_t limit =
          static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) +
          (negative ? 1 : 0);
      if (ec != std::errc() || magnitude > limit) {
        throw SyntaxError("integer literal out of range", t.line, t.column);
      }
      e->int_value = negative ? static_cast<std::int64_t>(0 - magnitude)
                              : static_cast<std::int64_t>(magnitude);
      return e;
    }
    auto e = make(ExprKind::kFloat, t.line);
    e->float_value = std::strtod(t.text.c_str(), nullptr);
    if (!std::isfinite(e->float_value)) {
      throw SyntaxError("float literal out of range", t.line, t.column);
    }
    if (negative) e->float_value = -e->float_value;
    return e;
  }

  std::vector<ExprPtr> call_args() {
    expect_punct("(");
    std::vector<ExprPtr> out;
    skip_newlines();
    while (!is_punct(")")) {
      out.push_back(expression());
      skip_newlines();
      if (!is_punct(",")) break;
      next();
      skip_newlines();
    }
    expect_punct(")");
    return out;
  }

  ExprPtr unary_call(ExprKind kind, std::size_t line, const char* fn) {
    auto e = make(kind, line);
    e->args = call_args();
    if (e->args.size() != 1) fail(std::string(fn) + "() takes exactly one argument");
    return e;
  }

  ExprPtr primary() {
    const Token& t = peek();
    std::size_t line = t.line;
    switch (t.type) {
      case Tok::kInt:
      case Tok::kFloat:
        return number(false);
      case Tok::kStr: {
        auto e = make(ExprKind::kStr, line);
        e->text = next().text;
        return e;
      }
      case Tok::kPunct:
        if (t.text == "(") {
          next();
          skip_newlines();
          ExprPtr inner = expression();
          skip_newlines();
          expect_punct(")");
          return inner;
        }
        fail("expected an expression");
      case Tok::kName:
        break;
      default:
        fail("expected an expression");
    }
    const std::string word = t.text;
    if (word == "true" || word == "false") {
      next();
      auto e = make(ExprKind::kBool, line);
      e->bool_value = word == "true";
      return e;
    }
    if (word == "none") {
      next();
      return make(ExprKind::kNone, line);
    }
    if (word == "list" && is_punct("(", 1)) {
      next();
      auto e = make(ExprKind::kList, line);
      e->args = call_args();
      return e;
    }
    if ((word == "map" || word == "record") && is_punct("{", 1)) {
      next();
      next();
      auto e = make(word == "map" ? ExprKind::kMap : ExprKind::kRecord, line);
      skip_newlines();
      while (!is_punct("}")) {
        if (e->kind == ExprKind::kMap) {
          if (peek().type != Tok::kStr) fail("expected a string key");
          e->keys.push_back(next().text);
        } else {
          e->keys.push_back(expect_name());
        }
        expect_punct(":");
        skip_newlines();
        e->args.push_back(expression());
        skip_newlines();
        if (!is_punct(",")) break;
        next();
        skip_newlines();
      }
      expect_punct("}");
      return e;
    }
    if (word == "range_list" && is_punct("(", 1)) {
      next();
      return unary_call(ExprKind::kRangeList, line, "range_list");
    }
    if ((word == "opaque" || word == "opaque_nondet") && is_punct("(", 1)) {
      next();
      next();
      auto e = make(ExprKind::kOpaque, line);
      e->deterministic = word == "opaque";
      if (peek().type != Tok::kStr) fail("expected a string tag");
      e->text = next().text;
      expect_punct(")");
      return e;
    }
    if (word == "rand" && is_punct("(", 1)) {
      next();
      next();
      expect_punct(")");
      return make(ExprKind::kRand, line);
    }
    if (word == "len" && is_punct("(", 1)) {
      next();
      return unary_call(ExprKind::kLen, line, "len");
    }
    if (word == "str" && is_punct("(", 1)) {
      next();
      return unary_call(ExprKind::kToStr, line, "str");
    }
    auto e = make(ExprKind::kName, line);
    e->text = expect_name();
    return e;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string format_float(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  std::string s = os.str();
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

int precedence(const Expr& e) {
  if (e.kind != ExprKind::kBinary && e.kind != ExprKind::kUnary) return 100;
  if (e.kind == ExprKind::kUnary) return e.text == "not" ? 3 : 7;
  const std::string& op = e.text;
  if (op == "or") return 1;
  if (op == "and") return 2;
  if (op == "+" || op == "-") return 5;
  if (op == "*" || op == "/" || op == "%") return 6;
  return 4;  // comparisons
}

void print_expr(const Expr& e, std::ostringstream& out);

void print_operand(const Expr& e, int min_prec, std::ostringstream& out) {
  bool parens = precedence(e) < min_prec;
  // Negative literals start with '-' and need parentheses under postfix ops.
  if (min_prec > 7 && ((e.kind == ExprKind::kInt && e.int_value < 0) ||
                       (e.kind == ExprKind::kFloat && std::signbit(e.float_value)))) {
    parens = true;
  }
  if (parens) out << '(';
  print_expr(e, out);
  if (parens) out << ')';
}

void print_args(const std::vector<ExprPtr>& args, std::ostringstream& out) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out << ", ";
    print_expr(*args[i], out);
  }
}

void print_expr(const Expr& e, std::ostringstream& out) {
  switch (e.kind) {
    case ExprKind::kInt: out << e.int_value; return;
    case ExprKind::kFloat: out << format_float(e.float_value); return;
    case ExprKind::kStr: out << quote(e.text); return;
    case ExprKind::kBool: out << (e.bool_value ? "true" : "false"); return;
    case ExprKind::kNone: out << "none"; return;
    case ExprKind::kName: out << e.text; return;
    case ExprKind::kField:
      print_operand(*e.args[0], 8, out);
      out << '.' << e.text;
      return;
    case ExprKind::kIndex:
      print_operand(*e.args[0], 8, out);
      out << '[';
      print_expr(*e.args[1], out);
      out << ']';
      return;
    case ExprKind::kUnary:
      if (e.text == "not") {
        out << "not ";
        print_operand(*e.args[0], 3, out);
      } else {
        out << '-';
        // Keep "-(-1)" from collapsing into a literal on re-parse.
        print_operand(*e.args[0], 8, out);
      }
      return;
    case ExprKind::kBinary: {
      int p = precedence(e);
      // Comparisons do not chain; both sides bind tighter.
      int left = p == 4 ? 5 : p;
      print_operand(*e.args[0], left, out);
      out << ' ' << e.text << ' ';
      print_operand(*e.args[1], p + 1, out);
      return;
    }
    case ExprKind::kList:
      out << "list(";
      print_args(e.args, out);
      out << ')';
      return;
    case ExprKind::kMap:
    case ExprKind::kRecord:
      out << (e.kind == ExprKind::kMap ? "map{" : "record{");
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out << ", ";
        out << (e.kind == ExprKind::kMap ? quote(e.keys[i]) : e.keys[i]) << ": ";
        print_expr(*e.args[i], out);
      }
      out << '}';
      return;
    case ExprKind::kRangeList:
      out << "range_list(";
      print_args(e.args, out);
      out << ')';
      return;
    case ExprKind::kOpaque:
      out << (e.deterministic ? "opaque(" : "opaque_nondet(") << quote(e.text) << ')';
      return;
    case ExprKind::kRand: out << "rand()"; return;
    case ExprKind::kLen:
      out << "len(";
      print_args(e.args, out);
      out << ')';
      return;
    case ExprKind::kToStr:
      out << "str(";
      print_args(e.args, out);
      out << ')';
      return;
  }
}

void print_block(const std::vector<StmtPtr>& body, int indent, std::ostringstream& out);

void print_stmt(const Stmt& s, int indent, std::ostringstream& out) {
  out << std::string(static_cast<std::size_t>(indent) * 2, ' ');
  switch (s.kind) {
    case StmtKind::kAssign:
      print_expr(*s.target, out);
      out << " = ";
      print_expr(*s.value, out);
      break;
    case StmtKind::kDel: out << "del " << s.name; break;
    case StmtKind::kAppend:
    case StmtKind::kRemoveKey:
      out << (s.kind == StmtKind::kAppend ? "append(" : "remove_key(");
      print_expr(*s.target, out);
      out << ", ";
      print_expr(*s.value, out);
      out << ')';
      break;
    case StmtKind::kFor:
      out << "for " << s.name << " in ";
      print_operand(*s.value, 5, out);
      out << "..";
      print_operand(*s.bound, 5, out);
      out << " {\n";
      print_block(s.body, indent + 1, out);
      out << std::string(static_cast<std::size_t>(indent) * 2, ' ') << '}';
      break;
    case StmtKind::kIf:
      out << "if ";
      print_expr(*s.value, out);
      out << " {\n";
      print_block(s.body, indent + 1, out);
      out << std::string(static_cast<std::size_t>(indent) * 2, ' ') << '}';
      if (!s.orelse.empty()) {
        out << " else {\n";
        print_block(s.orelse, indent + 1, out);
        out << std::string(static_cast<std::size_t>(indent) * 2, ' ') << '}';
      }
      break;
    case StmtKind::kExpr:
      print_expr(*s.value, out);
      break;
  }
  out << '\n';
}

void print_block(const std::vector<StmtPtr>& body, int indent, std::ostringstream& out) {
  for (const auto& s : body) print_stmt(*s, indent, out);
}

}  // namespace

CellProgram parse(const std::string& source) {
  CellProgram program;
  program.source = source;
  Parser parser(Lexer(source).run());
  program.statements = parser.program();
  return program;
}

std::string print(const CellProgram& program) {
  std::ostringstream out;
  print_block(program.statements, 0, out);
  return out.str();
}

std::string print(const Expr& expr) {
  std::ostringstream out;
  print_expr(expr, out);
  return out.str();
}

std::string root_name(const Expr& expr) {
  const Expr* e = &expr;
  while (e->kind == ExprKind::kField || e->kind == ExprKind::kIndex) {
    e = e->args[0].get();
  }
  return e->kind == ExprKind::kName ? e->text : std::string();
}

}  // namespace chronoshift
