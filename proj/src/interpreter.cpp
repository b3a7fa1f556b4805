#include "chronoshift/interpreter.hpp"

#include <cmath>
#include <limits>

#include "chronoshift/errors.hpp"

namespace chronoshift {

std::set<std::string> AccessLog::accessed() const {
  std::set<std::string> out = read_names;
  out.insert(written_names.begin(), written_names.end());
  out.insert(deleted_names.begin(), deleted_names.end());
  return out;
}

namespace {

constexpr std::int64_t kMaxIterations = 10'000'000;
constexpr std::size_t kMaxStringBytes = 64u << 20;

class Interpreter {
 public:
  Interpreter(State& state, Rng& rng, AccessLog& log)
      : state_(state), heap_(state.heap), rng_(rng), log_(log) {}

  void run(const std::vector<StmtPtr>& body) {
    for (const auto& s : body) exec(*s);
  }

  std::optional<std::string> display;

 private:
  [[noreturn]] static void fail(const std::string& what, std::size_t line) {
    throw ScriptRuntimeError(what, line);
  }

  const HeapObject& obj(ObjectId id) const { return heap_.at(id); }

  std::int64_t as_int(ObjectId id, std::size_t line, const char* what) {
    const HeapObject& o = obj(id);
    if (o.kind != Kind::kInt) {
      fail(std::string(what) + " must be int, got " + std::string(kind_name(o.kind)), line);
    }
    return std::get<std::int64_t>(o.value);
  }

  bool truthy(ObjectId id) const {
    const HeapObject& o = obj(id);
    switch (o.kind) {
      case Kind::kBool: return std::get<bool>(o.value);
      case Kind::kInt: return std::get<std::int64_t>(o.value) != 0;
      case Kind::kFloat: return std::get<double>(o.value) != 0.0;
      case Kind::kStr: return !std::get<std::string>(o.value).empty();
      case Kind::kNone: return false;
      case Kind::kList: return !o.items.empty();
      case Kind::kMap:
      case Kind::kRecord: return !o.fields.empty();
      case Kind::kOpaque: return true;
    }
    return false;
  }

  void note_mutation(const Expr& target) {
    std::string root = root_name(target);
    if (!root.empty()) log_.written_names.insert(root);
  }

  void exec(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::kAssign: {
        ObjectId value = eval(*s.value);
        const Expr& target = *s.target;
        if (target.kind == ExprKind::kName) {
          log_.written_names.insert(target.text);
          state_.ns.bind(target.text, value);
          return;
        }
        ObjectId base = eval(*target.args[0]);
        note_mutation(target);
        if (target.kind == ExprKind::kField) {
          HeapObject& o = heap_.at(base);
          if (o.kind != Kind::kRecord && o.kind != Kind::kMap) {
            fail("cannot set field '" + target.text + "' on " +
                     std::string(kind_name(o.kind)),
                 s.line);
          }
          o.set_field(target.text, value);
          return;
        }
        ObjectId index = eval(*target.args[1]);
        store_index(base, index, value, s.line);
        return;
      }
      case StmtKind::kDel:
        log_.deleted_names.insert(s.name);
        if (!state_.ns.contains(s.name)) fail("unbound variable '" + s.name + "'", s.line);
        state_.ns.unbind(s.name);
        return;
      case StmtKind::kAppend: {
        ObjectId target = eval(*s.target);
        ObjectId value = eval(*s.value);
        note_mutation(*s.target);
        HeapObject& o = heap_.at(target);
        if (o.kind != Kind::kList) {
          fail("append() needs a list, got " + std::string(kind_name(o.kind)), s.line);
        }
        o.items.push_back(value);
        return;
      }
      case StmtKind::kRemoveKey: {
        ObjectId target = eval(*s.target);
        ObjectId key = eval(*s.value);
        note_mutation(*s.target);
        HeapObject& o = heap_.at(target);
        if (o.kind != Kind::kMap && o.kind != Kind::kRecord) {
          fail("remove_key() needs a map or record, got " + std::string(kind_name(o.kind)),
               s.line);
        }
        const HeapObject& k = obj(key);
        if (k.kind != Kind::kStr) fail("keys must be str", s.line);
        if (!o.erase_field(std::get<std::string>(k.value))) {
          fail("no key '" + std::get<std::string>(k.value) + "'", s.line);
        }
        return;
      }
      case StmtKind::kFor: {
        std::int64_t from = as_int(eval(*s.value), s.line, "range start");
        std::int64_t to = as_int(eval(*s.bound), s.line, "range end");
        if (to > from && to - from > kMaxIterations) fail("loop too long", s.line);
        for (std::int64_t i = from; i < to; ++i) {
          log_.written_names.insert(s.name);
          state_.ns.bind(s.name, heap_.make_int(i));
          run(s.body);
        }
        return;
      }
      case StmtKind::kIf:
        if (truthy(eval(*s.value))) {
          run(s.body);
        } else {
          run(s.orelse);
        }
        return;
      case StmtKind::kExpr: {
        ObjectId v = eval(*s.value);
        display = render(heap_, v);
        return;
      }
    }
  }

  void store_index(ObjectId base, ObjectId index, ObjectId value, std::size_t line) {
    HeapObject& o = heap_.at(base);
    const HeapObject& k = obj(index);
    if (o.kind == Kind::kList) {
      if (k.kind != Kind::kInt) fail("list index must be int", line);
      std::int64_t i = std::get<std::int64_t>(k.value);
      if (i < 0 || static_cast<std::size_t>(i) >= o.items.size()) {
        fail("list index " + std::to_string(i) + " out of range", line);
      }
      o.items[static_cast<std::size_t>(i)] = value;
      return;
    }
    if (o.kind == Kind::kMap || o.kind == Kind::kRecord) {
      if (k.kind != Kind::kStr) fail("keys must be str", line);
      o.set_field(std::get<std::string>(k.value), value);
      return;
    }
    fail("cannot index-assign into " + std::string(kind_name(o.kind)), line);
  }

  ObjectId eval(const Expr& e) {
    switch (e.kind) {
      case ExprKind::kInt: return heap_.make_int(e.int_value);
      case ExprKind::kFloat: return heap_.make_float(e.float_value);
      case ExprKind::kStr: return heap_.make_str(e.text);
      case ExprKind::kBool: return heap_.make_bool(e.bool_value);
      case ExprKind::kNone: return heap_.make_none();
      case ExprKind::kName: {
        log_.read_names.insert(e.text);
        auto id = state_.ns.lookup(e.text);
        if (!id) fail("unbound variable '" + e.text + "'", e.line);
        return *id;
      }
      case ExprKind::kField: {
        ObjectId base = eval(*e.args[0]);
        const HeapObject& o = obj(base);
        if (o.kind != Kind::kRecord && o.kind != Kind::kMap) {
          fail("no field '" + e.text + "' on " + std::string(kind_name(o.kind)), e.line);
        }
        auto child = o.field(e.text);
        if (!child) fail("no field '" + e.text + "'", e.line);
        return *child;
      }
      case ExprKind::kIndex: {
        ObjectId base = eval(*e.args[0]);
        ObjectId index = eval(*e.args[1]);
        return load_index(base, index, e.line);
      }
      case ExprKind::kUnary: {
        ObjectId v = eval(*e.args[0]);
        if (e.text == "not") return heap_.make_bool(!truthy(v));
        const HeapObject& o = obj(v);
        if (o.kind == Kind::kInt) {
          std::int64_t x = std::get<std::int64_t>(o.value);
          if (x == std::numeric_limits<std::int64_t>::min()) fail("integer overflow", e.line);
          return heap_.make_int(-x);
        }
        if (o.kind == Kind::kFloat) return heap_.make_float(-std::get<double>(o.value));
        fail("cannot negate " + std::string(kind_name(o.kind)), e.line);
      }
      case ExprKind::kBinary: return binary(e);
      case ExprKind::kList: {
        std::vector<ObjectId> items;
        items.reserve(e.args.size());
        for (const auto& a : e.args) items.push_back(eval(*a));
        return heap_.make_list(std::move(items));
      }
      case ExprKind::kMap:
      case ExprKind::kRecord: {
        std::vector<Field> fields;
        for (std::size_t i = 0; i < e.args.size(); ++i) {
          fields.emplace_back(e.keys[i], eval(*e.args[i]));
        }
        return heap_.make_map(e.kind == ExprKind::kMap ? Kind::kMap : Kind::kRecord,
                              std::move(fields));
      }
      case ExprKind::kRangeList: {
        std::int64_t n = as_int(eval(*e.args[0]), e.line, "range_list size");
        if (n < 0 || n > kMaxIterations) fail("range_list size out of range", e.line);
        std::vector<ObjectId> items;
        items.reserve(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) items.push_back(heap_.make_int(i));
        return heap_.make_list(std::move(items));
      }
      case ExprKind::kOpaque:
        if (!e.deterministic) log_.nondeterministic = true;
        return heap_.make_opaque(e.text, e.deterministic);
      case ExprKind::kRand:
        log_.nondeterministic = true;
        return heap_.make_float(rng_.next_unit());
      case ExprKind::kLen: {
        const HeapObject& o = obj(eval(*e.args[0]));
        switch (o.kind) {
          case Kind::kList: return heap_.make_int(static_cast<std::int64_t>(o.items.size()));
          case Kind::kMap:
          case Kind::kRecord:
            return heap_.make_int(static_cast<std::int64_t>(o.fields.size()));
          case Kind::kStr:
            return heap_.make_int(
                static_cast<std::int64_t>(std::get<std::string>(o.value).size()));
          default:
            fail("len() of " + std::string(kind_name(o.kind)), e.line);
        }
      }
      case ExprKind::kToStr: {
        ObjectId v = eval(*e.args[0]);
        const HeapObject& o = obj(v);
        if (o.kind == Kind::kStr) return heap_.make_str(std::get<std::string>(o.value));
        if (!is_primitive(o.kind)) fail("str() of " + std::string(kind_name(o.kind)), e.line);
        return heap_.make_str(render(heap_, v));
      }
    }
    fail("unsupported expression", e.line);
  }

  ObjectId load_index(ObjectId base, ObjectId index, std::size_t line) {
    const HeapObject& o = obj(base);
    const HeapObject& k = obj(index);
    if (o.kind == Kind::kList || o.kind == Kind::kStr) {
      if (k.kind != Kind::kInt) fail("index must be int", line);
      std::int64_t i = std::get<std::int64_t>(k.value);
      std::size_t size = o.kind == Kind::kList ? o.items.size()
                                               : std::get<std::string>(o.value).size();
      if (i < 0 || static_cast<std::size_t>(i) >= size) {
        fail("index " + std::to_string(i) + " out of range", line);
      }
      if (o.kind == Kind::kList) return o.items[static_cast<std::size_t>(i)];
      return heap_.make_str(std::string(1, std::get<std::string>(o.value)[static_cast<std::size_t>(i)]));
    }
    if (o.kind == Kind::kMap || o.kind == Kind::kRecord) {
      if (k.kind != Kind::kStr) fail("keys must be str", line);
      auto child = o.field(std::get<std::string>(k.value));
      if (!child) fail("no key '" + std::get<std::string>(k.value) + "'", line);
      return *child;
    }
    fail("cannot index " + std::string(kind_name(o.kind)), line);
  }

  static bool is_number(const HeapObject& o) {
    return o.kind == Kind::kInt || o.kind == Kind::kFloat;
  }

  static double as_double(const HeapObject& o) {
    return o.kind == Kind::kInt ? static_cast<double>(std::get<std::int64_t>(o.value))
                                : std::get<double>(o.value);
  }

  bool equal(ObjectId a, ObjectId b) const {
    if (a == b) return true;
    const HeapObject& x = obj(a);
    const HeapObject& y = obj(b);
    if (x.kind == Kind::kInt && y.kind == Kind::kInt) {
      return std::get<std::int64_t>(x.value) == std::get<std::int64_t>(y.value);
    }
    if (is_number(x) && is_number(y)) return as_double(x) == as_double(y);
    if (x.kind != y.kind || !is_primitive(x.kind)) return false;
    return x.value == y.value;
  }

  ObjectId binary(const Expr& e) {
    const std::string& op = e.text;
    if (op == "and" || op == "or") {
      bool lhs = truthy(eval(*e.args[0]));
      if (op == "and" ? !lhs : lhs) return heap_.make_bool(lhs);
      return heap_.make_bool(truthy(eval(*e.args[1])));
    }
    ObjectId a = eval(*e.args[0]);
    ObjectId b = eval(*e.args[1]);
    if (op == "==") return heap_.make_bool(equal(a, b));
    if (op == "!=") return heap_.make_bool(!equal(a, b));
    const HeapObject& x = obj(a);
    const HeapObject& y = obj(b);
    if (op == "<" || op == "<=" || op == ">" || op == ">=") {
      int cmp = 0;
      if (x.kind == Kind::kInt && y.kind == Kind::kInt) {
        auto l = std::get<std::int64_t>(x.value);
        auto r = std::get<std::int64_t>(y.value);
        cmp = l < r ? -1 : (l > r ? 1 : 0);
      } else if (is_number(x) && is_number(y)) {
        double l = as_double(x), r = as_double(y);
        if (std::isnan(l) || std::isnan(r)) return heap_.make_bool(false);
        cmp = l < r ? -1 : (l > r ? 1 : 0);
      } else if (x.kind == Kind::kStr && y.kind == Kind::kStr) {
        cmp = std::get<std::string>(x.value).compare(std::get<std::string>(y.value));
        cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
      } else {
        fail("cannot compare " + std::string(kind_name(x.kind)) + " and " +
                 std::string(kind_name(y.kind)),
             e.line);
      }
      bool r = op == "<" ? cmp < 0 : op == "<=" ? cmp <= 0 : op == ">" ? cmp > 0 : cmp >= 0;
      return heap_.make_bool(r);
    }
    if (x.kind == Kind::kInt && y.kind == Kind::kInt) {
      return int_arith(op, std::get<std::int64_t>(x.value), std::get<std::int64_t>(y.value),
                       e.line);
    }
    if (is_number(x) && is_number(y)) {
      double l = as_double(x), r = as_double(y);
      if (op == "+") return heap_.make_float(l + r);
      if (op == "-") return heap_.make_float(l - r);
      if (op == "*") return heap_.make_float(l * r);
      if (r == 0.0) fail("division by zero", e.line);
      if (op == "/") return heap_.make_float(l / r);
      return heap_.make_float(l - std::floor(l / r) * r);
    }
    if (op == "+" && x.kind == Kind::kStr && y.kind == Kind::kStr) {
      const auto& l = std::get<std::string>(x.value);
      const auto& r = std::get<std::string>(y.value);
      if (l.size() + r.size() > kMaxStringBytes) fail("string too long", e.line);
      return heap_.make_str(l + r);
    }
    if (op == "*" && x.kind == Kind::kStr && y.kind == Kind::kInt) {
      const auto& s = std::get<std::string>(x.value);
      std::int64_t n = std::get<std::int64_t>(y.value);
      if (n < 0) n = 0;
      if (!s.empty() && static_cast<std::uint64_t>(n) > kMaxStringBytes / s.size()) {
        fail("string too long", e.line);
      }
      std::string out;
      out.reserve(s.size() * static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) out += s;
      return heap_.make_str(std::move(out));
    }
    if (op == "+" && x.kind == Kind::kList && y.kind == Kind::kList) {
      std::vector<ObjectId> items = x.items;
      items.insert(items.end(), y.items.begin(), y.items.end());
      return heap_.make_list(std::move(items));
    }
    fail("unsupported operands for '" + op + "': " + std::string(kind_name(x.kind)) +
             " and " + std::string(kind_name(y.kind)),
         e.line);
  }

  ObjectId int_arith(const std::string& op, std::int64_t l, std::int64_t r, std::size_t line) {
    std::int64_t out = 0;
    if (op == "+") {
      if (__builtin_add_overflow(l, r, &out)) fail("integer overflow", line);
      return heap_.make_int(out);
    }
    if (op == "-") {
      if (__builtin_sub_overflow(l, r, &out)) fail("integer overflow", line);
      return heap_.make_int(out);
    }
    if (op == "*") {
      if (__builtin_mul_overflow(l, r, &out)) fail("integer overflow", line);
      return heap_.make_int(out);
    }
    if (r == 0) fail("division by zero", line);
    if (op == "/") return heap_.make_float(static_cast<double>(l) / static_cast<double>(r));
    // Floor modulo: the result takes the divisor's sign.
    if (r == -1) return heap_.make_int(0);
    std::int64_t m = l % r;
    if (m != 0 && ((m < 0) != (r < 0))) m += r;
    return heap_.make_int(m);
  }

  State& state_;
  Heap& heap_;
  Rng& rng_;
  AccessLog& log_;
};

}  // namespace

ExecResult execute(const CellProgram& program, State& state, Rng& rng) {
  ExecResult result;
  Interpreter interp(state, rng, result.log);
  try {
    interp.run(program.statements);
  } catch (const ScriptRuntimeError& e) {
    result.error = e.what();
  }
  result.display = std::move(interp.display);
  return result;
}

State replay_in_sandbox(const CellProgram& program,
                        const std::vector<const State*>& inputs,
                        const std::set<std::string>& required, Rng& rng) {
  State scratch;
  for (const State* input : inputs) transplant(*input, scratch);
  for (const auto& name : required) {
    if (!scratch.ns.contains(name)) {
      throw MissingDependency("replay input '" + name + "' was not provided");
    }
  }
  execute(program, scratch, rng);
  collect_garbage(scratch);
  return scratch;
}

}  // namespace chronoshift
