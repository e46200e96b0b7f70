#include <algorithm>
#include <sstream>

#include "nsl/logic.hpp"

namespace nsl {

Expr Expr::constant(Constant c) {
  Expr e;
  e.op = Op::constant;
  e.value = c;
  return e;
}

Expr Expr::variable(std::string n) {
  Expr e;
  e.op = Op::variable;
  e.name = std::move(n);
  return e;
}

Expr Expr::wildcard() {
  Expr e;
  e.op = Op::wildcard;
  return e;
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  Expr e;
  e.op = op;
  e.operands.push_back(std::move(lhs));
  e.operands.push_back(std::move(rhs));
  return e;
}

void Expr::collect_variables(std::vector<std::string>& out) const {
  if (op == Op::variable) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    return;
  }
  for (const auto& o : operands) o.collect_variables(out);
}

std::string Expr::to_string() const {
  switch (op) {
    case Op::constant: return value.to_string();
    case Op::variable: return name;
    case Op::wildcard: return "_";
    default: break;
  }
  const char* sym = op == Op::add ? " + " : op == Op::sub ? " - " : " * ";
  auto operand = [](const Expr& e) {
    return e.is_arithmetic() ? "(" + e.to_string() + ")" : e.to_string();
  };
  return operand(operands[0]) + sym + operand(operands[1]);
}

std::string Atom::to_string() const {
  std::string s = relation + "(";
  for (std::size_t i = 0; i < args.size(); ++i) s += (i ? ", " : "") + args[i].to_string();
  return s + ")";
}

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::eq: return "==";
    case CompareOp::ne: return "!=";
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
  }
  return "?";
}

std::string Rule::to_string() const {
  std::string s = head.to_string();
  if (body.empty() && guards.empty()) return s + ".";
  s += " :- ";
  bool first = true;
  for (const auto& b : body) {
    s += (first ? "" : ", ") + std::string(b.negated ? "not " : "") + b.atom.to_string();
    first = false;
  }
  for (const auto& g : guards) {
    s += (first ? "" : ", ") + g.lhs.to_string() + " " + std::string(nsl::to_string(g.op)) + " " +
         g.rhs.to_string();
    first = false;
  }
  return s + ".";
}

Domain Domain::range(std::int64_t lo, std::int64_t hi) {
  Domain d;
  for (std::int64_t v = lo; v <= hi; ++v) d.values.push_back(Constant::integer(v));
  return d;
}

bool Domain::contains(const Constant& c) const { return index_of(c).has_value(); }

std::optional<std::size_t> Domain::index_of(const Constant& c) const {
  // Ranges are the common case and answer in O(1).
  if (!values.empty() && c.is_integer() && values.front().is_integer() && values.back().is_integer()) {
    const auto lo = values.front().as_integer();
    const auto off = c.as_integer() - lo;
    if (off >= 0 && static_cast<std::size_t>(off) < values.size() && values[off] == c) {
      return static_cast<std::size_t>(off);
    }
  }
  auto it = std::find(values.begin(), values.end(), c);
  if (it == values.end()) return std::nullopt;
  return static_cast<std::size_t>(it - values.begin());
}

std::string Domain::to_string() const {
  bool is_range = !values.empty();
  for (std::size_t i = 0; i < values.size() && is_range; ++i) {
    is_range = values[i].is_integer() && values[i].as_integer() == values[0].as_integer() + static_cast<std::int64_t>(i);
  }
  if (is_range) return values.front().to_string() + ".." + values.back().to_string();
  std::string s = "{";
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + values[i].to_string();
  return s + "}";
}

std::vector<Tuple> RelationDecl::domain_tuples() const {
  std::vector<Tuple> out;
  const std::size_t total = domain_size();
  out.reserve(total);
  if (total == 0) return out;
  std::vector<std::size_t> idx(args.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    Tuple t(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) t[i] = args[i].domain.values[idx[i]];
    out.push_back(std::move(t));
    for (std::size_t i = args.size(); i-- > 0;) {
      if (++idx[i] < args[i].domain.size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

std::size_t RelationDecl::domain_size() const {
  std::size_t n = 1;
  for (const auto& a : args) n *= a.domain.size();
  return n;
}

std::string RelationDecl::to_string() const {
  std::ostringstream os;
  os << (is_output ? "output " : is_input() ? "input " : "rel ") << name << '(';
  for (std::size_t i = 0; i < args.size(); ++i) {
    os << (i ? ", " : "") << args[i].name << ':' << args[i].domain.to_string();
  }
  os << ')';
  if (facts) {
    os << " facts {";
    for (std::size_t i = 0; i < facts->size(); ++i) os << (i ? ", " : "") << tuple_to_string((*facts)[i]);
    os << '}';
  }
  if (group_by) {
    os << " group by (";
    for (std::size_t i = 0; i < group_by->size(); ++i) {
      const auto a = (*group_by)[i];
      os << (i ? ", " : "") << (a < args.size() ? args[a].name : "?");
    }
    os << ')';
  }
  os << '.';
  return os.str();
}

std::string Diagnostic::format(std::string_view file) const {
  std::ostringstream os;
  os << file << ':' << pos.line << ':' << pos.column << ": " << message;
  return os.str();
}

namespace {
std::string join_diagnostics(const std::vector<Diagnostic>& ds) {
  std::string s;
  for (const auto& d : ds) s += (s.empty() ? "" : "\n") + d.format();
  return s.empty() ? "program error" : s;
}
}  // namespace

ProgramError::ProgramError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

const RelationDecl* Program::find(std::string_view name) const {
  auto i = index_of(name);
  return i ? &relations[*i] : nullptr;
}

std::optional<std::size_t> Program::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (relations[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Program::output_index() const {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (!relations[i].is_output) continue;
    if (found) throw ProgramError({Diagnostic{relations[i].pos, "exactly one output query: found more than one"}});
    found = i;
  }
  if (!found) throw ProgramError({Diagnostic{{}, "no output declaration"}});
  return *found;
}

std::string Program::to_string() const {
  std::string s;
  for (const auto& r : relations) s += r.to_string() + "\n";
  for (const auto& r : rules) s += r.to_string() + "\n";
  return s;
}

}  // namespace nsl
