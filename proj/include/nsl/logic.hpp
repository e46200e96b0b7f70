// Datalog-lite program representation: constants, terms, atoms, rules and
// relation declarations.
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsl {

/// An integer or an interned symbol. Symbols are interned process-wide so
/// constants compare cheaply and consistently across programs.
class Constant {
 public:
  enum class Kind : std::uint8_t { integer, symbol };

  constexpr Constant() = default;
  static constexpr Constant integer(std::int64_t v) { return Constant(Kind::integer, v); }
  static Constant symbol(std::string_view name);

  Kind kind() const { return kind_; }
  bool is_integer() const { return kind_ == Kind::integer; }
  bool is_symbol() const { return kind_ == Kind::symbol; }
  std::int64_t as_integer() const;
  const std::string& symbol_name() const;

  friend bool operator==(const Constant&, const Constant&) = default;
  friend std::strong_ordering operator<=>(const Constant&, const Constant&) = default;

  std::string to_string() const;

 private:
  constexpr Constant(Kind kind, std::int64_t v) : kind_(kind), value_(v) {}
  Kind kind_ = Kind::integer;
  std::int64_t value_ = 0;

  friend struct ConstantHash;
};

struct ConstantHash {
  std::size_t operator()(const Constant& c) const noexcept {
    return std::hash<std::int64_t>{}(c.value_ * 2 + static_cast<int>(c.kind_));
  }
};

using Tuple = std::vector<Constant>;

std::string tuple_to_string(const Tuple& t);
std::ostream& operator<<(std::ostream& os, const Constant& c);

struct SourcePos {
  int line = 0;
  int column = 0;
};

/// A term in an atom argument, a head expression or a guard.
struct Expr {
  enum class Op : std::uint8_t { constant, variable, wildcard, add, sub, mul };

  Op op = Op::constant;
  Constant value;
  std::string name;            // variable name
  std::vector<Expr> operands;  // binary ops: exactly two

  static Expr constant(Constant c);
  static Expr variable(std::string n);
  static Expr wildcard();
  static Expr binary(Op op, Expr lhs, Expr rhs);

  bool is_arithmetic() const { return op == Op::add || op == Op::sub || op == Op::mul; }
  void collect_variables(std::vector<std::string>& out) const;
  std::string to_string() const;

  friend bool operator==(const Expr&, const Expr&) = default;
};

struct Atom {
  std::string relation;
  std::vector<Expr> args;
  SourcePos pos;

  std::string to_string() const;
  friend bool operator==(const Atom& a, const Atom& b) {
    return a.relation == b.relation && a.args == b.args;
  }
};

struct BodyAtom {
  Atom atom;
  bool negated = false;

  friend bool operator==(const BodyAtom&, const BodyAtom&) = default;
};

enum class CompareOp : std::uint8_t { eq, ne, lt, le, gt, ge };
std::string_view to_string(CompareOp op);

struct Guard {
  Expr lhs;
  CompareOp op = CompareOp::eq;
  Expr rhs;
  SourcePos pos;

  friend bool operator==(const Guard& a, const Guard& b) {
    return a.lhs == b.lhs && a.op == b.op && a.rhs == b.rhs;
  }
};

struct Rule {
  Atom head;
  std::vector<BodyAtom> body;
  std::vector<Guard> guards;
  SourcePos pos;

  std::string to_string() const;
  friend bool operator==(const Rule& a, const Rule& b) {
    return a.head == b.head && a.body == b.body && a.guards == b.guards;
  }
};

/// Finite domain of one relation argument, listed in declaration order.
struct Domain {
  std::vector<Constant> values;

  static Domain range(std::int64_t lo, std::int64_t hi);
  bool contains(const Constant& c) const;
  std::optional<std::size_t> index_of(const Constant& c) const;
  std::size_t size() const { return values.size(); }
  std::string to_string() const;

  friend bool operator==(const Domain&, const Domain&) = default;
};

struct ArgDecl {
  std::string name;
  Domain domain;

  friend bool operator==(const ArgDecl&, const ArgDecl&) = default;
};

enum class RelationKind : std::uint8_t { input, derived };

struct RelationDecl {
  std::string name;
  RelationKind kind = RelationKind::derived;
  bool is_output = false;
  std::vector<ArgDecl> args;
  /// Explicit input-fact tuples; absent means the full domain product.
  std::optional<std::vector<Tuple>> facts;
  /// Argument indices keying exclusion groups; members vary over the rest.
  std::optional<std::vector<std::size_t>> group_by;
  SourcePos pos;

  std::size_t arity() const { return args.size(); }
  bool is_input() const { return kind == RelationKind::input; }
  /// Cartesian product of argument domains in row-major declaration order.
  std::vector<Tuple> domain_tuples() const;
  std::size_t domain_size() const;
  std::string to_string() const;

  friend bool operator==(const RelationDecl& a, const RelationDecl& b) {
    return a.name == b.name && a.kind == b.kind && a.is_output == b.is_output &&
           a.args == b.args && a.facts == b.facts && a.group_by == b.group_by;
  }
};

struct Diagnostic {
  SourcePos pos;
  std::string message;

  std::string format(std::string_view file = "<input>") const;
};

/// Raised by parsing and compilation with one or more diagnostics attached.
class ProgramError : public std::runtime_error {
 public:
  explicit ProgramError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

class Program {
 public:
  std::vector<RelationDecl> relations;
  std::vector<Rule> rules;

  const RelationDecl* find(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Index of the single output relation; throws if absent or ambiguous.
  std::size_t output_index() const;
  const RelationDecl& output() const { return relations[output_index()]; }

  std::string to_string() const;

  friend bool operator==(const Program&, const Program&) = default;
};

}  // namespace nsl
