#include <cctype>
#include <charconv>
#include <limits>
#include <optional>

#include "nsl/parser.hpp"

namespace nsl {
namespace {

enum class Tok {
  ident,     // lowercase-led identifier: relation name, symbol or keyword
  variable,  // uppercase-led or _name
  wildcard,  // _
  integer,
  lparen, rparen, lbrace, rbrace, comma, dot, dotdot, colon, turnstile,
  plus, minus, star, eq, ne, lt, le, gt, ge,
  end, error
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run(std::vector<Diagnostic>& diags) {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.pos = {line_, col_};
      if (i_ >= src_.size()) {
        t.kind = Tok::end;
        out.push_back(t);
        return out;
      }
      const char c = src_[i_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i_;
        while (j < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_')) ++j;
        t.text = std::string(src_.substr(i_, j - i_));
        if (t.text == "_") t.kind = Tok::wildcard;
        else if (std::isupper(static_cast<unsigned char>(c)) || c == '_') t.kind = Tok::variable;
        else t.kind = Tok::ident;
        advance(j - i_);
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t j = i_;
        while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
        t.kind = Tok::integer;
        t.text = std::string(src_.substr(i_, j - i_));
        advance(j - i_);
      } else {
        auto two = src_.substr(i_, 2);
        if (two == ":-") { t.kind = Tok::turnstile; advance(2); }
        else if (two == "..") { t.kind = Tok::dotdot; advance(2); }
        else if (two == "==") { t.kind = Tok::eq; advance(2); }
        else if (two == "!=") { t.kind = Tok::ne; advance(2); }
        else if (two == "<=") { t.kind = Tok::le; advance(2); }
        else if (two == ">=") { t.kind = Tok::ge; advance(2); }
        else {
          switch (c) {
            case '(': t.kind = Tok::lparen; break;
            case ')': t.kind = Tok::rparen; break;
            case '{': t.kind = Tok::lbrace; break;
            case '}': t.kind = Tok::rbrace; break;
            case ',': t.kind = Tok::comma; break;
            case '.': t.kind = Tok::dot; break;
            case ':': t.kind = Tok::colon; break;
            case '+': t.kind = Tok::plus; break;
            case '-': t.kind = Tok::minus; break;
            case '*': t.kind = Tok::star; break;
            case '<': t.kind = Tok::lt; break;
            case '>': t.kind = Tok::gt; break;
            default:
              t.kind = Tok::error;
              diags.push_back({t.pos, std::string("syntax error: unexpected character '") + c + "'"});
          }
          advance(1);
        }
      }
      if (t.kind != Tok::error) out.push_back(std::move(t));
    }
  }

 private:
  void advance(std::size_t n) {
    for (std::size_t k = 0; k < n && i_ < src_.size(); ++k, ++i_) {
      if (src_[i_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
    }
  }

  void skip_space() {
    while (i_ < src_.size()) {
      if (std::isspace(static_cast<unsigned char>(src_[i_]))) {
        advance(1);
      } else if (src_.substr(i_, 2) == "//") {
        while (i_ < src_.size() && src_[i_] != '\n') advance(1);
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct SyntaxError {
  Diagnostic diag;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::vector<Diagnostic>& diags) : toks_(std::move(toks)), diags_(diags) {}

  Program run() {
    Program p;
    while (peek().kind != Tok::end) {
      try {
        statement(p);
      } catch (const SyntaxError& e) {
        diags_.push_back(e.diag);
        recover();
      }
    }
    return p;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    std::string found = t.kind == Tok::end ? "end of input" : "'" + (t.text.empty() ? token_name(t.kind) : t.text) + "'";
    throw SyntaxError{{t.pos, "syntax error: expected " + what + ", found " + found}};
  }
  const Token& expect(Tok k, const std::string& what) {
    if (peek().kind != k) fail(what);
    return next();
  }
  static std::string token_name(Tok k) {
    switch (k) {
      case Tok::lparen: return "(";
      case Tok::rparen: return ")";
      case Tok::lbrace: return "{";
      case Tok::rbrace: return "}";
      case Tok::comma: return ",";
      case Tok::dot: return ".";
      case Tok::dotdot: return "..";
      case Tok::colon: return ":";
      case Tok::turnstile: return ":-";
      case Tok::plus: return "+";
      case Tok::minus: return "-";
      case Tok::star: return "*";
      case Tok::eq: return "==";
      case Tok::ne: return "!=";
      case Tok::lt: return "<";
      case Tok::le: return "<=";
      case Tok::gt: return ">";
      case Tok::ge: return ">=";
      default: return "token";
    }
  }

  void recover() {
    while (peek().kind != Tok::end && peek().kind != Tok::dot) next();
    accept(Tok::dot);
  }

  void statement(Program& p) {
    const Token& t = peek();
    if (t.kind == Tok::ident && peek(1).kind == Tok::ident &&
        (t.text == "input" || t.text == "rel" || t.text == "output")) {
      declaration(p);
    } else {
      p.rules.push_back(rule());
    }
  }

  std::int64_t integer_literal() {
    const bool neg = accept(Tok::minus);
    const Token& t = expect(Tok::integer, "integer");
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc()) throw SyntaxError{{t.pos, "integer literal out of signed 64-bit range: " + t.text}};
    return neg ? -v : v;
  }

  Constant constant() {
    if (peek().kind == Tok::ident) return Constant::symbol(next().text);
    if (peek().kind == Tok::integer || peek().kind == Tok::minus) return Constant::integer(integer_literal());
    fail("constant");
  }

  Domain domain() {
    if (accept(Tok::lbrace)) {
      Domain d;
      if (!accept(Tok::rbrace)) {
        do d.values.push_back(constant());
        while (accept(Tok::comma));
        expect(Tok::rbrace, "'}'");
      }
      return d;
    }
    const SourcePos at = peek().pos;
    const std::int64_t first = integer_literal();
    if (accept(Tok::dotdot)) {
      const std::int64_t last = integer_literal();
      if (last < first) throw SyntaxError{{at, "empty domain range " + std::to_string(first) + ".." + std::to_string(last)}};
      if (last - first > 100'000'000) throw SyntaxError{{at, "domain range too large"}};
      return Domain::range(first, last);
    }
    if (first < 0 || first > 100'000'000) throw SyntaxError{{at, "domain size must be between 0 and 1e8"}};
    return first == 0 ? Domain{} : Domain::range(0, first - 1);
  }

  void declaration(Program& p) {
    const Token& kw = next();
    RelationDecl d;
    d.pos = kw.pos;
    d.kind = kw.text == "input" ? RelationKind::input : RelationKind::derived;
    d.is_output = kw.text == "output";
    d.name = expect(Tok::ident, "relation name").text;
    expect(Tok::lparen, "'('");
    if (!accept(Tok::rparen)) {
      do {
        ArgDecl a;
        const Token& n = peek();
        if (n.kind != Tok::ident && n.kind != Tok::variable) fail("argument name");
        a.name = next().text;
        expect(Tok::colon, "':' after argument name");
        a.domain = domain();
        d.args.push_back(std::move(a));
      } while (accept(Tok::comma));
      expect(Tok::rparen, "')'");
    }
    while (peek().kind == Tok::ident) {
      const Token& opt = next();
      if (opt.text == "facts") {
        if (!d.is_input()) throw SyntaxError{{opt.pos, "'facts' is only allowed on input declarations"}};
        expect(Tok::lbrace, "'{'");
        std::vector<Tuple> facts;
        if (!accept(Tok::rbrace)) {
          do {
            expect(Tok::lparen, "'(' starting a fact tuple");
            Tuple t;
            if (!accept(Tok::rparen)) {
              do t.push_back(constant());
              while (accept(Tok::comma));
              expect(Tok::rparen, "')'");
            }
            facts.push_back(std::move(t));
          } while (accept(Tok::comma));
          expect(Tok::rbrace, "'}'");
        }
        d.facts = std::move(facts);
      } else if (opt.text == "group") {
        if (!d.is_input()) throw SyntaxError{{opt.pos, "'group by' is only allowed on input declarations"}};
        const Token& by = expect(Tok::ident, "'by'");
        if (by.text != "by") throw SyntaxError{{by.pos, "syntax error: expected 'by' after 'group'"}};
        std::vector<std::string> names;
        if (accept(Tok::lparen)) {
          if (!accept(Tok::rparen)) {
            do names.push_back(arg_name());
            while (accept(Tok::comma));
            expect(Tok::rparen, "')'");
          }
        } else {
          names.push_back(arg_name());
        }
        std::vector<std::size_t> idx;
        for (const auto& n : names) {
          std::size_t i = 0;
          while (i < d.args.size() && d.args[i].name != n) ++i;
          if (i == d.args.size()) throw SyntaxError{{opt.pos, "group by names unknown argument '" + n + "' of " + d.name}};
          idx.push_back(i);
        }
        d.group_by = std::move(idx);
      } else {
        throw SyntaxError{{opt.pos, "syntax error: unexpected '" + opt.text + "' in declaration"}};
      }
    }
    expect(Tok::dot, "'.' ending the declaration");
    p.relations.push_back(std::move(d));
  }

  std::string arg_name() {
    const Token& n = peek();
    if (n.kind != Tok::ident && n.kind != Tok::variable) fail("argument name");
    return next().text;
  }

  Atom atom() {
    Atom a;
    a.pos = peek().pos;
    a.relation = expect(Tok::ident, "relation name").text;
    expect(Tok::lparen, "'('");
    if (!accept(Tok::rparen)) {
      do a.args.push_back(expr());
      while (accept(Tok::comma));
      expect(Tok::rparen, "')'");
    }
    return a;
  }

  Rule rule() {
    Rule r;
    r.pos = peek().pos;
    r.head = atom();
    if (accept(Tok::turnstile)) {
      do {
        const Token& t = peek();
        if (t.kind == Tok::ident && t.text == "not" && peek(1).kind == Tok::ident) {
          next();
          r.body.push_back({atom(), true});
        } else if (t.kind == Tok::ident && peek(1).kind == Tok::lparen) {
          r.body.push_back({atom(), false});
        } else {
          Guard g;
          g.pos = t.pos;
          g.lhs = expr();
          switch (peek().kind) {
            case Tok::eq: g.op = CompareOp::eq; break;
            case Tok::ne: g.op = CompareOp::ne; break;
            case Tok::lt: g.op = CompareOp::lt; break;
            case Tok::le: g.op = CompareOp::le; break;
            case Tok::gt: g.op = CompareOp::gt; break;
            case Tok::ge: g.op = CompareOp::ge; break;
            default: fail("comparison operator");
          }
          next();
          g.rhs = expr();
          r.guards.push_back(std::move(g));
        }
      } while (accept(Tok::comma));
    }
    expect(Tok::dot, "'.' ending the rule");
    return r;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept(Tok::plus)) lhs = Expr::binary(Expr::Op::add, std::move(lhs), term());
      else if (accept(Tok::minus)) lhs = Expr::binary(Expr::Op::sub, std::move(lhs), term());
      else return lhs;
    }
  }

  Expr term() {
    Expr lhs = factor();
    while (accept(Tok::star)) lhs = Expr::binary(Expr::Op::mul, std::move(lhs), factor());
    return lhs;
  }

  Expr factor() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::integer:
      case Tok::minus: return Expr::constant(Constant::integer(integer_literal()));
      case Tok::variable: return Expr::variable(next().text);
      case Tok::wildcard: next(); return Expr::wildcard();
      case Tok::ident: return Expr::constant(Constant::symbol(next().text));
      case Tok::lparen: {
        next();
        Expr e = expr();
        expect(Tok::rparen, "')'");
        return e;
      }
      default: fail("term");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<Diagnostic>& diags_;
};

// Name resolution: every atom names a declared relation with matching arity.
void resolve(const Program& p, std::vector<Diagnostic>& diags) {
  for (std::size_t i = 0; i < p.relations.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (p.relations[j].name == p.relations[i].name) {
        diags.push_back({p.relations[i].pos, "duplicate declaration of relation '" + p.relations[i].name + "'"});
      }
    }
  }
  auto check = [&](const Atom& a) {
    const RelationDecl* d = p.find(a.relation);
    if (!d) {
      diags.push_back({a.pos, "unknown relation '" + a.relation + "'"});
    } else if (d->arity() != a.args.size()) {
      diags.push_back({a.pos, "arity mismatch: '" + a.relation + "' declared with " + std::to_string(d->arity()) +
                                  " arguments, used with " + std::to_string(a.args.size())});
    }
  };
  for (const auto& r : p.rules) {
    check(r.head);
    for (const auto& b : r.body) check(b.atom);
  }
  for (const auto& d : p.relations) {
    if (!d.facts) continue;
    for (const auto& t : *d.facts) {
      if (t.size() != d.arity()) {
        diags.push_back({d.pos, "arity mismatch: fact " + tuple_to_string(t) + " of '" + d.name + "'"});
      }
    }
  }
}

}  // namespace

Program parse_unchecked(std::string_view text) {
  std::vector<Diagnostic> diags;
  Lexer lexer(text);
  auto tokens = lexer.run(diags);
  Parser parser(std::move(tokens), diags);
  Program p = parser.run();
  if (diags.empty()) resolve(p, diags);
  if (!diags.empty()) throw ProgramError(std::move(diags));
  return p;
}

Program parse_program(std::string_view text) {
  Program p = parse_unchecked(text);
  auto diags = validate(p);
  if (!diags.empty()) throw ProgramError(std::move(diags));
  return p;
}

}  // namespace nsl
