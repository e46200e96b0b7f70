#include <algorithm>
#include <set>

#include "nsl/parser.hpp"

namespace nsl {
namespace {

bool positive_body_binds(const Rule& r, const std::string& var) {
  for (const auto& b : r.body) {
    if (b.negated) continue;
    std::vector<std::string> vs;
    for (const auto& a : b.atom.args) a.collect_variables(vs);
    if (std::find(vs.begin(), vs.end(), var) != vs.end()) return true;
  }
  return false;
}

void check_rule(const Program& p, const Rule& r, std::vector<Diagnostic>& out) {
  const RelationDecl* head = p.find(r.head.relation);
  if (head && head->is_input()) {
    out.push_back({r.head.pos, "input relations never appear in rule heads: '" + head->name + "'"});
  }

  std::vector<std::string> head_vars;
  for (const auto& a : r.head.args) {
    if (a.op == Expr::Op::wildcard) out.push_back({r.head.pos, "range restriction: wildcard '_' in rule head"});
    a.collect_variables(head_vars);
  }
  for (const auto& v : head_vars) {
    if (!positive_body_binds(r, v)) {
      out.push_back({r.head.pos, "range restriction: head variable '" + v + "' does not appear in a positive body atom"});
    }
  }

  for (const auto& b : r.body) {
    const RelationDecl* d = p.find(b.atom.relation);
    for (std::size_t i = 0; i < b.atom.args.size(); ++i) {
      const Expr& a = b.atom.args[i];
      if (a.is_arithmetic()) {
        out.push_back({b.atom.pos, "arithmetic is only allowed in rule heads and guards: " + b.atom.to_string()});
      } else if (a.op == Expr::Op::constant && d && i < d->arity() && !d->args[i].domain.contains(a.value)) {
        out.push_back({b.atom.pos, "constant outside declared domain: " + a.value.to_string() + " in " + b.atom.to_string()});
      }
    }
    if (b.negated) {
      if (d && !d->is_input()) {
        out.push_back({b.atom.pos, "negation restricted to input relations: 'not " + b.atom.to_string() + "'"});
      }
      std::vector<std::string> vs;
      for (const auto& a : b.atom.args) a.collect_variables(vs);
      for (const auto& v : vs) {
        if (!positive_body_binds(r, v)) {
          out.push_back({b.atom.pos, "range restriction: variable '" + v + "' of a negated atom is not bound by a positive body atom"});
        }
      }
    }
  }

  for (const auto& g : r.guards) {
    std::vector<std::string> vs;
    g.lhs.collect_variables(vs);
    g.rhs.collect_variables(vs);
    for (const auto& v : vs) {
      if (!positive_body_binds(r, v)) {
        out.push_back({g.pos, "range restriction: guard variable '" + v + "' is not bound by a positive body atom"});
      }
    }
    if (g.lhs.op == Expr::Op::wildcard || g.rhs.op == Expr::Op::wildcard) {
      out.push_back({g.pos, "range restriction: wildcard '_' in a guard"});
    }
  }

  if (head) {
    for (std::size_t i = 0; i < r.head.args.size() && i < head->arity(); ++i) {
      const Expr& a = r.head.args[i];
      if (a.op == Expr::Op::constant && !head->args[i].domain.contains(a.value)) {
        out.push_back({r.head.pos, "constant outside declared domain: " + a.value.to_string() + " in " + r.head.to_string()});
      }
    }
  }
}

void check_declaration(const RelationDecl& d, std::vector<Diagnostic>& out) {
  for (const auto& a : d.args) {
    if (a.domain.values.empty()) {
      out.push_back({d.pos, "finite nonempty domain required for argument '" + a.name + "' of '" + d.name + "'"});
    }
    std::set<Constant> seen(a.domain.values.begin(), a.domain.values.end());
    if (seen.size() != a.domain.values.size()) {
      out.push_back({d.pos, "domain values must be distinct for argument '" + a.name + "' of '" + d.name + "'"});
    }
  }
  for (std::size_t i = 0; i < d.args.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (d.args[i].name == d.args[j].name) {
        out.push_back({d.pos, "duplicate argument name '" + d.args[i].name + "' in '" + d.name + "'"});
      }
    }
  }
  if (d.facts) {
    std::set<Tuple> seen;
    for (const auto& t : *d.facts) {
      if (t.size() != d.arity()) continue;  // reported by name resolution
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!d.args[i].domain.contains(t[i])) {
          out.push_back({d.pos, "fact tuple outside declared domain: " + d.name + tuple_to_string(t)});
          break;
        }
      }
      if (!seen.insert(t).second) {
        out.push_back({d.pos, "duplicate input fact: " + d.name + tuple_to_string(t)});
      }
    }
  }
  if (d.group_by) {
    std::set<std::size_t> keys(d.group_by->begin(), d.group_by->end());
    if (keys.size() != d.group_by->size()) {
      out.push_back({d.pos, "exclusion groups: repeated key argument in '" + d.name + "'"});
    }
    for (auto k : keys) {
      if (k >= d.arity()) out.push_back({d.pos, "exclusion groups: key argument out of range in '" + d.name + "'"});
    }
    if (keys.size() == d.arity()) {
      out.push_back({d.pos, "exclusion groups: '" + d.name + "' groups by every argument, leaving single-member groups"});
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> out;

  std::size_t outputs = 0;
  for (const auto& d : p.relations) {
    if (!d.is_output) continue;
    if (++outputs == 2) {
      out.push_back({d.pos, "exactly one output query: found a second output declaration '" + d.name + "'"});
    }
  }
  if (outputs == 0) out.push_back({{1, 1}, "no output declaration: exactly one output query is required"});

  for (std::size_t i = 0; i < p.relations.size(); ++i) {
    const auto& d = p.relations[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (p.relations[j].name == d.name) out.push_back({d.pos, "duplicate declaration of relation '" + d.name + "'"});
    }
    check_declaration(d, out);
  }

  for (const auto& r : p.rules) {
    bool resolvable = true;
    auto known = [&](const Atom& a) {
      const RelationDecl* d = p.find(a.relation);
      if (!d) {
        out.push_back({a.pos, "unknown relation '" + a.relation + "'"});
        resolvable = false;
      } else if (d->arity() != a.args.size()) {
        out.push_back({a.pos, "arity mismatch: '" + a.relation + "' declared with " + std::to_string(d->arity()) +
                                  " arguments, used with " + std::to_string(a.args.size())});
        resolvable = false;
      }
    };
    known(r.head);
    for (const auto& b : r.body) known(b.atom);
    if (resolvable) check_rule(p, r, out);
  }

  if (out.empty()) {
    try {
      (void)stratify(p);
    } catch (const ProgramError& e) {
      out.insert(out.end(), e.diagnostics().begin(), e.diagnostics().end());
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> stratify(const Program& p) {
  const std::size_t n = p.relations.size();
  // Stratum of each derived relation: max over positive derived dependencies,
  // +1 over negated derived dependencies. Bellman-Ford style relaxation;
  // exceeding n rounds means a cycle through negation.
  std::vector<std::size_t> level(n, 0);
  bool changed = true;
  std::size_t rounds = 0;
  while (changed) {
    changed = false;
    if (++rounds > n + 1) {
      std::string names;
      for (std::size_t i = 0; i < n; ++i) {
        if (level[i] >= n) names += (names.empty() ? "" : ", ") + p.relations[i].name;
      }
      if (names.empty()) names = "derived relations";
      SourcePos at = p.rules.empty() ? SourcePos{} : p.rules.front().pos;
      throw ProgramError({Diagnostic{at, "unstratifiable: cycle through negation involving " + names}});
    }
    for (const auto& r : p.rules) {
      const auto h = p.index_of(r.head.relation);
      if (!h) continue;
      for (const auto& b : r.body) {
        const auto d = p.index_of(b.atom.relation);
        if (!d || p.relations[*d].is_input()) continue;
        const std::size_t need = level[*d] + (b.negated ? 1 : 0);
        if (need > level[*h]) {
          level[*h] = need;
          changed = true;
        }
      }
    }
  }

  std::size_t strata = 0;
  for (const auto& r : p.rules) {
    if (auto h = p.index_of(r.head.relation)) strata = std::max(strata, level[*h] + 1);
  }
  std::vector<std::vector<std::size_t>> out(std::max<std::size_t>(strata, p.rules.empty() ? 0 : 1));
  for (std::size_t i = 0; i < p.rules.size(); ++i) {
    auto h = p.index_of(p.rules[i].head.relation);
    out[h ? level[*h] : 0].push_back(i);
  }
  // Levels are dense only if every level is populated; drop empty ones.
  std::erase_if(out, [](const auto& s) { return s.empty(); });
  return out;
}

}  // namespace nsl
