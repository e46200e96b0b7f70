#include "nsl/reasoner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "nsl/parser.hpp"

namespace nsl {

namespace {

// ---------------------------------------------------------------- grounding

struct TupleHash {
  std::size_t operator()(const Tuple& t) const noexcept {
    std::size_t h = 0x9e3779b97f4a7c15ull;
    for (const auto& c : t) h ^= ConstantHash{}(c) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }
};

// Tuples of one relation as seen by the join: input facts or possible
// derived atoms, with per-argument indexes.
struct RelationStore {
  std::vector<Tuple> tuples;
  std::vector<std::uint32_t> ids;    // fact id or atom id
  std::vector<std::uint32_t> stamp;  // round in which the tuple appeared
  std::unordered_map<Tuple, std::uint32_t, TupleHash> lookup;  // tuple -> position
  std::vector<std::unordered_map<Constant, std::vector<std::uint32_t>, ConstantHash>> by_arg;

  void init(std::size_t arity) { by_arg.assign(arity, {}); }

  bool insert(const Tuple& t, std::uint32_t id, std::uint32_t round) {
    auto [it, fresh] = lookup.emplace(t, static_cast<std::uint32_t>(tuples.size()));
    if (!fresh) return false;
    for (std::size_t a = 0; a < t.size(); ++a) by_arg[a][t[a]].push_back(it->second);
    tuples.push_back(t);
    ids.push_back(id);
    stamp.push_back(round);
    return true;
  }
};

std::int64_t checked(std::int64_t a, std::int64_t b, Expr::Op op) {
  std::int64_t r = 0;
  bool overflow = false;
  switch (op) {
    case Expr::Op::add: overflow = __builtin_add_overflow(a, b, &r); break;
    case Expr::Op::sub: overflow = __builtin_sub_overflow(a, b, &r); break;
    default: overflow = __builtin_mul_overflow(a, b, &r); break;
  }
  if (overflow) throw GroundingError("integer overflow in rule arithmetic");
  return r;
}

// Rule with variables replaced by slot numbers.
struct CompiledTerm {
  Expr::Op op = Expr::Op::constant;
  Constant value;
  int slot = -1;
  std::vector<CompiledTerm> operands;
};

struct CompiledAtom {
  std::size_t relation = 0;
  bool input = false;
  bool negated = false;
  std::vector<CompiledTerm> args;
};

struct CompiledGuard {
  CompiledTerm lhs, rhs;
  CompareOp op = CompareOp::eq;
};

struct CompiledRule {
  std::uint32_t index = 0;
  CompiledAtom head;
  std::vector<CompiledAtom> positive;
  std::vector<CompiledAtom> negative;
  std::vector<CompiledGuard> guards;
  std::vector<std::vector<std::size_t>> guards_after;  // guards ready once positive[i] is bound
  std::size_t slots = 0;
};

CompiledTerm compile_term(const Expr& e, std::vector<std::string>& vars) {
  CompiledTerm t;
  t.op = e.op;
  t.value = e.value;
  if (e.op == Expr::Op::variable) {
    auto it = std::find(vars.begin(), vars.end(), e.name);
    if (it == vars.end()) {
      vars.push_back(e.name);
      it = vars.end() - 1;
    }
    t.slot = static_cast<int>(it - vars.begin());
  }
  for (const auto& o : e.operands) t.operands.push_back(compile_term(o, vars));
  return t;
}

void term_slots(const CompiledTerm& t, std::vector<int>& out) {
  if (t.slot >= 0) out.push_back(t.slot);
  for (const auto& o : t.operands) term_slots(o, out);
}

CompiledAtom compile_atom(const Program& p, const Atom& a, bool negated, std::vector<std::string>& vars) {
  CompiledAtom c;
  c.relation = *p.index_of(a.relation);
  c.input = p.relations[c.relation].is_input();
  c.negated = negated;
  for (const auto& e : a.args) c.args.push_back(compile_term(e, vars));
  return c;
}

CompiledRule compile_rule(const Program& p, const Rule& r, std::uint32_t index) {
  CompiledRule c;
  c.index = index;
  std::vector<std::string> vars;
  for (const auto& b : r.body)
    if (!b.negated) c.positive.push_back(compile_atom(p, b.atom, false, vars));
  for (const auto& b : r.body)
    if (b.negated) c.negative.push_back(compile_atom(p, b.atom, true, vars));
  c.head = compile_atom(p, r.head, false, vars);
  for (const auto& g : r.guards) c.guards.push_back({compile_term(g.lhs, vars), compile_term(g.rhs, vars), g.op});
  c.slots = vars.size();

  // A guard runs right after the positive atom that binds its last variable.
  std::vector<std::size_t> bound_at(c.slots, 0);
  std::vector<bool> seen(c.slots, false);
  for (std::size_t i = 0; i < c.positive.size(); ++i) {
    std::vector<int> s;
    for (const auto& a : c.positive[i].args) term_slots(a, s);
    for (int v : s)
      if (!seen[v]) {
        seen[v] = true;
        bound_at[v] = i;
      }
  }
  c.guards_after.assign(std::max<std::size_t>(c.positive.size(), 1), {});
  for (std::size_t g = 0; g < c.guards.size(); ++g) {
    std::vector<int> s;
    term_slots(c.guards[g].lhs, s);
    term_slots(c.guards[g].rhs, s);
    std::size_t at = 0;
    for (int v : s) at = std::max(at, bound_at[v]);
    c.guards_after[at].push_back(g);
  }
  return c;
}

using Binding = std::vector<std::optional<Constant>>;

Constant eval_term(const CompiledTerm& t, const Binding& b) {
  switch (t.op) {
    case Expr::Op::constant: return t.value;
    case Expr::Op::variable: return *b[t.slot];
    case Expr::Op::wildcard: throw GroundingError("wildcard has no value");
    default: {
      const Constant l = eval_term(t.operands[0], b);
      const Constant r = eval_term(t.operands[1], b);
      if (!l.is_integer() || !r.is_integer()) throw GroundingError("arithmetic on a symbol constant");
      return Constant::integer(checked(l.as_integer(), r.as_integer(), t.op));
    }
  }
}

bool compare(const Constant& l, CompareOp op, const Constant& r) {
  if (op == CompareOp::eq) return l == r;
  if (op == CompareOp::ne) return l != r;
  if (!l.is_integer() || !r.is_integer()) throw GroundingError("ordering comparison on a symbol constant");
  const auto a = l.as_integer(), b = r.as_integer();
  switch (op) {
    case CompareOp::lt: return a < b;
    case CompareOp::le: return a <= b;
    case CompareOp::gt: return a > b;
    default: return a >= b;
  }
}

class Grounder {
 public:
  Grounder(const Program& p, std::shared_ptr<const InputFactTable> facts, std::size_t cap)
      : program_(p), facts_(std::move(facts)), cap_(cap) {
    stores_.resize(p.relations.size());
    for (std::size_t r = 0; r < p.relations.size(); ++r) stores_[r].init(p.relations[r].arity());
    for (FactId f = 0; f < facts_->size(); ++f) {
      const auto& fact = (*facts_)[f];
      stores_[fact.relation].insert(fact.args, f, 0);
    }
    for (std::uint32_t i = 0; i < p.rules.size(); ++i) rules_.push_back(compile_rule(p, p.rules[i], i));
  }

  Grounding run() {
    Grounding g;
    const auto strata = stratify(program_);
    for (std::size_t s = 0; s < strata.size(); ++s) {
      std::vector<bool> recursive(program_.relations.size(), false);
      for (auto r : strata[s]) recursive[rules_[r].head.relation] = true;
      const std::size_t first_rule = out_.size();

      // First pass joins the lower strata; later rounds are semi-naive on
      // this stratum's own relations, so each instance is produced once.
      ++round_;
      added_ = 0;
      for (auto r : strata[s]) join(rules_[r], recursive, -1, round_);
      while (added_ > 0) {
        const std::uint32_t delta = round_;
        ++round_;
        added_ = 0;
        for (auto r : strata[s]) {
          const auto& rule = rules_[r];
          for (std::size_t j = 0; j < rule.positive.size(); ++j) {
            if (recursive[rule.positive[j].relation]) join(rule, recursive, static_cast<int>(j), delta);
          }
        }
      }
      std::vector<std::uint32_t> ids(out_.size() - first_rule);
      std::iota(ids.begin(), ids.end(), static_cast<std::uint32_t>(first_rule));
      if (!ids.empty()) g.strata.push_back(std::move(ids));
    }

    g.facts = facts_;
    g.layout = std::shared_ptr<const ExclusionLayout>(facts_, &facts_->layout());
    g.atoms = std::move(atoms_);
    g.rules = std::move(out_);
    g.uses.assign(g.atoms.size(), {});
    for (std::uint32_t i = 0; i < g.rules.size(); ++i) {
      for (const auto& b : g.rules[i].body) {
        if (b.input) continue;
        auto& u = g.uses[b.index];
        if (u.empty() || u.back() != i) u.push_back(i);
      }
    }
    g.query_relation = program_.output_index();
    const auto& q = program_.relations[g.query_relation];
    g.answers = q.domain_tuples();
    const auto& store = stores_[g.query_relation];
    for (const auto& t : g.answers) {
      auto it = store.lookup.find(t);
      if (it == store.lookup.end()) g.answer_atoms.push_back(std::nullopt);
      else g.answer_atoms.push_back(store.ids[it->second]);
    }
    return g;
  }

 private:
  // delta_pos < 0: first pass, recursive atoms must predate round delta
  // (none do). Otherwise positive[delta_pos] must carry stamp
  // == delta, recursive atoms before it stamp < delta, after it <= delta.
  void join(const CompiledRule& rule, const std::vector<bool>& recursive, int delta_pos, std::uint32_t delta) {
    Binding b(rule.slots);
    std::vector<GroundBodyRef> refs;
    extend(rule, recursive, delta_pos, delta, 0, b, refs);
  }

  bool guards_hold(const CompiledRule& rule, std::size_t after, const Binding& b) const {
    if (after >= rule.guards_after.size()) return true;
    for (auto g : rule.guards_after[after]) {
      const auto& gd = rule.guards[g];
      if (!compare(eval_term(gd.lhs, b), gd.op, eval_term(gd.rhs, b))) return false;
    }
    return true;
  }

  void extend(const CompiledRule& rule, const std::vector<bool>& recursive, int delta_pos, std::uint32_t delta,
              std::size_t i, Binding& b, std::vector<GroundBodyRef>& refs) {
    if (i == rule.positive.size()) {
      if (rule.positive.empty() && !guards_hold(rule, 0, b)) return;
      emit(rule, b, refs);
      return;
    }
    const CompiledAtom& atom = rule.positive[i];
    const RelationStore& store = stores_[atom.relation];

    // Smallest candidate list among bound arguments.
    const std::vector<std::uint32_t>* candidates = nullptr;
    for (std::size_t a = 0; a < atom.args.size(); ++a) {
      const auto& t = atom.args[a];
      std::optional<Constant> v;
      if (t.op == Expr::Op::constant) v = t.value;
      else if (t.op == Expr::Op::variable && b[t.slot]) v = b[t.slot];
      if (!v) continue;
      auto it = store.by_arg[a].find(*v);
      if (it == store.by_arg[a].end()) return;
      if (!candidates || it->second.size() < candidates->size()) candidates = &it->second;
    }

    auto try_tuple = [&](std::uint32_t pos) {
      if (recursive[atom.relation]) {
        const auto st = store.stamp[pos];
        const int ii = static_cast<int>(i);
        if (delta_pos < 0 ? st >= delta : (ii == delta_pos ? st != delta : (ii < delta_pos ? st >= delta : st > delta)))
          return;
      }
      const Tuple& tup = store.tuples[pos];
      std::vector<int> newly;
      bool ok = true;
      for (std::size_t a = 0; a < atom.args.size() && ok; ++a) {
        const auto& t = atom.args[a];
        if (t.op == Expr::Op::constant) ok = t.value == tup[a];
        else if (t.op == Expr::Op::variable) {
          if (b[t.slot]) ok = *b[t.slot] == tup[a];
          else {
            b[t.slot] = tup[a];
            newly.push_back(t.slot);
          }
        }
      }
      if (ok && guards_hold(rule, i, b)) {
        refs.push_back({store.ids[pos], atom.input, false});
        extend(rule, recursive, delta_pos, delta, i + 1, b, refs);
        refs.pop_back();
      }
      for (int s : newly) b[s].reset();
    };

    if (candidates) {
      // emit() may append to the list; appended tuples are excluded by stamp.
      const std::size_t n = candidates->size();
      for (std::size_t c = 0; c < n; ++c) try_tuple((*candidates)[c]);
    } else {
      const auto n = static_cast<std::uint32_t>(store.tuples.size());
      for (std::uint32_t pos = 0; pos < n; ++pos) try_tuple(pos);
    }
  }

  void emit(const CompiledRule& rule, const Binding& b, std::vector<GroundBodyRef> refs) {
    Tuple head;
    const auto& decl = program_.relations[rule.head.relation];
    for (std::size_t a = 0; a < rule.head.args.size(); ++a) {
      Constant c = eval_term(rule.head.args[a], b);
      if (!decl.args[a].domain.contains(c)) return;  // outside the head domain
      head.push_back(c);
    }

    // Negated input atoms: present facts become negative literals, absent
    // ones are trivially true. A wildcard ranges over every matching fact.
    for (const auto& atom : rule.negative) {
      const auto& store = stores_[atom.relation];
      bool has_wild = false;
      Tuple t(atom.args.size());
      for (std::size_t a = 0; a < atom.args.size(); ++a) {
        if (atom.args[a].op == Expr::Op::wildcard) has_wild = true;
        else t[a] = eval_term(atom.args[a], b);
      }
      if (!has_wild) {
        auto it = store.lookup.find(t);
        if (it != store.lookup.end()) refs.push_back({store.ids[it->second], true, true});
        continue;
      }
      for (std::size_t pos = 0; pos < store.tuples.size(); ++pos) {
        bool match = true;
        for (std::size_t a = 0; a < t.size() && match; ++a)
          if (atom.args[a].op != Expr::Op::wildcard) match = store.tuples[pos][a] == t[a];
        if (match) refs.push_back({store.ids[pos], true, true});
      }
    }

    auto& hstore = stores_[rule.head.relation];
    std::uint32_t id;
    auto it = hstore.lookup.find(head);
    if (it != hstore.lookup.end()) {
      id = hstore.ids[it->second];
    } else {
      id = static_cast<std::uint32_t>(atoms_.size());
      atoms_.push_back({rule.head.relation, head});
      hstore.insert(head, id, round_);
      ++added_;
    }
    out_.push_back({id, std::move(refs), rule.index});
    if (atoms_.size() + out_.size() > cap_) {
      throw GroundingError("domain too large: grounding exceeds " + std::to_string(cap_) +
                           " ground atoms and rule instances");
    }
  }

  const Program& program_;
  std::shared_ptr<const InputFactTable> facts_;
  std::size_t cap_;
  std::vector<RelationStore> stores_;
  std::vector<CompiledRule> rules_;
  std::vector<DerivedAtom> atoms_;
  std::vector<GroundRule> out_;
  std::uint32_t round_ = 0;
  std::size_t added_ = 0;
};

// ---------------------------------------------------------------- fixpoint

template <class S>
std::vector<typename S::Tag> fixpoint(const Grounding& g, const S& sr, FixpointStrategy strategy) {
  using Tag = typename S::Tag;
  std::vector<Tag> tags(g.atoms.size(), sr.zero());
  std::vector<Tag> next(g.atoms.size(), sr.zero());
  std::vector<char> touched_flag(g.atoms.size(), 0);
  std::vector<std::uint32_t> touched;
  std::vector<char> fire_flag(g.rules.size(), 0);

  auto body_tag = [&](const GroundBodyRef& r) -> Tag {
    return r.input ? sr.input(r.index, r.negated) : tags[r.index];
  };

  constexpr std::size_t kMaxRounds = 1'000'000;
  for (const auto& stratum : g.strata) {
    std::vector<std::uint32_t> fire = stratum;
    const std::uint32_t lo = stratum.front(), hi = stratum.back();
    for (std::size_t round = 0;; ++round) {
      if (round == kMaxRounds) throw GroundingError("fixpoint did not converge");
      touched.clear();
      for (auto ri : fire) {
        const GroundRule& rule = g.rules[ri];
        Tag t = sr.one();
        for (const auto& ref : rule.body) {
          t = sr.mul(t, body_tag(ref));
          if (sr.is_zero(t)) break;
        }
        if (sr.is_zero(t)) continue;
        if (!touched_flag[rule.head]) {
          touched_flag[rule.head] = 1;
          touched.push_back(rule.head);
          next[rule.head] = tags[rule.head];
        }
        next[rule.head] = sr.add(next[rule.head], t);
      }
      std::vector<std::uint32_t> changed;
      for (auto a : touched) {
        touched_flag[a] = 0;
        if (!(next[a] == tags[a])) {
          tags[a] = std::move(next[a]);
          changed.push_back(a);
        }
      }
      if (changed.empty()) break;
      if (strategy == FixpointStrategy::naive) continue;
      fire.clear();
      for (auto a : changed)
        for (auto ri : g.uses[a])
          if (ri >= lo && ri <= hi && !fire_flag[ri]) {
            fire_flag[ri] = 1;
            fire.push_back(ri);
          }
      if (fire.empty()) break;
      std::sort(fire.begin(), fire.end());
      for (auto ri : fire) fire_flag[ri] = 0;
    }
  }
  return tags;
}

void require_matching(const Session& s, const ProbAssignment& env) {
  if (static_cast<std::size_t>(env.size()) != s.fact_count()) {
    throw std::invalid_argument("assignment has " + std::to_string(env.size()) + " probabilities but the program has " +
                                std::to_string(s.fact_count()) + " input facts");
  }
}

}  // namespace

// ---------------------------------------------------------------- session

std::optional<std::size_t> Session::answer_index(const Tuple& t) const {
  const auto& a = grounding_->answers;
  auto it = std::find(a.begin(), a.end(), t);
  if (it == a.end()) return std::nullopt;
  return static_cast<std::size_t>(it - a.begin());
}

ProbAssignment Session::assignment(Eigen::VectorXd probabilities, bool mark_normalized) const {
  ProbAssignment env(std::move(probabilities), grounding_->layout);
  if (mark_normalized) {
    for (std::size_t g = 0; g < grounding_->layout->groups.size(); ++g)
      if (std::abs(env.group_mass(g) - 1.0) <= 1e-6) env.mark_normalized(g);
  }
  return env;
}

Session compile(const Program& program, std::size_t train_k, CompileOptions options) {
  if (train_k == 0) throw std::invalid_argument("k must be at least 1");
  auto diags = validate(program);
  if (!diags.empty()) throw ProgramError(std::move(diags));

  Session s;
  s.program_ = std::make_shared<const Program>(program);
  auto facts = std::make_shared<const InputFactTable>(program);
  if (facts->size() > options.max_ground_size) {
    throw GroundingError("domain too large: " + std::to_string(facts->size()) + " input facts");
  }
  s.grounding_ = std::make_shared<const Grounding>(Grounder(program, facts, options.max_ground_size).run());
  s.train_k_ = train_k;
  s.test_k_ = train_k;
  return s;
}

Session set_test_k(const Session& session, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  Session s = session;
  s.test_k_ = k;
  return s;
}

double OutputDistribution::probability(const Tuple& answer) const {
  auto it = std::find(answers.begin(), answers.end(), answer);
  if (it == answers.end()) throw std::invalid_argument("unknown answer " + tuple_to_string(answer));
  return probabilities[it - answers.begin()];
}

// ---------------------------------------------------------------- forward / backward

Evaluation forward(const Session& session, const ProbAssignment& env, FixpointStrategy strategy) {
  require_matching(session, env);
  const Grounding& g = session.grounding();
  Evaluation ev;
  const auto tags = fixpoint(g, TopKSemiring{session.test_k(), &env, &ev.truncated}, strategy);

  ev.env = env;
  ev.distribution.answers = g.answers;
  ev.distribution.probabilities = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.answers.size()));
  ev.bags.resize(g.answers.size());
  for (std::size_t a = 0; a < g.answers.size(); ++a) {
    if (!g.answer_atoms[a]) continue;
    ev.bags[a] = tags[*g.answer_atoms[a]];
    ev.distribution.probabilities[static_cast<Eigen::Index>(a)] = dnf_probability(ev.bags[a], env);
  }
  return ev;
}

Eigen::VectorXd backward(const Session& session, const Evaluation& eval, const Eigen::VectorXd& upstream) {
  if (static_cast<std::size_t>(upstream.size()) != eval.bags.size()) {
    throw std::invalid_argument("upstream has " + std::to_string(upstream.size()) + " entries for " +
                                std::to_string(eval.bags.size()) + " answers");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(session.fact_count()));
  for (std::size_t a = 0; a < eval.bags.size(); ++a) {
    const double u = upstream[static_cast<Eigen::Index>(a)];
    if (u == 0.0 || eval.bags[a].empty()) continue;
    for (const auto& [f, d] : dnf_gradient(eval.bags[a], eval.env)) grad[f] += u * d;
  }
  return grad;
}

Eigen::VectorXd backward(const Session& session, const Evaluation& eval, const std::map<Tuple, double>& upstream) {
  Eigen::VectorXd dense = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eval.bags.size()));
  for (const auto& [t, u] : upstream) {
    auto idx = session.answer_index(t);
    if (!idx) throw std::invalid_argument("upstream names unknown answer " + tuple_to_string(t));
    dense[static_cast<Eigen::Index>(*idx)] = u;
  }
  return backward(session, eval, dense);
}

Eigen::MatrixXd jacobian(const Session& session, const Evaluation& eval) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(eval.bags.size()),
                                            static_cast<Eigen::Index>(session.fact_count()));
  for (std::size_t a = 0; a < eval.bags.size(); ++a)
    for (const auto& [f, d] : dnf_gradient(eval.bags[a], eval.env)) j(static_cast<Eigen::Index>(a), f) = d;
  return j;
}

// ---------------------------------------------------------------- oracle

namespace {

// One enumeration variable: list of (facts set true, weight) alternatives.
struct WorldVar {
  std::vector<std::pair<std::vector<FactId>, double>> options;
};

std::vector<WorldVar> world_vars(const Session& session, const ProbAssignment& env, std::vector<char>& base) {
  const auto& layout = session.grounding().layout;
  base.assign(session.fact_count(), 0);
  std::vector<WorldVar> vars;
  for (const auto& grp : layout->groups) {
    double mass = 0.0;
    WorldVar v;
    for (FactId m : grp.members) {
      mass += env[m];
      if (env[m] > 0.0) v.options.push_back({{m}, env[m]});
    }
    if (std::abs(mass - 1.0) > 1e-6) {
      throw std::invalid_argument("oracle requires normalized exclusion groups; group " + std::to_string(grp.id) +
                                  " sums to " + std::to_string(mass));
    }
    if (v.options.size() == 1) base[v.options[0].first[0]] = 1;
    else vars.push_back(std::move(v));
  }
  for (FactId f = 0; f < session.fact_count(); ++f) {
    if (layout->grouped(f)) continue;
    const double p = env[f];
    if (p >= 1.0) base[f] = 1;
    else if (p > 0.0) vars.push_back({{{{f}, p}, {{}, 1.0 - p}}});
  }
  return vars;
}

}  // namespace

double oracle_world_count(const Session& session, const ProbAssignment& env) {
  require_matching(session, env);
  std::vector<char> base;
  double n = 1.0;
  for (const auto& v : world_vars(session, env, base)) n *= static_cast<double>(v.options.size());
  return n;
}

OutputDistribution oracle_forward(const Session& session, const ProbAssignment& env, OracleOptions options) {
  require_matching(session, env);
  std::vector<char> base;
  const auto vars = world_vars(session, env, base);
  double count = 1.0;
  for (const auto& v : vars) count *= static_cast<double>(v.options.size());
  if (count > static_cast<double>(options.max_worlds)) {
    throw std::invalid_argument("oracle would enumerate " + std::to_string(static_cast<long double>(count)) +
                                " worlds (cap " + std::to_string(options.max_worlds) + ")");
  }

  const Grounding& g = session.grounding();
  OutputDistribution out;
  out.answers = g.answers;
  out.probabilities = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.answers.size()));

  std::vector<std::size_t> choice(vars.size(), 0);
  std::vector<char> world;
  BooleanSemiring sr{&world};
  for (;;) {
    world = base;
    double w = 1.0;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto& [set, p] = vars[i].options[choice[i]];
      for (FactId f : set) world[f] = 1;
      w *= p;
    }
    const auto tags = fixpoint(g, sr, FixpointStrategy::semi_naive);
    for (std::size_t a = 0; a < g.answers.size(); ++a)
      if (g.answer_atoms[a] && tags[*g.answer_atoms[a]]) out.probabilities[static_cast<Eigen::Index>(a)] += w;

    std::size_t i = 0;
    for (; i < vars.size(); ++i) {
      if (++choice[i] < vars[i].options.size()) break;
      choice[i] = 0;
    }
    if (i == vars.size()) break;
  }
  return out;
}

}  // namespace nsl
