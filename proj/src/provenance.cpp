#include "nsl/provenance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace nsl {

ProbAssignment::ProbAssignment(Eigen::VectorXd probabilities, std::shared_ptr<const ExclusionLayout> layout)
    : probs_(std::move(probabilities)), layout_(std::move(layout)) {
  if (!layout_) throw std::invalid_argument("probability assignment requires an exclusion layout");
  if (static_cast<std::size_t>(probs_.size()) != layout_->fact_count()) {
    throw std::invalid_argument("probability assignment has " + std::to_string(probs_.size()) +
                                " values for " + std::to_string(layout_->fact_count()) + " facts");
  }
  normalized_.assign(layout_->groups.size(), false);
}

double ProbAssignment::literal_weight(InputLiteral l) const {
  if (l.fact() >= probs_.size()) throw std::out_of_range("unassigned fact id " + std::to_string(l.fact()));
  const double p = probs_[l.fact()];
  return l.negated() ? 1.0 - p : p;
}

void ProbAssignment::mark_normalized(std::size_t group, bool normalized) { normalized_.at(group) = normalized; }

double ProbAssignment::group_mass(std::size_t group) const {
  double s = 0.0;
  for (FactId m : layout_->groups.at(group).members) s += probs_[m];
  return s;
}

std::vector<std::string> ProbAssignment::check(double tol) const {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    if (!(probs_[i] >= 0.0 && probs_[i] <= 1.0)) {
      out.push_back("probability of fact " + std::to_string(i) + " outside [0,1]: " + std::to_string(probs_[i]));
    }
  }
  for (std::size_t g = 0; g < normalized_.size(); ++g) {
    if (normalized_[g] && std::abs(group_mass(g) - 1.0) > tol) {
      out.push_back("normalized group " + std::to_string(g) + " sums to " + std::to_string(group_mass(g)));
    }
  }
  return out;
}

double proof_weight(const std::vector<InputLiteral>& literals, const ProbAssignment& env) {
  double w = 1.0;
  for (auto l : literals) w *= env.literal_weight(l);
  return w;
}

ProofBag ProofBag::one() {
  ProofBag b;
  b.proofs_.push_back(Proof{{}, 1.0});
  return b;
}

ProofBag ProofBag::literal(InputLiteral l, const ProbAssignment& env) {
  ProofBag b;
  b.proofs_.push_back(Proof{{l}, env.literal_weight(l)});
  return b;
}

namespace {

bool ranks_before(const Proof& a, const Proof& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  return a.literals < b.literals;
}

}  // namespace

ProofBag ProofBag::from_proofs(std::vector<Proof> proofs, std::size_t k, bool* truncated) {
  // Dedup by literal set keeping the first occurrence's weight; weights of
  // equal sets agree whenever they come from one assignment.
  std::sort(proofs.begin(), proofs.end(), [](const Proof& a, const Proof& b) { return a.literals < b.literals; });
  proofs.erase(std::unique(proofs.begin(), proofs.end(),
                           [](const Proof& a, const Proof& b) { return a.literals == b.literals; }),
               proofs.end());
  std::sort(proofs.begin(), proofs.end(), ranks_before);

  // Absorption: a superset of another proof adds nothing to the disjunction.
  // Walk in rank order so the k best minimal proofs survive.
  auto subset = [](const std::vector<InputLiteral>& a, const std::vector<InputLiteral>& b) {
    return a.size() <= b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  std::vector<Proof> kept;
  for (auto& p : proofs) {
    const bool absorbed = std::any_of(kept.begin(), kept.end(), [&](const Proof& q) { return subset(q.literals, p.literals); });
    if (kept.size() == k) {
      if (!truncated) break;
      if (!absorbed) {
        *truncated = true;
        break;
      }
      continue;
    }
    if (absorbed) continue;
    // An equal-weight superset can rank first on the literal tie-break.
    std::erase_if(kept, [&](const Proof& q) { return subset(p.literals, q.literals); });
    kept.push_back(std::move(p));
  }
  std::sort(kept.begin(), kept.end(), ranks_before);
  ProofBag b;
  b.proofs_ = std::move(kept);
  return b;
}

bool ProofBag::same_proofs(const ProofBag& other) const {
  if (proofs_.size() != other.proofs_.size()) return false;
  for (std::size_t i = 0; i < proofs_.size(); ++i) {
    if (proofs_[i].literals != other.proofs_[i].literals) return false;
  }
  return true;
}

std::optional<std::vector<InputLiteral>> conjoin(const std::vector<InputLiteral>& a,
                                                 const std::vector<InputLiteral>& b,
                                                 const ExclusionLayout& layout) {
  std::vector<InputLiteral> u;
  u.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  // Literals of one fact are adjacent (codes 2f, 2f+1).
  for (std::size_t i = 1; i < u.size(); ++i) {
    if (u[i].fact() == u[i - 1].fact()) return std::nullopt;
  }
  bool grouped_negation = false;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const FactId f = u[i].fact();
    if (f >= layout.fact_count()) throw std::out_of_range("unassigned fact id " + std::to_string(f));
    if (layout.grouped(f) && u[i].negated()) grouped_negation = true;
  }
  std::map<std::int32_t, FactId> chosen;
  for (auto l : u) {
    const auto g = layout.group_of[l.fact()];
    if (g == kNoGroup || l.negated()) continue;
    if (!chosen.emplace(g, l.fact()).second) return std::nullopt;
  }
  if (grouped_negation && !chosen.empty()) {
    std::erase_if(u, [&](InputLiteral l) {
      const auto g = layout.group_of[l.fact()];
      return l.negated() && g != kNoGroup && chosen.contains(g);
    });
  }
  return u;
}

ProofBag otimes(const ProofBag& a, const ProofBag& b, std::size_t k, const ProbAssignment& env, bool* truncated) {
  std::vector<Proof> out;
  out.reserve(a.size() * b.size());
  for (const auto& pa : a.proofs()) {
    for (const auto& pb : b.proofs()) {
      auto u = conjoin(pa.literals, pb.literals, env.layout());
      if (!u) continue;
      const double w = proof_weight(*u, env);
      out.push_back(Proof{std::move(*u), w});
    }
  }
  return ProofBag::from_proofs(std::move(out), k, truncated);
}

ProofBag oplus(const ProofBag& a, const ProofBag& b, std::size_t k, bool* truncated) {
  std::vector<Proof> all;
  all.reserve(a.size() + b.size());
  all.insert(all.end(), a.proofs().begin(), a.proofs().end());
  all.insert(all.end(), b.proofs().begin(), b.proofs().end());
  return ProofBag::from_proofs(std::move(all), k, truncated);
}

std::vector<FactId> support(const ProofBag& bag) {
  std::vector<FactId> s;
  for (const auto& p : bag.proofs()) {
    for (auto l : p.literals) s.push_back(l.fact());
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

namespace {

using Clause = std::vector<InputLiteral>;
constexpr FactId kOther = std::numeric_limits<FactId>::max();

// Shannon expansion over the bag's support. Variables are either an
// independent fact (key = fact id) or a whole exclusion group (key = -(g+1)).
class Expander {
 public:
  Expander(const ProbAssignment& env, std::vector<FactId> support, bool with_gradient)
      : env_(env), layout_(env.layout()), support_(std::move(support)), grad_(with_gradient) {
    for (FactId f : support_) {
      if (f >= static_cast<FactId>(env_.size())) throw std::out_of_range("unassigned fact id " + std::to_string(f));
    }
  }

  struct Value {
    double p = 0.0;
    Eigen::VectorXd g;
  };

  Value run(std::vector<Clause> clauses) { return expand(clauses); }

 private:
  std::int64_t var_of(FactId f) const {
    const auto g = layout_.group_of[f];
    return g == kNoGroup ? static_cast<std::int64_t>(f) : -static_cast<std::int64_t>(g) - 1;
  }

  Eigen::Index local(FactId f) const {
    return std::lower_bound(support_.begin(), support_.end(), f) - support_.begin();
  }

  Value constant(double p) const {
    Value v;
    v.p = p;
    if (grad_) v.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(support_.size()));
    return v;
  }

  // Condition on var := value. Returns false if some clause became true.
  bool condition(const std::vector<Clause>& in, std::int64_t var, FactId value, bool truth,
                 std::vector<Clause>& out) const {
    out.clear();
    for (const auto& c : in) {
      Clause rest;
      bool dead = false;
      for (auto l : c) {
        if (var_of(l.fact()) != var) {
          rest.push_back(l);
          continue;
        }
        const bool holds = var < 0 ? ((l.fact() == value) != l.negated()) : (truth != l.negated());
        if (!holds) {
          dead = true;
          break;
        }
      }
      if (dead) continue;
      if (rest.empty()) return false;
      out.push_back(std::move(rest));
    }
    return true;
  }

  Value expand(const std::vector<Clause>& clauses) {
    if (clauses.empty()) return constant(0.0);
    for (const auto& c : clauses) {
      if (c.empty()) return constant(1.0);
    }
    if (clauses.size() == 1) return conjunction(clauses[0]);

    std::map<std::int64_t, int> counts;
    for (const auto& c : clauses) {
      std::int64_t last = std::numeric_limits<std::int64_t>::min();
      for (auto l : c) {
        const auto v = var_of(l.fact());
        if (v != last) ++counts[v];
        last = v;
      }
    }
    std::int64_t var = counts.begin()->first;
    int best = counts.begin()->second;
    for (const auto& [v, n] : counts) {
      if (n > best) {
        best = n;
        var = v;
      }
    }

    struct Branch {
      FactId value;
      bool truth;
      double weight;
      std::vector<std::pair<FactId, double>> dweight;
    };
    std::vector<Branch> branches;
    if (var >= 0) {
      const auto f = static_cast<FactId>(var);
      branches.push_back({f, true, env_[f], {{f, 1.0}}});
      branches.push_back({f, false, 1.0 - env_[f], {{f, -1.0}}});
    } else {
      std::vector<FactId> members;
      for (const auto& c : clauses) {
        for (auto l : c) {
          if (var_of(l.fact()) == var) members.push_back(l.fact());
        }
      }
      std::sort(members.begin(), members.end());
      members.erase(std::unique(members.begin(), members.end()), members.end());
      Branch other{kOther, false, 1.0, {}};
      for (FactId m : members) {
        branches.push_back({m, true, env_[m], {{m, 1.0}}});
        other.weight -= env_[m];
        other.dweight.emplace_back(m, -1.0);
      }
      branches.push_back(std::move(other));
    }

    Value total = constant(0.0);
    std::vector<Clause> sub;
    for (const auto& br : branches) {
      if (!grad_ && br.weight == 0.0) continue;
      Value child = condition(clauses, var, br.value, br.truth, sub) ? expand(sub) : constant(1.0);
      total.p += br.weight * child.p;
      if (grad_) {
        total.g += br.weight * child.g;
        for (const auto& [fact, d] : br.dweight) total.g[local(fact)] += d * child.p;
      }
    }
    return total;
  }

  // Probability of one conjunction. A positive group member fixes its group;
  // otherwise negated members leave mass 1 - sum(p). Literals of one group
  // need not be adjacent in id order, so collect them per variable.
  Value conjunction(const Clause& c) const {
    std::map<std::int64_t, std::pair<std::vector<FactId>, std::vector<FactId>>> by_var;
    for (auto l : c) {
      auto& [pos, neg] = by_var[var_of(l.fact())];
      (l.negated() ? neg : pos).push_back(l.fact());
    }
    struct Factor {
      double value;
      std::vector<std::pair<FactId, double>> dvalue;
    };
    std::vector<Factor> factors;
    for (const auto& [var, lits] : by_var) {
      const auto& [pos, neg] = lits;
      if (var >= 0) {
        if (!pos.empty() && !neg.empty()) return constant(0.0);
        const FactId f = static_cast<FactId>(var);
        factors.push_back(pos.empty() ? Factor{1.0 - env_[f], {{f, -1.0}}} : Factor{env_[f], {{f, 1.0}}});
        continue;
      }
      if (pos.size() > 1) return constant(0.0);
      if (pos.size() == 1) {
        if (std::find(neg.begin(), neg.end(), pos[0]) != neg.end()) return constant(0.0);
        factors.push_back(Factor{env_[pos[0]], {{pos[0], 1.0}}});
      } else {
        Factor f{1.0, {}};
        for (FactId n : neg) {
          f.value -= env_[n];
          f.dvalue.emplace_back(n, -1.0);
        }
        factors.push_back(std::move(f));
      }
    }
    Value v = constant(1.0);
    for (const auto& f : factors) v.p *= f.value;
    if (grad_) {
      for (std::size_t a = 0; a < factors.size(); ++a) {
        double rest = 1.0;
        for (std::size_t b = 0; b < factors.size(); ++b) {
          if (b != a) rest *= factors[b].value;
        }
        for (const auto& [fact, d] : factors[a].dvalue) v.g[local(fact)] += d * rest;
      }
    }
    return v;
  }

  const ProbAssignment& env_;
  const ExclusionLayout& layout_;
  std::vector<FactId> support_;
  bool grad_;
};

std::vector<Clause> clauses_of(const ProofBag& bag) {
  std::vector<Clause> cs;
  cs.reserve(bag.size());
  for (const auto& p : bag.proofs()) cs.push_back(p.literals);
  return cs;
}

}  // namespace

double dnf_probability(const ProofBag& bag, const ProbAssignment& env) {
  Expander e(env, support(bag), false);
  return e.run(clauses_of(bag)).p;
}

DnfResult dnf_evaluate(const ProofBag& bag, const ProbAssignment& env) {
  auto sup = support(bag);
  Expander e(env, sup, true);
  auto v = e.run(clauses_of(bag));
  DnfResult r;
  r.probability = v.p;
  r.gradient.reserve(sup.size());
  for (std::size_t i = 0; i < sup.size(); ++i) r.gradient.emplace_back(sup[i], v.g[static_cast<Eigen::Index>(i)]);
  return r;
}

SparseGradient dnf_gradient(const ProofBag& bag, const ProbAssignment& env) {
  return dnf_evaluate(bag, env).gradient;
}

}  // namespace nsl
