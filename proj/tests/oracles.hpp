// Reference computations used only by tests. Deliberately naive.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "nsl/provenance.hpp"

namespace oracle {

using nsl::FactId;

// Calls visit(world, weight) for every world over all facts of the layout.
// A group picks one member or none (weight 1 - sum of members); an
// independent fact is true or false.
inline void for_each_world(const nsl::ProbAssignment& env,
                           const std::function<void(const std::vector<char>&, double)>& visit) {
  const auto& layout = env.layout();
  struct Choice {
    std::vector<std::pair<std::vector<FactId>, double>> options;
  };
  std::vector<Choice> vars;
  for (const auto& g : layout.groups) {
    Choice c;
    double mass = 0;
    for (FactId m : g.members) {
      c.options.push_back({{m}, env[m]});
      mass += env[m];
    }
    c.options.push_back({{}, 1.0 - mass});
    vars.push_back(c);
  }
  for (FactId f = 0; f < layout.fact_count(); ++f)
    if (!layout.grouped(f)) vars.push_back({{{{f}, env[f]}, {{}, 1.0 - env[f]}}});

  std::vector<std::size_t> pick(vars.size(), 0);
  std::vector<char> world(layout.fact_count());
  while (true) {
    std::fill(world.begin(), world.end(), 0);
    double w = 1;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto& [facts, p] = vars[i].options[pick[i]];
      for (auto f : facts) world[f] = 1;
      w *= p;
    }
    visit(world, w);
    std::size_t i = 0;
    for (; i < vars.size(); ++i) {
      if (++pick[i] < vars[i].options.size()) break;
      pick[i] = 0;
    }
    if (i == vars.size()) return;
  }
}

inline bool satisfies(const std::vector<nsl::InputLiteral>& proof, const std::vector<char>& world) {
  for (auto l : proof)
    if ((world[l.fact()] != 0) == l.negated()) return false;
  return true;
}

inline double dnf_probability(const std::vector<std::vector<nsl::InputLiteral>>& proofs, const nsl::ProbAssignment& env) {
  double total = 0;
  for_each_world(env, [&](const std::vector<char>& world, double w) {
    for (const auto& p : proofs)
      if (satisfies(p, world)) {
        total += w;
        return;
      }
  });
  return total;
}

inline std::vector<std::vector<nsl::InputLiteral>> literal_sets(const nsl::ProofBag& bag) {
  std::vector<std::vector<nsl::InputLiteral>> out;
  for (const auto& p : bag.proofs()) out.push_back(p.literals);
  return out;
}

// Max relative error convention: |a - b| / max(|a|, |b|), 0 when both tiny.
inline double rel_err(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  if (m < 1e-12) return 0.0;
  return std::abs(a - b) / m;
}

inline std::shared_ptr<nsl::ExclusionLayout> independent_layout(std::size_t n) {
  auto l = std::make_shared<nsl::ExclusionLayout>();
  l->group_of.assign(n, nsl::kNoGroup);
  return l;
}

}  // namespace oracle
