#include <algorithm>
#include <random>

#include "doctest.h"
#include "nsl/provenance.hpp"
#include "oracles.hpp"

using namespace nsl;
using L = InputLiteral;

namespace {

ProbAssignment env_of(std::vector<double> p, std::shared_ptr<const ExclusionLayout> layout = nullptr) {
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  if (!layout) layout = oracle::independent_layout(p.size());
  return ProbAssignment(v, layout);
}

ProofBag bag_of(const std::vector<std::vector<L>>& sets, const ProbAssignment& env, std::size_t k = 100) {
  std::vector<Proof> ps;
  for (auto s : sets) {
    std::sort(s.begin(), s.end());
    ps.push_back({s, proof_weight(s, env)});
  }
  return ProofBag::from_proofs(ps, k);
}

// Random bag over n independent facts: up to m proofs of 1..3 literals.
ProofBag random_bag(std::mt19937_64& rng, std::size_t n, std::size_t m, const ProbAssignment& env) {
  std::vector<std::vector<L>> sets;
  std::uniform_int_distribution<std::size_t> fact(0, n - 1), len(1, 3);
  std::bernoulli_distribution neg(0.3);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<L> s;
    for (std::size_t j = len(rng); j > 0; --j) {
      auto f = static_cast<FactId>(fact(rng));
      if (std::any_of(s.begin(), s.end(), [&](L l) { return l.fact() == f; })) continue;
      s.push_back(neg(rng) ? L::negative(f) : L::positive(f));
    }
    sets.push_back(s);
  }
  return bag_of(sets, env);
}

ProbAssignment random_env(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> p(n);
  for (auto& x : p) x = u(rng);
  return env_of(p);
}

}  // namespace

TEST_CASE("otimes") {
  auto env = env_of({0.6, 0.5});
  auto a = ProofBag::literal(L::positive(0), env), b = ProofBag::literal(L::positive(1), env);
  auto ab = otimes(a, b, 3, env);
  REQUIRE(ab.size() == 1);
  CHECK(ab[0].literals == std::vector<L>{L::positive(0), L::positive(1)});
  CHECK(ab[0].weight == doctest::Approx(0.30).epsilon(1e-15));
  CHECK(otimes(a, ProofBag::literal(L::negative(0), env), 3, env).empty());
  CHECK(otimes(a, ProofBag::zero(), 3, env).empty());
}

TEST_CASE("otimes prunes exclusion violations") {
  auto layout = std::make_shared<ExclusionLayout>();
  layout->group_of = {0, 0, 0};
  layout->groups.push_back({0, 0, {}, {0, 1, 2}});
  auto env = env_of({0.2, 0.3, 0.5}, layout);
  auto a = ProofBag::literal(L::positive(0), env);
  CHECK(otimes(a, ProofBag::literal(L::positive(1), env), 3, env).empty());
  // d0 implies not d1: the negated literal is dropped
  auto c = otimes(a, ProofBag::literal(L::negative(1), env), 3, env);
  REQUIRE(c.size() == 1);
  CHECK(c[0].literals == std::vector<L>{L::positive(0)});
  CHECK(c[0].weight == doctest::Approx(0.2));
}

TEST_CASE("otimes of 3x3 bags matches brute-force enumeration of unions") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto env = random_env(rng, 6);
    auto a = random_bag(rng, 6, 3, env), b = random_bag(rng, 6, 3, env);
    std::vector<Proof> all;
    for (const auto& p : a.proofs())
      for (const auto& q : b.proofs()) {
        std::set<L> u(p.literals.begin(), p.literals.end());
        u.insert(q.literals.begin(), q.literals.end());
        bool bad = false;
        for (auto l : u) bad |= u.count(l.negation()) > 0;
        if (bad) continue;
        std::vector<L> s(u.begin(), u.end());
        all.push_back({s, proof_weight(s, env)});
      }
    std::sort(all.begin(), all.end(), [](const Proof& x, const Proof& y) {
      return x.weight != y.weight ? x.weight > y.weight : x.literals < y.literals;
    });
    // minimal sets only, then the 3 best
    std::vector<Proof> minimal;
    for (const auto& p : all) {
      bool absorbed = false;
      for (const auto& q : all)
        absorbed |= q.literals != p.literals &&
                    std::includes(p.literals.begin(), p.literals.end(), q.literals.begin(), q.literals.end());
      if (!absorbed && std::none_of(minimal.begin(), minimal.end(), [&](const Proof& e) { return e.literals == p.literals; }))
        minimal.push_back(p);
    }
    std::vector<Proof> expect(minimal.begin(), minimal.begin() + std::min<std::size_t>(3, minimal.size()));
    auto got = otimes(a, b, 3, env);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(got[i].literals == expect[i].literals);
      CHECK(got[i].weight == doctest::Approx(expect[i].weight).epsilon(1e-14));
    }
  }
}

TEST_CASE("oplus") {
  auto env = env_of({0.3, 0.7});
  auto a = ProofBag::literal(L::positive(0), env), b = ProofBag::literal(L::positive(1), env);
  CHECK(oplus(a, ProofBag::zero(), 3) == a);
  CHECK(oplus(a, a, 3) == a);
  auto top = oplus(a, b, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].literals == std::vector<L>{L::positive(1)});
}

TEST_CASE("oplus is associative and commutative without truncation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto env = random_env(rng, 5);
    auto a = random_bag(rng, 5, 3, env), b = random_bag(rng, 5, 3, env), c = random_bag(rng, 5, 3, env);
    const std::size_t k = 100;
    CHECK(oplus(a, b, k) == oplus(b, a, k));
    CHECK(oplus(oplus(a, b, k), c, k) == oplus(a, oplus(b, c, k), k));
  }
}

TEST_CASE("supersets are absorbed") {
  auto env = env_of({0.5, 1.0, 0.5});
  // {0,1} has the same weight as {0} and ranks first on the tie-break
  auto bag = bag_of({{L::positive(0), L::positive(1)}, {L::positive(0)}, {L::positive(0), L::positive(2)}}, env);
  REQUIRE(bag.size() == 1);
  CHECK(bag[0].literals == std::vector<L>{L::positive(0)});
}

TEST_CASE("ties break lexicographically on literal ids") {
  auto env = env_of({0.5, 0.5, 0.5});
  auto bag = bag_of({{L::positive(2)}, {L::positive(0)}, {L::positive(1)}}, env, 2);
  REQUIRE(bag.size() == 2);
  CHECK(bag[0].literals[0] == L::positive(0));
  CHECK(bag[1].literals[0] == L::positive(1));
}

TEST_CASE("dnf probability small cases") {
  auto env = env_of({0.5, 0.5});
  auto ab = bag_of({{L::positive(0)}, {L::positive(1)}}, env);
  CHECK(dnf_probability(ab, env) == doctest::Approx(0.75).epsilon(1e-15));
  auto env3 = env_of({0.3});
  CHECK(dnf_probability(ProofBag::literal(L::positive(0), env3), env3) == doctest::Approx(0.3));
  CHECK(dnf_probability(ProofBag::zero(), env) == 0.0);
  CHECK(dnf_probability(ProofBag::one(), env) == 1.0);

  auto g = dnf_gradient(ab, env);
  REQUIRE(g.size() == 2);
  CHECK(g[0].second == doctest::Approx(0.5));
  auto g1 = dnf_gradient(ProofBag::literal(L::positive(0), env3), env3);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0].second == doctest::Approx(1.0));
}

TEST_CASE("unassigned fact id is an error") {
  auto env = env_of({0.5});
  Proof p{{L::positive(3)}, 0.5};
  auto bag = ProofBag::from_proofs({p}, 1);
  CHECK_THROWS_AS(dnf_probability(bag, env), std::out_of_range);
}

TEST_CASE("dnf probability equals world enumeration") {
  std::mt19937_64 rng(42);
  SUBCASE("independent, 4 proofs over 6 facts") {
    for (int trial = 0; trial < 200; ++trial) {
      auto env = random_env(rng, 6);
      auto bag = random_bag(rng, 6, 4, env);
      CHECK(dnf_probability(bag, env) == doctest::Approx(oracle::dnf_probability(oracle::literal_sets(bag), env)).epsilon(1e-12));
    }
  }
  SUBCASE("with exclusion groups, normalized and not") {
    auto layout = std::make_shared<ExclusionLayout>();
    layout->group_of = {0, 0, 0, 1, 1, 1, kNoGroup, kNoGroup};
    layout->groups.push_back({0, 0, {}, {0, 1, 2}});
    layout->groups.push_back({1, 0, {}, {3, 4, 5}});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> fact(0, 7), len(1, 3);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> p(8);
      for (auto& x : p) x = u(rng);
      double s0 = p[0] + p[1] + p[2], s1 = p[3] + p[4] + p[5];
      const bool normalize = trial % 2 == 0;
      for (int i = 0; i < 3; ++i) p[i] /= normalize ? s0 : s0 * 1.5;
      for (int i = 3; i < 6; ++i) p[i] /= normalize ? s1 : s1 * 1.2;
      auto env = env_of(p, layout);
      std::vector<Proof> proofs;
      for (int j = 0; j < 4; ++j) {
        ProofBag acc = ProofBag::one();
        for (int m = len(rng); m > 0; --m) {
          auto f = static_cast<FactId>(fact(rng));
          acc = otimes(acc, ProofBag::literal(u(rng) < 0.3 ? L::negative(f) : L::positive(f), env), 10, env);
        }
        for (const auto& pr : acc.proofs()) proofs.push_back(pr);
      }
      auto bag = ProofBag::from_proofs(proofs, 10);
      const double expect = oracle::dnf_probability(oracle::literal_sets(bag), env);
      CHECK(dnf_probability(bag, env) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("dnf gradient matches finite differences and multilinearity") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto env = random_env(rng, 5);
    auto bag = random_bag(rng, 5, 4, env);
    auto grad = dnf_gradient(bag, env);
    const double base = dnf_probability(bag, env);
    for (auto [f, d] : grad) {
      const double eps = 1e-4;
      auto up = env, dn = env, one = env, zero = env;
      up.set(f, env[f] + eps);
      dn.set(f, env[f] - eps);
      one.set(f, 1.0);
      zero.set(f, 0.0);
      const double fd = (dnf_probability(bag, up) - dnf_probability(bag, dn)) / (2 * eps);
      CHECK(oracle::rel_err(d, fd) < 1e-4);
      const double p1 = dnf_probability(bag, one), p0 = dnf_probability(bag, zero);
      CHECK(d == doctest::Approx(p1 - p0).epsilon(1e-12));
      CHECK(base == doctest::Approx(env[f] * p1 + (1 - env[f]) * p0).epsilon(1e-12));
    }
  }
}

TEST_CASE("monotone in positive literal probability; truncation never increases P") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto env = random_env(rng, 5);
    std::vector<std::vector<L>> sets;
    std::uniform_int_distribution<FactId> fact(0, 4);
    for (int j = 0; j < 5; ++j) sets.push_back({L::positive(fact(rng))});
    for (int j = 0; j < 3; ++j) {
      FactId a = fact(rng), b = fact(rng);
      if (a != b) sets.push_back({L::positive(std::min(a, b)), L::positive(std::max(a, b))});
    }
    auto full = bag_of(sets, env);
    const double p = dnf_probability(full, env);
    for (std::size_t k = 1; k < full.size(); ++k) CHECK(dnf_probability(bag_of(sets, env, k), env) <= p + 1e-15);
    auto bumped = env;
    FactId f = fact(rng);
    bumped.set(f, std::min(1.0, env[f] + 0.1));
    CHECK(dnf_probability(full, bumped) >= p - 1e-15);
  }
}
