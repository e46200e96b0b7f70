#include <random>

#include "doctest.h"
#include "nsl/parser.hpp"
#include "nsl/reasoner.hpp"
#include "oracles.hpp"

using namespace nsl;

namespace {

const char* kSum2 = "input digit(img:2, val:3) group by img. output sum(s:5). sum(A+B) :- digit(0,A), digit(1,B).";

// is-3-or-4 modelled directly as one independent fact per image.
const char* kCount2 =
    "input hit(img:2). rel cnt(i:3, c:3). output count(c:3)."
    "cnt(1, 1) :- hit(0). cnt(1, 0) :- not hit(0)."
    "cnt(J+1, C+1) :- cnt(J, C), hit(J)."
    "cnt(J+1, C) :- cnt(J, C), not hit(J)."
    "count(C) :- cnt(2, C).";

const char* kPath3 =
    "input dot(c:9) facts {(0),(8)}."
    "input edge(a:9, b:9) facts {(0,1),(1,2),(3,4),(4,5),(6,7),(7,8),(0,3),(3,6),(1,4),(4,7),(2,5),(5,8)}."
    "rel path(a:9, b:9). output connected()."
    "path(X, Y) :- edge(X, Y). path(X, Y) :- edge(Y, X). path(X, Z) :- path(X, Y), path(Y, Z)."
    "connected() :- dot(X), dot(Y), path(X, Y), X != Y.";

Session session_of(const char* text, std::size_t k) { return compile(parse_program(text), k); }

Eigen::VectorXd random_probs(const Session& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  Eigen::VectorXd p(static_cast<Eigen::Index>(s.fact_count()));
  for (auto& x : p) x = u(rng);
  for (const auto& g : s.grounding().layout->groups) {
    double m = 0;
    for (auto f : g.members) m += p[f];
    for (auto f : g.members) p[f] /= m;
  }
  return p;
}

}  // namespace

TEST_CASE("compile sum program") {
  auto s = session_of(kSum2, 3);
  CHECK(s.fact_count() == 6);
  CHECK(s.grounding().rules.size() == 9);
  CHECK(s.answer_count() == 5);
  CHECK(s.test_k() == 3);
  CHECK(s.fact_names()[4] == "digit(1,1)");
  CHECK_THROWS_AS(compile(parse_unchecked("input u(x:1). rel p(x:1). output q(x:1). p(X) :- u(X), not q(X). q(X) :- p(X)."), 1),
                  ProgramError);
  CHECK_THROWS_AS(compile(parse_program(kSum2), 0), std::invalid_argument);
}

TEST_CASE("grounding cap") {
  CompileOptions small;
  small.max_ground_size = 10;
  CHECK_THROWS_WITH_AS(compile(parse_program(kSum2), 1, small), doctest::Contains("domain too large"), GroundingError);
}

TEST_CASE("forward on the sum program") {
  auto s = session_of(kSum2, 3);
  SUBCASE("uniform digits") {
    auto ev = forward(s, s.assignment(Eigen::VectorXd::Constant(6, 1.0 / 3)));
    const double expect[] = {1, 2, 3, 2, 1};
    for (int i = 0; i < 5; ++i) CHECK(ev.distribution.probabilities[i] == doctest::Approx(expect[i] / 9).epsilon(1e-12));
    CHECK(ev.distribution.probability({Constant::integer(2)}) == doctest::Approx(3.0 / 9));
  }
  SUBCASE("one-hot digits") {
    Eigen::VectorXd p(6);
    p << 0, 0, 1, 0, 0, 1;
    auto ev = forward(s, s.assignment(p));
    for (int i = 0; i < 4; ++i) CHECK(ev.distribution.probabilities[i] == 0.0);
    CHECK(ev.distribution.probabilities[4] == 1.0);
  }
  SUBCASE("missing fact probability") {
    auto layout = std::make_shared<ExclusionLayout>();
    layout->group_of.assign(5, kNoGroup);
    CHECK_THROWS_AS(forward(s, ProbAssignment(Eigen::VectorXd::Zero(5), layout)), std::invalid_argument);
  }
}

TEST_CASE("how-many over two images") {
  auto s = session_of(kCount2, 8);
  auto ev = forward(s, s.assignment(Eigen::VectorXd::Constant(2, 0.5)));
  CHECK(ev.distribution.probabilities[0] == doctest::Approx(0.25));
  CHECK(ev.distribution.probabilities[1] == doctest::Approx(0.5));
  CHECK(ev.distribution.probabilities[2] == doctest::Approx(0.25));
}

TEST_CASE("forward with large k equals the oracle") {
  std::mt19937_64 rng(3);
  for (const char* text : {kSum2, kCount2, kPath3}) {
    auto s = session_of(text, 64);
    for (int trial = 0; trial < 30; ++trial) {
      auto env = s.assignment(random_probs(s, rng));
      auto fw = forward(s, env);
      auto orc = oracle_forward(s, env);
      for (Eigen::Index a = 0; a < fw.distribution.probabilities.size(); ++a)
        CHECK(fw.distribution.probabilities[a] == doctest::Approx(orc.probabilities[a]).epsilon(1e-9));
    }
  }
}

TEST_CASE("deterministic env: forward equals oracle exactly") {
  auto s = session_of(kPath3, 2);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.fact_count()));
  p[0] = p[1] = 1;
  for (int e : {2, 3, 4, 5}) p[e] = 1;  // a row path 0-1-2 plus 3-4-5 ... no link to 8
  auto env = s.assignment(p);
  CHECK(forward(s, env).distribution.probabilities == oracle_forward(s, env).probabilities);
  p[2 + 11] = 1;  // edge (5,8)
  p[2 + 6] = 1;   // edge (0,3)
  auto env2 = s.assignment(p);
  CHECK(forward(s, env2).distribution.probabilities[0] == 1.0);
  CHECK(oracle_forward(s, env2).probabilities[0] == 1.0);
}

TEST_CASE("oracle world cap") {
  auto s = session_of(kPath3, 2);
  OracleOptions tiny;
  tiny.max_worlds = 16;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(s.fact_count()), 0.5);
  CHECK_THROWS_AS(oracle_forward(s, s.assignment(p), tiny), std::invalid_argument);
}

TEST_CASE("set_test_k") {
  auto s = session_of(kSum2, 3);
  std::mt19937_64 rng(1);
  auto env = s.assignment(random_probs(s, rng));
  auto base = forward(s, env);
  auto same = forward(set_test_k(s, 3), env);
  CHECK(base.distribution.probabilities == same.distribution.probabilities);
  auto k1 = set_test_k(s, 1);
  CHECK(k1.train_k() == 3);
  CHECK(k1.test_k() == 1);
  auto ev1 = forward(k1, env);
  for (std::size_t a = 0; a < ev1.bags.size(); ++a) {
    auto full = forward(set_test_k(s, 100), env).bags[a];
    REQUIRE(ev1.bags[a].size() == 1);
    CHECK(ev1.bags[a][0].literals == full[0].literals);
  }
  CHECK_THROWS_AS(set_test_k(s, 0), std::invalid_argument);
}

TEST_CASE("k monotonicity") {
  std::mt19937_64 rng(17);
  for (const char* text : {kSum2, kPath3}) {
    auto s = session_of(text, 1);
    for (int trial = 0; trial < 20; ++trial) {
      auto env = s.assignment(random_probs(s, rng));
      Eigen::VectorXd prev = forward(s, env).distribution.probabilities;
      for (std::size_t k = 2; k <= 10; ++k) {
        Eigen::VectorXd cur = forward(set_test_k(s, k), env).distribution.probabilities;
        for (Eigen::Index a = 0; a < cur.size(); ++a) CHECK(cur[a] >= prev[a] - 1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("backward") {
  auto s = session_of(kSum2, 3);
  std::mt19937_64 rng(23);
  auto env = s.assignment(random_probs(s, rng));
  auto ev = forward(s, env);
  CHECK(backward(s, ev, Eigen::VectorXd::Zero(5)) == Eigen::VectorXd::Zero(6));

  Eigen::VectorXd up = Eigen::VectorXd::Zero(5);
  up[2] = 1;
  auto g = backward(s, ev, up);
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(6);
  for (auto [f, d] : dnf_gradient(ev.bags[2], env)) direct[f] = d;
  CHECK(g == direct);
  CHECK(backward(s, ev, std::map<Tuple, double>{{{Constant::integer(2)}, 1.0}}) == direct);
  CHECK_THROWS_AS(backward(s, ev, std::map<Tuple, double>{{{Constant::integer(9)}, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(backward(s, ev, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("backward matches finite differences") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> n01;
  for (const char* text : {kSum2, kCount2, kPath3}) {
    auto s = session_of(text, 4);
    for (int trial = 0; trial < 20; ++trial) {
      auto env = s.assignment(random_probs(s, rng), false);
      Eigen::VectorXd up(static_cast<Eigen::Index>(s.answer_count()));
      for (auto& x : up) x = n01(rng);
      auto ev = forward(s, env);
      auto g = backward(s, ev, up);
      for (FactId f = 0; f < s.fact_count(); ++f) {
        const double eps = 1e-4;
        auto a = env, b = env;
        a.set(f, env[f] + eps);
        b.set(f, env[f] - eps);
        // Perturb probabilities only: the proof bags are held fixed.
        double pa = 0, pb = 0;
        for (std::size_t i = 0; i < ev.bags.size(); ++i) {
          pa += up[static_cast<Eigen::Index>(i)] * dnf_probability(ev.bags[i], a);
          pb += up[static_cast<Eigen::Index>(i)] * dnf_probability(ev.bags[i], b);
        }
        CHECK(oracle::rel_err(g[f], (pa - pb) / (2 * eps)) < 1e-4);
      }
    }
  }
}

TEST_CASE("semi-naive equals naive on random programs") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    // Random edge relation over 5 nodes, reachability with a negated mask.
    std::string facts;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        if (a != b && coin(rng)) facts += std::string(facts.empty() ? "" : ",") + "(" + std::to_string(a) + "," + std::to_string(b) + ")";
    if (facts.empty()) facts = "(0,1)";
    std::string text = "input e(a:5,b:5) facts {" + facts + "}. input m(a:5). rel r(a:5,b:5). rel s(a:5)." +
                       "output o(a:5). r(X,Y) :- e(X,Y), not m(X). r(X,Z) :- r(X,Y), r(Y,Z)." +
                       "s(Y) :- r(0,Y). s(Y) :- s(X), e(X,Y). o(X) :- s(X), r(X,_).";
    auto s = session_of(text.c_str(), 3);
    auto env = s.assignment(random_probs(s, rng));
    auto a = forward(s, env, FixpointStrategy::semi_naive);
    auto b = forward(s, env, FixpointStrategy::naive);
    CHECK(a.distribution.probabilities == b.distribution.probabilities);
    for (std::size_t i = 0; i < a.bags.size(); ++i) CHECK(a.bags[i] == b.bags[i]);
  }
}

TEST_CASE("truncation flag") {
  std::mt19937_64 rng(41);
  // sum(2) has three proofs: (0,2) (1,1) (2,0)
  auto exact = session_of(kSum2, 3);
  auto cut = session_of(kSum2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_probs(exact, rng);
    CHECK_FALSE(forward(exact, exact.assignment(p)).truncated);
    CHECK(forward(cut, cut.assignment(p)).truncated);
  }
  // with absorption a long path is not a cut proof
  auto path = session_of(kPath3, 64);
  auto ev = forward(path, path.assignment(random_probs(path, rng), false));
  const auto exact_p = oracle_forward(path, ev.env);
  if (!ev.truncated) CHECK((ev.distribution.probabilities - exact_p.probabilities).cwiseAbs().maxCoeff() < 1e-12);
}
