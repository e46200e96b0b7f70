#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "nsl/assurance.hpp"
#include "nsl/datasets.hpp"
#include "nsl/tasks.hpp"

using namespace nsl;

namespace {

// Reference calibration: assign each sample to a bin by scanning the edges.
std::pair<double, double> reference_calibration(const std::vector<double>& conf, const std::vector<bool>& ok, int bins) {
  double e = 0, m = 0;
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
    double cs = 0, as = 0;
    int n = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const bool in = conf[i] >= lo && (conf[i] < hi || (b == bins - 1 && conf[i] <= 1.0));
      if (!in) continue;
      cs += conf[i];
      as += ok[i];
      ++n;
    }
    if (!n) continue;
    const double g = std::abs(as / n - cs / n);
    e += g * n / static_cast<double>(conf.size());
    m = std::max(m, g);
  }
  return {e, m};
}

Pipeline trained_sum2() {
  static const Pipeline p = [] {
    auto task = builtin_program("sum_digits:n=2");
    Pipeline q(PerceptionModel(task.nesy_model({8}), 5), compile(task.program, 3));
    TrainConfig tc;
    tc.epochs = 6;
    tc.learning_rate = 0.5;
    train(q, make_task_dataset(task, {200, 0.2, 11}), tc);
    return q;
  }();
  return p;
}

}  // namespace

TEST_CASE("calibration: fixtures") {
  CHECK(ece({1.0, 1.0, 1.0}, {true, true, true}) == 0.0);
  CHECK(mce({1.0, 1.0, 1.0}, {true, true, true}) == 0.0);
  CHECK(ece({0.9, 0.9}, {true, false}, 10) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(mce({0.9, 0.9}, {true, false}, 10) == doctest::Approx(0.4).epsilon(1e-15));
  // two bins: |1 - 0.95| * 2/4 + |0 - 0.25| * 2/4
  CHECK(ece({0.9, 1.0, 0.2, 0.3}, {true, true, false, false}, 2) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(mce({0.9, 1.0, 0.2, 0.3}, {true, true, false, false}, 2) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(ece({}, {}), MetricError);
  CHECK_THROWS_AS(ece({0.5}, {true, false}), MetricError);
  CHECK_THROWS_AS(ece({1.5}, {true}), MetricError);
  auto bins = calibration_bins({0.0, 1.0, 0.5}, {true, true, true}, 15);
  CHECK(bins.count.front() == 1);
  CHECK(bins.count.back() == 1);
  CHECK(bins.count[7] == 1);
}

TEST_CASE("calibration matches the reference and ece <= mce") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng.below(60);
    std::vector<double> conf(n);
    std::vector<bool> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = trial % 10 == 0 ? std::round(rng.uniform() * 15) / 15 : rng.uniform();
      ok[i] = trial % 2 ? rng.uniform() < conf[i] : rng.bernoulli(0.5);
    }
    const int bins = 1 + static_cast<int>(rng.below(20));
    auto [re, rm] = reference_calibration(conf, ok, bins);
    const double e = ece(conf, ok, static_cast<std::size_t>(bins)), m = mce(conf, ok, static_cast<std::size_t>(bins));
    CHECK(e == doctest::Approx(re).epsilon(1e-12));
    CHECK(m == doctest::Approx(rm).epsilon(1e-12));
    CHECK(e <= m + 1e-15);
    CHECK(e >= 0);
    CHECK(m <= 1);
  }
}

TEST_CASE("asr, csr") {
  CHECK(asr(0.8, 0.2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(asr(0.7, 0.7) == 0.0);
  CHECK(asr(0.5, 0.6) < 0);
  CHECK_THROWS_AS(asr(0.0, 0.0), MetricError);
  // an NN row reported acc 0.283 with ASR 0.991
  const double acc_adv = 0.283 * (1 - 0.991);
  CHECK(std::abs(acc_adv - 0.0025) <= 0.0005);
  CHECK(asr(0.283, acc_adv) == doctest::Approx(0.991));
  CHECK(csr(0.6, 0.6) == 0.0);
  CHECK(csr(1.0, 0.5) == 0.5);
  CHECK_THROWS_AS(csr(0.0, 0.1), MetricError);
  Rng rng(3);
  std::vector<double> suite;
  for (int i = 0; i < 20; ++i) suite.push_back(rng.uniform());
  const double mean_acc = std::accumulate(suite.begin(), suite.end(), 0.0) / 20;
  CHECK(csr(0.9, suite) == doctest::Approx(csr(0.9, mean_acc)).epsilon(1e-14));
}

TEST_CASE("disparity") {
  std::map<std::string, GroupTally> same{{"a", {9, 10}}, {"b", {18, 20}}};
  CHECK(disparity(same, {"a"}) == 0.0);
  std::map<std::string, GroupTally> split{{"maj", {90, 100}}, {"min", {8, 10}}};
  CHECK(disparity(split, {"maj"}) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(disparity(split, {"maj", "min"}), MetricError);
  CHECK_THROWS_AS(disparity(split, {}), MetricError);

  // five groups from raw per-sample records
  Rng rng(8);
  struct Rec {
    std::string group;
    bool ok;
  };
  std::vector<Rec> recs;
  const std::vector<std::pair<std::string, int>> sizes{{"g0", 50}, {"g1", 30}, {"g2", 20}, {"g3", 12}, {"g4", 8}};
  for (const auto& [g, n] : sizes)
    for (int i = 0; i < n; ++i) recs.push_back({g, rng.bernoulli(g == "g0" ? 0.9 : 0.6)});
  std::map<std::string, GroupTally> tallies;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : recs) {
    ++tallies[r.group].total;
    tallies[r.group].correct += r.ok;
    ++counts[r.group];
  }
  const auto major = majority_groups(counts);
  CHECK(major == std::set<std::string>{"g0", "g1"});
  double mc = 0, mn = 0, nc = 0, nn = 0;
  for (const auto& r : recs) {
    if (r.group == "g0" || r.group == "g1") {
      mc += r.ok;
      ++mn;
    } else {
      nc += r.ok;
      ++nn;
    }
  }
  CHECK(disparity(tallies, major) == doctest::Approx(std::abs(mc / mn - nc / nn)).epsilon(1e-14));
}

TEST_CASE("pgd stays in the epsilon ball and the unit box") {
  auto p = trained_sum2();
  auto task = builtin_program("sum_digits:n=2");
  auto data = make_task_dataset(task, {40, 0.3, 99});
  // push some features to the box edges
  for (std::size_t i = 0; i < data.size(); i += 3) data.samples[i].features.col(0).setOnes();
  for (double eps : {0.0, 0.01, 0.05, 0.3}) {
    AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.steps = 5;
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto r = pgd_attack(p, data.samples[i], cfg, i);
      CHECK(r.linf(data.samples[i].features) <= eps + 1e-12);
      CHECK(r.adversarial.minCoeff() >= 0.0);
      CHECK(r.adversarial.maxCoeff() <= 1.0);
      if (eps == 0) {
        CHECK(r.adversarial == data.samples[i].features);
        CHECK(r.attacked.label == r.clean.label);
      }
    }
  }
  AttackConfig bad;
  bad.steps = 0;
  CHECK_THROWS_AS(pgd_attack(p, data.samples[0], bad), MetricError);
}

TEST_CASE("pgd increases the loss") {
  auto p = trained_sum2();
  auto task = builtin_program("sum_digits:n=2");
  auto data = make_task_dataset(task, {60, 0.3, 98});
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.steps = 10;
  std::size_t up = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = pgd_attack(p, data.samples[i], cfg, i);
    REQUIRE(r.loss_trace.size() == 11);
    up += r.loss_trace.back() >= r.loss_trace.front();
  }
  CHECK(up >= static_cast<std::size_t>(0.95 * static_cast<double>(data.size())));
  auto a = pgd_attack(p, data.samples[0], cfg, 4), b = pgd_attack(p, data.samples[0], cfg, 4);
  CHECK(a.adversarial == b.adversarial);
}

TEST_CASE("pgd aborts on non-finite gradients") {
  auto p = trained_sum2();
  Sample s;
  s.features = Eigen::MatrixXd::Constant(64, 2, 0.5);
  s.features(3, 0) = std::nan("");
  AttackConfig cfg;
  cfg.steps = 3;
  cfg.random_start = false;
  auto r = pgd_attack(p, s, cfg);
  CHECK(r.aborted);
  CHECK(r.diagnostic.find("non-finite") != std::string::npos);
}

TEST_CASE("corruptions") {
  Rng rng(5);
  Sample s;
  s.features = Eigen::MatrixXd::NullaryExpr(64, 2, [&] { return rng.uniform(); });

  CorruptionConfig id{CorruptionKind::brightness, 3, 0, 0.0};
  CHECK(corrupt(s, id).features == s.features);

  auto mse = [&](const Sample& c) { return (c.features - s.features).squaredNorm(); };
  for (auto kind : corruption_suite()) {
    double prev = -1;
    for (int sev = 1; sev <= 5; ++sev) {
      CorruptionConfig c{kind, sev, 11, std::nullopt};
      auto out = corrupt(s, c);
      CHECK(out.features.minCoeff() >= 0);
      CHECK(out.features.maxCoeff() <= 1);
      CHECK(out.features == corrupt(s, c).features);
      if (kind == CorruptionKind::gaussian_noise || kind == CorruptionKind::brightness) {
        CHECK(mse(out) >= prev);
        prev = mse(out);
      }
    }
  }
  CHECK(mse(corrupt(s, {CorruptionKind::gaussian_noise, 5, 1, std::nullopt})) >
        mse(corrupt(s, {CorruptionKind::gaussian_noise, 1, 1, std::nullopt})));

  auto protos = digit_prototypes(3, 8);
  for (Eigen::Index d = 0; d < 3; ++d) {
    Sample proto;
    proto.features = protos.col(d);
    CorruptionConfig half{CorruptionKind::rotation, 1, 0, 180.0};
    CHECK(corrupt(corrupt(proto, half), half).features == proto.features);
    CorruptionConfig quarter{CorruptionKind::rotation, 1, 0, 90.0};
    auto four = proto;
    for (int i = 0; i < 4; ++i) four = corrupt(four, quarter);
    CHECK(four.features == proto.features);
  }
  // a single bright pixel moves to the opposite corner under 180 degrees
  Sample dot;
  dot.features = Eigen::MatrixXd::Zero(16, 1);
  dot.features(1, 0) = 1;  // row 0, col 1 of 4x4
  auto turned = corrupt(dot, {CorruptionKind::rotation, 1, 0, 180.0});
  CHECK(turned.features(14, 0) == 1.0);  // row 3, col 2
  CHECK(turned.features.sum() == 1.0);

  CHECK(image_shape(64).height == 8);
  CHECK(image_shape(2 * 15 * 15).channels == 2);
  CHECK(image_shape(11).height == 1);
  CHECK_THROWS_AS(corrupt(s, {CorruptionKind::occlusion, 6, 0, std::nullopt}), MetricError);
  CHECK(corruption_kind("rotation") == CorruptionKind::rotation);
  CHECK_THROWS_AS(corruption_kind("fog"), MetricError);
}

TEST_CASE("shortcut score: constant circuit") {
  Eigen::RowVectorXd row(12);
  row << 0.9, 0.8, 0.1, 0.05, 0.7, 0.2, 0.3, 0.95, 0.0, 0.4, 0.6, 0.1;
  Eigen::MatrixXd p = row.replicate(30, 1);
  auto r = shortcut_score(p);
  CHECK(r.score == 1.0);
  CHECK(r.variance.maxCoeff() == 0.0);
  CHECK_THROWS_AS(shortcut_score(Eigen::MatrixXd(row)), MetricError);
}

TEST_CASE("shortcut score on ground-truth pathfinder facts") {
  auto task = builtin_program("pathfinder:side=6");
  auto data = make_task_dataset(task, {60, 0.1, 3});
  Eigen::MatrixXd truth(60, static_cast<Eigen::Index>(task.fact_count()));
  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t i = 0; i < 60; ++i) {
    truth.row(static_cast<Eigen::Index>(i)) = data.samples[i].fact_truth.transpose();
    std::vector<std::size_t> on;
    for (Eigen::Index f = 0; f < truth.cols(); ++f)
      if (data.samples[i].fact_truth[f] > 0.5) on.push_back(static_cast<std::size_t>(f));
    sets.push_back(on);
  }
  // direct Jaccard over generated labels
  double direct = 0;
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = i + 1; j < 60; ++j) {
      std::size_t inter = 0;
      for (auto f : sets[i]) inter += std::count(sets[j].begin(), sets[j].end(), f);
      direct += static_cast<double>(inter) / static_cast<double>(sets[i].size() + sets[j].size() - inter);
    }
  direct /= 60.0 * 59 / 2;
  CHECK(shortcut_score(truth).score == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("shortcut score on random activations matches the analytic Jaccard") {
  Rng rng(12);
  const Eigen::Index n = 40, m = 8;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(400, n);
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    std::vector<Eigen::Index> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    for (Eigen::Index j = 0; j < m; ++j) p(s, ids[static_cast<std::size_t>(j)]) = 1.0;
  }
  auto r = shortcut_score(p);
  REQUIRE(std::all_of(r.m.begin(), r.m.end(), [](std::size_t v) { return v == 8; }));
  // closed form, checked against a direct hypergeometric sum
  double e = 0;
  auto choose = [](double a, double b) { return std::exp(std::lgamma(a + 1) - std::lgamma(b + 1) - std::lgamma(a - b + 1)); };
  for (int i = 1; i <= 8; ++i) e += choose(8, i) * choose(32, 8 - i) / choose(40, 8) * i / (16.0 - i);
  CHECK(expected_random_jaccard(40, 8, 8) == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.random_baseline == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.score == doctest::Approx(e).epsilon(0.05));
  CHECK(expected_random_jaccard(10, 0, 0) == 1.0);
  CHECK(expected_random_jaccard(10, 10, 10) == doctest::Approx(1.0));
}

TEST_CASE("shortcut score is invariant to sample order and fact relabeling") {
  Rng rng(21);
  Eigen::MatrixXd p = Eigen::MatrixXd::NullaryExpr(25, 15, [&] { return rng.uniform(); });
  const double base = shortcut_score(p).score;
  std::vector<Eigen::Index> rows(25), cols(15);
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  for (int t = 0; t < 10; ++t) {
    rng.shuffle(rows);
    rng.shuffle(cols);
    Eigen::MatrixXd q(25, 15);
    for (Eigen::Index i = 0; i < 25; ++i)
      for (Eigen::Index j = 0; j < 15; ++j) q(i, j) = p(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
    CHECK(shortcut_score(q).score == doctest::Approx(base).epsilon(1e-14));
  }
}

TEST_CASE("fact maps") {
  auto task = builtin_program("pathfinder:side=4");
  auto s = compile(task.program, 1);
  const auto dir = std::filesystem::temp_directory_path() / "nsl_factmap_test";
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.fact_count()));
  auto files = emit_fact_map(s, zero, dir, "z");
  CHECK(read_pgm(files[0]).maxCoeff() == 0.0);
  CHECK(read_pgm(files[1]).maxCoeff() == 0.0);

  Eigen::VectorXd one = zero;
  one[6] = 1;  // dot at cell 6 = row 1, col 2
  auto dots = read_pgm(emit_fact_map(s, one, dir, "one")[0]);
  CHECK(dots.rows() == 4);
  CHECK(dots(1, 2) == 1.0);
  CHECK(dots.sum() == 1.0);

  // the first edge joins cells 0 and 1: midpoint (0, 1) in the 7x7 image
  Eigen::VectorXd e = zero;
  e[16] = 1;
  auto edges = read_pgm(emit_fact_map(s, e, dir, "e")[1]);
  CHECK(edges.rows() == 7);
  CHECK(edges(0, 1) == 1.0);
  CHECK(edges.sum() == 1.0);

  Rng rng(2);
  Eigen::VectorXd rnd = Eigen::VectorXd::NullaryExpr(zero.size(), [&] { return rng.uniform(); });
  auto rf = emit_fact_map(s, rnd, dir, "r");
  for (const auto& f : rf) {
    auto m = read_pgm(f);
    write_pgm(dir / "copy.pgm", m, "task=pathfinder\nseed=2");
    CHECK(read_pgm(dir / "copy.pgm") == m);
  }
  auto d = read_pgm(rf[0]);
  for (Eigen::Index c = 0; c < 16; ++c) CHECK(d(c / 4, c % 4) == std::lround(rnd[c] * 255) / 255.0);

  auto sum = builtin_program("sum_digits:n=2");
  auto ss = compile(sum.program, 1);
  CHECK_THROWS_AS(emit_fact_map(ss, Eigen::VectorXd::Zero(6), dir, "x"), MetricError);
  std::filesystem::remove_all(dir);
}
