#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nsl/assurance.hpp"
#include "nsl/tasks.hpp"

namespace nsl {

double expected_random_jaccard(std::size_t n, std::size_t a, std::size_t b) {
  if (a > n || b > n) throw MetricError("subset larger than the fact set");
  if (a == 0 && b == 0) return 1.0;
  auto lchoose = [](double N, double K) { return std::lgamma(N + 1) - std::lgamma(K + 1) - std::lgamma(N - K + 1); };
  const double N = static_cast<double>(n), A = static_cast<double>(a), B = static_cast<double>(b);
  double e = 0;
  const std::size_t lo = a + b > n ? a + b - n : 0;
  for (std::size_t i = std::max<std::size_t>(lo, 1); i <= std::min(a, b); ++i) {
    const double I = static_cast<double>(i);
    const double p = std::exp(lchoose(A, I) + lchoose(N - A, B - I) - lchoose(N, B));
    e += p * I / (A + B - I);
  }
  return e;
}

double mean_pairwise_jaccard(const std::vector<std::vector<std::size_t>>& sets) {
  if (sets.size() < 2) throw MetricError("pairwise overlap needs at least two samples");
  double sum = 0;
  std::vector<std::size_t> common;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      const auto& a = sets[i];
      const auto& b = sets[j];
      if (a.empty() && b.empty()) {
        sum += 1.0;
        continue;
      }
      common.clear();
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      sum += static_cast<double>(common.size()) / static_cast<double>(a.size() + b.size() - common.size());
    }
  const double pairs = static_cast<double>(sets.size()) * static_cast<double>(sets.size() - 1) / 2;
  return sum / pairs;
}

ShortcutReport shortcut_score(const Eigen::MatrixXd& p) {
  const auto rows = static_cast<std::size_t>(p.rows());
  if (rows < 2) throw MetricError("shortcut score needs at least two samples");
  ShortcutReport r;
  r.mean = p.colwise().mean().transpose();
  // shifted by the first sample so a constant column gives exactly 0
  const Eigen::MatrixXd d = p.rowwise() - p.row(0);
  const Eigen::RowVectorXd dm = d.colwise().mean();
  r.variance = (d.rowwise() - dm).array().square().colwise().mean().transpose();

  const auto n = static_cast<std::size_t>(p.cols());
  std::vector<std::vector<std::size_t>> sets(rows);
  std::vector<std::size_t> order(n);
  for (std::size_t s = 0; s < rows; ++s) {
    const auto row = p.row(static_cast<Eigen::Index>(s));
    const auto m = std::min(n, static_cast<std::size_t>(std::llround(std::max(0.0, row.sum()))));
    r.m.push_back(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return row[static_cast<Eigen::Index>(a)] > row[static_cast<Eigen::Index>(b)];
    });
    sets[s].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(sets[s].begin(), sets[s].end());
  }
  r.score = mean_pairwise_jaccard(sets);

  double base = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = i + 1; j < rows; ++j) base += expected_random_jaccard(n, r.m[i], r.m[j]);
  r.random_baseline = base / (static_cast<double>(rows) * static_cast<double>(rows - 1) / 2);
  return r;
}

ShortcutReport shortcut_score(const Pipeline& pipeline, const Dataset& data) {
  if (!pipeline.nesy()) throw MetricError("the shortcut inspector needs a neurosymbolic pipeline");
  if (data.size() < 2) throw MetricError("shortcut score needs at least two samples");
  Eigen::MatrixXd p(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(pipeline.session().fact_count()));
  for (std::size_t i = 0; i < data.size(); ++i)
    p.row(static_cast<Eigen::Index>(i)) = model_output(pipeline.model(), data.samples[i].features).transpose();
  return shortcut_score(p);
}

void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& intensity, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n";
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
  out << intensity.cols() << " " << intensity.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < intensity.rows(); ++r)
    for (Eigen::Index c = 0; c < intensity.cols(); ++c) {
      const double v = std::clamp(intensity(r, c), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255))));
    }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Eigen::MatrixXd read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  in >> magic;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string junk;
      std::getline(in, junk);
      in >> std::ws;
    }
  };
  long w = 0, h = 0, maxval = 0;
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error(path.string() + ": not an 8-bit P5 image");
  in.get();
  Eigen::MatrixXd m(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const int b = in.get();
      if (b == EOF) throw std::runtime_error(path.string() + ": truncated");
      m(r, c) = b / 255.0;
    }
  return m;
}

std::vector<std::filesystem::path> emit_fact_map(const Session& session, const Eigen::VectorXd& probs,
                                                 const std::filesystem::path& directory, const std::string& stem,
                                                 const std::string& comment) {
  const Program& prog = session.program();
  const auto* dot = prog.find("dot");
  const auto* edge = prog.find("edge");
  if (!dot || !edge || !dot->is_input() || !edge->is_input() || dot->arity() != 1 || edge->arity() != 2)
    throw MetricError("fact maps need a grid program with input dot(cell) and edge(a, b)");
  const auto cells = dot->args[0].domain.size();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cells))));
  if (side * side != cells) throw MetricError("dot domain is not a square grid");
  if (static_cast<std::size_t>(probs.size()) != session.fact_count())
    throw MetricError("expected " + std::to_string(session.fact_count()) + " fact probabilities");

  const auto img = static_cast<Eigen::Index>(2 * side - 1);
  Eigen::MatrixXd dots = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(side), static_cast<Eigen::Index>(side));
  Eigen::MatrixXd edges = Eigen::MatrixXd::Zero(img, img);
  const auto& table = session.facts();
  const auto dot_rel = static_cast<std::size_t>(dot - prog.relations.data());
  const auto edge_rel = static_cast<std::size_t>(edge - prog.relations.data());
  for (FactId f = 0; f < table.size(); ++f) {
    const auto& fact = table[f];
    const double p = probs[static_cast<Eigen::Index>(f)];
    if (fact.relation == dot_rel) {
      const auto c = fact.args[0].as_integer();
      dots(static_cast<Eigen::Index>(c / static_cast<std::int64_t>(side)), static_cast<Eigen::Index>(c % static_cast<std::int64_t>(side))) = p;
    } else if (fact.relation == edge_rel) {
      const auto a = fact.args[0].as_integer(), b = fact.args[1].as_integer();
      const auto s = static_cast<std::int64_t>(side);
      edges(static_cast<Eigen::Index>(a / s + b / s), static_cast<Eigen::Index>(a % s + b % s)) = p;
    }
  }
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> out{directory / (stem + "_dots.pgm"), directory / (stem + "_edges.pgm")};
  write_pgm(out[0], dots, comment);
  write_pgm(out[1], edges, comment);
  return out;
}

}  // namespace nsl
