#include "nsl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace nsl {

namespace {

Eigen::VectorXd noisy(const Eigen::VectorXd& base, double sigma, Rng& rng) {
  Eigen::VectorXd x = base;
  if (sigma > 0)
    for (auto& v : x) v += sigma * rng.normal();
  return x.cwiseMax(0.0).cwiseMin(1.0);
}

// Binary pattern with roughly the given density, fixed by `key`.
Eigen::VectorXd pattern(std::size_t dim, std::uint64_t key, double density = 0.35) {
  Rng r(0x9e3779b97f4a7c15ull ^ (key * 0x2545f4914f6cdd1dull));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = r.bernoulli(density) ? 1.0 : 0.0;
  return v;
}

std::vector<Tuple> int_answers(std::size_t n) {
  std::vector<Tuple> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({Constant::integer(static_cast<std::int64_t>(i))});
  return out;
}

}  // namespace

Eigen::MatrixXd digit_prototypes(std::size_t classes, std::size_t side) {
  const std::size_t dim = side * side;
  Eigen::MatrixXd p(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(classes));
  for (std::size_t c = 0; c < classes; ++c) p.col(static_cast<Eigen::Index>(c)) = pattern(dim, 1000 + c * 7919 + side);
  return p;
}

Dataset gen_synthetic_digits(const SyntheticDigitConfig& config) {
  if (config.classes < 2) throw std::invalid_argument("need at least two digit classes");
  if (!(config.noise >= 0)) throw std::invalid_argument("noise must be non-negative");
  const auto protos = digit_prototypes(config.classes, config.side);
  Rng rng(config.seed);
  Dataset d;
  d.answers = int_answers(config.classes);
  for (std::size_t c = 0; c < config.classes; ++c)
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      Sample s;
      s.features = noisy(protos.col(static_cast<Eigen::Index>(c)), config.noise, rng);
      s.label = c;
      d.samples.push_back(std::move(s));
    }
  return d;
}

Dataset compose_digits(const Dataset& digits, std::size_t slots, std::size_t count, std::uint64_t seed,
                       const std::function<std::size_t(const std::vector<std::size_t>&)>& label_of,
                       std::vector<Tuple> answers) {
  if (digits.empty()) throw std::invalid_argument("no digits to compose");
  Rng rng(seed);
  const auto dim = digits.samples.front().features.rows();
  const std::size_t classes = digits.answers.size();
  Dataset out;
  out.answers = std::move(answers);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.features.resize(dim, static_cast<Eigen::Index>(slots));
    s.fact_truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(slots * classes));
    std::vector<std::size_t> values;
    for (std::size_t k = 0; k < slots; ++k) {
      const Sample& d = digits.samples[rng.below(digits.size())];
      s.features.col(static_cast<Eigen::Index>(k)) = d.features.col(0);
      values.push_back(d.label);
      s.fact_truth[static_cast<Eigen::Index>(k * classes + d.label)] = 1.0;
    }
    s.label = label_of(values);
    out.samples.push_back(std::move(s));
  }
  return out;
}

namespace {

Dataset digit_task(const TaskSpec& task, const TaskDataConfig& c, bool count34) {
  const std::size_t classes = task.heads.front().front().facts.size();
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(task.features))));
  const auto protos = digit_prototypes(classes, side);
  Rng rng(c.seed);
  Dataset d;
  d.answers = task.labels;
  for (std::size_t i = 0; i < c.count; ++i) {
    Sample s;
    s.features.resize(static_cast<Eigen::Index>(task.features), static_cast<Eigen::Index>(task.slots));
    s.fact_truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(task.slots * classes));
    std::size_t label = 0;
    for (std::size_t k = 0; k < task.slots; ++k) {
      const std::size_t v = rng.below(classes);
      s.features.col(static_cast<Eigen::Index>(k)) = noisy(protos.col(static_cast<Eigen::Index>(v)), c.noise, rng);
      s.fact_truth[static_cast<Eigen::Index>(k * classes + v)] = 1.0;
      label += count34 ? (v == 3 || v == 4) : v;
    }
    s.label = label;
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset kb_task(const TaskSpec& task, const TaskDataConfig& c) {
  Rng rng(c.seed);
  Dataset d;
  d.answers = task.labels;
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::size_t k = rng.below(task.labels.size());
    const auto& row = task.truth_table[k];
    Eigen::VectorXd base(static_cast<Eigen::Index>(task.features));
    for (std::size_t j = 0; j < task.features; ++j) base[static_cast<Eigen::Index>(j)] = row[j % row.size()] ? 0.75 : 0.25;
    Sample s;
    s.features = noisy(base, c.noise, rng);
    s.label = k;
    s.fact_truth.resize(static_cast<Eigen::Index>(row.size()));
    for (std::size_t j = 0; j < row.size(); ++j) s.fact_truth[static_cast<Eigen::Index>(j)] = row[j];
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset pathfinder_task(const TaskSpec& task, const TaskDataConfig& c) {
  const std::size_t side = *task.grid_side, cells = side * side, img = 2 * side - 1;
  const auto edges = grid_edges(side);
  Rng rng(c.seed);
  Dataset d;
  d.answers = task.labels;
  for (std::size_t i = 0; i < c.count; ++i) {
    // Alternate labels so both classes are common regardless of density.
    const bool want = i % 2 == 0;
    std::vector<char> on;
    std::size_t a = 0, b = 0;
    bool connected = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      a = rng.below(cells);
      do b = rng.below(cells);
      while (b == a);
      on.assign(edges.size(), 0);
      for (auto& e : on) e = rng.bernoulli(0.45);
      // union-find over active edges
      std::vector<std::size_t> parent(cells);
      std::iota(parent.begin(), parent.end(), 0);
      std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
      };
      for (std::size_t e = 0; e < edges.size(); ++e)
        if (on[e]) parent[find(static_cast<std::size_t>(edges[e].first))] = find(static_cast<std::size_t>(edges[e].second));
      connected = find(a) == find(b);
      if (connected == want) break;
    }
    Eigen::VectorXd base = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * img * img));
    auto pixel = [&](std::size_t channel, std::size_t r, std::size_t col) -> double& {
      return base[static_cast<Eigen::Index>(channel * img * img + r * img + col)];
    };
    Sample s;
    s.fact_truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells + edges.size()));
    for (std::size_t dot : {a, b}) {
      pixel(0, 2 * (dot / side), 2 * (dot % side)) = 1.0;
      s.fact_truth[static_cast<Eigen::Index>(dot)] = 1.0;
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (!on[e]) continue;
      const auto u = static_cast<std::size_t>(edges[e].first), v = static_cast<std::size_t>(edges[e].second);
      pixel(1, u / side + v / side, u % side + v % side) = 1.0;
      s.fact_truth[static_cast<Eigen::Index>(cells + e)] = 1.0;
    }
    s.features = noisy(base, c.noise, rng);
    s.label = connected ? 1 : 0;
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset phoneme_task(const TaskSpec& task, const TaskDataConfig& c) {
  const auto& lex = phoneme_lexicon();
  const auto& abc = phoneme_alphabet();
  // Speakers with skewed frequencies so that majority/minority differ.
  const std::vector<double> speaker_weight{8, 5, 3, 2, 1, 1, 1, 1};
  const double total_w = std::accumulate(speaker_weight.begin(), speaker_weight.end(), 0.0);
  Rng rng(c.seed);
  Dataset d;
  d.answers = task.labels;
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::size_t w = rng.below(lex.size());
    double r = rng.uniform() * total_w;
    std::size_t spk = 0;
    while (spk + 1 < speaker_weight.size() && r >= speaker_weight[spk]) r -= speaker_weight[spk++];
    const Eigen::VectorXd accent = 0.2 * (pattern(task.features, 50000 + spk, 0.5).array() - 0.5).matrix();
    Sample s;
    s.features.resize(static_cast<Eigen::Index>(task.features), static_cast<Eigen::Index>(task.slots));
    s.fact_truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(task.slots * abc.size()));
    for (std::size_t k = 0; k < task.slots; ++k) {
      std::size_t p = abc.size() - 1;
      if (k < lex[w].phonemes.size())
        p = static_cast<std::size_t>(std::find(abc.begin(), abc.end(), lex[w].phonemes[k]) - abc.begin());
      const Eigen::VectorXd proto = pattern(task.features, 40000 + p, 0.4);
      s.features.col(static_cast<Eigen::Index>(k)) = noisy(proto + accent, c.noise, rng);
      s.fact_truth[static_cast<Eigen::Index>(k * abc.size() + p)] = 1.0;
    }
    s.label = w;
    s.group = "speaker" + std::to_string(spk);
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset attribute_task(const TaskSpec& task, const TaskDataConfig& c) {
  Rng rng(c.seed);
  Dataset d;
  d.answers = task.labels;
  const std::size_t offsets[3] = {0, 5, 11};
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::size_t k = rng.below(task.labels.size());
    const auto& row = task.truth_table[k];
    Eigen::VectorXd base = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(task.features), 0.2);
    Sample s;
    s.fact_truth = Eigen::VectorXd::Zero(15);
    for (std::size_t a = 0; a < 3; ++a) {
      const std::size_t value = offsets[a] + static_cast<std::size_t>(row[a]);
      s.fact_truth[static_cast<Eigen::Index>(value)] = 1.0;
      for (std::size_t j = value; j < task.features; j += 15) base[static_cast<Eigen::Index>(j)] = 0.8;
    }
    s.features = noisy(base, c.noise, rng);
    s.label = k;
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace

Dataset make_task_dataset(const TaskSpec& task, const TaskDataConfig& config) {
  if (!(config.noise >= 0)) throw std::invalid_argument("noise must be non-negative");
  if (task.name == "sum_digits") return digit_task(task, config, false);
  if (task.name == "how_many_3_or_4") return digit_task(task, config, true);
  if (task.name == "kb_classify") return kb_task(task, config);
  if (task.name == "pathfinder") return pathfinder_task(task, config);
  if (task.name == "phoneme_word") return phoneme_task(task, config);
  if (task.name == "attribute_classify") return attribute_task(task, config);
  throw TaskError("no synthetic generator for task '" + task.name + "'");
}

Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed, std::vector<std::string>* warnings) {
  if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("fraction must be in (0, 1]");
  if (fraction == 1) return data;
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < data.size(); ++i) by_label[data.samples[i].label].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_label) {
    auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (n == 0) {
      n = 1;
      if (warnings) warnings->push_back("label " + std::to_string(label) + " would get no samples; keeping one");
    }
    rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(keep.begin(), keep.end());
  Dataset out;
  out.answers = data.answers;
  for (auto i : keep) out.samples.push_back(data.samples[i]);
  return out;
}

namespace {

std::uint32_t read_be32(std::ifstream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError(what + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream im(images, std::ios::binary), lb(labels, std::ios::binary);
  if (!im) throw DataError("cannot open " + images.string());
  if (!lb) throw DataError("cannot open " + labels.string());
  if (read_be32(im, images.string()) != 0x00000803) throw DataError(images.string() + ": not an IDX image file (bad magic)");
  if (read_be32(lb, labels.string()) != 0x00000801) throw DataError(labels.string() + ": not an IDX label file (bad magic)");
  const auto n = read_be32(im, images.string()), rows = read_be32(im, images.string()), cols = read_be32(im, images.string());
  if (read_be32(lb, labels.string()) != n) throw DataError("image and label counts differ");
  if (static_cast<std::uint64_t>(rows) * cols > (1u << 24)) throw DataError("implausible IDX image size");
  Dataset d;
  std::size_t max_label = 0;
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    im.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    char l = 0;
    lb.read(&l, 1);
    if (!im || !lb) throw DataError("truncated IDX data at sample " + std::to_string(i));
    Sample s;
    s.features.resize(static_cast<Eigen::Index>(buf.size()), 1);
    for (std::size_t k = 0; k < buf.size(); ++k) s.features(static_cast<Eigen::Index>(k), 0) = buf[k] / 255.0;
    s.label = static_cast<unsigned char>(l);
    max_label = std::max(max_label, s.label);
    d.samples.push_back(std::move(s));
  }
  d.answers = int_answers(max_label + 1);
  return d;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  std::size_t nf = 0;
  while (nf < header.size() && header[nf] == "f" + std::to_string(nf)) ++nf;
  if (nf == 0 || nf >= header.size() || header[nf] != "label")
    throw DataError(path.string() + ": header must be f0,...,fn,label[,group]");
  const bool has_group = header.size() == nf + 2 && header[nf + 1] == "group";
  if (header.size() != nf + 1 + (has_group ? 1 : 0)) throw DataError(path.string() + ": unexpected header columns");

  Dataset d;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1, max_label = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " columns");
    std::vector<double> f(nf);
    try {
      for (std::size_t j = 0; j < nf; ++j) {
        std::size_t used = 0;
        f[j] = std::stod(cells[j], &used);
        if (used != cells[j].size()) throw std::invalid_argument(cells[j]);
      }
      Sample s;
      std::size_t used = 0;
      const long label = std::stol(cells[nf], &used);
      if (used != cells[nf].size() || label < 0) throw std::invalid_argument(cells[nf]);
      s.label = static_cast<std::size_t>(label);
      max_label = std::max(max_label, s.label);
      if (has_group) s.group = cells[nf + 1];
      d.samples.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(std::move(f));
  }
  if (rows.empty()) throw DataError(path.string() + ": no samples");
  // scale columns that leave [0,1]
  for (std::size_t j = 0; j < nf; ++j) {
    double lo = rows[0][j], hi = rows[0][j];
    for (const auto& r : rows) lo = std::min(lo, r[j]), hi = std::max(hi, r[j]);
    if (lo >= 0 && hi <= 1) continue;
    for (auto& r : rows) r[j] = hi > lo ? (r[j] - lo) / (hi - lo) : 0.0;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.samples[i].features = Eigen::Map<Eigen::VectorXd>(rows[i].data(), static_cast<Eigen::Index>(nf));
  }
  d.answers = int_answers(max_label + 1);
  return d;
}

Dataset load_external(const std::filesystem::path& path, ExternalFormat format, const std::filesystem::path& labels) {
  if (format == ExternalFormat::csv) return load_csv(path);
  if (labels.empty()) throw DataError("IDX input needs a label file");
  return load_idx(path, labels);
}

std::set<std::string> majority_groups(const std::map<std::string, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [g, n] : counts) total += n;
  std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> major;
  std::size_t held = 0;
  for (const auto& [g, n] : order) {
    if (2 * held >= total) break;
    major.insert(g);
    held += n;
  }
  return major;
}

std::set<std::string> majority_groups(const Dataset& data) {
  std::map<std::string, std::size_t> count;
  for (const auto& s : data.samples)
    if (s.group) ++count[*s.group];
  return majority_groups(count);
}

}  // namespace nsl
