#include "nsl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "nsl/checkpoint.hpp"

namespace nsl {

namespace fs = std::filesystem;

// ---- settings ----

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>) out += fmt(v[i]);
    else if constexpr (std::is_same_v<T, std::string>) out += v[i];
    else out += std::to_string(v[i]);
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split(v)) out.push_back(to_u64(key, s));
  return out;
}

}  // namespace

Settings parse_settings(const std::string& text) {
  Settings out;
  std::string section;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    auto cut = raw.find_first_of("#;");
    std::string line = trim(raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings read_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

std::string settings_text(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : s) out += k + "=" + v + "\n";
  return out;
}

std::string to_string(Mode m) { return m == Mode::nn ? "nn" : "nesy"; }

ExperimentConfig ExperimentConfig::from_settings(const Settings& s) {
  ExperimentConfig c;
  for (const auto& [key, v] : s) {
    if (key == "task") c.task = v;
    else if (key == "mode") {
      if (v == "nn") c.mode = Mode::nn;
      else if (v == "nesy") c.mode = Mode::nesy;
      else throw ConfigError("mode: expected nn or nesy, got '" + v + "'");
    } else if (key == "k") c.train_k = to_u64(key, v);
    else if (key == "test_k") c.test_k = v.empty() ? std::nullopt : std::optional<std::size_t>(to_u64(key, v));
    else if (key == "fraction") c.fraction = to_double(key, v);
    else if (key == "seeds" || key == "seed") {
      c.seeds.clear();
      for (const auto& x : split(v)) c.seeds.push_back(to_u64(key, x));
    } else if (key == "out") c.out = v;
    else if (key == "threads") c.threads = to_u64(key, v);
    else if (key == "train.lr") c.train.learning_rate = to_double(key, v);
    else if (key == "train.epochs") c.train.epochs = to_u64(key, v);
    else if (key == "train.batch") c.train.batch_size = to_u64(key, v);
    else if (key == "train.momentum") c.train.momentum = to_double(key, v);
    else if (key == "train.loss") {
      if (v == "bce") c.train.loss = LossKind::binary_cross_entropy;
      else if (v == "ce") c.train.loss = LossKind::cross_entropy;
      else if (v == "auto" || v.empty()) c.train.loss.reset();
      else throw ConfigError("train.loss: expected bce, ce or auto");
    } else if (key == "model.hidden") c.hidden = to_sizes(key, v);
    else if (key == "model.head_hidden") c.head_hidden = to_sizes(key, v);
    else if (key == "data.train") c.train_count = to_u64(key, v);
    else if (key == "data.test") c.test_count = to_u64(key, v);
    else if (key == "data.noise") c.noise = to_double(key, v);
    else if (key == "data.path") c.data_path = v;
    else if (key == "data.labels") c.data_labels = v;
    else if (key == "data.test_path") c.test_path = v;
    else if (key == "data.test_labels") c.test_labels = v;
    else if (key == "data.format") {
      if (v == "idx") c.data_format = ExternalFormat::idx;
      else if (v == "csv") c.data_format = ExternalFormat::csv;
      else if (v == "synthetic" || v.empty()) c.data_format.reset();
      else throw ConfigError("data.format: expected idx, csv or synthetic");
    } else if (key == "attack.epsilon") c.attack_epsilon = to_double(key, v);
    else if (key == "attack.steps") c.attack_steps = to_u64(key, v);
    else if (key == "attack.step_size") c.attack_step_size = v.empty() ? std::nullopt : std::optional<double>(to_double(key, v));
    else if (key == "attack.random_start") c.attack_random_start = to_bool(key, v);
    else if (key == "corrupt.kinds") {
      c.corruptions.clear();
      try {
        for (const auto& x : split(v)) c.corruptions.push_back(corruption_kind(x));
      } catch (const MetricError& e) {
        throw ConfigError(std::string("corrupt.kinds: ") + e.what());
      }
    } else if (key == "corrupt.severities") {
      c.severities.clear();
      for (auto x : to_sizes(key, v)) c.severities.push_back(static_cast<int>(x));
    } else if (key == "corrupt.magnitude") c.corruption_magnitude = v.empty() ? std::nullopt : std::optional<double>(to_double(key, v));
    else if (key == "eval.normalize") c.normalize = to_bool(key, v);
    else if (key == "eval.bins") c.bins = to_u64(key, v);
    else if (key == "checkpoint") c.checkpoint = v;
    else if (key == "oracle.instances") c.oracle_instances = to_u64(key, v);
    else if (key == "oracle.k") c.oracle_k = to_u64(key, v);
    else if (key == "sweep.k") c.sweep_k = to_sizes(key, v);
    else if (key == "sweep.test_k") c.sweep_test_k = to_sizes(key, v);
    else if (key == "sweep.fraction") {
      c.sweep_fraction.clear();
      for (const auto& x : split(v)) c.sweep_fraction.push_back(to_double(key, x));
    } else if (key == "sweep.command") c.sweep_command = v;
    else if (key == "jobs") c.jobs = to_u64(key, v);
    else throw ConfigError("unknown setting '" + key + "'");
  }

  if (c.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (c.train_k == 0 || (c.test_k && *c.test_k == 0)) throw ConfigError("k must be >= 1");
  for (auto k : c.sweep_k)
    if (k == 0) throw ConfigError("sweep.k: k must be >= 1");
  for (auto k : c.sweep_test_k)
    if (k == 0) throw ConfigError("sweep.test_k: k must be >= 1");
  auto check_fraction = [](double f) {
    if (!(f > 0 && f <= 1)) throw ConfigError("fraction must be in (0, 1]");
  };
  check_fraction(c.fraction);
  for (double f : c.sweep_fraction) check_fraction(f);
  if (c.train.batch_size == 0) throw ConfigError("train.batch must be >= 1");
  if (c.train.learning_rate < 0) throw ConfigError("train.lr must be >= 0");
  if (c.threads == 0 || c.jobs == 0) throw ConfigError("threads and jobs must be >= 1");
  if (c.bins == 0) throw ConfigError("eval.bins must be >= 1");
  if (c.train_count == 0 || c.test_count == 0) throw ConfigError("data.train and data.test must be >= 1");
  if (c.noise < 0) throw ConfigError("data.noise must be >= 0");
  if (c.attack_epsilon && *c.attack_epsilon < 0) throw ConfigError("attack.epsilon must be >= 0");
  if (c.attack_steps && *c.attack_steps == 0) throw ConfigError("attack.steps must be >= 1");
  for (int sv : c.severities)
    if (sv < 1 || sv > 5) throw ConfigError("corrupt.severities: severity must be in 1..5");
  if (c.corruptions.empty() || c.severities.empty()) throw ConfigError("the corruption suite is empty");
  if (!c.data_path.empty() && !c.data_format) throw ConfigError("data.path needs data.format = idx or csv");
  static const std::set<std::string> commands{"train", "eval", "attack", "corrupt", "inspect", "oracle-check"};
  if (!commands.count(c.sweep_command)) throw ConfigError("sweep.command: '" + c.sweep_command + "' cannot be swept");
  try {
    builtin_program(c.task);
  } catch (const TaskError& e) {
    throw ConfigError(std::string("task: ") + e.what());
  }
  return c;
}

Settings ExperimentConfig::resolved() const {
  const auto t = builtin_program(task);
  Settings s;
  s["task"] = t.ref.to_string();
  s["mode"] = to_string(mode);
  s["k"] = std::to_string(train_k);
  s["test_k"] = std::to_string(effective_test_k());
  s["fraction"] = fmt(fraction);
  s["seeds"] = join(seeds);
  s["train.lr"] = fmt(train.learning_rate);
  s["train.epochs"] = std::to_string(train.epochs);
  s["train.batch"] = std::to_string(train.batch_size);
  s["train.momentum"] = fmt(train.momentum);
  s["train.loss"] = !train.loss ? "auto" : *train.loss == LossKind::cross_entropy ? "ce" : "bce";
  s["model.hidden"] = join(hidden);
  s["model.head_hidden"] = join(head_hidden);
  s["data.train"] = std::to_string(train_count);
  s["data.test"] = std::to_string(test_count);
  s["data.noise"] = fmt(noise);
  s["data.format"] = !data_format ? "synthetic" : *data_format == ExternalFormat::idx ? "idx" : "csv";
  s["data.path"] = data_path.string();
  s["data.labels"] = data_labels.string();
  s["data.test_path"] = test_path.string();
  s["data.test_labels"] = test_labels.string();
  s["attack.epsilon"] = fmt(attack_epsilon ? *attack_epsilon : t.attack_epsilon);
  const auto steps = attack_steps ? *attack_steps : t.attack_steps;
  s["attack.steps"] = std::to_string(steps);
  s["attack.step_size"] = attack_step_size ? fmt(*attack_step_size) : "";
  s["attack.random_start"] = attack_random_start ? "true" : "false";
  std::vector<std::string> kinds;
  for (auto k : corruptions) kinds.push_back(to_string(k));
  s["corrupt.kinds"] = join(kinds);
  s["corrupt.severities"] = join(severities);
  s["corrupt.magnitude"] = corruption_magnitude ? fmt(*corruption_magnitude) : "";
  s["eval.normalize"] = normalize ? "true" : "false";
  s["eval.bins"] = std::to_string(bins);
  s["checkpoint"] = checkpoint.string();
  s["oracle.instances"] = std::to_string(oracle_instances);
  s["oracle.k"] = std::to_string(oracle_k);
  s["sweep.k"] = join(sweep_k);
  s["sweep.test_k"] = join(sweep_test_k);
  s["sweep.fraction"] = join(sweep_fraction);
  s["sweep.command"] = sweep_command;
  // out, threads and jobs are left out: they never change results, and
  // identical runs should produce identical reports wherever they land
  return s;
}

// ---- helpers ----

namespace {

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex guard;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(guard);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return c.seeds.size() == 1 ? c.out : c.out / ("seed-" + std::to_string(seed));
}

Settings config_for(const ExperimentConfig& c, std::uint64_t seed) {
  auto s = c.resolved();
  s["seeds"] = std::to_string(seed);
  return s;
}

std::string config_comment(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : s) out += "# " + k + "=" + v + "\n";
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

// Marks a run directory as incomplete until the runner finishes.
class RunMarker {
 public:
  explicit RunMarker(fs::path dir) : path_(std::move(dir) / "INCOMPLETE") {
    write_text(path_, "run did not finish\n");
  }
  void done() { fs::remove(path_); }

 private:
  fs::path path_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string records_csv(const Settings& config, const std::vector<SampleRecord>& records, bool attack) {
  std::string out = config_comment(config);
  out += "index,label,predicted,confidence,correct,group";
  if (attack) out += ",adv_predicted,adv_correct,linf,loss_clean,loss_adv,diagnostic";
  out += "\n";
  for (const auto& r : records) {
    out += std::to_string(r.index) + "," + std::to_string(r.label) + "," + std::to_string(r.predicted) + "," +
           fmt(r.confidence) + "," + (r.correct ? "1" : "0") + "," + csv_field(r.group.value_or(""));
    if (attack) {
      const bool adv_ok = r.adv_predicted && *r.adv_predicted == r.label;
      out += "," + (r.adv_predicted ? std::to_string(*r.adv_predicted) : std::string()) + "," + (adv_ok ? "1" : "0") + "," +
             fmt(r.linf) + "," + fmt(r.loss_clean) + "," + fmt(r.loss_adv) + "," + csv_field(r.diagnostic);
    }
    out += "\n";
  }
  return out;
}

void add_groups_and_disparity(MetricsReport& rep) {
  if (rep.groups.empty()) return;
  std::map<std::string, std::size_t> counts;
  for (const auto& [g, t] : rep.groups) counts[g] = t.total;
  rep.majority = majority_groups(counts);
  if (rep.majority.size() == rep.groups.size()) {
    rep.notes.push_back("disparity undefined: every group falls in the majority");
    return;
  }
  rep.disparity = disparity(rep.groups, rep.majority);
}

Eigen::VectorXd random_probabilities(const Session& s, Rng& rng) {
  const auto& layout = s.grounding().layout;
  Eigen::VectorXd p(static_cast<Eigen::Index>(s.fact_count()));
  for (FactId f = 0; f < s.fact_count(); ++f) p[f] = rng.uniform(0.02, 0.98);
  for (const auto& g : layout->groups) {
    double sum = 0;
    for (auto f : g.members) sum += p[f];
    for (auto f : g.members) p[f] /= sum;
  }
  return p;
}

// Pins random facts (whole groups one-hot) to 0 or 1 until exact
// enumeration fits in `cap` worlds.
void pin_until(const Session& s, Eigen::VectorXd& p, Rng& rng, double cap) {
  const auto& layout = *s.grounding().layout;
  std::vector<FactId> loose;
  for (FactId f = 0; f < s.fact_count(); ++f)
    if (!layout.grouped(f)) loose.push_back(f);
  std::vector<std::size_t> groups(layout.groups.size());
  std::iota(groups.begin(), groups.end(), 0);
  rng.shuffle(loose);
  rng.shuffle(groups);
  auto count = [&] { return oracle_world_count(s, s.assignment(p, false)); };
  for (auto f : loose) {
    if (count() <= cap) return;
    p[f] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  for (auto g : groups) {
    if (count() <= cap) return;
    const auto& members = layout.groups[g].members;
    const auto pick = members[rng.below(members.size())];
    for (auto f : members) p[f] = f == pick ? 1.0 : 0.0;
  }
}

}  // namespace

// ---- report ----

MetricsReport summarize(const std::vector<SampleRecord>& records, std::size_t bins) {
  if (records.empty()) throw MetricError("no samples to summarize");
  MetricsReport rep;
  rep.samples = records.size();
  std::vector<double> conf;
  std::vector<bool> ok;
  std::size_t hits = 0;
  for (const auto& r : records) {
    conf.push_back(std::clamp(r.confidence, 0.0, 1.0));
    ok.push_back(r.correct);
    hits += r.correct;
    if (r.group) {
      auto& t = rep.groups[*r.group];
      ++t.total;
      t.correct += r.correct;
    }
  }
  rep.accuracy = static_cast<double>(hits) / static_cast<double>(records.size());
  const auto cb = calibration_bins(conf, ok, bins);
  rep.ece = ece(cb);
  rep.mce = mce(cb);
  add_groups_and_disparity(rep);
  return rep;
}

// ---- runners ----

RunContext prepare(const ExperimentConfig& config, std::uint64_t seed) {
  RunContext ctx;
  ctx.config = config;
  ctx.task = builtin_program(config.task);
  const auto& t = ctx.task;
  if (config.data_format) {
    ctx.train_set = load_external(config.data_path, *config.data_format, config.data_labels);
    if (!config.test_path.empty()) {
      ctx.test_set = load_external(config.test_path, *config.data_format, config.test_labels);
    } else {
      // hold out every fifth sample
      Dataset train, test;
      for (std::size_t i = 0; i < ctx.train_set.size(); ++i) (i % 5 == 4 ? test : train).samples.push_back(ctx.train_set.samples[i]);
      ctx.train_set.samples = std::move(train.samples);
      ctx.test_set.samples = std::move(test.samples);
      ctx.notes.push_back("no test file: every fifth sample held out");
    }
    for (auto* d : {&ctx.train_set, &ctx.test_set}) {
      d->answers = t.labels;
      for (const auto& s : d->samples) {
        if (static_cast<std::size_t>(s.features.rows()) != t.features || static_cast<std::size_t>(s.features.cols()) != t.slots)
          throw ConfigError("external data has " + std::to_string(s.features.rows()) + "x" + std::to_string(s.features.cols()) +
                            " features, task expects " + std::to_string(t.features) + "x" + std::to_string(t.slots));
        if (s.label >= t.labels.size()) throw ConfigError("external label " + std::to_string(s.label) + " outside the task's label space");
      }
    }
  } else {
    ctx.train_set = make_task_dataset(t, {config.train_count, config.noise, seed});
    // one fixed test set shared by every seed and fraction
    ctx.test_set = make_task_dataset(t, {config.test_count, config.noise, 0x7E57D47AULL});
  }
  if (ctx.test_set.empty() || ctx.train_set.empty()) throw DataError("empty train or test set");
  if (config.fraction < 1.0) ctx.train_set = subsample(ctx.train_set, config.fraction, seed, &ctx.notes);
  return ctx;
}

Pipeline build_pipeline(const RunContext& ctx, std::uint64_t seed) {
  const auto& c = ctx.config;
  if (c.mode == Mode::nn) return Pipeline(PerceptionModel(ctx.task.nn_model(c.hidden, c.head_hidden), seed));
  Pipeline p(PerceptionModel(ctx.task.nesy_model(c.hidden), seed), set_test_k(compile(ctx.task.program, c.train_k), c.effective_test_k()));
  p.decoder = ctx.task.decoder;
  return p;
}

Pipeline obtain_pipeline(const RunContext& ctx, std::uint64_t seed, TrainResult* result) {
  Pipeline p = build_pipeline(ctx, seed);
  if (!ctx.config.checkpoint.empty()) {
    auto ck = load_checkpoint(ctx.config.checkpoint);
    if (!(ck.model.config() == p.model().config()))
      throw ConfigError("checkpoint " + ctx.config.checkpoint.string() + " does not match the task and model settings");
    p.model() = std::move(ck.model);
    return p;
  }
  TrainConfig tc = ctx.config.train;
  tc.seed = seed;
  auto r = train(p, ctx.train_set, tc);
  if (result) *result = std::move(r);
  return p;
}

std::vector<SampleRecord> evaluate(const Pipeline& pipeline, const Dataset& data, bool normalize, std::size_t threads) {
  std::vector<SampleRecord> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& s = data.samples[i];
    const auto pred = predict(pipeline, s.features, normalize);
    auto& r = out[i];
    r.index = i;
    r.label = s.label;
    r.predicted = pred.label;
    r.confidence = pred.confidence;
    r.correct = pred.label == s.label;
    r.group = s.group;
  });
  return out;
}

namespace {

struct Evaluated {
  MetricsReport report;
  std::vector<SampleRecord> records;
};

Evaluated eval_one(const RunContext& ctx, const Pipeline& p, const Settings& cfg) {
  Evaluated e;
  e.records = evaluate(p, ctx.test_set, ctx.config.normalize, ctx.config.threads);
  e.report = summarize(e.records, ctx.config.bins);
  e.report.config = cfg;
  e.report.notes.insert(e.report.notes.begin(), ctx.notes.begin(), ctx.notes.end());
  if (p.nesy() && ctx.test_set.size() >= 2) {
    const auto sc = shortcut_score(p, ctx.test_set);
    e.report.shortcut_score = sc.score;
    e.report.shortcut_baseline = sc.random_baseline;
  }
  return e;
}

void log_report(std::ostream& log, const fs::path& dir, const MetricsReport& r) {
  log << dir.string() << ": " << r.kind << " accuracy " << fmt(r.accuracy) << " ece " << fmt(r.ece) << " mce " << fmt(r.mce);
  if (r.asr) log << " asr " << fmt(*r.asr);
  if (r.csr) log << " csr " << fmt(*r.csr);
  if (r.disparity) log << " disparity " << fmt(*r.disparity);
  if (r.shortcut_score) log << " shortcut " << fmt(*r.shortcut_score);
  log << "\n";
}

int train_seed(const ExperimentConfig& config, std::uint64_t seed, std::ostream& log) {
  const auto dir = seed_dir(config, seed);
  RunMarker marker(dir);
  auto ctx = prepare(config, seed);
  TrainResult tr;
  auto p = obtain_pipeline(ctx, seed, &tr);
  const auto cfg = config_for(config, seed);
  save_checkpoint(dir / "model.nslm", p.model(), settings_text(cfg));
  std::string curve = config_comment(cfg) + "epoch,loss\n";
  for (std::size_t e = 0; e < tr.loss_curve.size(); ++e) curve += std::to_string(e + 1) + "," + fmt(tr.loss_curve[e]) + "\n";
  write_text(dir / "loss_curve.csv", curve);
  log << dir.string() << ": trained " << to_string(config.mode) << " on " << ctx.train_set.size() << " samples";
  if (!tr.loss_curve.empty()) log << ", loss " << fmt(tr.loss_curve.front()) << " -> " << fmt(tr.loss_curve.back());
  log << "\n";
  for (const auto& n : ctx.notes) log << "  note: " << n << "\n";
  marker.done();
  return 0;
}

int eval_seed(const ExperimentConfig& config, std::uint64_t seed, std::ostream& log) {
  const auto dir = seed_dir(config, seed);
  RunMarker marker(dir);
  auto ctx = prepare(config, seed);
  auto p = obtain_pipeline(ctx, seed);
  auto e = eval_one(ctx, p, config_for(config, seed));
  e.report.kind = "eval";
  write_text(dir / "metrics.json", e.report.to_json());
  write_text(dir / "samples.csv", records_csv(e.report.config, e.records, false));
  log_report(log, dir, e.report);
  marker.done();
  return 0;
}

AttackConfig attack_config(const ExperimentConfig& config, const TaskSpec& task, std::uint64_t seed) {
  AttackConfig a;
  a.epsilon = config.attack_epsilon ? *config.attack_epsilon : task.attack_epsilon;
  a.steps = config.attack_steps ? *config.attack_steps : task.attack_steps;
  a.step_size = config.attack_step_size;
  a.random_start = config.attack_random_start;
  a.seed = seed;
  return a;
}

int attack_seed(const ExperimentConfig& config, std::uint64_t seed, std::ostream& log) {
  const auto dir = seed_dir(config, seed);
  RunMarker marker(dir);
  auto ctx = prepare(config, seed);
  auto p = obtain_pipeline(ctx, seed);
  auto e = eval_one(ctx, p, config_for(config, seed));
  const auto ac = attack_config(config, ctx.task, seed);
  parallel_for(ctx.test_set.size(), config.threads, [&](std::size_t i) {
    const auto& s = ctx.test_set.samples[i];
    const auto r = pgd_attack(p, s, ac, i);
    auto& rec = e.records[i];
    rec.adv_predicted = r.attacked.label;
    rec.linf = r.linf(s.features);
    rec.loss_clean = r.loss_trace.front();
    rec.loss_adv = r.loss_trace.back();
    rec.diagnostic = r.diagnostic;
  });
  std::size_t adv_hits = 0, aborted = 0;
  for (const auto& r : e.records) {
    adv_hits += *r.adv_predicted == r.label;
    aborted += !r.diagnostic.empty();
  }
  auto& rep = e.report;
  rep.kind = "attack";
  rep.accuracy_adversarial = static_cast<double>(adv_hits) / static_cast<double>(e.records.size());
  if (rep.accuracy > 0) rep.asr = asr(rep.accuracy, *rep.accuracy_adversarial);
  else rep.notes.push_back("asr undefined: clean accuracy is 0");
  if (aborted) rep.notes.push_back(std::to_string(aborted) + " samples aborted on non-finite gradients");
  write_text(dir / "metrics.json", rep.to_json());
  write_text(dir / "samples.csv", records_csv(rep.config, e.records, true));
  log_report(log, dir, rep);
  marker.done();
  return 0;
}

int corrupt_seed(const ExperimentConfig& config, std::uint64_t seed, std::ostream& log) {
  const auto dir = seed_dir(config, seed);
  RunMarker marker(dir);
  auto ctx = prepare(config, seed);
  auto p = obtain_pipeline(ctx, seed);
  auto e = eval_one(ctx, p, config_for(config, seed));
  auto& rep = e.report;
  rep.kind = "corrupt";
  std::string rows = config_comment(rep.config) + "corruption,severity,index,label,predicted,correct\n";
  std::vector<double> accs;
  for (auto kind : config.corruptions)
    for (int sev : config.severities) {
      Dataset shifted;
      shifted.answers = ctx.test_set.answers;
      shifted.samples.resize(ctx.test_set.size());
      const CorruptionConfig cc{kind, sev, seed, config.corruption_magnitude};
      parallel_for(ctx.test_set.size(), config.threads,
                   [&](std::size_t i) { shifted.samples[i] = corrupt(ctx.test_set.samples[i], cc, i); });
      const auto recs = evaluate(p, shifted, config.normalize, config.threads);
      std::size_t hits = 0;
      for (const auto& r : recs) {
        hits += r.correct;
        rows += to_string(kind) + "," + std::to_string(sev) + "," + std::to_string(r.index) + "," + std::to_string(r.label) + "," +
                std::to_string(r.predicted) + "," + (r.correct ? "1" : "0") + "\n";
      }
      const double acc = static_cast<double>(hits) / static_cast<double>(recs.size());
      rep.accuracy_corrupted[to_string(kind) + "/" + std::to_string(sev)] = acc;
      accs.push_back(acc);
    }
  if (rep.accuracy > 0) rep.csr = csr(rep.accuracy, accs);
  else rep.notes.push_back("csr undefined: clean accuracy is 0");
  write_text(dir / "metrics.json", rep.to_json());
  write_text(dir / "samples.csv", records_csv(rep.config, e.records, false));
  write_text(dir / "corrupted.csv", rows);
  log_report(log, dir, rep);
  marker.done();
  return 0;
}

int inspect_seed(const ExperimentConfig& config, std::uint64_t seed, std::ostream& log) {
  if (config.mode != Mode::nesy) throw ConfigError("inspect needs mode = nesy");
  const auto dir = seed_dir(config, seed);
  RunMarker marker(dir);
  auto ctx = prepare(config, seed);
  auto p = obtain_pipeline(ctx, seed);
  auto e = eval_one(ctx, p, config_for(config, seed));
  auto& rep = e.report;
  rep.kind = "inspect";
  const auto sc = shortcut_score(p, ctx.test_set);
  const auto names = p.session().fact_names();
  std::string facts = config_comment(rep.config) + "fact,mean,variance\n";
  for (std::size_t f = 0; f < names.size(); ++f)
    facts += csv_field(names[f]) + "," + fmt(sc.mean[static_cast<Eigen::Index>(f)]) + "," + fmt(sc.variance[static_cast<Eigen::Index>(f)]) + "\n";
  write_text(dir / "facts.csv", facts);
  if (ctx.task.grid_side) {
    const std::string comment = settings_text(rep.config);
    emit_fact_map(p.session(), sc.mean, dir / "maps", "mean", comment);
    for (std::size_t i = 0; i < std::min<std::size_t>(4, ctx.test_set.size()); ++i)
      emit_fact_map(p.session(), model_output(p.model(), ctx.test_set.samples[i].features), dir / "maps",
                    "sample" + std::to_string(i), comment);
  }
  if (rep.shortcut_score && *rep.shortcut_score >= 0.95)
    rep.notes.push_back("fact sets barely change across inputs: likely reasoning shortcut");
  write_text(dir / "metrics.json", rep.to_json());
  log_report(log, dir, rep);
  log << "  random-set baseline " << fmt(sc.random_baseline) << ", max fact variance " << fmt(sc.variance.maxCoeff()) << "\n";
  marker.done();
  return 0;
}

template <class F>
int for_seeds(const ExperimentConfig& config, std::ostream& log, F&& one) {
  int status = 0;
  for (auto s : config.seeds) status = std::max(status, one(config, s, log));
  return status;
}

}  // namespace

int run_train(const ExperimentConfig& c, std::ostream& log) { return for_seeds(c, log, train_seed); }
int run_eval(const ExperimentConfig& c, std::ostream& log) { return for_seeds(c, log, eval_seed); }
int run_attack(const ExperimentConfig& c, std::ostream& log) { return for_seeds(c, log, attack_seed); }
int run_corrupt(const ExperimentConfig& c, std::ostream& log) { return for_seeds(c, log, corrupt_seed); }
int run_inspect(const ExperimentConfig& c, std::ostream& log) { return for_seeds(c, log, inspect_seed); }

int run_oracle_check(const ExperimentConfig& config, std::ostream& log) {
  RunMarker marker(config.out);
  const auto task = builtin_program(config.task);
  const auto session = compile(task.program, config.oracle_k ? config.oracle_k : 64);
  constexpr std::size_t kMaxOracleK = std::size_t{1} << 16;
  std::size_t max_k = 0;
  const auto cfg = config_for(config, config.seed());
  Rng rng(config.seed());
  struct Row {
    std::string check;
    std::size_t instance;
    double value, tolerance;
    bool pass;
  };
  std::vector<Row> rows;
  // Enumeration near the 2^20 cap costs seconds per instance, so large
  // programs get facts pinned down to 2^16 worlds.
  const double cap = std::min<double>(static_cast<double>(OracleOptions{}.max_worlds), 65536.0);
  std::size_t pinned = 0;

  for (std::size_t i = 0; i < config.oracle_instances; ++i) {
    auto probs = random_probabilities(session, rng);
    const auto env = session.assignment(probs, false);
    const auto ev = forward(session, env);
    {
      // exact enumeration on a copy with enough facts pinned to fit the cap
      if (oracle_world_count(session, env) > cap) {
        pin_until(session, probs, rng, cap);
        ++pinned;
      }
      const auto small = session.assignment(probs, false);
      const auto exact = oracle_forward(session, small);
      // raise k until no proof is cut, unless k was fixed
      Session sk = session;
      auto fe = forward(sk, small);
      while (config.oracle_k == 0 && fe.truncated && sk.test_k() < kMaxOracleK) {
        sk = set_test_k(sk, sk.test_k() * 2);
        fe = forward(sk, small);
      }
      max_k = std::max(max_k, sk.test_k());
      const double diff = (fe.distribution.probabilities - exact.probabilities).cwiseAbs().maxCoeff();
      rows.push_back({"forward-vs-oracle", i, diff, 1e-9, diff <= 1e-9});
    }

    Eigen::VectorXd up(static_cast<Eigen::Index>(session.answer_count()));
    for (auto& x : up) x = rng.normal();
    const auto g = backward(session, ev, up);
    // the proof bags are held fixed, as in training
    auto value = [&](const ProbAssignment& e) {
      double v = 0;
      for (std::size_t a = 0; a < ev.bags.size(); ++a) v += up[static_cast<Eigen::Index>(a)] * dnf_probability(ev.bags[a], e);
      return v;
    };
    const double eps = 1e-4;
    const double noise = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value(env))) / eps;
    double worst = 0;
    for (FactId f = 0; f < session.fact_count(); ++f) {
      auto a = env, b = env;
      a.set(f, env[f] + eps);
      b.set(f, env[f] - eps);
      const double fd = (value(a) - value(b)) / (2 * eps), an = g[f];
      const double scale = std::max(std::abs(an), std::abs(fd));
      if (scale >= 1e-12) worst = std::max(worst, std::abs(an - fd) / std::max(scale, noise));
    }
    rows.push_back({"backward-vs-finite-difference", i, worst, 1e-4, worst < 1e-4});
  }

  {
    auto data = make_task_dataset(task, {std::min<std::size_t>(5, config.oracle_instances), 0.3, config.seed()});
    Pipeline p(PerceptionModel(task.nesy_model(config.hidden), config.seed()), compile(task.program, config.train_k));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double err = finite_diff_check(p, data.samples[i], 1e-4, 64, config.seed() + i);
      rows.push_back({"pipeline-vs-finite-difference", i, err, 1e-3, err < 1e-3});
    }
  }

  std::string csv = config_comment(cfg) + "check,instance,value,tolerance,pass\n";
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // pass, total
  std::map<std::string, double> worst;
  for (const auto& r : rows) {
    csv += r.check + "," + std::to_string(r.instance) + "," + fmt(r.value) + "," + fmt(r.tolerance) + "," + (r.pass ? "pass" : "FAIL") + "\n";
    auto& t = tally[r.check];
    t.first += r.pass;
    ++t.second;
    worst[r.check] = std::max(worst[r.check], r.value);
  }
  write_text(config.out / "oracle_check.csv", csv);
  bool ok = true;
  for (const auto& [check, t] : tally) {
    const bool pass = t.first == t.second;
    ok = ok && pass;
    log << (pass ? "PASS " : "FAIL ") << check << ": " << t.first << "/" << t.second << " within tolerance, worst " << fmt(worst[check]) << "\n";
  }
  log << "forward used k up to " << max_k << "\n";
  if (pinned) log << "note: " << pinned << " oracle instances had facts pinned to 0/1 to stay within 2^16 worlds\n";
  marker.done();
  return ok ? 0 : 3;
}

int run_sweep(const ExperimentConfig& config, std::ostream& log) {
  const auto ks = config.sweep_k.empty() ? std::vector<std::size_t>{config.train_k} : config.sweep_k;
  const auto fracs = config.sweep_fraction.empty() ? std::vector<double>{config.fraction} : config.sweep_fraction;
  struct Child {
    ExperimentConfig cfg;
    std::string name;
    std::string log;
    int status = 0;
    std::vector<std::pair<std::size_t, double>> test_k_acc;
  };
  std::vector<Child> children;
  for (auto k : ks)
    for (double f : fracs)
      for (auto s : config.seeds) {
        Child c;
        c.cfg = config;
        c.cfg.train_k = k;
        c.cfg.fraction = f;
        c.cfg.seeds = {s};
        c.cfg.jobs = 1;
        c.cfg.sweep_k.clear();
        c.cfg.sweep_fraction.clear();
        if (!config.sweep_test_k.empty()) c.cfg.test_k.reset();
        c.name = "k" + std::to_string(k) + "-f" + fmt(f) + "-s" + std::to_string(s);
        c.cfg.out = config.out / c.name;
        children.push_back(std::move(c));
      }

  RunMarker marker(config.out);
  const bool k_sweep = !config.sweep_test_k.empty();
  if (k_sweep && config.sweep_command != "eval") throw ConfigError("sweep.test_k needs sweep.command = eval");
  parallel_for(children.size(), config.jobs, [&](std::size_t i) {
    auto& c = children[i];
    std::ostringstream out;
    if (!k_sweep) {
      c.status = run(config.sweep_command, c.cfg, out);
    } else {
      // train once, evaluate at every test k on the same weights
      const auto seed = c.cfg.seed();
      RunMarker child_marker(c.cfg.out);
      auto ctx = prepare(c.cfg, seed);
      auto p = obtain_pipeline(ctx, seed);
      save_checkpoint(c.cfg.out / "model.nslm", p.model(), settings_text(config_for(c.cfg, seed)));
      for (auto tk : config.sweep_test_k) {
        if (p.nesy()) p.set_session(set_test_k(p.session(), tk));
        auto run_cfg = c.cfg;
        run_cfg.test_k = tk;
        auto e = eval_one(ctx, p, config_for(run_cfg, seed));
        e.report.kind = "eval";
        const auto dir = c.cfg.out / ("test_k-" + std::to_string(tk));
        write_text(dir / "metrics.json", e.report.to_json());
        write_text(dir / "samples.csv", records_csv(e.report.config, e.records, false));
        log_report(out, dir, e.report);
        c.test_k_acc.emplace_back(tk, e.report.accuracy);
      }
      child_marker.done();
    }
    c.log = out.str();
  });

  int status = 0;
  for (const auto& c : children) {
    log << c.log;
    status = std::max(status, c.status);
  }
  if (k_sweep) {
    std::string table = config_comment(config.resolved()) + "k,fraction,seed,test_k,accuracy,delta_vs_train_k\n";
    log << "\nk  fraction  seed  test_k  accuracy  delta\n";
    for (const auto& c : children) {
      double ref = c.test_k_acc.front().second;
      for (const auto& [tk, acc] : c.test_k_acc)
        if (tk == c.cfg.train_k) ref = acc;
      for (const auto& [tk, acc] : c.test_k_acc) {
        const std::string row = std::to_string(c.cfg.train_k) + "," + fmt(c.cfg.fraction) + "," + std::to_string(c.cfg.seed()) + "," +
                                std::to_string(tk) + "," + fmt(acc) + "," + fmt(acc - ref);
        table += row + "\n";
        log << c.cfg.train_k << "  " << fmt(c.cfg.fraction) << "  " << c.cfg.seed() << "  " << tk << "  " << fmt(acc) << "  "
            << fmt(acc - ref) << "\n";
      }
    }
    write_text(config.out / "sweep.csv", table);
  }
  marker.done();
  return status;
}

int run_report(const fs::path& in, std::ostream& log) {
  if (!fs::is_directory(in)) throw ConfigError("report input " + in.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(in))
    if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const std::vector<std::string> cols{"run", "kind", "task", "mode", "k", "test_k", "fraction", "seed", "samples", "accuracy",
                                      "ece", "mce", "asr", "csr", "disparity", "shortcut", "complete"};
  std::string csv = join(cols) + "\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& f : files) {
    std::ifstream is(f);
    std::stringstream ss;
    ss << is.rdbuf();
    const auto r = MetricsReport::from_json(ss.str());
    auto get = [&](const char* k) {
      auto it = r.config.find(k);
      return it == r.config.end() ? std::string() : it->second;
    };
    const bool complete = r.complete && !fs::exists(f.parent_path() / "INCOMPLETE");
    const std::vector<std::string> row{csv_field(fs::relative(f.parent_path(), in).string()), r.kind, csv_field(get("task")), get("mode"),
                                       get("k"), get("test_k"), get("fraction"), get("seeds"), std::to_string(r.samples),
                                       fmt(r.accuracy), fmt(r.ece), fmt(r.mce), opt(r.asr), opt(r.csr), opt(r.disparity),
                                       opt(r.shortcut_score), complete ? "true" : "false"};
    csv += join(row) + "\n";
  }
  write_text(in / "report.csv", csv);
  log << csv;
  log << files.size() << " runs\n";
  return 0;
}

int run(const std::string& command, const ExperimentConfig& config, std::ostream& log) {
  if (command == "train") return run_train(config, log);
  if (command == "eval") return run_eval(config, log);
  if (command == "attack") return run_attack(config, log);
  if (command == "corrupt") return run_corrupt(config, log);
  if (command == "inspect") return run_inspect(config, log);
  if (command == "oracle-check") return run_oracle_check(config, log);
  if (command == "sweep") return run_sweep(config, log);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace nsl
