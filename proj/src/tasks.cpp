#include "nsl/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "nsl/parser.hpp"

namespace nsl {

TaskRef TaskRef::parse(const std::string& text) {
  TaskRef r;
  const auto colon = text.find(':');
  r.name = text.substr(0, colon);
  if (r.name.empty()) throw TaskError("empty task name");
  if (colon == std::string::npos) return r;
  std::stringstream ss(text.substr(colon + 1));
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw TaskError("task parameter '" + kv + "' is not key=value");
    r.params[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return r;
}

std::string TaskRef::to_string() const {
  std::string s = name;
  char sep = ':';
  for (const auto& [k, v] : params) {
    s += sep + k + "=" + v;
    sep = ',';
  }
  return s;
}

std::size_t TaskRef::get(const std::string& key, std::size_t fallback) const {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  std::size_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw TaskError("task parameter " + key + "=" + s + " is not a count");
  return v;
}

std::size_t TaskSpec::fact_count() const {
  std::size_t n = 0;
  for (const auto& d : program.relations)
    if (d.is_input()) n += d.facts ? d.facts->size() : d.domain_size();
  return n;
}

ModelConfig TaskSpec::nesy_model(std::vector<std::size_t> hidden) const {
  ModelConfig c;
  c.mode = ModelMode::facts;
  c.slots = slots;
  c.features = features;
  c.hidden = std::move(hidden);
  c.fact_count = fact_count();
  c.heads = heads;
  return c;
}

ModelConfig TaskSpec::nn_model(std::vector<std::size_t> hidden, std::vector<std::size_t> head_hidden) const {
  ModelConfig c;
  c.mode = ModelMode::classifier;
  c.slots = slots;
  c.features = features;
  c.hidden = std::move(hidden);
  c.head_hidden = std::move(head_hidden);
  c.classes = labels.size();
  return c;
}

const TruthTable& cifar_truth_table() {
  static const TruthTable t{
      {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"},
      {"is animal", "has feathers", "is mammal", "has hooves", "has antlers", "has retractable claws", "has wheels",
       "has wings", "has trailer", "is transportation", "is amphibian"},
      {{
          {0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 0},
          {0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0},
          {1, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0},
          {1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0},
          {1, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0},
          {1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0},
          {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1},
          {1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0},
          {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0},
          {0, 0, 0, 0, 0, 0, 1, 0, 1, 1, 0},
      }}};
  return t;
}

std::size_t nearest_row(const std::vector<std::vector<int>>& rows, const Eigen::VectorXd& concepts) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double d = 0;
    for (std::size_t j = 0; j < rows[r].size(); ++j) {
      const double p = concepts[static_cast<Eigen::Index>(j)];
      d += rows[r][j] ? 1.0 - p : p;
    }
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

const std::vector<std::string>& phoneme_alphabet() {
  // 21 ARPAbet symbols used by the lexicon, two unused ones, and the pad.
  static const std::vector<std::string> a{"Z", "IH", "R",  "OW", "W", "AH", "N", "T",  "UW", "TH", "IY", "F",
                                          "AO", "AY", "V", "S",  "K", "EH", "EY", "HH", "Y", "AE", "D",  "_"};
  return a;
}

const std::vector<LexiconWord>& phoneme_lexicon() {
  static const std::vector<LexiconWord> l{
      {"zero", {"Z", "IH", "R", "OW"}}, {"one", {"W", "AH", "N"}},     {"two", {"T", "UW"}},
      {"three", {"TH", "R", "IY"}},     {"four", {"F", "AO", "R"}},    {"five", {"F", "AY", "V"}},
      {"six", {"S", "IH", "K", "S"}},   {"seven", {"S", "EH", "V", "AH", "N"}},
      {"eight", {"EY", "T"}},           {"nine", {"N", "AY", "N"}},    {"hey", {"HH", "EY"}},
      {"yes", {"Y", "EH", "S"}},        {"no", {"N", "OW"}},
  };
  return l;
}

std::vector<std::pair<int, int>> grid_edges(std::size_t side) {
  std::vector<std::pair<int, int>> e;
  const int s = static_cast<int>(side);
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const int a = r * s + c;
      if (c + 1 < s) e.push_back({a, a + 1});
      if (r + 1 < s) e.push_back({a, a + s});
    }
  return e;
}

namespace {

std::string num(std::size_t v) { return std::to_string(v); }

void need(bool ok, const std::string& what) {
  if (!ok) throw TaskError(what);
}

std::vector<Tuple> int_labels(std::size_t n) {
  std::vector<Tuple> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({Constant::integer(static_cast<std::int64_t>(i))});
  return out;
}

std::vector<std::string> int_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(num(i));
  return out;
}

// Per slot one softmax over facts [slot*width, (slot+1)*width).
std::vector<std::vector<OutputHead>> per_slot_softmax(std::size_t slots, std::size_t width) {
  std::vector<std::vector<OutputHead>> heads(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    OutputHead h{OutputHead::Kind::softmax, {}};
    for (std::size_t v = 0; v < width; ++v) h.facts.push_back(static_cast<FactId>(s * width + v));
    heads[s].push_back(h);
  }
  return heads;
}

void check_params(const TaskRef& ref, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : ref.params) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw TaskError("task " + ref.name + " has no parameter '" + k + "'");
  }
}

TaskSpec sum_digits(const TaskRef& ref) {
  check_params(ref, {"n", "classes", "side"});
  const auto n = ref.get("n", 2), c = ref.get("classes", 3), side = ref.get("side", 8);
  need(n >= 1 && n <= 16, "sum_digits needs 1 <= n <= 16");
  need(c >= 2, "sum_digits needs classes >= 2");
  need(side >= 2, "sum_digits needs side >= 2");
  const std::size_t sums = n * (c - 1) + 1;
  std::string src = "// sum of the digits shown in " + num(n) + " images\n";
  src += "input digit(img:" + num(n) + ", val:" + num(c) + ") group by img.\n";
  src += "output sum(s:" + num(sums) + ").\n";
  std::string head = "sum(", body;
  for (std::size_t i = 0; i < n; ++i) {
    head += (i ? "+A" : "A") + num(i);
    body += std::string(i ? ", " : "") + "digit(" + num(i) + ", A" + num(i) + ")";
  }
  src += head + ") :- " + body + ".\n";

  TaskSpec t;
  t.name = "sum_digits";
  t.source = src;
  t.slots = n;
  t.features = side * side;
  t.heads = per_slot_softmax(n, c);
  t.labels = int_labels(sums);
  t.label_names = int_names(sums);
  return t;
}

TaskSpec how_many(const TaskRef& ref) {
  check_params(ref, {"n", "classes", "side"});
  const auto n = ref.get("n", 2), c = ref.get("classes", 10), side = ref.get("side", 8);
  need(n >= 1 && n <= 16, "how_many_3_or_4 needs 1 <= n <= 16");
  need(c >= 5, "how_many_3_or_4 needs classes >= 5");
  need(side >= 2, "how_many_3_or_4 needs side >= 2");
  const std::string N = num(n), N1 = num(n + 1);
  std::string src = "// how many of " + N + " images show a 3 or a 4\n";
  src += "input digit(img:" + N + ", val:" + num(c) + ") group by img.\n";
  src += "rel cnt(i:" + N1 + ", c:" + N1 + ").\n";
  src += "output count(c:" + N1 + ").\n";
  src += "cnt(1, 1) :- digit(0, 3).\ncnt(1, 1) :- digit(0, 4).\ncnt(1, 0) :- not digit(0, 3), not digit(0, 4).\n";
  src += "cnt(J+1, C+1) :- cnt(J, C), digit(J, 3).\n";
  src += "cnt(J+1, C+1) :- cnt(J, C), digit(J, 4).\n";
  src += "cnt(J+1, C) :- cnt(J, C), not digit(J, 3), not digit(J, 4).\n";
  src += "count(C) :- cnt(" + N + ", C).\n";

  TaskSpec t;
  t.name = "how_many_3_or_4";
  t.source = src;
  t.slots = n;
  t.features = side * side;
  t.heads = per_slot_softmax(n, c);
  t.labels = int_labels(n + 1);
  t.label_names = int_names(n + 1);
  return t;
}

TaskSpec kb_classify(const TaskRef& ref) {
  check_params(ref, {"features"});
  const auto features = ref.get("features", 33);
  need(features >= 11, "kb_classify needs features >= 11");
  const auto& tt = cifar_truth_table();
  std::string src = "// CIFAR-10 classes from 11 concepts via the class/concept truth table\n";
  src += "input concept(c:11).\noutput cls(k:10).\n";
  for (std::size_t k = 0; k < 10; ++k) {
    src += "cls(" + num(k) + ") :- ";
    for (std::size_t j = 0; j < 11; ++j)
      src += std::string(j ? ", " : "") + (tt.rows[k][j] ? "" : "not ") + "concept(" + num(j) + ")";
    src += ".  // " + tt.classes[k] + "\n";
  }
  TaskSpec t;
  t.name = "kb_classify";
  t.source = src;
  t.slots = 1;
  t.features = features;
  OutputHead h{OutputHead::Kind::sigmoid, {}};
  for (FactId f = 0; f < 11; ++f) h.facts.push_back(f);
  t.heads = {{h}};
  t.labels = int_labels(10);
  t.label_names.assign(tt.classes.begin(), tt.classes.end());
  for (const auto& row : tt.rows) t.truth_table.push_back(std::vector<int>(row.begin(), row.end()));
  auto rows = t.truth_table;
  t.decoder = [rows](const Eigen::VectorXd& facts, const Eigen::VectorXd&) { return nearest_row(rows, facts); };
  return t;
}

TaskSpec pathfinder(const TaskRef& ref) {
  check_params(ref, {"side"});
  const auto side = ref.get("side", 8);
  need(side >= 2 && side <= 64, "pathfinder needs 2 <= side <= 64");
  const std::size_t cells = side * side;
  const std::string C = num(cells);
  std::string src = "// are the two marked dots joined by a path of edges\n";
  src += "input dot(c:" + C + ").\n";
  src += "input edge(a:" + C + ", b:" + C + ") facts {";
  const auto edges = grid_edges(side);
  for (std::size_t i = 0; i < edges.size(); ++i)
    src += std::string(i ? ", " : "") + "(" + std::to_string(edges[i].first) + ", " + std::to_string(edges[i].second) + ")";
  src += "}.\n";
  src += "rel path(a:" + C + ", b:" + C + ").\noutput is_connected().\n";
  src += "path(X, Y) :- edge(X, Y).\npath(X, Y) :- edge(Y, X).\n";
  src += "path(X, Z) :- path(X, Y), edge(Y, Z).\npath(X, Z) :- path(X, Y), edge(Z, Y).\n";
  src += "is_connected() :- dot(X), dot(Y), path(X, Y), X != Y.\n";

  TaskSpec t;
  t.name = "pathfinder";
  t.source = src;
  t.slots = 1;
  const std::size_t img = 2 * side - 1;
  t.features = 2 * img * img;
  OutputHead h{OutputHead::Kind::sigmoid, {}};
  for (FactId f = 0; f < cells + edges.size(); ++f) h.facts.push_back(f);
  t.heads = {{h}};
  t.labels = {{Constant::integer(0)}, {Constant::integer(1)}};
  t.label_names = {"disconnected", "connected"};
  t.grid_side = side;
  t.attack_epsilon = 0.03;
  t.attack_steps = 10;
  return t;
}

TaskSpec phoneme_word(const TaskRef& ref) {
  check_params(ref, {"slots", "alphabet", "features"});
  const auto slots = ref.get("slots", 6), alphabet = ref.get("alphabet", 24), features = ref.get("features", 16);
  const auto& lex = phoneme_lexicon();
  const auto& abc = phoneme_alphabet();
  need(alphabet == abc.size(), "phoneme_word uses the fixed " + num(abc.size()) + "-symbol alphabet");
  // Fewer slots than the longest word truncate words; some then collide.
  need(slots >= 1 && slots <= 16, "phoneme_word needs 1 <= slots <= 16");
  need(features >= 2, "phoneme_word needs features >= 2");
  auto index = [&](const std::string& p) { return static_cast<std::size_t>(std::find(abc.begin(), abc.end(), p) - abc.begin()); };

  std::string src = "// spoken word from one phoneme per slot; phoneme " + num(abc.size() - 1) + " pads\n";
  src += "input phon(slot:" + num(slots) + ", ph:" + num(abc.size()) + ") group by slot.\n";
  src += "output word(w:" + num(lex.size()) + ").\n";
  for (std::size_t w = 0; w < lex.size(); ++w) {
    src += "word(" + num(w) + ") :- ";
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t p = s < lex[w].phonemes.size() ? index(lex[w].phonemes[s]) : abc.size() - 1;
      src += std::string(s ? ", " : "") + "phon(" + num(s) + ", " + num(p) + ")";
    }
    src += ".  // " + lex[w].word + "\n";
  }
  TaskSpec t;
  t.name = "phoneme_word";
  t.source = src;
  t.slots = slots;
  t.features = features;
  t.heads = per_slot_softmax(slots, abc.size());
  t.labels = int_labels(lex.size());
  for (const auto& w : lex) t.label_names.push_back(w.word);
  t.attack_epsilon = 0.001;
  t.attack_steps = 200;
  t.group_key = "speaker";
  return t;
}

TaskSpec attribute_classify(const TaskRef& ref) {
  check_params(ref, {"features"});
  const auto features = ref.get("features", 30);
  need(features >= 15, "attribute_classify needs features >= 15");
  std::string src = "// species from three visual attributes, one value each\n";
  src += "input shape(s:5) group by ().\ninput margin(m:6) group by ().\ninput texture(t:4) group by ().\n";
  src += "output species(k:11).\n";
  TaskSpec t;
  for (std::size_t k = 0; k < 11; ++k) {
    const std::vector<int> row{static_cast<int>(k % 5), static_cast<int>(k % 6), static_cast<int>(k % 4)};
    src += "species(" + num(k) + ") :- shape(" + std::to_string(row[0]) + "), margin(" + std::to_string(row[1]) +
           "), texture(" + std::to_string(row[2]) + ").\n";
    t.truth_table.push_back(row);
  }
  t.name = "attribute_classify";
  t.source = src;
  t.slots = 1;
  t.features = features;
  std::vector<OutputHead> heads;
  FactId next = 0;
  for (std::size_t width : {5, 6, 4}) {
    OutputHead h{OutputHead::Kind::softmax, {}};
    for (std::size_t i = 0; i < width; ++i) h.facts.push_back(next++);
    heads.push_back(h);
  }
  t.heads = {heads};
  t.labels = int_labels(11);
  t.label_names = int_names(11);
  t.attack_epsilon = 0.007;
  t.attack_steps = 200;
  return t;
}

}  // namespace

std::vector<std::string> builtin_task_names() {
  return {"sum_digits", "how_many_3_or_4", "kb_classify", "pathfinder", "phoneme_word", "attribute_classify"};
}

TaskSpec builtin_program(const TaskRef& ref) {
  TaskSpec t;
  if (ref.name == "sum_digits") t = sum_digits(ref);
  else if (ref.name == "how_many_3_or_4") t = how_many(ref);
  else if (ref.name == "kb_classify") t = kb_classify(ref);
  else if (ref.name == "pathfinder") t = pathfinder(ref);
  else if (ref.name == "phoneme_word") t = phoneme_word(ref);
  else if (ref.name == "attribute_classify") t = attribute_classify(ref);
  else throw TaskError("unknown task '" + ref.name + "'");
  t.ref = ref;
  t.program = parse_program(t.source);
  return t;
}

TaskSpec builtin_program(const std::string& ref) { return builtin_program(TaskRef::parse(ref)); }

}  // namespace nsl
