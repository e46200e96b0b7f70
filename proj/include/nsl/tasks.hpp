// Builtin task programs: the symbolic program plus how perception is wired
// to its input facts and the per-task attack budget.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsl/logic.hpp"
#include "nsl/perception.hpp"
#include "nsl/pipeline.hpp"

namespace nsl {

class TaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// "name:key=value,key=value" as given on the command line.
struct TaskRef {
  std::string name;
  std::map<std::string, std::string> params;

  static TaskRef parse(const std::string& text);
  std::string to_string() const;
  std::size_t get(const std::string& key, std::size_t fallback) const;
};

struct TaskSpec {
  std::string name;
  TaskRef ref;
  std::string source;  // program text
  Program program;

  // perception wiring
  std::size_t slots = 1;
  std::size_t features = 0;                         // per slot
  std::vector<std::vector<OutputHead>> heads;       // per slot
  std::vector<Tuple> labels;                        // label space
  std::vector<std::string> label_names;
  Decoder decoder;                                  // empty: argmax

  double attack_epsilon = 0.03;
  std::size_t attack_steps = 100;
  std::string group_key;  // what Sample::group means, if anything

  std::optional<std::size_t> grid_side;  // pathfinder geometry
  std::vector<std::vector<int>> truth_table;  // kb_classify rows, attribute triples

  std::size_t fact_count() const;
  ModelConfig nesy_model(std::vector<std::size_t> hidden) const;
  ModelConfig nn_model(std::vector<std::size_t> hidden, std::vector<std::size_t> head_hidden) const;
};

/// Known names: sum_digits(n, classes), how_many_3_or_4(n, classes),
/// kb_classify, pathfinder(side), phoneme_word(slots, alphabet),
/// attribute_classify. Throws TaskError for unknown names or bad params.
TaskSpec builtin_program(const TaskRef& ref);
TaskSpec builtin_program(const std::string& ref);
std::vector<std::string> builtin_task_names();

/// 10 classes x 11 concepts, class order airplane..truck.
struct TruthTable {
  std::array<std::string, 10> classes;
  std::array<std::string, 11> concepts;
  std::array<std::array<int, 11>, 10> rows;
};
const TruthTable& cifar_truth_table();

/// Class whose row is closest in expected Hamming distance to the concept
/// probabilities; ties go to the lower class index.
std::size_t nearest_row(const std::vector<std::vector<int>>& rows, const Eigen::VectorXd& concepts);

// Phoneme alphabet and lexicon used by phoneme_word.
const std::vector<std::string>& phoneme_alphabet();  // 24 symbols, last is the pad
struct LexiconWord {
  std::string word;
  std::vector<std::string> phonemes;
};
const std::vector<LexiconWord>& phoneme_lexicon();  // 13 words

/// Undirected 4-neighbour edges (a < b) of a side x side grid, row-major cells.
std::vector<std::pair<int, int>> grid_edges(std::size_t side);

}  // namespace nsl
