// Experiment configuration and the runners behind each CLI subcommand.
// Every artifact a runner writes carries the resolved configuration.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsl/assurance.hpp"
#include "nsl/datasets.hpp"
#include "nsl/pipeline.hpp"
#include "nsl/tasks.hpp"

namespace nsl {

/// Bad keys, values or combinations. Maps to exit status 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat key=value settings. `[section]` lines prefix later keys with
/// "section."; '#' and ';' start comments.
using Settings = std::map<std::string, std::string>;
Settings parse_settings(const std::string& text);
Settings read_settings(const std::filesystem::path& path);
std::string settings_text(const Settings& s);

enum class Mode { nn, nesy };

struct ExperimentConfig {
  std::string task = "sum_digits:n=2";
  Mode mode = Mode::nesy;
  std::size_t train_k = 3;
  std::optional<std::size_t> test_k;  // default train_k
  double fraction = 1.0;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "runs/default";
  std::size_t threads = 1;

  TrainConfig train;
  std::vector<std::size_t> hidden{32};
  std::vector<std::size_t> head_hidden{64};

  std::size_t train_count = 500;
  std::size_t test_count = 500;
  double noise = 0.3;
  std::filesystem::path data_path, data_labels, test_path, test_labels;
  std::optional<ExternalFormat> data_format;

  std::optional<double> attack_epsilon;  // default from the task
  std::optional<std::size_t> attack_steps;
  std::optional<double> attack_step_size;
  bool attack_random_start = true;

  std::vector<CorruptionKind> corruptions = corruption_suite();
  std::vector<int> severities{1, 2, 3, 4, 5};
  std::optional<double> corruption_magnitude;

  bool normalize = false;
  std::size_t bins = kCalibrationBins;
  std::filesystem::path checkpoint;  // load instead of training

  std::size_t oracle_instances = 100;
  std::size_t oracle_k = 0;  // 0: raise k until no proof is cut

  // sweep grid; empty lists fall back to the single values above
  std::vector<std::size_t> sweep_k, sweep_test_k;
  std::vector<double> sweep_fraction;
  std::string sweep_command = "eval";
  std::size_t jobs = 1;

  /// Unknown keys and malformed values throw ConfigError.
  static ExperimentConfig from_settings(const Settings& s);
  /// Every key that affects results, with task defaults filled in.
  Settings resolved() const;
  std::size_t effective_test_k() const { return test_k ? *test_k : train_k; }
  std::uint64_t seed() const { return seeds.front(); }
};

std::string to_string(Mode m);

/// One line per sample in samples.csv.
struct SampleRecord {
  std::size_t index = 0;
  std::size_t label = 0;
  std::size_t predicted = 0;
  double confidence = 0.0;
  bool correct = false;
  std::optional<std::string> group;
  // attack
  std::optional<std::size_t> adv_predicted;
  double linf = 0.0;
  double loss_clean = 0.0, loss_adv = 0.0;
  std::string diagnostic;
};

struct MetricsReport {
  std::string kind;  // eval, attack, corrupt, inspect
  Settings config;
  std::size_t samples = 0;
  double accuracy = 0.0;
  double ece = 0.0, mce = 0.0;
  std::optional<double> accuracy_adversarial, asr;
  std::map<std::string, double> accuracy_corrupted;  // "kind/severity"
  std::optional<double> csr;
  std::map<std::string, GroupTally> groups;
  std::set<std::string> majority;
  std::optional<double> disparity;
  std::optional<double> shortcut_score, shortcut_baseline;
  std::vector<std::string> notes;
  bool complete = true;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

/// Aggregates records into accuracy, calibration, groups and disparity.
MetricsReport summarize(const std::vector<SampleRecord>& records, std::size_t bins = kCalibrationBins);

// ---- runners ----

struct RunContext {
  ExperimentConfig config;
  TaskSpec task;
  Dataset train_set, test_set;
  std::vector<std::string> notes;  // data warnings
};

/// Resolves the task and builds (or loads) the datasets for seed.
RunContext prepare(const ExperimentConfig& config, std::uint64_t seed);
Pipeline build_pipeline(const RunContext& ctx, std::uint64_t seed);
/// Trains, or loads the configured checkpoint.
Pipeline obtain_pipeline(const RunContext& ctx, std::uint64_t seed, TrainResult* result = nullptr);

std::vector<SampleRecord> evaluate(const Pipeline& pipeline, const Dataset& data, bool normalize, std::size_t threads);

int run_train(const ExperimentConfig& config, std::ostream& log);
int run_eval(const ExperimentConfig& config, std::ostream& log);
int run_attack(const ExperimentConfig& config, std::ostream& log);
int run_corrupt(const ExperimentConfig& config, std::ostream& log);
int run_inspect(const ExperimentConfig& config, std::ostream& log);
/// Exit status 3 when any check fails.
int run_oracle_check(const ExperimentConfig& config, std::ostream& log);
int run_sweep(const ExperimentConfig& config, std::ostream& log);
/// Tabulates every metrics.json below `in` into report.csv there and to log.
int run_report(const std::filesystem::path& in, std::ostream& log);

/// Dispatches by subcommand name.
int run(const std::string& command, const ExperimentConfig& config, std::ostream& log);

}  // namespace nsl
