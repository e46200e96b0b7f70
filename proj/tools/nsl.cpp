// Command-line driver. Exit status: 0 success, 1 configuration error,
// 2 runtime failure, 3 oracle-check failure.
#include <CLI11.hpp>
#include <iostream>

#include "nsl/checkpoint.hpp"
#include "nsl/experiment.hpp"
#include "nsl/parser.hpp"

namespace {

struct Flags {
  std::string config_file;
  std::vector<std::string> sets;
  nsl::Settings direct;
};

// Registers a flag that, when given, overrides `key`.
void setting(CLI::App* app, Flags& f, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(name, [&f, key](const std::string& v) { f.direct[key] = v; }, help);
}

void common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "key=value config file with [sections]")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "override any setting, e.g. --set train.epochs=5")->take_all();
  setting(app, f, "--task", "task", "task reference, e.g. sum_digits:n=2,classes=3");
  setting(app, f, "--mode", "mode", "nn or nesy");
  setting(app, f, "--k", "k", "proofs kept per fact while training");
  setting(app, f, "--test-k", "test_k", "proofs kept per fact at test time (default: --k)");
  setting(app, f, "--fraction", "fraction", "fraction of training data, stratified");
  app->add_option_function<std::vector<std::string>>(
         "--seed,--seeds",
         [&f](const std::vector<std::string>& v) {
           std::string joined;
           for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
           f.direct["seeds"] = joined;
         },
         "one or more seeds")
      ->delimiter(',');
  setting(app, f, "--out", "out", "output directory");
  setting(app, f, "--threads", "threads", "worker threads for per-sample loops");
  setting(app, f, "--checkpoint", "checkpoint", "load this model instead of training");
  setting(app, f, "--epochs", "train.epochs", "training epochs");
  setting(app, f, "--lr", "train.lr", "learning rate");
  setting(app, f, "--epsilon", "attack.epsilon", "attack budget (L-infinity)");
  setting(app, f, "--steps", "attack.steps", "attack steps");
  app->add_flag_callback("--normalize", [&f] { f.direct["eval.normalize"] = "true"; },
                         "divide confidence by the class mass");
}

nsl::ExperimentConfig resolve(const Flags& f) {
  nsl::Settings s;
  if (!f.config_file.empty()) s = nsl::read_settings(f.config_file);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw nsl::ConfigError("--set expects key=value, got '" + kv + "'");
    s[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const auto& [k, v] : f.direct) s[k] = v;
  return nsl::ExperimentConfig::from_settings(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neurosymbolic experiments: training, evaluation, attacks, corruptions, inspection and oracle checks"};
  app.require_subcommand(1);
  Flags flags;
  std::string report_in = "runs";

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train a model; writes model.nslm and loss_curve.csv"},
      {"eval", "accuracy, calibration, disparity and shortcut score on the test set"},
      {"attack", "PGD through the whole pipeline; reports ASR"},
      {"corrupt", "corruption suite; reports CSR"},
      {"inspect", "shortcut report, per-fact statistics and fact maps"},
      {"oracle-check", "forward vs exact enumeration and gradients vs finite differences"},
      {"sweep", "run a grid over k, fraction and seeds"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    common(sub, flags);
    if (name == "sweep") {
      setting(sub, flags, "--jobs", "jobs", "child runs in parallel");
      setting(sub, flags, "--sweep-k", "sweep.k", "comma list of training k");
      setting(sub, flags, "--sweep-test-k", "sweep.test_k", "comma list of test k, evaluated on the same weights");
      setting(sub, flags, "--sweep-fraction", "sweep.fraction", "comma list of data fractions");
      setting(sub, flags, "--command", "sweep.command", "subcommand run per grid point (default eval)");
    }
  }
  auto* report = app.add_subcommand("report", "tabulate every metrics.json below a directory");
  report->add_option("--in", report_in, "directory to scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) return nsl::run_report(report_in, std::cout);
    const auto* sub = app.get_subcommands().front();
    return nsl::run(sub->get_name(), resolve(flags), std::cout);
  } catch (const nsl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const nsl::ProgramError& e) {
    std::cerr << "program error:\n";
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d.format() << "\n";
    return 1;
  } catch (const nsl::TaskError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
