#include <json.hpp>

#include "nsl/experiment.hpp"

namespace nsl {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> opt_of(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string MetricsReport::to_json() const {
  ordered_json j;
  j["schema"] = "nsl-metrics/1";
  j["kind"] = kind;
  j["complete"] = complete;
  auto get = [&](const char* k) -> std::string {
    auto it = config.find(k);
    return it == config.end() ? std::string() : it->second;
  };
  j["metadata"] = {{"task", get("task")}, {"mode", get("mode")},         {"train_k", get("k")},
                   {"test_k", get("test_k")}, {"data_fraction", get("fraction")}, {"seed", get("seeds")}};
  j["samples"] = samples;
  j["accuracy"] = accuracy;
  j["ece"] = ece;
  j["mce"] = mce;
  j["accuracy_adversarial"] = opt(accuracy_adversarial);
  j["asr"] = opt(asr);
  ordered_json cor = ordered_json::object();
  for (const auto& [k, v] : accuracy_corrupted) cor[k] = v;
  j["accuracy_corrupted"] = cor;
  j["csr"] = opt(csr);
  ordered_json groups = ordered_json::object();
  for (const auto& [g, t] : this->groups)
    groups[g] = {{"correct", t.correct}, {"total", t.total}, {"accuracy", t.accuracy()}, {"majority", majority.count(g) > 0}};
  j["groups"] = groups;
  j["disparity"] = opt(disparity);
  j["shortcut_score"] = opt(shortcut_score);
  j["shortcut_baseline"] = opt(shortcut_baseline);
  j["notes"] = notes;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed metrics report: ") + e.what());
  }
  MetricsReport r;
  try {
    r.kind = j.at("kind").get<std::string>();
    r.complete = j.value("complete", true);
    r.samples = j.at("samples").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.ece = j.at("ece").get<double>();
    r.mce = j.at("mce").get<double>();
    r.accuracy_adversarial = opt_of(j, "accuracy_adversarial");
    r.asr = opt_of(j, "asr");
    r.csr = opt_of(j, "csr");
    r.disparity = opt_of(j, "disparity");
    r.shortcut_score = opt_of(j, "shortcut_score");
    r.shortcut_baseline = opt_of(j, "shortcut_baseline");
    if (j.contains("accuracy_corrupted"))
      for (const auto& [k, v] : j["accuracy_corrupted"].items()) r.accuracy_corrupted[k] = v.get<double>();
    if (j.contains("groups"))
      for (const auto& [g, v] : j["groups"].items()) {
        r.groups[g] = {v.at("correct").get<std::size_t>(), v.at("total").get<std::size_t>()};
        if (v.value("majority", false)) r.majority.insert(g);
      }
    if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
    if (j.contains("config"))
      for (const auto& [k, v] : j["config"].items()) r.config[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("metrics report is missing fields: ") + e.what());
  }
  return r;
}

}  // namespace nsl
