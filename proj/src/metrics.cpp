#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsl/assurance.hpp"

namespace nsl {

CalibrationBins calibration_bins(const std::vector<double>& confidences, const std::vector<bool>& correct,
                                 std::size_t bins) {
  if (confidences.empty()) throw MetricError("calibration needs at least one prediction");
  if (confidences.size() != correct.size()) throw MetricError("confidences and correctness flags differ in length");
  if (bins == 0) throw MetricError("calibration needs at least one bin");
  CalibrationBins out;
  out.confidence_sum.assign(bins, 0.0);
  out.correct_sum.assign(bins, 0.0);
  out.count.assign(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw MetricError("confidence " + std::to_string(c) + " outside [0,1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    out.confidence_sum[b] += c;
    out.correct_sum[b] += correct[i] ? 1.0 : 0.0;
    ++out.count[b];
  }
  out.total = confidences.size();
  return out;
}

namespace {

double gap(const CalibrationBins& bins, std::size_t b) {
  const double n = static_cast<double>(bins.count[b]);
  return std::abs(bins.correct_sum[b] / n - bins.confidence_sum[b] / n);
}

}  // namespace

double ece(const CalibrationBins& bins) {
  double e = 0;
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bins.count[b]) e += static_cast<double>(bins.count[b]) / static_cast<double>(bins.total) * gap(bins, b);
  return e;
}

double mce(const CalibrationBins& bins) {
  double m = 0;
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bins.count[b]) m = std::max(m, gap(bins, b));
  return m;
}

double ece(const std::vector<double>& confidences, const std::vector<bool>& correct, std::size_t bins) {
  return ece(calibration_bins(confidences, correct, bins));
}

double mce(const std::vector<double>& confidences, const std::vector<bool>& correct, std::size_t bins) {
  return mce(calibration_bins(confidences, correct, bins));
}

double asr(double acc, double acc_adv) {
  if (!(acc > 0)) throw MetricError("attack success rate is undefined at clean accuracy 0");
  return (acc - acc_adv) / acc;
}

double csr(double acc, double acc_cor) {
  if (!(acc > 0)) throw MetricError("corruption success rate is undefined at clean accuracy 0");
  return (acc - acc_cor) / acc;
}

double csr(double acc, const std::vector<double>& acc_cor) {
  if (acc_cor.empty()) throw MetricError("empty corruption suite");
  double sum = 0;
  for (double a : acc_cor) sum += csr(acc, a);
  return sum / static_cast<double>(acc_cor.size());
}

double disparity(const std::map<std::string, GroupTally>& groups, const std::set<std::string>& majority) {
  GroupTally maj, min;
  for (const auto& [g, t] : groups) {
    auto& side = majority.count(g) ? maj : min;
    side.correct += t.correct;
    side.total += t.total;
  }
  if (maj.total == 0) throw MetricError("majority meta-group has no samples");
  if (min.total == 0) throw MetricError("minority meta-group has no samples");
  return std::abs(maj.accuracy() - min.accuracy());
}

}  // namespace nsl
