// Assurance measurements: calibration, attack and corruption degradation,
// group disparity, PGD through the whole pipeline, input corruptions and
// the shortcut inspector.
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsl/data.hpp"
#include "nsl/pipeline.hpp"

namespace nsl {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---- calibration ----

/// Equal-width bins over [0,1]; bin b holds confidences in [b/B, (b+1)/B),
/// the last bin also holds 1.
struct CalibrationBins {
  std::vector<double> confidence_sum;
  std::vector<double> correct_sum;
  std::vector<std::size_t> count;
  std::size_t total = 0;

  std::size_t size() const { return count.size(); }
};

inline constexpr std::size_t kCalibrationBins = 15;

CalibrationBins calibration_bins(const std::vector<double>& confidences, const std::vector<bool>& correct,
                                 std::size_t bins = kCalibrationBins);
double ece(const std::vector<double>& confidences, const std::vector<bool>& correct, std::size_t bins = kCalibrationBins);
double mce(const std::vector<double>& confidences, const std::vector<bool>& correct, std::size_t bins = kCalibrationBins);
double ece(const CalibrationBins& bins);
double mce(const CalibrationBins& bins);

// ---- degradation and disparity ----

/// (acc - acc_adv) / acc, unclamped. Throws MetricError when acc == 0.
double asr(double acc, double acc_adv);
/// (acc - acc_cor) / acc, unclamped.
double csr(double acc, double acc_cor);
/// Mean of per-condition rates over a corruption suite.
double csr(double acc, const std::vector<double>& acc_cor);

struct GroupTally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// |acc(majority) - acc(minority)| with sample-weighted meta-group
/// accuracies. Throws MetricError when either meta-group has no samples.
double disparity(const std::map<std::string, GroupTally>& groups, const std::set<std::string>& majority);

// ---- attacks ----

struct AttackConfig {
  double epsilon = 0.03;  // L-infinity, feature units
  std::size_t steps = 100;
  std::optional<double> step_size;  // default 2.5 * epsilon / steps
  bool random_start = true;
  std::uint64_t seed = 0;

  double alpha() const { return step_size ? *step_size : 2.5 * epsilon / static_cast<double>(steps); }
  void check() const;
};

struct AttackResult {
  Eigen::MatrixXd adversarial;
  Prediction clean;
  Prediction attacked;
  std::vector<double> loss_trace;  // [0] at the clean input, then after each step
  bool aborted = false;            // non-finite gradient; adversarial is the last finite iterate
  std::string diagnostic;

  double linf(const Eigen::MatrixXd& original) const { return (adversarial - original).cwiseAbs().maxCoeff(); }
};

/// Sign-gradient ascent on the true-label loss, projected onto the
/// epsilon-ball around the input intersected with [0,1] after every step.
/// `stream` selects the random-start stream, e.g. the sample index.
AttackResult pgd_attack(const Pipeline& pipeline, const Sample& sample, const AttackConfig& config,
                        std::uint64_t stream = 0);

// ---- corruptions ----

enum class CorruptionKind { gaussian_noise, rotation, occlusion, brightness };

std::string to_string(CorruptionKind kind);
CorruptionKind corruption_kind(const std::string& name);  // throws MetricError
const std::vector<CorruptionKind>& corruption_suite();

struct CorruptionConfig {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
  std::uint64_t seed = 0;
  /// Replaces the severity's magnitude: noise sigma, degrees, occluded side
  /// fraction or brightness shift.
  std::optional<double> magnitude;

  double level() const;
  void check() const;
};

/// How a feature column is laid out as an image: `channels` planes of
/// side x side, row-major. Columns that are not c * s^2 for c <= 4 are a
/// single row of width = dim.
struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
};
ImageShape image_shape(std::size_t dim);

/// Applied per slot column; output clipped to [0,1]. Rotation is about the
/// image centre with bilinear sampling and zero fill (exact permutation for
/// multiples of 90 degrees); on single-row layouts it is a cyclic shift by
/// the same fraction of a turn.
Sample corrupt(const Sample& sample, const CorruptionConfig& config, std::uint64_t stream = 0);

// ---- shortcut inspector ----

struct ShortcutReport {
  double score = 0.0;             // mean pairwise Jaccard of top-m fact sets
  double random_baseline = 0.0;   // same for independent random m-sets
  Eigen::VectorXd mean;           // per fact
  Eigen::VectorXd variance;       // per fact, population variance
  std::vector<std::size_t> m;     // per sample, round(sum of fact probabilities)
};

/// Rows are samples, columns are facts. Needs at least two samples.
/// Top-m ties go to the lower fact id.
ShortcutReport shortcut_score(const Eigen::MatrixXd& fact_probabilities);
ShortcutReport shortcut_score(const Pipeline& pipeline, const Dataset& data);

/// E[|A n B| / |A u B|] for independent uniform subsets of sizes a and b of
/// an n-set; 1 when both are empty.
double expected_random_jaccard(std::size_t n, std::size_t a, std::size_t b);

/// Mean pairwise Jaccard over the given sets (sorted ids).
double mean_pairwise_jaccard(const std::vector<std::vector<std::size_t>>& sets);

/// Writes <stem>_dots.pgm (side x side) and <stem>_edges.pgm
/// ((2 side - 1)^2, edge between cells a and b at their midpoint) for a
/// pathfinder-style session. Throws MetricError for other programs.
std::vector<std::filesystem::path> emit_fact_map(const Session& session, const Eigen::VectorXd& fact_probabilities,
                                                 const std::filesystem::path& directory, const std::string& stem,
                                                 const std::string& comment = {});

/// Binary P5 with maxval 255; intensities are value/255. Each comment line
/// goes into the header as "# line".
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& intensity, const std::string& comment = {});
Eigen::MatrixXd read_pgm(const std::filesystem::path& path);

}  // namespace nsl
