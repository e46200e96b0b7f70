// Synthetic desk-scale datasets for the builtin tasks, subsampling and
// loaders for external IDX / CSV data.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsl/data.hpp"
#include "nsl/tasks.hpp"

namespace nsl {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticDigitConfig {
  std::size_t classes = 3;
  std::size_t side = 8;
  double noise = 0.3;  // sigma of additive Gaussian noise
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;
};

/// One column per class, side*side rows. Fixed for a given (classes, side),
/// independent of any dataset seed.
Eigen::MatrixXd digit_prototypes(std::size_t classes, std::size_t side);

/// Single-image samples, label = digit class, samples_per_class of each
/// class in class order. Prototype plus noise, clipped to [0,1].
Dataset gen_synthetic_digits(const SyntheticDigitConfig& config);

/// Multi-slot samples built from random draws of single-digit samples; the
/// label is label_of(digit classes), an index into answers.
Dataset compose_digits(const Dataset& digits, std::size_t slots, std::size_t count, std::uint64_t seed,
                       const std::function<std::size_t(const std::vector<std::size_t>&)>& label_of,
                       std::vector<Tuple> answers);

struct TaskDataConfig {
  std::size_t count = 500;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

/// Synthetic dataset shaped for the task's perception wiring. Samples carry
/// ground-truth input facts in fact_truth; phoneme_word samples carry a
/// speaker group.
Dataset make_task_dataset(const TaskSpec& task, const TaskDataConfig& config);

/// Stratified by label: each label keeps round(fraction * count) samples,
/// at least one. Warnings are appended when the floor of one applies.
Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

enum class ExternalFormat { idx, csv };

/// idx: path is the image file; the label file is given separately.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Header f0,...,fn,label[,group]. Features outside [0,1] are min-max
/// scaled per column.
Dataset load_csv(const std::filesystem::path& path);
Dataset load_external(const std::filesystem::path& path, ExternalFormat format,
                      const std::filesystem::path& labels = {});

/// Groups sorted by sample count (descending, ties by name) are added to the
/// majority until it holds at least half of the grouped samples.
std::set<std::string> majority_groups(const Dataset& data);
std::set<std::string> majority_groups(const std::map<std::string, std::size_t>& counts);

}  // namespace nsl
