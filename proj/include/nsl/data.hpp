// Samples, datasets and the reproducible random source shared by the
// generators, training and attacks.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nsl/logic.hpp"

namespace nsl {

/// One input: a feature column per slot (image, clip, grid), values in [0,1].
struct Sample {
  Eigen::MatrixXd features;  // feature dim x slots
  std::size_t label = 0;     // index into Dataset::answers
  std::optional<std::string> group;
  Eigen::VectorXd fact_truth;  // ground-truth input facts when known, else empty
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<Tuple> answers;  // label space (the query domain)

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// mt19937_64 with hand-rolled transforms, so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);  // uniform in [0, n)
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
  std::optional<double> spare_;
};

}  // namespace nsl
