// Small tanh MLPs mapping per-slot features to input-fact probabilities
// (facts mode) or directly to class probabilities (classifier mode).
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nsl/data.hpp"
#include "nsl/input_facts.hpp"
#include "nsl/provenance.hpp"

namespace nsl {

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  Eigen::Index inputs() const { return weight.cols(); }
  Eigen::Index outputs() const { return weight.rows(); }
};

enum class ModelMode { facts, classifier };

/// A block of one slot's outputs: a softmax over an exclusion group or
/// independent sigmoids. facts[i] receives output i of the block.
struct OutputHead {
  enum class Kind { softmax, sigmoid };
  Kind kind = Kind::softmax;
  std::vector<FactId> facts;
  bool operator==(const OutputHead&) const = default;
};

struct ModelConfig {
  ModelMode mode = ModelMode::facts;
  std::size_t slots = 1;
  std::size_t features = 0;         // per slot
  std::vector<std::size_t> hidden;  // backbone widths, shared across slots
  // facts mode
  std::size_t fact_count = 0;
  std::vector<std::vector<OutputHead>> heads;  // per slot
  // classifier mode: concatenated slot embeddings -> head_hidden -> classes
  std::vector<std::size_t> head_hidden;
  std::size_t classes = 0;

  std::size_t slot_outputs() const;  // facts mode, per slot
  bool operator==(const ModelConfig&) const = default;
};

class PerceptionModel {
 public:
  PerceptionModel() = default;
  /// Uniform init in +-1/sqrt(fan_in).
  PerceptionModel(ModelConfig config, std::uint64_t seed);
  PerceptionModel(ModelConfig config, std::vector<Dense> layers);

  const ModelConfig& config() const { return config_; }
  ModelMode mode() const { return config_.mode; }
  /// Backbone layers, then the slot head (facts) or the classifier head.
  const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& layers() { return layers_; }
  std::size_t backbone_depth() const { return config_.hidden.size(); }

  std::size_t parameter_count() const;
  double parameter(std::size_t i) const;
  void set_parameter(std::size_t i, double v);
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

 private:
  void check_shapes() const;
  ModelConfig config_;
  std::vector<Dense> layers_;
};

/// Activations of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> backbone;  // [0] = input; then each tanh layer, per-slot columns
  Eigen::MatrixXd slot_out;               // facts mode: raw slot-head outputs (pre-activation)
  std::vector<Eigen::VectorXd> head;      // classifier mode: [0] = concat embedding, then tanh layers
  Eigen::VectorXd logits;                 // classifier mode
  Eigen::VectorXd output;                 // fact or class probabilities
};

ForwardTrace forward_trace(const PerceptionModel& model, const Eigen::MatrixXd& features);

/// Fact probabilities (facts mode) or class probabilities (classifier mode).
Eigen::VectorXd model_output(const PerceptionModel& model, const Eigen::MatrixXd& features);

/// Fact probabilities as an assignment; softmax groups are flagged
/// normalized. Throws std::invalid_argument on dimension mismatch.
ProbAssignment perceive(const PerceptionModel& model, const Sample& sample,
                        std::shared_ptr<const ExclusionLayout> layout);

struct ModelGradient {
  std::vector<Dense> layers;  // same shapes as the model
  Eigen::MatrixXd input;      // d/d features

  Eigen::VectorXd flatten() const;
};

/// Backpropagate dL/d(output). In classifier mode d_output is taken w.r.t.
/// the logits, not the softmax, so callers can pass p - y directly.
ModelGradient backpropagate(const PerceptionModel& model, const ForwardTrace& trace, const Eigen::VectorXd& d_output);

ModelGradient zero_gradient(const PerceptionModel& model);

}  // namespace nsl
