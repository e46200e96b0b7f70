// Perception plus (optionally) the reasoner as one differentiable map from
// features to answer probabilities; losses, training and gradient checks.
#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nsl/data.hpp"
#include "nsl/perception.hpp"
#include "nsl/reasoner.hpp"

namespace nsl {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { cross_entropy, binary_cross_entropy };

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  /// Absent: binary cross-entropy for NESY, cross-entropy for NN.
  std::optional<LossKind> loss;
};

/// Picks a label from fact and class probabilities, overriding argmax.
using Decoder = std::function<std::size_t(const Eigen::VectorXd& facts, const Eigen::VectorXd& classes)>;

class Pipeline {
 public:
  /// Purely neural: a classifier-mode model.
  explicit Pipeline(PerceptionModel model);
  /// Neurosymbolic: a facts-mode model feeding the session.
  Pipeline(PerceptionModel model, Session session);

  bool nesy() const { return session_.has_value(); }
  const PerceptionModel& model() const { return model_; }
  PerceptionModel& model() { return model_; }
  const Session& session() const { return *session_; }
  /// Same program evaluated with train_k.
  const Session& training_session() const { return *train_session_; }
  void set_session(Session s);
  std::size_t class_count() const;

  Decoder decoder;

 private:
  PerceptionModel model_;
  std::optional<Session> session_;
  std::optional<Session> train_session_;
};

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;
  Eigen::VectorXd classes;  // per label; NESY values need not sum to one
  Eigen::VectorXd facts;    // NESY only
};

/// Class probabilities use test_k. A nullary query yields {P(false), P(true)}.
/// With normalize, confidence is divided by the class mass.
Prediction predict(const Pipeline& pipeline, const Eigen::MatrixXd& features, bool normalize = false);

/// Torch-style BCE averaged over classes, logs clamped at -100.
double bce_loss(const Eigen::VectorXd& p, std::size_t label);
Eigen::VectorXd bce_gradient(const Eigen::VectorXd& p, std::size_t label);
double cross_entropy_loss(const Eigen::VectorXd& p, std::size_t label);

struct LossGradient {
  double loss = 0.0;
  ModelGradient grad;  // grad.input = dL/dfeatures
};

enum class KUse { train, test };

double pipeline_loss(const Pipeline& pipeline, const Eigen::MatrixXd& features, std::size_t label, KUse k = KUse::test);
LossGradient loss_gradient(const Pipeline& pipeline, const Eigen::MatrixXd& features, std::size_t label,
                           KUse k = KUse::test);

struct TrainResult {
  std::vector<double> loss_curve;  // mean sample loss per epoch
};

/// Minibatch gradient descent with momentum. Bit-deterministic given config
/// and dataset order. Throws TrainingError on a non-finite loss.
TrainResult train(Pipeline& pipeline, const Dataset& data, const TrainConfig& config);

/// Max relative error between the analytic parameter gradient and central
/// differences over a random subset of at least `coordinates` parameters
/// (all of them if fewer). Pairs where both magnitudes are below 1e-12
/// count as 0. The denominator is floored at the difference quotient's
/// roundoff level (1e3 * eps_machine * max(1, |L|) / epsilon).
double finite_diff_check(const Pipeline& pipeline, const Sample& sample, double epsilon,
                         std::size_t coordinates = 64, std::uint64_t seed = 0);

double accuracy(const Pipeline& pipeline, const Dataset& data);

}  // namespace nsl
