#include <limits>
#include "nsl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nsl {

Pipeline::Pipeline(PerceptionModel model) : model_(std::move(model)) {
  if (model_.mode() != ModelMode::classifier) throw std::invalid_argument("a neural pipeline needs a classifier-mode model");
}

Pipeline::Pipeline(PerceptionModel model, Session session) : model_(std::move(model)) {
  if (model_.mode() != ModelMode::facts) throw std::invalid_argument("a neurosymbolic pipeline needs a facts-mode model");
  if (model_.config().fact_count != session.fact_count())
    throw std::invalid_argument("model produces " + std::to_string(model_.config().fact_count) + " facts, program has " +
                                std::to_string(session.fact_count()));
  set_session(std::move(session));
}

void Pipeline::set_session(Session s) {
  train_session_ = set_test_k(s, s.train_k());
  session_ = std::move(s);
}

namespace {

bool nullary(const Session& s) { return s.answer_count() == 1 && s.answers().front().empty(); }

// Class probabilities from the reasoner's answer probabilities.
Eigen::VectorXd classes_of(const Session& s, const Eigen::VectorXd& answers) {
  if (!nullary(s)) return answers;
  Eigen::VectorXd c(2);
  c << 1.0 - answers[0], answers[0];
  return c;
}

Eigen::VectorXd upstream_of(const Session& s, const Eigen::VectorXd& d_classes) {
  if (!nullary(s)) return d_classes;
  Eigen::VectorXd u(1);
  u << d_classes[1] - d_classes[0];
  return u;
}

std::size_t argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::size_t>(best);
}

constexpr double kLogFloor = -100.0;
double clamped_log(double x) { return x > 0 ? std::max(std::log(x), kLogFloor) : kLogFloor; }

struct NesyPass {
  ForwardTrace trace;
  ProbAssignment env;
  Evaluation eval;
  Eigen::VectorXd classes;
};

NesyPass nesy_pass(const Pipeline& p, const Session& s, const Eigen::MatrixXd& features) {
  NesyPass r;
  r.trace = forward_trace(p.model(), features);
  Sample tmp;
  tmp.features = features;
  r.env = perceive(p.model(), tmp, s.grounding().layout);
  r.eval = forward(s, r.env);
  r.classes = classes_of(s, r.eval.distribution.probabilities);
  return r;
}

}  // namespace

std::size_t Pipeline::class_count() const {
  if (!nesy()) return model_.config().classes;
  return nullary(*session_) ? 2 : session_->answer_count();
}

Prediction predict(const Pipeline& pipeline, const Eigen::MatrixXd& features, bool normalize) {
  Prediction out;
  if (pipeline.nesy()) {
    auto pass = nesy_pass(pipeline, pipeline.session(), features);
    out.classes = pass.classes;
    out.facts = pass.env.probabilities();
  } else {
    out.classes = model_output(pipeline.model(), features);
  }
  out.label = pipeline.decoder ? pipeline.decoder(out.facts, out.classes) : argmax(out.classes);
  out.confidence = out.classes[static_cast<Eigen::Index>(out.label)];
  if (normalize) {
    const double mass = out.classes.sum();
    out.confidence = mass > 0 ? out.confidence / mass : 0.0;
  }
  return out;
}

double bce_loss(const Eigen::VectorXd& p, std::size_t label) {
  double l = 0;
  for (Eigen::Index c = 0; c < p.size(); ++c)
    l -= static_cast<std::size_t>(c) == label ? clamped_log(p[c]) : clamped_log(1.0 - p[c]);
  return l / static_cast<double>(p.size());
}

Eigen::VectorXd bce_gradient(const Eigen::VectorXd& p, std::size_t label) {
  Eigen::VectorXd g(p.size());
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const double y = static_cast<std::size_t>(c) == label ? 1.0 : 0.0;
    g[c] = (p[c] - y) / std::max(p[c] * (1.0 - p[c]), 1e-12) / static_cast<double>(p.size());
  }
  return g;
}

double cross_entropy_loss(const Eigen::VectorXd& p, std::size_t label) { return -clamped_log(p[static_cast<Eigen::Index>(label)]); }

double pipeline_loss(const Pipeline& pipeline, const Eigen::MatrixXd& features, std::size_t label, KUse k) {
  if (pipeline.nesy()) {
    const Session& s = k == KUse::train ? pipeline.training_session() : pipeline.session();
    return bce_loss(nesy_pass(pipeline, s, features).classes, label);
  }
  return cross_entropy_loss(model_output(pipeline.model(), features), label);
}

LossGradient loss_gradient(const Pipeline& pipeline, const Eigen::MatrixXd& features, std::size_t label, KUse k) {
  LossGradient out;
  if (pipeline.nesy()) {
    const Session& s = k == KUse::train ? pipeline.training_session() : pipeline.session();
    auto pass = nesy_pass(pipeline, s, features);
    if (label >= static_cast<std::size_t>(pass.classes.size())) throw std::invalid_argument("label outside the answer space");
    out.loss = bce_loss(pass.classes, label);
    const Eigen::VectorXd d_facts = backward(s, pass.eval, upstream_of(s, bce_gradient(pass.classes, label)));
    out.grad = backpropagate(pipeline.model(), pass.trace, d_facts);
  } else {
    auto trace = forward_trace(pipeline.model(), features);
    if (label >= static_cast<std::size_t>(trace.output.size())) throw std::invalid_argument("label outside the class space");
    out.loss = cross_entropy_loss(trace.output, label);
    Eigen::VectorXd d = trace.output;
    d[static_cast<Eigen::Index>(label)] -= 1.0;
    out.grad = backpropagate(pipeline.model(), trace, d);
  }
  return out;
}

TrainResult train(Pipeline& pipeline, const Dataset& data, const TrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (!(config.learning_rate >= 0)) throw std::invalid_argument("learning rate must be non-negative");
  if (config.epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  const LossKind expected = pipeline.nesy() ? LossKind::binary_cross_entropy : LossKind::cross_entropy;
  if (config.loss && *config.loss != expected)
    throw std::invalid_argument(pipeline.nesy() ? "neurosymbolic training uses binary cross-entropy"
                                                : "neural training uses cross-entropy");

  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd theta = pipeline.model().flatten();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  TrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = data.samples[order[i]];
        auto lg = loss_gradient(pipeline, s.features, s.label, KUse::train);
        if (!std::isfinite(lg.loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + std::to_string(order[i]));
        }
        total += lg.loss;
        grad += lg.grad.flatten();
      }
      if (!grad.allFinite()) throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch));
      grad /= static_cast<double>(end - start);
      if (config.learning_rate == 0) continue;
      velocity = config.momentum * velocity + grad;
      theta -= config.learning_rate * velocity;
      pipeline.model().assign(theta);
    }
    result.loss_curve.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

double finite_diff_check(const Pipeline& pipeline, const Sample& sample, double epsilon, std::size_t coordinates,
                         std::uint64_t seed) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  const Eigen::VectorXd analytic = loss_gradient(pipeline, sample.features, sample.label).grad.flatten();
  std::vector<std::size_t> idx(static_cast<std::size_t>(analytic.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(idx.size(), std::max<std::size_t>(coordinates, 50)));

  Pipeline probe = pipeline;
  // Central differences of a loss near L carry roundoff of about
  // eps_machine * L / epsilon; gradients below that are compared on that scale.
  const double base = pipeline_loss(pipeline, sample.features, sample.label);
  const double noise = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(base)) / epsilon;
  double worst = 0;
  for (auto i : idx) {
    const double orig = probe.model().parameter(i);
    probe.model().set_parameter(i, orig + epsilon);
    const double up = pipeline_loss(probe, sample.features, sample.label);
    probe.model().set_parameter(i, orig - epsilon);
    const double down = pipeline_loss(probe, sample.features, sample.label);
    probe.model().set_parameter(i, orig);
    const double fd = (up - down) / (2 * epsilon);
    const double a = analytic[static_cast<Eigen::Index>(i)];
    const double scale = std::max(std::abs(a), std::abs(fd));
    if (scale < 1e-12) continue;
    worst = std::max(worst, std::abs(a - fd) / std::max(scale, noise));
  }
  return worst;
}

double accuracy(const Pipeline& pipeline, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (const auto& s : data.samples) hits += predict(pipeline, s.features).label == s.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace nsl
