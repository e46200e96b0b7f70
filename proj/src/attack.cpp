#include <cmath>

#include "nsl/assurance.hpp"

namespace nsl {

void AttackConfig::check() const {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw MetricError("attack epsilon must be finite and >= 0");
  if (steps == 0) throw MetricError("attack needs at least one step");
  if (step_size && !(*step_size >= 0)) throw MetricError("attack step size must be >= 0");
}

AttackResult pgd_attack(const Pipeline& pipeline, const Sample& sample, const AttackConfig& config,
                        std::uint64_t stream) {
  config.check();
  const Eigen::MatrixXd& x0 = sample.features;
  AttackResult r;
  r.clean = predict(pipeline, x0);
  r.adversarial = x0;
  r.loss_trace.push_back(pipeline_loss(pipeline, x0, sample.label));

  if (config.epsilon > 0) {
    const Eigen::MatrixXd lo = (x0.array() - config.epsilon).max(0.0).matrix();
    const Eigen::MatrixXd hi = (x0.array() + config.epsilon).min(1.0).matrix();
    auto project = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return x.cwiseMax(lo).cwiseMin(hi); };
    const double alpha = config.alpha();

    Eigen::MatrixXd x = x0;
    if (config.random_start) {
      Rng rng(config.seed * 0x9E3779B97F4A7C15ULL + stream);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += rng.uniform(-config.epsilon, config.epsilon);
      x = project(x);
    }
    for (std::size_t t = 0; t < config.steps; ++t) {
      const auto lg = loss_gradient(pipeline, x, sample.label);
      if (!std::isfinite(lg.loss) || !lg.grad.input.allFinite()) {
        r.aborted = true;
        r.diagnostic = "non-finite gradient at step " + std::to_string(t);
        break;
      }
      x = project(x + alpha * lg.grad.input.array().sign().matrix());
      r.adversarial = x;
      r.loss_trace.push_back(pipeline_loss(pipeline, x, sample.label));
    }
  }
  r.attacked = predict(pipeline, r.adversarial);
  return r;
}

}  // namespace nsl
