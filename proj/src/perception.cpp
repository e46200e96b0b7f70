#include "nsl/perception.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nsl {

double Rng::normal() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  // Box-Muller; u1 in (0,1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = eng_();
  while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::size_t ModelConfig::slot_outputs() const {
  if (heads.empty()) return 0;
  std::size_t n = 0;
  for (const auto& h : heads.front()) n += h.facts.size();
  return n;
}

namespace {

std::vector<std::size_t> layer_widths(const ModelConfig& c) {
  // in, out pairs flattened: widths[i] -> widths[i+1] per layer
  std::vector<std::size_t> w{c.features};
  for (auto h : c.hidden) w.push_back(h);
  return w;
}

std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const ModelConfig& c) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (out, in)
  const auto w = layer_widths(c);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) shapes.push_back({w[i + 1], w[i]});
  const std::size_t emb = w.back();
  if (c.mode == ModelMode::facts) {
    shapes.push_back({c.slot_outputs(), emb});
  } else {
    std::size_t in = emb * c.slots;
    for (auto h : c.head_hidden) {
      shapes.push_back({h, in});
      in = h;
    }
    shapes.push_back({c.classes, in});
  }
  return shapes;
}

void validate_config(const ModelConfig& c) {
  if (c.slots == 0 || c.features == 0) throw std::invalid_argument("model needs at least one slot and one feature");
  for (auto h : c.hidden)
    if (h == 0) throw std::invalid_argument("hidden width must be positive");
  if (c.mode == ModelMode::facts) {
    if (c.heads.size() != c.slots) throw std::invalid_argument("facts model needs one head list per slot");
    std::vector<int> covered(c.fact_count, 0);
    const std::size_t per_slot = c.slot_outputs();
    if (per_slot == 0) throw std::invalid_argument("facts model has no outputs");
    for (const auto& slot : c.heads) {
      std::size_t n = 0;
      for (const auto& h : slot) {
        if (h.facts.empty()) throw std::invalid_argument("empty output head");
        n += h.facts.size();
        for (auto f : h.facts) {
          if (f >= c.fact_count) throw std::invalid_argument("output head names fact " + std::to_string(f) + " beyond fact count");
          ++covered[f];
        }
      }
      if (n != per_slot) throw std::invalid_argument("every slot must produce the same number of outputs");
    }
    for (std::size_t f = 0; f < covered.size(); ++f)
      if (covered[f] != 1) throw std::invalid_argument("fact " + std::to_string(f) + " must be produced by exactly one head");
  } else if (c.classes < 2) {
    throw std::invalid_argument("classifier needs at least two classes");
  }
}

void softmax_inplace(Eigen::Ref<Eigen::VectorXd> z) {
  const double m = z.maxCoeff();
  z = (z.array() - m).exp();
  z /= z.sum();
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

PerceptionModel::PerceptionModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  validate_config(config_);
  Rng rng(seed);
  for (auto [out, in] : layer_shapes(config_)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Dense d{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index j = 0; j < d.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < d.weight.rows(); ++i) d.weight(i, j) = rng.uniform(-bound, bound);
    for (auto& b : d.bias) b = rng.uniform(-bound, bound);
    layers_.push_back(std::move(d));
  }
}

PerceptionModel::PerceptionModel(ModelConfig config, std::vector<Dense> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  validate_config(config_);
  check_shapes();
}

void PerceptionModel::check_shapes() const {
  const auto shapes = layer_shapes(config_);
  if (shapes.size() != layers_.size()) throw std::invalid_argument("layer count does not match the model config");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& l = layers_[i];
    if (static_cast<std::size_t>(l.weight.rows()) != shapes[i].first ||
        static_cast<std::size_t>(l.weight.cols()) != shapes[i].second || l.bias.size() != l.weight.rows())
      throw std::invalid_argument("layer " + std::to_string(i) + " has the wrong shape");
  }
}

std::size_t PerceptionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

template <class Layers, class F>
auto locate(Layers& layers, std::size_t i, F&& f) {
  for (auto& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    if (i < nw) return f(l.weight.data()[i]);
    i -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (i < nb) return f(l.bias.data()[i]);
    i -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

template <class Layers>
Eigen::VectorXd flatten_layers(const Layers& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    out.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    out.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return out;
}

}  // namespace

double PerceptionModel::parameter(std::size_t i) const {
  return locate(layers_, i, [](const double& v) { return v; });
}

void PerceptionModel::set_parameter(std::size_t i, double v) {
  locate(layers_, i, [v](double& x) { x = v; });
}

Eigen::VectorXd PerceptionModel::flatten() const { return flatten_layers(layers_); }
Eigen::VectorXd ModelGradient::flatten() const { return flatten_layers(layers); }

void PerceptionModel::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) throw std::invalid_argument("parameter vector has the wrong size");
  Eigen::Index at = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

ForwardTrace forward_trace(const PerceptionModel& model, const Eigen::MatrixXd& features) {
  const auto& c = model.config();
  if (static_cast<std::size_t>(features.rows()) != c.features || static_cast<std::size_t>(features.cols()) != c.slots) {
    throw std::invalid_argument("features are " + std::to_string(features.rows()) + "x" + std::to_string(features.cols()) +
                                ", model expects " + std::to_string(c.features) + "x" + std::to_string(c.slots));
  }
  const auto& layers = model.layers();
  ForwardTrace t;
  t.backbone.push_back(features);
  for (std::size_t l = 0; l < model.backbone_depth(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * t.backbone.back();
    z.colwise() += layers[l].bias;
    t.backbone.push_back(z.array().tanh().matrix());
  }
  const Eigen::MatrixXd& emb = t.backbone.back();

  if (c.mode == ModelMode::facts) {
    const Dense& head = layers[model.backbone_depth()];
    t.slot_out = head.weight * emb;
    t.slot_out.colwise() += head.bias;
    t.output = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.fact_count));
    for (std::size_t s = 0; s < c.slots; ++s) {
      Eigen::Index row = 0;
      for (const auto& h : c.heads[s]) {
        const auto n = static_cast<Eigen::Index>(h.facts.size());
        Eigen::VectorXd z = t.slot_out.col(static_cast<Eigen::Index>(s)).segment(row, n);
        if (h.kind == OutputHead::Kind::softmax) softmax_inplace(z);
        else
          for (auto& v : z) v = sigmoid(v);
        for (Eigen::Index i = 0; i < n; ++i) t.output[h.facts[static_cast<std::size_t>(i)]] = z[i];
        row += n;
      }
    }
    return t;
  }

  t.head.push_back(emb.reshaped());
  std::size_t l = model.backbone_depth();
  for (; l + 1 < layers.size(); ++l) t.head.push_back((layers[l].weight * t.head.back() + layers[l].bias).array().tanh().matrix());
  t.logits = layers[l].weight * t.head.back() + layers[l].bias;
  t.output = t.logits;
  softmax_inplace(t.output);
  return t;
}

Eigen::VectorXd model_output(const PerceptionModel& model, const Eigen::MatrixXd& features) {
  return forward_trace(model, features).output;
}

ProbAssignment perceive(const PerceptionModel& model, const Sample& sample, std::shared_ptr<const ExclusionLayout> layout) {
  if (model.mode() != ModelMode::facts) throw std::invalid_argument("perceive needs a facts-mode model");
  if (layout->fact_count() != model.config().fact_count)
    throw std::invalid_argument("model produces " + std::to_string(model.config().fact_count) + " facts, program has " +
                                std::to_string(layout->fact_count()));
  ProbAssignment env(model_output(model, sample.features), layout);
  // A group is normalized when one softmax head covers exactly its members.
  std::vector<std::int32_t> head_group;
  for (const auto& slot : model.config().heads)
    for (const auto& h : slot) {
      if (h.kind != OutputHead::Kind::softmax) continue;
      const auto g = layout->group_of[h.facts.front()];
      if (g == kNoGroup || layout->groups[static_cast<std::size_t>(g)].members.size() != h.facts.size()) continue;
      bool same = true;
      for (auto f : h.facts) same &= layout->group_of[f] == g;
      if (same) env.mark_normalized(static_cast<std::size_t>(g));
    }
  return env;
}

ModelGradient zero_gradient(const PerceptionModel& model) {
  ModelGradient g;
  for (const auto& l : model.layers())
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return g;
}

ModelGradient backpropagate(const PerceptionModel& model, const ForwardTrace& trace, const Eigen::VectorXd& d_output) {
  const auto& c = model.config();
  const auto& layers = model.layers();
  ModelGradient g = zero_gradient(model);
  const std::size_t depth = model.backbone_depth();
  Eigen::MatrixXd d_emb;

  if (c.mode == ModelMode::facts) {
    if (d_output.size() != static_cast<Eigen::Index>(c.fact_count)) throw std::invalid_argument("gradient size mismatch");
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(trace.slot_out.rows(), trace.slot_out.cols());
    for (std::size_t s = 0; s < c.slots; ++s) {
      Eigen::Index row = 0;
      for (const auto& h : c.heads[s]) {
        const auto n = static_cast<Eigen::Index>(h.facts.size());
        Eigen::VectorXd p(n), up(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          p[i] = trace.output[h.facts[static_cast<std::size_t>(i)]];
          up[i] = d_output[h.facts[static_cast<std::size_t>(i)]];
        }
        if (h.kind == OutputHead::Kind::softmax) {
          dz.col(static_cast<Eigen::Index>(s)).segment(row, n) = p.cwiseProduct(up.array().matrix() - Eigen::VectorXd::Constant(n, up.dot(p)));
        } else {
          dz.col(static_cast<Eigen::Index>(s)).segment(row, n) = up.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
        }
        row += n;
      }
    }
    const Dense& head = layers[depth];
    g.layers[depth].weight = dz * trace.backbone.back().transpose();
    g.layers[depth].bias = dz.rowwise().sum();
    d_emb = head.weight.transpose() * dz;
  } else {
    if (d_output.size() != static_cast<Eigen::Index>(c.classes)) throw std::invalid_argument("gradient size mismatch");
    Eigen::VectorXd d = d_output;
    std::size_t l = layers.size() - 1;
    g.layers[l].weight = d * trace.head.back().transpose();
    g.layers[l].bias = d;
    Eigen::VectorXd dh = layers[l].weight.transpose() * d;
    for (std::size_t hi = trace.head.size() - 1; hi >= 1; --hi) {
      --l;
      const Eigen::VectorXd& out = trace.head[hi];
      const Eigen::VectorXd da = dh.cwiseProduct((1.0 - out.array().square()).matrix());
      g.layers[l].weight = da * trace.head[hi - 1].transpose();
      g.layers[l].bias = da;
      dh = layers[l].weight.transpose() * da;
    }
    d_emb = dh.reshaped(trace.backbone.back().rows(), trace.backbone.back().cols());
  }

  Eigen::MatrixXd dh = d_emb;
  for (std::size_t l = depth; l-- > 0;) {
    const Eigen::MatrixXd& out = trace.backbone[l + 1];
    const Eigen::MatrixXd da = dh.cwiseProduct((1.0 - out.array().square()).matrix());
    g.layers[l].weight = da * trace.backbone[l].transpose();
    g.layers[l].bias = da.rowwise().sum();
    dh = layers[l].weight.transpose() * da;
  }
  g.input = dh;
  return g;
}

}  // namespace nsl
