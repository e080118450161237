// Exactly-differentiable classifiers: multinomial logistic regression and
// MLPs with softmax cross-entropy, per-example gradients and batch HVPs.
#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"

namespace hesit {

enum class Activation { identity, relu, tanh };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // empty -> linear model
  std::size_t num_classes = 0;
  Activation activation = Activation::tanh;
  double l2_lambda = 0.0;  // ridge coefficient, applied at batch level

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("ModelSpec: input_dim must be positive");
    if (num_classes == 0) throw std::invalid_argument("ModelSpec: num_classes must be positive");
    for (std::size_t w : hidden)
      if (w == 0) throw std::invalid_argument("ModelSpec: hidden widths must be positive");
    if (l2_lambda < 0.0) throw std::invalid_argument("ModelSpec: l2_lambda must be nonnegative");
  }
};

// Anything the training loop and influence estimators need from a model.
// Per-example loss and gradients are pure data terms; the L2 regularizer is
// attached to the batch loss only.
template <typename M>
concept ModelLike = requires(const M& m, const ParamVector& p, const Example& e,
                             ParamVector& g, std::uint64_t seed) {
  { m.param_count() } -> std::convertible_to<std::size_t>;
  { m.input_dim() } -> std::convertible_to<std::size_t>;
  { m.num_classes() } -> std::convertible_to<std::size_t>;
  { m.init_params(seed) } -> std::same_as<ParamVector>;
  { m.loss(p, e) } -> std::convertible_to<double>;
  { m.grad_example(p, e, g) };
  { m.predict(p, e) } -> std::convertible_to<int>;
  { m.l2_penalty(p) } -> std::convertible_to<double>;
  { m.add_l2_grad(p, g) };
};

// Multilayer perceptron (no hidden layers -> multinomial logistic regression).
// Parameters are laid out layer by layer: row-major weight matrix [out x in]
// followed by the bias vector. All operations are pure.
class MlpModel {
 public:
  explicit MlpModel(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    widths_.push_back(spec_.input_dim);
    for (std::size_t w : spec_.hidden) widths_.push_back(w);
    widths_.push_back(spec_.num_classes);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      LayerLayout lay;
      lay.in = widths_[l];
      lay.out = widths_[l + 1];
      lay.w_off = off;
      lay.b_off = off + lay.in * lay.out;
      off = lay.b_off + lay.out;
      layers_.push_back(lay);
    }
    param_count_ = off;
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t num_classes() const { return spec_.num_classes; }

  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  ParamVector init_params(std::uint64_t seed) const {
    ParamVector p(param_count_, 0.0);
    Rng rng(seed);
    for (const LayerLayout& lay : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(lay.in));
      for (std::size_t i = 0; i < lay.in * lay.out; ++i)
        p[lay.w_off + i] = rng.uniform(-bound, bound);
    }
    return p;
  }

  // Softmax cross-entropy of one example. No regularization term here.
  double loss(const ParamVector& params, const Example& e) const {
    Scratch s;
    forward(params, e, s);
    return nll(s.acts.back(), e.label);
  }

  // Exact analytic gradient of loss() w.r.t. params, accumulated into `grad`
  // (grad is overwritten).
  void grad_example(const ParamVector& params, const Example& e, ParamVector& grad) const {
    grad.assign(param_count_, 0.0);
    Scratch s;
    forward(params, e, s);
    backward(params, e, s, grad);
  }

  ParamVector grad_example(const ParamVector& params, const Example& e) const {
    ParamVector g;
    grad_example(params, e, g);
    return g;
  }

  // Argmax over logits; ties broken by the lowest class index.
  int predict(const ParamVector& params, const Example& e) const {
    Scratch s;
    forward(params, e, s);
    const std::vector<double>& logits = s.acts.back();
    int best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = static_cast<int>(c);
    return best;
  }

  // (l2_lambda / 2) * ||weights||^2, biases excluded.
  double l2_penalty(const ParamVector& params) const {
    if (spec_.l2_lambda == 0.0) return 0.0;
    double s = 0.0;
    for (const LayerLayout& lay : layers_)
      for (std::size_t i = 0; i < lay.in * lay.out; ++i)
        s += params[lay.w_off + i] * params[lay.w_off + i];
    return 0.5 * spec_.l2_lambda * s;
  }

  void add_l2_grad(const ParamVector& params, ParamVector& grad) const {
    if (spec_.l2_lambda == 0.0) return;
    for (const LayerLayout& lay : layers_)
      for (std::size_t i = 0; i < lay.in * lay.out; ++i)
        grad[lay.w_off + i] += spec_.l2_lambda * params[lay.w_off + i];
  }

 private:
  struct LayerLayout {
    std::size_t in = 0, out = 0, w_off = 0, b_off = 0;
  };

  struct Scratch {
    std::vector<std::vector<double>> pre;   // pre-activations per layer
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts.back() = logits
  };

  void check_example(const Example& e) const {
    if (e.features.size() != spec_.input_dim)
      throw std::invalid_argument("MlpModel: feature dimension mismatch for id " +
                                  std::to_string(e.id));
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= spec_.num_classes)
      throw std::invalid_argument("MlpModel: label out of range for id " + std::to_string(e.id));
  }

  static double act_fn(Activation a, double z) {
    switch (a) {
      case Activation::identity: return z;
      case Activation::relu: return z > 0.0 ? z : 0.0;
      case Activation::tanh: return std::tanh(z);
    }
    return z;
  }

  static double act_deriv(Activation a, double z) {
    switch (a) {
      case Activation::identity: return 1.0;
      case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
      case Activation::tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
      }
    }
    return 1.0;
  }

  void forward(const ParamVector& params, const Example& e, Scratch& s) const {
    if (params.size() != param_count_)
      throw std::invalid_argument("MlpModel: parameter vector has wrong length");
    check_example(e);
    s.pre.resize(layers_.size());
    s.acts.resize(layers_.size() + 1);
    s.acts[0] = e.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerLayout& lay = layers_[l];
      const std::vector<double>& x = s.acts[l];
      std::vector<double>& z = s.pre[l];
      z.assign(lay.out, 0.0);
      for (std::size_t o = 0; o < lay.out; ++o) {
        double acc = params[lay.b_off + o];
        const std::size_t row = lay.w_off + o * lay.in;
        for (std::size_t i = 0; i < lay.in; ++i) acc += params[row + i] * x[i];
        z[o] = acc;
      }
      std::vector<double>& a = s.acts[l + 1];
      a.resize(lay.out);
      const bool last = (l + 1 == layers_.size());
      for (std::size_t o = 0; o < lay.out; ++o)
        a[o] = last ? z[o] : act_fn(spec_.activation, z[o]);
    }
  }

  // Numerically stable -log softmax(logits)[label].
  static double nll(const std::vector<double>& logits, int label) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    return std::log(lse) - (logits[label] - mx);
  }

  void backward(const ParamVector& params, const Example& e, const Scratch& s,
                ParamVector& grad) const {
    const std::vector<double>& logits = s.acts.back();
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    // dz at the output layer: softmax - one_hot(label)
    std::vector<double> dz(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c)
      dz[c] = std::exp(logits[c] - mx) / lse - (static_cast<int>(c) == e.label ? 1.0 : 0.0);
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const LayerLayout& lay = layers_[li];
      const std::vector<double>& x = s.acts[li];
      for (std::size_t o = 0; o < lay.out; ++o) {
        const std::size_t row = lay.w_off + o * lay.in;
        for (std::size_t i = 0; i < lay.in; ++i) grad[row + i] += dz[o] * x[i];
        grad[lay.b_off + o] += dz[o];
      }
      if (li == 0) break;
      std::vector<double> dx(lay.in, 0.0);
      for (std::size_t o = 0; o < lay.out; ++o) {
        const std::size_t row = lay.w_off + o * lay.in;
        for (std::size_t i = 0; i < lay.in; ++i) dx[i] += params[row + i] * dz[o];
      }
      dz.resize(lay.in);
      for (std::size_t i = 0; i < lay.in; ++i)
        dz[i] = dx[i] * act_deriv(spec_.activation, s.pre[li - 1][i]);
    }
  }

  ModelSpec spec_;
  std::vector<std::size_t> widths_;
  std::vector<LayerLayout> layers_;
  std::size_t param_count_ = 0;
};

inline std::size_t param_count(const ModelSpec& spec) { return MlpModel(spec).param_count(); }

inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  return MlpModel(spec).init_params(seed);
}

// ---------------------------------------------------------------------------
// Batch operations. The regularizer enters once per batch: batch loss is the
// mean per-example loss plus l2_penalty, the batch gradient is the mean
// per-example gradient plus the l2 term.

using BatchRef = std::vector<const Example*>;

// Mean of weight(e) * loss(e) plus the l2 penalty; the matching gradient is
// written to `grad`. The weight hook is how the epsilon-perturbation oracle
// up-weights a single example's per-batch contribution.
template <ModelLike M, typename WeightFn>
double weighted_batch_grad_loss(const M& model, const ParamVector& params, const BatchRef& batch,
                                WeightFn&& weight_of, ParamVector& grad) {
  if (batch.empty()) throw std::invalid_argument("batch operations require a non-empty batch");
  grad.assign(model.param_count(), 0.0);
  ParamVector g;
  double loss_sum = 0.0;
  for (const Example* e : batch) {
    const double w = weight_of(*e);
    model.grad_example(params, *e, g);
    axpy(w, g, grad);
    loss_sum += w * model.loss(params, *e);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  scale(grad, inv_b);
  model.add_l2_grad(params, grad);
  return loss_sum * inv_b + model.l2_penalty(params);
}

struct UnitWeight {
  double operator()(const Example&) const { return 1.0; }
};

template <ModelLike M>
double batch_grad_loss(const M& model, const ParamVector& params, const BatchRef& batch,
                       ParamVector& grad) {
  return weighted_batch_grad_loss(model, params, batch, UnitWeight{}, grad);
}

inline BatchRef make_batch_ref(std::span<const Example> batch) {
  BatchRef refs;
  refs.reserve(batch.size());
  for (const Example& e : batch) refs.push_back(&e);
  return refs;
}

// Mean per-example gradient plus l2_lambda * weights.
template <ModelLike M>
ParamVector grad_batch(const M& model, const ParamVector& params, std::span<const Example> batch) {
  ParamVector g;
  batch_grad_loss(model, params, make_batch_ref(batch), g);
  return g;
}

template <ModelLike M>
double batch_loss(const M& model, const ParamVector& params, std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("batch operations require a non-empty batch");
  double s = 0.0;
  for (const Example& e : batch) s += model.loss(params, e);
  return s / static_cast<double>(batch.size()) + model.l2_penalty(params);
}

// Hessian-vector product of the batch loss by central finite differences of
// the batch gradient: (g(p + h u) - g(p - h u)) / (2h) with
// h = eps_machine^(1/3) * (1 + ||p||) / max(||u||, tiny).
template <ModelLike M>
ParamVector hvp(const M& model, const ParamVector& params, const BatchRef& batch,
                const ParamVector& u) {
  if (u.size() != model.param_count())
    throw std::invalid_argument("hvp: vector length does not match parameter count");
  const double un = norm2(u);
  ParamVector out(model.param_count(), 0.0);
  if (un == 0.0) return out;
  const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + norm2(params)) /
                   std::max(un, 1e-300);
  ParamVector shifted = params;
  axpy(h, u, shifted);
  ParamVector gp;
  batch_grad_loss(model, shifted, batch, gp);
  shifted = params;
  axpy(-h, u, shifted);
  ParamVector gm;
  batch_grad_loss(model, shifted, batch, gm);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
  if (!all_finite(out)) throw std::runtime_error("hvp: non-finite result");
  return out;
}

template <ModelLike M>
ParamVector hvp(const M& model, const ParamVector& params, std::span<const Example> batch,
                const ParamVector& u) {
  return hvp(model, params, make_batch_ref(batch), u);
}

struct EvalResult {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

// Mean per-example loss (no l2 term) and top-1 accuracy.
template <ModelLike M>
EvalResult evaluate(const M& model, const ParamVector& params, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const Example& e : data.examples) {
    loss_sum += model.loss(params, e);
    if (model.predict(params, e) == e.label) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace hesit
