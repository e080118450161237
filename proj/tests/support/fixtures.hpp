// Shared test fixtures: quadratic surrogate models with a known Hessian and
// small dataset builders.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hesit/data.hpp"
#include "hesit/model.hpp"

namespace hesit::testing {

// Per-example loss 1/2 (theta - x)^T A (theta - x) where x is the example's
// feature vector and A is a fixed symmetric matrix. The batch Hessian is A
// regardless of the data, so inverse-HVP results have a closed form. With
// A = [1] and features {y} this is the 1-D mean-estimation fixture
// l = 1/2 (theta - y)^2.
class QuadraticModel {
 public:
  explicit QuadraticModel(std::vector<std::vector<double>> a) : a_(std::move(a)) {
    for (const auto& row : a_)
      if (row.size() != a_.size()) throw std::invalid_argument("QuadraticModel: A must be square");
  }

  static QuadraticModel diagonal(std::vector<double> diag) {
    std::vector<std::vector<double>> a(diag.size(), std::vector<double>(diag.size(), 0.0));
    for (std::size_t i = 0; i < diag.size(); ++i) a[i][i] = diag[i];
    return QuadraticModel(std::move(a));
  }

  std::size_t param_count() const { return a_.size(); }
  std::size_t input_dim() const { return a_.size(); }
  std::size_t num_classes() const { return 1; }

  ParamVector init_params(std::uint64_t) const { return ParamVector(a_.size(), 0.0); }

  double loss(const ParamVector& p, const Example& e) const {
    check(p, e);
    double s = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < a_.size(); ++j)
        row += a_[i][j] * (p[j] - e.features[j]);
      s += (p[i] - e.features[i]) * row;
    }
    return 0.5 * s;
  }

  void grad_example(const ParamVector& p, const Example& e, ParamVector& g) const {
    check(p, e);
    g.assign(a_.size(), 0.0);
    for (std::size_t i = 0; i < a_.size(); ++i)
      for (std::size_t j = 0; j < a_.size(); ++j)
        g[i] += a_[i][j] * (p[j] - e.features[j]);
  }

  ParamVector grad_example(const ParamVector& p, const Example& e) const {
    ParamVector g;
    grad_example(p, e, g);
    return g;
  }

  int predict(const ParamVector&, const Example&) const { return 0; }
  double l2_penalty(const ParamVector&) const { return 0.0; }
  void add_l2_grad(const ParamVector&, ParamVector&) const {}

 private:
  void check(const ParamVector& p, const Example& e) const {
    if (p.size() != a_.size() || e.features.size() != a_.size())
      throw std::invalid_argument("QuadraticModel: dimension mismatch");
  }

  std::vector<std::vector<double>> a_;
};

inline Example make_example(ExampleId id, std::vector<double> features, int label = 0,
                            int task_id = 0) {
  Example e;
  e.id = id;
  e.features = std::move(features);
  e.label = label;
  e.task_id = task_id;
  return e;
}

inline Dataset make_dataset(std::size_t dim, std::size_t classes, std::vector<Example> examples) {
  Dataset d;
  d.dim = dim;
  d.num_classes = classes;
  d.examples = std::move(examples);
  return d;
}

// Dataset of scalar targets for the 1-D mean-estimation fixture.
inline Dataset scalar_targets(std::vector<double> ys, ExampleId first_id = 0) {
  Dataset d;
  d.dim = 1;
  d.num_classes = 1;
  ExampleId id = first_id;
  for (double y : ys) d.examples.push_back(make_example(id++, {y}));
  return d;
}

}  // namespace hesit::testing
