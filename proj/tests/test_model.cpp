#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hesit/model.hpp"
#include "support/fixtures.hpp"

using namespace hesit;
using hesit::testing::QuadraticModel;
using hesit::testing::make_dataset;
using hesit::testing::make_example;

namespace {

ModelSpec linear_spec(std::size_t d, std::size_t c, double l2 = 0.0) {
  ModelSpec s;
  s.input_dim = d;
  s.num_classes = c;
  s.l2_lambda = l2;
  return s;
}

ModelSpec mlp_spec(std::size_t d, std::vector<std::size_t> hidden, std::size_t c,
                   Activation act = Activation::tanh, double l2 = 0.0) {
  ModelSpec s;
  s.input_dim = d;
  s.hidden = std::move(hidden);
  s.num_classes = c;
  s.activation = act;
  s.l2_lambda = l2;
  return s;
}

// Central finite differences of the per-example loss, step 1e-5.
ParamVector fd_grad(const MlpModel& m, const ParamVector& p, const Example& e) {
  const double h = 1e-5;
  ParamVector g(p.size(), 0.0);
  ParamVector q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] + h;
    const double lp = m.loss(q, e);
    q[i] = p[i] - h;
    const double lm = m.loss(q, e);
    q[i] = p[i];
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

double rel_vec_err(const ParamVector& a, const ParamVector& b) {
  ParamVector d = a;
  axpy(-1.0, b, d);
  return norm2(d) / std::max(norm2(b), 1e-8);
}

}  // namespace

TEST_CASE("init_params is deterministic and seed-sensitive") {
  const MlpModel m(linear_spec(2, 2));
  const ParamVector a = m.init_params(7);
  const ParamVector b = m.init_params(7);
  REQUIRE(a == b);
  const ParamVector c = m.init_params(1);
  const ParamVector d = m.init_params(2);
  REQUIRE(c != d);
}

TEST_CASE("parameter counting") {
  REQUIRE(MlpModel(linear_spec(2, 2)).param_count() == 2 * 2 + 2);
  // (3*4+4) + (4*2+2) = 26
  REQUIRE(MlpModel(mlp_spec(3, {4}, 2)).param_count() == 26);
  REQUIRE(param_count(mlp_spec(5, {8, 4}, 3)) == (5 * 8 + 8) + (8 * 4 + 4) + (4 * 3 + 3));
}

TEST_CASE("init draws weights within the 1/sqrt(fan_in) bound and zero biases") {
  const ModelSpec spec = mlp_spec(4, {6}, 3);
  const MlpModel m(spec);
  const ParamVector p = m.init_params(11);
  const double bound1 = 1.0 / std::sqrt(4.0);
  for (std::size_t i = 0; i < 4 * 6; ++i) REQUIRE(std::abs(p[i]) <= bound1);
  for (std::size_t i = 4 * 6; i < 4 * 6 + 6; ++i) REQUIRE(p[i] == 0.0);
}

TEST_CASE("loss at zero parameters is log C") {
  const Example e = make_example(0, {0.3, -1.2}, 1);
  const MlpModel m2(linear_spec(2, 2));
  REQUIRE_THAT(m2.loss(ParamVector(m2.param_count(), 0.0), e),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  const MlpModel m4(linear_spec(2, 4));
  REQUIRE_THAT(m4.loss(ParamVector(m4.param_count(), 0.0), e),
               Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
}

TEST_CASE("loss matches an independent hand calculation") {
  // W = [[0.5, -0.25], [-1.0, 0.75]], b = [0.1, -0.2], x = (1, 2), y = 1
  // logits = (0.1, 0.3), loss = -log softmax_1 = 0.5981388693815918
  const MlpModel m(linear_spec(2, 2));
  const ParamVector p = {0.5, -0.25, -1.0, 0.75, 0.1, -0.2};
  const Example e = make_example(0, {1.0, 2.0}, 1);
  REQUIRE_THAT(m.loss(p, e), Catch::Matchers::WithinAbs(0.5981388693815918, 1e-15));

  // frozen analytic gradient for the same fixture
  const ParamVector g = m.grad_example(p, e);
  const double p0 = 0.45016600268752216;  // softmax(0.1, 0.3)[0]
  const ParamVector expect = {p0 * 1.0, p0 * 2.0, -p0 * 1.0, -p0 * 2.0, p0, -p0};
  REQUIRE(rel_vec_err(g, expect) < 1e-12);
}

TEST_CASE("loss rejects dimension mismatches") {
  const MlpModel m(linear_spec(3, 2));
  const ParamVector p(m.param_count(), 0.0);
  REQUIRE_THROWS_AS(m.loss(p, make_example(0, {1.0, 2.0}, 0)), std::invalid_argument);
  REQUIRE_THROWS_AS(m.loss(ParamVector(3, 0.0), make_example(0, {1.0, 2.0, 3.0}, 0)),
                    std::invalid_argument);
}

TEST_CASE("gradient at zero parameters has softmax-minus-onehot bias block") {
  const MlpModel m(linear_spec(2, 3));
  const ParamVector p(m.param_count(), 0.0);
  const Example e = make_example(0, {0.4, 0.6}, 2);
  const ParamVector g = m.grad_example(p, e);
  const double u = 1.0 / 3.0;
  // bias block sits after the 6 weight entries
  REQUIRE_THAT(g[6], Catch::Matchers::WithinAbs(u, 1e-12));
  REQUIRE_THAT(g[7], Catch::Matchers::WithinAbs(u, 1e-12));
  REQUIRE_THAT(g[8], Catch::Matchers::WithinAbs(u - 1.0, 1e-12));
}

TEST_CASE("analytic gradients match central finite differences on 100 random triples") {
  Rng rng(20240811);
  const std::vector<ModelSpec> specs = {
      linear_spec(3, 2),
      mlp_spec(3, {4}, 3, Activation::tanh),
      mlp_spec(4, {5, 3}, 2, Activation::tanh),
      mlp_spec(3, {4}, 2, Activation::identity),
      mlp_spec(3, {6}, 3, Activation::relu),
  };
  for (int trial = 0; trial < 100; ++trial) {
    const MlpModel m(specs[trial % specs.size()]);
    ParamVector p = m.init_params(rng.next_u64());
    for (double& x : p) x += 0.3 * rng.normal();
    Example e = make_example(static_cast<ExampleId>(trial), {}, 0);
    e.features.resize(m.input_dim());
    for (double& f : e.features) f = rng.normal();
    e.label = static_cast<int>(rng.below(m.num_classes()));
    const ParamVector g = m.grad_example(p, e);
    const ParamVector g_fd = fd_grad(m, p, e);
    REQUIRE(rel_vec_err(g, g_fd) <= 1e-4);
  }
}

TEST_CASE("duplicated twin examples get identical gradients") {
  const MlpModel m(mlp_spec(2, {4}, 2));
  const ParamVector p = m.init_params(5);
  const Example a = make_example(1, {0.5, -0.5}, 1);
  Example b = a;
  b.id = 2;
  REQUIRE(m.grad_example(p, a) == m.grad_example(p, b));
}

TEST_CASE("grad_batch of a singleton is grad_example plus the l2 term") {
  const MlpModel m(linear_spec(2, 2, 0.5));
  ParamVector p = m.init_params(3);
  const Example e = make_example(0, {1.0, -2.0}, 1);
  const std::vector<Example> batch = {e};
  const ParamVector gb = grad_batch(m, p, batch);
  ParamVector expect = m.grad_example(p, e);
  m.add_l2_grad(p, expect);
  REQUIRE(rel_vec_err(gb, expect) < 1e-15);
}

TEST_CASE("grad_batch is idempotent under duplication") {
  const MlpModel m(linear_spec(2, 3, 0.1));
  const ParamVector p = m.init_params(9);
  const Example e = make_example(0, {0.2, 0.8}, 2);
  const std::vector<Example> one = {e};
  const std::vector<Example> five = {e, e, e, e, e};
  REQUIRE(rel_vec_err(grad_batch(m, p, five), grad_batch(m, p, one)) < 1e-14);
}

TEST_CASE("grad_batch matches the direct summation oracle") {
  const MlpModel m(mlp_spec(3, {4}, 2, Activation::tanh, 0.05));
  const ParamVector p = m.init_params(17);
  Rng rng(99);
  std::vector<Example> batch;
  for (int i = 0; i < 7; ++i) {
    Example e = make_example(static_cast<ExampleId>(i), {rng.normal(), rng.normal(), rng.normal()},
                             static_cast<int>(rng.below(2)));
    batch.push_back(e);
  }
  ParamVector direct(m.param_count(), 0.0);
  for (const Example& e : batch) axpy(1.0 / 7.0, m.grad_example(p, e), direct);
  m.add_l2_grad(p, direct);
  REQUIRE(rel_vec_err(grad_batch(m, p, batch), direct) < 1e-13);
}

TEST_CASE("grad_batch rejects an empty batch") {
  const MlpModel m(linear_spec(2, 2));
  const ParamVector p(m.param_count(), 0.0);
  REQUIRE_THROWS_AS(grad_batch(m, p, std::vector<Example>{}), std::invalid_argument);
}

TEST_CASE("hvp of zero vector is zero") {
  const MlpModel m(linear_spec(2, 2));
  const ParamVector p = m.init_params(1);
  const std::vector<Example> batch = {make_example(0, {1.0, 1.0}, 0)};
  const ParamVector u(m.param_count(), 0.0);
  REQUIRE(hvp(m, p, batch, u) == u);
}

TEST_CASE("hvp recovers A u on the pure-quadratic surrogate") {
  const QuadraticModel q({{2.0, 0.3}, {0.3, 0.5}});
  // features zero -> loss = 1/2 theta^T A theta
  const std::vector<Example> batch = {make_example(0, {0.0, 0.0})};
  const ParamVector p = {0.7, -0.4};
  const ParamVector u = {1.0, 2.0};
  const ParamVector hu = hvp(q, p, batch, u);
  REQUIRE_THAT(hu[0], Catch::Matchers::WithinAbs(2.0 * 1.0 + 0.3 * 2.0, 1e-6));
  REQUIRE_THAT(hu[1], Catch::Matchers::WithinAbs(0.3 * 1.0 + 0.5 * 2.0, 1e-6));
}

TEST_CASE("hvp is symmetric as a bilinear form") {
  const MlpModel m(mlp_spec(3, {4}, 2));
  const ParamVector p = m.init_params(23);
  Rng rng(7);
  std::vector<Example> batch;
  for (int i = 0; i < 5; ++i)
    batch.push_back(make_example(static_cast<ExampleId>(i),
                                 {rng.normal(), rng.normal(), rng.normal()},
                                 static_cast<int>(rng.below(2))));
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector u(m.param_count()), v(m.param_count());
    for (double& x : u) x = rng.normal();
    for (double& x : v) x = rng.normal();
    const double a = dot(u, hvp(m, p, batch, v));
    const double b = dot(v, hvp(m, p, batch, u));
    REQUIRE_THAT(a, Catch::Matchers::WithinRel(b, 1e-5) || Catch::Matchers::WithinAbs(b, 1e-9));
  }
}

TEST_CASE("evaluate follows the lowest-index tie-break at zero params") {
  const MlpModel m(linear_spec(2, 2));
  const ParamVector p(m.param_count(), 0.0);
  Dataset data = make_dataset(2, 2, {});
  for (int i = 0; i < 10; ++i)
    data.examples.push_back(make_example(static_cast<ExampleId>(i),
                                         {static_cast<double>(i), 1.0}, i < 3 ? 0 : 1));
  const EvalResult r = evaluate(m, p, data);
  REQUIRE_THAT(r.mean_loss, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  REQUIRE_THAT(r.accuracy, Catch::Matchers::WithinAbs(0.3, 1e-12));
}

TEST_CASE("evaluate reaches accuracy 1 on separated data with large-margin params") {
  const MlpModel m(linear_spec(1, 2));
  // W = [[-10], [10]], b = 0: positive x -> class 1
  const ParamVector p = {-10.0, 10.0, 0.0, 0.0};
  Dataset data = make_dataset(1, 2, {});
  for (int i = 0; i < 8; ++i) {
    const double x = (i % 2 == 0) ? -1.0 - i : 1.0 + i;
    data.examples.push_back(make_example(static_cast<ExampleId>(i), {x}, x > 0 ? 1 : 0));
  }
  REQUIRE(evaluate(m, p, data).accuracy == 1.0);
}

TEST_CASE("evaluate mean loss equals the direct average") {
  const MlpModel m(mlp_spec(2, {3}, 3));
  const ParamVector p = m.init_params(2);
  Rng rng(5);
  Dataset data = make_dataset(2, 3, {});
  for (int i = 0; i < 9; ++i)
    data.examples.push_back(make_example(static_cast<ExampleId>(i), {rng.normal(), rng.normal()},
                                         static_cast<int>(rng.below(3))));
  double s = 0.0;
  for (const Example& e : data.examples) s += m.loss(p, e);
  REQUIRE_THAT(evaluate(m, p, data).mean_loss,
               Catch::Matchers::WithinAbs(s / 9.0, 1e-14));
  REQUIRE_THROWS_AS(evaluate(m, p, make_dataset(2, 3, {})), std::invalid_argument);
}

TEST_CASE("loss is invariant under hidden-unit permutation") {
  const ModelSpec spec = mlp_spec(3, {4}, 2, Activation::tanh);
  const MlpModel m(spec);
  const ParamVector p = m.init_params(31);
  // permute hidden units by sigma = (2, 0, 3, 1): rows of W1/b1 and columns of W2
  const std::vector<std::size_t> sigma = {2, 0, 3, 1};
  ParamVector q(p.size(), 0.0);
  const std::size_t w1 = 0, b1 = 12, w2 = 16, b2 = 24;
  for (std::size_t o = 0; o < 4; ++o) {
    for (std::size_t i = 0; i < 3; ++i) q[w1 + o * 3 + i] = p[w1 + sigma[o] * 3 + i];
    q[b1 + o] = p[b1 + sigma[o]];
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t o = 0; o < 4; ++o) q[w2 + c * 4 + o] = p[w2 + c * 4 + sigma[o]];
  q[b2] = p[b2];
  q[b2 + 1] = p[b2 + 1];

  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Example e = make_example(static_cast<ExampleId>(trial),
                                   {rng.normal(), rng.normal(), rng.normal()},
                                   static_cast<int>(rng.below(2)));
    REQUIRE_THAT(m.loss(p, e), Catch::Matchers::WithinAbs(m.loss(q, e), 1e-12));
  }
}

TEST_CASE("model operations are pure") {
  const MlpModel m(mlp_spec(2, {3}, 2));
  const ParamVector p = m.init_params(4);
  const Example e = make_example(0, {0.1, 0.2}, 1);
  REQUIRE(m.loss(p, e) == m.loss(p, e));
  REQUIRE(m.grad_example(p, e) == m.grad_example(p, e));
  const std::vector<Example> batch = {e, make_example(1, {0.3, -0.1}, 0)};
  REQUIRE(grad_batch(m, p, batch) == grad_batch(m, p, batch));
}
