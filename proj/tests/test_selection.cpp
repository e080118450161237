#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "hesit/datagen.hpp"
#include "hesit/selection.hpp"
#include "hesit/train.hpp"
#include "support/fixtures.hpp"

using namespace hesit;
using hesit::testing::QuadraticModel;
using hesit::testing::make_example;

namespace {

std::vector<Example> pool_of(std::size_t n, std::size_t labels = 1) {
  std::vector<Example> pool;
  for (std::size_t i = 0; i < n; ++i)
    pool.push_back(make_example(i, {static_cast<double>(i)}, static_cast<int>(i % labels)));
  return pool;
}

bool distinct_from_pool(const std::vector<ExampleId>& ids, const std::vector<Example>& pool,
                        std::size_t k) {
  if (ids.size() != k) return false;
  std::set<ExampleId> seen(ids.begin(), ids.end());
  if (seen.size() != k) return false;
  std::set<ExampleId> pool_ids;
  for (const Example& e : pool) pool_ids.insert(e.id);
  for (ExampleId id : ids)
    if (!pool_ids.count(id)) return false;
  return true;
}

std::vector<InfluenceRecord> records_for(const std::vector<double>& scores) {
  std::vector<InfluenceRecord> rs(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rs[i].example_id = i;
    rs[i].raw = scores[i];
  }
  normalize_scores(rs);
  return rs;
}

}  // namespace

TEST_CASE("select_random exhausts the pool at K = N and is seed-deterministic") {
  const auto pool = pool_of(6);
  auto all = select_random(pool, 6, 3);
  std::sort(all.begin(), all.end());
  REQUIRE(all == std::vector<ExampleId>{0, 1, 2, 3, 4, 5});
  REQUIRE(select_random(pool, 3, 17) == select_random(pool, 3, 17));
  REQUIRE_THROWS_AS(select_random(pool, 7, 0), std::invalid_argument);
}

TEST_CASE("select_random is uniform over candidates") {
  const std::size_t n = 20, k = 5, trials = 10000;
  const auto pool = pool_of(n);
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t seed = 0; seed < trials; ++seed)
    for (ExampleId id : select_random(pool, k, seed)) ++hits[id];
  const double p = static_cast<double>(k) / static_cast<double>(n);
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  for (std::size_t i = 0; i < n; ++i) {
    const double freq = static_cast<double>(hits[i]) / static_cast<double>(trials);
    REQUIRE(std::abs(freq - p) <= 3.0 * sigma);
  }
}

TEST_CASE("select_uniform_by_label round-robins over ascending labels") {
  // balanced 2-class pool, K=2: one example per class
  std::vector<Example> pool = {make_example(0, {0.0}, 1), make_example(1, {0.0}, 0),
                               make_example(2, {0.0}, 1), make_example(3, {0.0}, 0)};
  const auto sel = select_uniform_by_label(pool, 2, 5);
  int c0 = 0, c1 = 0;
  for (ExampleId id : sel) (id == 1 || id == 3 ? c0 : c1)++;
  REQUIRE(c0 == 1);
  REQUIRE(c1 == 1);

  // K < C covers K distinct classes
  std::vector<Example> multi;
  for (std::size_t i = 0; i < 12; ++i)
    multi.push_back(make_example(i, {0.0}, static_cast<int>(i % 4)));
  const auto sel3 = select_uniform_by_label(multi, 3, 7);
  std::set<int> classes;
  for (ExampleId id : sel3) classes.insert(static_cast<int>(id % 4));
  REQUIRE(classes.size() == 3);

  // a singleton class is always exhausted when K is large
  std::vector<Example> lop = {make_example(0, {0.0}, 0), make_example(1, {0.0}, 1),
                              make_example(2, {0.0}, 1), make_example(3, {0.0}, 1),
                              make_example(4, {0.0}, 1)};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = select_uniform_by_label(lop, 4, seed);
    REQUIRE(std::count(s.begin(), s.end(), 0) == 1);
  }
}

TEST_CASE("select_reservoir keeps the whole stream when it fits") {
  const auto pool = pool_of(5);
  REQUIRE(select_reservoir(pool, 5, 1) == std::vector<ExampleId>{0, 1, 2, 3, 4});
  REQUIRE(select_reservoir(pool, 3, 9) == select_reservoir(pool, 3, 9));
}

TEST_CASE("select_reservoir retains each item with probability K/n") {
  const std::size_t k = 8, trials = 10000;
  const auto pool = pool_of(2 * k);
  std::vector<std::size_t> hits(2 * k, 0);
  for (std::size_t seed = 0; seed < trials; ++seed)
    for (ExampleId id : select_reservoir(pool, k, seed)) ++hits[id];
  const double sigma = std::sqrt(0.25 / static_cast<double>(trials));
  for (std::size_t i = 0; i < 2 * k; ++i) {
    const double freq = static_cast<double>(hits[i]) / static_cast<double>(trials);
    REQUIRE(std::abs(freq - 0.5) <= 3.0 * sigma);
  }
}

TEST_CASE("select_gss handles forced and orthogonal cases by id") {
  // gradients are theta - x at theta = 0, i.e. -features
  const QuadraticModel m = QuadraticModel::diagonal({1.0, 1.0});
  const ParamVector theta = {0.0, 0.0};

  std::vector<Example> twins = {make_example(3, {1.0, 1.0}), make_example(1, {1.0, 1.0})};
  REQUIRE(select_gss(m, theta, twins, 2) == std::vector<ExampleId>{1, 3});

  std::vector<Example> ortho = {make_example(0, {1.0, 0.0}), make_example(1, {0.0, 1.0}),
                                make_example(2, {-1.0, 0.0})};
  // equal norms, pairwise cosines {0, 0, -1}: first pick id 0, then id 2
  // minimizes max-sim (-1 beats 0), then id 1
  REQUIRE(select_gss(m, theta, ortho, 2) == std::vector<ExampleId>{0, 2});
}

TEST_CASE("select_gss maximizes dispersion on the 0/5/90 degree fixture") {
  const QuadraticModel m = QuadraticModel::diagonal({1.0, 1.0});
  const ParamVector theta = {0.0, 0.0};
  const double a5 = 5.0 * 3.14159265358979323846 / 180.0;
  std::vector<Example> pool = {make_example(0, {-1.0, 0.0}),
                               make_example(1, {-std::cos(a5), -std::sin(a5)}),
                               make_example(2, {0.0, -1.0})};
  const auto sel = select_gss(m, theta, pool, 2);
  std::set<ExampleId> got(sel.begin(), sel.end());

  // brute-force oracle: the 2-subset minimizing the max pairwise cosine
  std::vector<ParamVector> grads;
  for (const Example& e : pool) grads.push_back(m.grad_example(theta, e));
  double best = 2.0;
  std::set<ExampleId> best_set;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      const double c = dot(grads[i], grads[j]) / (norm2(grads[i]) * norm2(grads[j]));
      if (c < best) {
        best = c;
        best_set = {pool[i].id, pool[j].id};
      }
    }
  REQUIRE(got == best_set);
  REQUIRE(got == std::set<ExampleId>{0, 2});
}

TEST_CASE("select_gss treats zero gradients as similarity zero") {
  const QuadraticModel m = QuadraticModel::diagonal({1.0, 1.0});
  const ParamVector theta = {0.0, 0.0};
  std::vector<Example> pool = {make_example(0, {1.0, 0.0}), make_example(1, {0.0, 0.0}),
                               make_example(2, {0.9, 0.1})};
  const auto sel = select_gss(m, theta, pool, 2);
  // id 1 has a zero gradient (sim 0); id 2 is nearly parallel to id 0
  REQUIRE(sel == std::vector<ExampleId>{0, 1});
}

TEST_CASE("select_loss_based picks the lowest-loss candidates with id ties") {
  const QuadraticModel m = QuadraticModel::diagonal({1.0});
  const ParamVector theta = {1.0};
  std::vector<Example> pool = {make_example(0, {3.0}), make_example(1, {1.0}),
                               make_example(2, {0.0}), make_example(3, {1.5})};
  REQUIRE(select_loss_based(m, theta, pool, 1) == std::vector<ExampleId>{1});

  std::vector<Example> equal = {make_example(5, {2.0}), make_example(2, {0.0}),
                                make_example(9, {2.0})};
  // losses: 0.5, 0.5, 0.5 -> lowest ids win
  REQUIRE(select_loss_based(m, theta, equal, 2) == std::vector<ExampleId>{2, 5});
}

TEST_CASE("a mislabeled point lands last under the loss criterion") {
  StreamSpec spec = make_stream_spec(1, 2, 2, 50, 5.0, ShiftMode::class_split, 0.0, 23);
  TaskStream stream = gen_task_stream(spec);
  Dataset& train = stream.tasks[0].train;
  train.examples[4].label = 1 - train.examples[4].label;  // corrupt one point
  const ExampleId bad = train.examples[4].id;

  const MlpModel model(ModelSpec{2, {}, 2, Activation::identity, 0.0});
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.batch_size = 5;
  cfg.epochs = 40;
  cfg.lr = 0.2;
  const TrainResult res = hesit::train(model, cfg, train, stream.tasks[0].val);

  const auto sel =
      select_loss_based(model, res.final_params, train.examples, train.size() - 1);
  REQUIRE(std::find(sel.begin(), sel.end(), bad) == sel.end());
}

TEST_CASE("select_hesit modes and ties") {
  const auto pool = pool_of(3);
  const auto rs = records_for({3.0, -5.0, 1.0});
  REQUIRE(select_hesit(pool, rs, 1, HesitSelectMode::signed_desc) == std::vector<ExampleId>{0});
  REQUIRE(select_hesit(pool, rs, 1, HesitSelectMode::magnitude_desc) == std::vector<ExampleId>{1});

  const auto flat = records_for({2.0, 2.0, 2.0});
  REQUIRE(select_hesit(pool, flat, 2) == std::vector<ExampleId>{0, 1});

  const auto missing = records_for({1.0, 2.0});
  REQUIRE_THROWS_AS(select_hesit(pool, missing, 1), std::invalid_argument);
}

TEST_CASE("every strategy returns exactly K distinct pool ids") {
  const QuadraticModel m = QuadraticModel::diagonal({1.0});
  const ParamVector theta = {0.25};
  const auto pool = pool_of(9, 3);
  const auto rs = records_for({5, 3, 8, -2, 0, 7, 1, -4, 6});
  const std::size_t k = 4;
  REQUIRE(distinct_from_pool(select_random(pool, k, 1), pool, k));
  REQUIRE(distinct_from_pool(select_uniform_by_label(pool, k, 1), pool, k));
  REQUIRE(distinct_from_pool(select_reservoir(pool, k, 1), pool, k));
  REQUIRE(distinct_from_pool(select_gss(m, theta, pool, k), pool, k));
  REQUIRE(distinct_from_pool(select_loss_based(m, theta, pool, k), pool, k));
  REQUIRE(distinct_from_pool(select_hesit(pool, rs, k), pool, k));
}

TEST_CASE("select_hesit is invariant to positive rescaling in both modes") {
  Rng rng(31);
  const auto pool = pool_of(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(12);
    for (double& s : scores) s = rng.normal();
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    std::vector<double> scaled = scores;
    for (double& s : scaled) s *= c;
    for (auto mode : {HesitSelectMode::signed_desc, HesitSelectMode::magnitude_desc})
      REQUIRE(select_hesit(pool, records_for(scores), 4, mode) ==
              select_hesit(pool, records_for(scaled), 4, mode));
  }
}

TEST_CASE("select_gss is invariant to uniform positive gradient rescaling") {
  const QuadraticModel m = QuadraticModel::diagonal({1.0, 1.0});
  const ParamVector theta = {0.0, 0.0};
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Example> pool, scaled;
    const double c = std::exp(rng.uniform(-2.0, 2.0));
    for (std::size_t i = 0; i < 8; ++i) {
      const double x = rng.normal(), y = rng.normal();
      pool.push_back(make_example(i, {x, y}));
      scaled.push_back(make_example(i, {c * x, c * y}));
    }
    REQUIRE(select_gss(m, theta, pool, 3) == select_gss(m, theta, scaled, 3));
  }
}

TEST_CASE("hesit selection avoids flipped labels better than random") {
  // 10% flipped labels on a convex fixture; averaged over 20 seeds the
  // signed-descending selection keeps fewer corrupted points than random.
  std::size_t hesit_noise = 0, random_noise = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StreamSpec spec = make_stream_spec(1, 2, 2, 100, 4.0, ShiftMode::class_split, 0.1, 100 + seed);
    const TaskStream stream = gen_task_stream(spec);
    const Dataset& train = stream.tasks[0].train;
    const MlpModel model(ModelSpec{2, {}, 2, Activation::identity, 0.05});
    TrainConfig cfg;
    cfg.seed = derive_seed(seed, 1);
    cfg.batch_size = 8;
    cfg.epochs = 15;
    cfg.lr = 0.1;

    HesitConfig hcfg;
    for (const Example& e : train.examples) hcfg.traced_ids.push_back(e.id);
    const auto records = hesit_trace(model, cfg, train, stream.tasks[0].val, hcfg);
    const std::size_t k = 10;
    const auto h_sel = select_hesit(train.examples, records, k);
    const auto r_sel = select_random(train.examples, k, derive_seed(seed, 2));
    for (ExampleId id : h_sel) hesit_noise += train.find(id)->noise_flag ? 1 : 0;
    for (ExampleId id : r_sel) random_noise += train.find(id)->noise_flag ? 1 : 0;
  }
  REQUIRE(hesit_noise < random_noise);
}
