// Sequential task training with a replay buffer: per-task exemplar selection,
// rehearsal, the learning-curve matrix and forgetting metrics.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"
#include "hesit/influence.hpp"
#include "hesit/model.hpp"
#include "hesit/selection.hpp"
#include "hesit/train.hpp"

namespace hesit {

enum class Strategy { vanilla, random, uniform, reservoir, gss, loss, hesit };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::vanilla: return "vanilla";
    case Strategy::random: return "random";
    case Strategy::uniform: return "uniform";
    case Strategy::reservoir: return "reservoir";
    case Strategy::gss: return "gss";
    case Strategy::loss: return "loss";
    case Strategy::hesit: return "hesit";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
  if (s == "vanilla") return Strategy::vanilla;
  if (s == "random") return Strategy::random;
  if (s == "uniform") return Strategy::uniform;
  if (s == "reservoir") return Strategy::reservoir;
  if (s == "gss") return Strategy::gss;
  if (s == "loss") return Strategy::loss;
  if (s == "hesit") return Strategy::hesit;
  throw std::invalid_argument("unknown strategy: " + s);
}

// Append-only exemplar memory M_t with a per-task cap of K entries.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t cap_per_task) : cap_(cap_per_task) {}

  void add_task(int task_id, std::vector<Example> exemplars) {
    if (exemplars.size() > cap_)
      throw std::invalid_argument("ReplayBuffer: task " + std::to_string(task_id) +
                                  " exceeds the per-task cap");
    task_ids_.push_back(task_id);
    for (Example& e : exemplars) all_.push_back(std::move(e));
  }

  const std::vector<Example>& examples() const { return all_; }
  std::size_t size() const { return all_.size(); }
  std::size_t cap_per_task() const { return cap_; }
  std::size_t tasks_stored() const { return task_ids_.size(); }

 private:
  std::size_t cap_;
  std::vector<int> task_ids_;
  std::vector<Example> all_;
};

struct CurriculumConfig {
  Strategy strategy = Strategy::hesit;
  std::size_t exemplars_per_task = 50;  // K
  std::size_t trace_pool = 1000;        // |Z_t|, capped at the task pool size
  std::size_t trace_epochs = 5;         // tracing window, converted to steps
  TrainConfig train;                    // per-task template; seed derived per task
  HesitVariant variant = HesitVariant::eq6;
  HesitSelectMode select_mode = HesitSelectMode::signed_desc;
  std::uint64_t task_order_seed = 0;    // 0 -> natural task order
  std::size_t repeats = 3;              // consumed by compare-style drivers
};

struct CurriculumReport {
  // accuracy[t][t'] = test accuracy on task t' after finishing task t (t' <= t)
  std::vector<std::vector<double>> accuracy;
  std::vector<double> val_loss;      // per task, at its final params
  std::vector<int> task_order;       // stream indices in the order trained
  double final_avg = 0.0;
  std::vector<double> forgetting;    // F[t'] = max_t A[t][t'] - A[T][t']
  std::vector<double> task_seconds;
  std::vector<double> trace_seconds;
  double total_sec = 0.0;
  double trace_sec = 0.0;
  ParamVector final_params;
  std::vector<std::vector<ExampleId>> buffer_ids;  // exemplars per trained task
};

struct ForgettingStats {
  double final_avg = 0.0;
  std::vector<double> forgetting;
};

// final_avg is the mean of the last row; F[t'] is the peak accuracy on task
// t' during the curriculum minus its accuracy after the final task.
inline ForgettingStats forgetting_stats(const std::vector<std::vector<double>>& a) {
  if (a.empty()) throw std::invalid_argument("forgetting_stats: empty matrix");
  const std::size_t t_final = a.size() - 1;
  if (a[t_final].size() != a.size())
    throw std::invalid_argument("forgetting_stats: matrix is not lower-triangular filled");
  ForgettingStats out;
  double s = 0.0;
  for (double v : a[t_final]) s += v;
  out.final_avg = s / static_cast<double>(a[t_final].size());
  out.forgetting.resize(a.size(), 0.0);
  for (std::size_t tp = 0; tp < a.size(); ++tp) {
    double peak = 0.0;
    for (std::size_t t = tp; t < a.size(); ++t) peak = std::max(peak, a[t][tp]);
    out.forgetting[tp] = peak - a[t_final][tp];
  }
  return out;
}

// Per-task test accuracy for the first `upto` tasks of the stream order.
template <ModelLike M>
std::vector<double> evaluate_all_seen(const M& model, const ParamVector& params,
                                      const TaskStream& stream, std::span<const int> order,
                                      std::size_t upto) {
  if (upto > order.size()) throw std::invalid_argument("evaluate_all_seen: task index out of range");
  std::vector<double> acc;
  acc.reserve(upto);
  for (std::size_t i = 0; i < upto; ++i)
    acc.push_back(evaluate(model, params, stream.tasks[static_cast<std::size_t>(order[i])].test)
                      .accuracy);
  return acc;
}

template <ModelLike M>
std::vector<double> evaluate_all_seen(const M& model, const ParamVector& params,
                                      const TaskStream& stream, std::size_t upto) {
  std::vector<int> order(stream.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  return evaluate_all_seen(model, params, stream, order, upto);
}

namespace detail {

inline std::vector<int> task_order_permutation(std::size_t tasks, std::uint64_t order_seed) {
  std::vector<int> order(tasks);
  for (std::size_t i = 0; i < tasks; ++i) order[i] = static_cast<int>(i);
  if (order_seed != 0) {
    Rng rng(order_seed);
    rng.shuffle(order);
  }
  return order;
}

// Z_t: seeded uniform sample from the task's training pool, capped at its size.
inline std::vector<const Example*> sample_pool(const Dataset& train, std::size_t pool_size,
                                               std::uint64_t seed) {
  const std::size_t z = std::min(pool_size, train.size());
  Rng rng(seed);
  std::vector<std::size_t> picks = rng.sample_without_replacement(train.size(), z);
  std::sort(picks.begin(), picks.end());
  std::vector<const Example*> out;
  out.reserve(z);
  for (std::size_t i : picks) out.push_back(&train[i]);
  return out;
}

}  // namespace detail

// The curriculum driver. For each task in order: sample the traced pool Z_t,
// select exemplars (hesit from its trace window before convergence training,
// the other strategies from the trained model afterwards), train on
// D_t^trn united with the replay buffer, then evaluate on all seen test sets.
template <ModelLike M>
CurriculumReport run_curriculum(const M& model, const TaskStream& stream,
                                const CurriculumConfig& ccfg) {
  using clock = std::chrono::steady_clock;
  if (stream.tasks.empty()) throw std::invalid_argument("run_curriculum: empty task stream");
  const auto t_start = clock::now();

  CurriculumReport report;
  report.task_order = detail::task_order_permutation(stream.size(), ccfg.task_order_seed);
  ReplayBuffer buffer(ccfg.exemplars_per_task);
  ParamVector params = model.init_params(ccfg.train.seed);
  const std::size_t k = ccfg.exemplars_per_task;

  for (std::size_t pos = 0; pos < stream.size(); ++pos) {
    const auto t_task = clock::now();
    const Task& task = stream.tasks[static_cast<std::size_t>(report.task_order[pos])];
    if (task.train.empty())
      throw std::runtime_error("run_curriculum: task " + std::to_string(task.task_id) +
                               " has an empty training split");

    TrainConfig cfg = ccfg.train;
    cfg.seed = derive_seed(ccfg.train.seed, 1000 + pos);
    const std::uint64_t pool_seed = derive_seed(ccfg.train.seed, 2000 + pos);
    const std::uint64_t select_seed = derive_seed(ccfg.train.seed, 3000 + pos);

    std::vector<const Example*> pool;
    std::vector<Example> pool_copy;
    if (ccfg.strategy != Strategy::vanilla && k > 0) {
      pool = detail::sample_pool(task.train, ccfg.trace_pool, pool_seed);
      pool_copy.reserve(pool.size());
      for (const Example* e : pool) pool_copy.push_back(*e);
    }
    const std::size_t k_eff = std::min(k, pool_copy.size());

    double trace_sec = 0.0;
    std::vector<ExampleId> selected;
    if (ccfg.strategy == Strategy::hesit && k_eff > 0) {
      const auto t_trace = clock::now();
      HesitConfig hcfg;
      hcfg.variant = ccfg.variant;
      hcfg.trace_steps = ccfg.trace_epochs == 0
                             ? 0
                             : ccfg.trace_epochs * steps_per_epoch(task.train.size(), cfg.batch_size);
      for (const Example* e : pool) hcfg.traced_ids.push_back(e->id);
      const std::vector<InfluenceRecord> records =
          hesit_trace(model, cfg, task.train, task.val, hcfg, &params);
      selected = select_hesit(pool_copy, records, k_eff, ccfg.select_mode);
      trace_sec = std::chrono::duration<double>(clock::now() - t_trace).count();
    }

    // Rehearsal: the buffer is merged into the training set and shares the
    // batch schedule with the task's own data.
    const Dataset train_union = concat(task.train, buffer.examples());
    const TrainResult res = train(model, cfg, train_union, task.val, nullptr, &params);
    params = res.final_params;

    if (k_eff > 0 && selected.empty()) {
      switch (ccfg.strategy) {
        case Strategy::random:
          selected = select_random(pool_copy, k_eff, select_seed);
          break;
        case Strategy::uniform:
          selected = select_uniform_by_label(pool_copy, k_eff, select_seed);
          break;
        case Strategy::reservoir:
          selected = select_reservoir(pool_copy, k_eff, select_seed);
          break;
        case Strategy::gss:
          selected = select_gss(model, params, pool_copy, k_eff);
          break;
        case Strategy::loss:
          selected = select_loss_based(model, params, pool_copy, k_eff);
          break;
        default:
          break;
      }
    }
    if (!selected.empty()) {
      std::vector<Example> exemplars;
      exemplars.reserve(selected.size());
      for (ExampleId id : selected) {
        const Example* e = task.train.find(id);
        if (!e) throw std::runtime_error("run_curriculum: selected id not in task train set");
        exemplars.push_back(*e);
      }
      buffer.add_task(task.task_id, std::move(exemplars));
    }
    report.buffer_ids.push_back(std::move(selected));

    report.accuracy.push_back(
        evaluate_all_seen(model, params, stream, report.task_order, pos + 1));
    report.val_loss.push_back(evaluate(model, params, task.val).mean_loss);
    report.trace_seconds.push_back(trace_sec);
    report.task_seconds.push_back(std::chrono::duration<double>(clock::now() - t_task).count());
  }

  const ForgettingStats stats = forgetting_stats(report.accuracy);
  report.final_avg = stats.final_avg;
  report.forgetting = stats.forgetting;
  report.final_params = std::move(params);
  for (double s : report.trace_seconds) report.trace_sec += s;
  report.total_sec = std::chrono::duration<double>(clock::now() - t_start).count();
  return report;
}

}  // namespace hesit
