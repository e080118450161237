// Bit-reproducible seeded SGD with a step-level trajectory hook. The same
// (seed, config, data, init) always produces the same parameter trajectory,
// which is the precondition for two-pass influence tracing.
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"
#include "hesit/model.hpp"

namespace hesit {

enum class LrDecay { constant, linear_warmup_constant };

inline const char* lr_decay_name(LrDecay d) {
  return d == LrDecay::constant ? "constant" : "linear_warmup_constant";
}

inline LrDecay lr_decay_from_name(const std::string& s) {
  if (s == "constant") return LrDecay::constant;
  if (s == "linear_warmup_constant") return LrDecay::linear_warmup_constant;
  throw std::invalid_argument("unknown lr decay: " + s);
}

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double lr = 0.001;
  std::size_t warmup_steps = 0;
  LrDecay decay = LrDecay::constant;
  bool shuffle = true;
  bool early_stop = false;     // patience-3 early stopping on val mean loss
  std::size_t patience = 3;

  // epochs == 0 is allowed and performs no updates; oracle code uses it to
  // probe the untouched model.
  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  }
};

// Effective learning rate at 1-based step r. The warmup ramp is linear up to
// warmup_steps, then constant.
inline double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.decay == LrDecay::linear_warmup_constant && cfg.warmup_steps > 0 &&
      step <= cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.lr;
}

using Batch = std::vector<std::size_t>;  // indices into the training set

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

// One epoch's batches: a seeded Fisher-Yates shuffle of [0, N) (seed ^ epoch)
// split into ceil(N/B) chunks; identity order when shuffle is off.
inline std::vector<Batch> make_epoch_schedule(const TrainConfig& cfg, std::size_t n,
                                              std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (cfg.shuffle) {
    Rng rng(cfg.seed ^ static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
  }
  std::vector<Batch> batches;
  batches.reserve(steps_per_epoch(n, cfg.batch_size));
  for (std::size_t at = 0; at < n; at += cfg.batch_size) {
    const std::size_t end = std::min(n, at + cfg.batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

// Full batch schedule over all configured epochs.
inline std::vector<Batch> make_batch_schedule(const TrainConfig& cfg, std::size_t n) {
  if (n == 0) throw std::invalid_argument("make_batch_schedule: dataset size must be >= 1");
  std::vector<Batch> all;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::vector<Batch> ep = make_epoch_schedule(cfg, n, e);
    all.insert(all.end(), ep.begin(), ep.end());
  }
  return all;
}

// Snapshot passed to the trajectory hook before each parameter update. The
// hook may read everything but must not mutate training state.
struct StepInfo {
  std::size_t step = 0;  // 1-based optimization step r
  const ParamVector& params;        // theta_{r-1}
  std::span<const ExampleId> batch_ids;
  std::span<const std::size_t> batch_indices;
  double lr = 0.0;
};

using TrajectoryHook = std::function<void(const StepInfo&)>;

struct TrainResult {
  ParamVector final_params;
  std::size_t steps_taken = 0;
  std::size_t epochs_run = 0;
  std::vector<double> val_loss_history;  // per finished epoch
  std::uint64_t schedule_digest = 0;     // hash of the (step -> batch ids) sequence
};

namespace detail {

// Plain SGD (theta <- theta - gamma * g) over the epoch schedules, with an
// optional per-example weight used by the epsilon-perturbation oracle.
template <ModelLike M, typename WeightFn>
TrainResult train_impl(const M& model, const TrainConfig& cfg, const Dataset& train_set,
                       const Dataset& val_set, const TrajectoryHook& hook,
                       const ParamVector* init, WeightFn&& weight_of) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  ParamVector params = init ? *init : model.init_params(cfg.seed);
  if (params.size() != model.param_count())
    throw std::invalid_argument("train: init vector does not match the model spec");

  TrainResult res;
  Fnv1a digest;
  ParamVector grad;
  BatchRef refs;
  std::vector<ExampleId> ids;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Batch> batches = make_epoch_schedule(cfg, train_set.size(), epoch);
    for (const Batch& batch : batches) {
      ++step;
      refs.clear();
      ids.clear();
      for (std::size_t idx : batch) {
        refs.push_back(&train_set[idx]);
        ids.push_back(train_set[idx].id);
      }
      const double gamma = lr_at(cfg, step);
      if (hook) hook(StepInfo{step, params, ids, batch, gamma});
      const double loss = weighted_batch_grad_loss(model, params, refs, weight_of, grad);
      if (!std::isfinite(loss) || !all_finite(grad))
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      axpy(-gamma, grad, params);
      digest.update_u64(step);
      for (ExampleId id : ids) digest.update_u64(id);
    }
    res.epochs_run = epoch + 1;
    if (!val_set.empty()) {
      const double vloss = evaluate(model, params, val_set).mean_loss;
      res.val_loss_history.push_back(vloss);
      if (cfg.early_stop) {
        if (vloss < best_val) {
          best_val = vloss;
          bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
          break;
        }
      }
    }
  }
  res.final_params = std::move(params);
  res.steps_taken = step;
  res.schedule_digest = digest.digest();
  return res;
}

}  // namespace detail

template <ModelLike M>
TrainResult train(const M& model, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset& val_set, const TrajectoryHook& hook = nullptr,
                  const ParamVector* init = nullptr) {
  return detail::train_impl(model, cfg, train_set, val_set, hook, init, UnitWeight{});
}

// Second identical pass of a prior run. The returned digest must equal the
// prior one; a mismatch means the environment is not reproducible.
template <ModelLike M>
TrainResult retrain_identically(const M& model, const TrainConfig& cfg, const Dataset& train_set,
                                const Dataset& val_set, std::uint64_t expected_digest,
                                const TrajectoryHook& hook = nullptr,
                                const ParamVector* init = nullptr) {
  TrainResult res = train(model, cfg, train_set, val_set, hook, init);
  if (res.schedule_digest != expected_digest)
    throw std::runtime_error("retrain_identically: schedule digest mismatch (expected " +
                             std::to_string(expected_digest) + ", got " +
                             std::to_string(res.schedule_digest) + ")");
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian (P: u64, step: u64) header followed by P
// doubles. Consumed by TracIn-style scoring.

namespace detail {

inline void put_u64_le(std::ofstream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 8);
}

inline std::uint64_t get_u64_le(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

struct Checkpoint {
  ParamVector params;
  std::uint64_t step = 0;
  double lr = 0.0;  // not serialized; carried alongside in-process
};

inline void save_checkpoint(const std::string& path, const ParamVector& params,
                            std::uint64_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  detail::put_u64_le(os, params.size());
  detail::put_u64_le(os, step);
  for (double d : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    detail::put_u64_le(os, bits);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  Checkpoint ck;
  const std::uint64_t p = detail::get_u64_le(is);
  ck.step = detail::get_u64_le(is);
  ck.params.resize(p);
  for (std::uint64_t i = 0; i < p; ++i) {
    const std::uint64_t bits = detail::get_u64_le(is);
    double d;
    std::memcpy(&d, &bits, 8);
    ck.params[i] = d;
  }
  return ck;
}

}  // namespace hesit
